"""Rate-reduction precoding objective, its gradient, and power feasibility.

The objective is the gap between the log-volume of the received mixture and
the prior-weighted log-volumes of the received classes,

    logdet(gamma I + alpha H V S V^H H^H)
        - sum_j p_j logdet(gamma I + alpha H V S_j V^H H^H),

with ``S`` the global feature covariance, ``S_j`` the class covariances,
``alpha = T N_r / eps^2`` and ``gamma = 1 + alpha * noise_power``.  Larger
values mean better-separated received classes.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import block_diag, herm, logdet_pd

__all__ = [
    "PrecoderSet",
    "Mcr2Params",
    "delta_r",
    "grad_delta_r",
    "project_power",
    "kkt_residual",
]

FEAS_RTOL = 1e-9


@dataclass
class PrecoderSet:
    """Per-device precoding matrices with their power budgets.

    ``blocks[k]`` maps device k's transmit-domain feature vector (width
    ``d_k``) to its stacked multi-slot transmit signal (height ``T N_tk``).
    ``budgets[k]`` is the total power over the slots, ``T P_k``; the power
    used by a block is ``tr(V_k Sigma_kk V_k^H)``.
    """

    blocks: list
    budgets: tuple

    def __post_init__(self):
        self.blocks = [np.asarray(b) for b in self.blocks]
        self.budgets = tuple(float(b) for b in np.atleast_1d(self.budgets))
        if len(self.budgets) != len(self.blocks):
            raise ValueError("need one budget per device block")

    @property
    def devices(self):
        return len(self.blocks)

    @property
    def assembled(self):
        return block_diag(self.blocks)

    def powers(self, stats):
        """Transmit power per device under the feature covariance."""
        out = []
        for k, v in enumerate(self.blocks):
            s_kk = stats.block(stats.cov, k, k)
            out.append(float(np.real(np.trace(v @ s_kk @ v.conj().T))))
        return out

    def is_feasible(self, stats, rtol=FEAS_RTOL):
        return all(p <= b * (1.0 + rtol) for p, b in zip(self.powers(stats), self.budgets))

    def copy(self):
        return PrecoderSet([b.copy() for b in self.blocks], self.budgets)

    def to_json(self):
        from .channel import _encode_array

        return {"budgets": list(self.budgets),
                "blocks": [_encode_array(b) for b in self.blocks]}

    @classmethod
    def from_json(cls, obj):
        from .channel import _decode_array

        return cls([_decode_array(b) for b in obj["blocks"]], obj["budgets"])


@dataclass(frozen=True)
class Mcr2Params:
    """Coding precision and the derived objective constants."""

    eps: float
    alpha: float
    gamma: float

    def __post_init__(self):
        if self.eps <= 0.0 or self.alpha <= 0.0 or self.gamma < 1.0:
            raise ValueError("need eps > 0, alpha > 0, gamma >= 1")

    @classmethod
    def for_scenario(cls, eps, slots, rx_antennas, noise_power_w):
        alpha = slots * rx_antennas / (eps * eps)
        return cls(eps=eps, alpha=alpha, gamma=1.0 + alpha * noise_power_w)


def _received_gram(hv, cov):
    return hv @ cov @ hv.conj().T


def _logdet_term(hv, cov, params):
    n = hv.shape[0]
    a = params.gamma * np.eye(n) + params.alpha * _received_gram(hv, cov)
    return logdet_pd(herm(a))


def delta_r(precoders, chan, stats, params):
    """Rate-reduction value of a precoder set on a channel realization."""
    hv = chan.H @ precoders.assembled
    total = _logdet_term(hv, stats.cov, params)
    for j in range(stats.class_count):
        pj = stats.priors[j]
        if pj <= 0.0:
            continue
        total -= pj * _logdet_term(hv, stats.covs[j], params)
    return float(total)


def grad_delta_r(precoders, chan, stats, params):
    """Per-device gradient blocks of :func:`delta_r`.

    The returned blocks satisfy the directional-derivative contract
    ``d/ds delta_r(V + s Delta) |_{s=0} = Re tr(grad_k^H Delta_k)`` summed
    over devices, for any block-structured perturbation.  In real mode the
    conjugations are vacuous and the contract reads ``tr(grad_k^T Delta_k)``.
    """
    h = chan.H
    v = precoders.assembled
    hv = h @ v
    n = hv.shape[0]
    eye = np.eye(n)

    def weighted(cov):
        a = herm(params.gamma * eye + params.alpha * _received_gram(hv, cov))
        d = np.linalg.solve(a, eye)
        return h.conj().T @ herm(d) @ hv @ cov

    full = weighted(stats.cov)
    for j in range(stats.class_count):
        pj = stats.priors[j]
        if pj <= 0.0:
            continue
        full = full - pj * weighted(stats.covs[j])
    full = 2.0 * params.alpha * full

    row_off = np.concatenate([[0], np.cumsum([b.shape[0] for b in precoders.blocks])])
    col_off = np.concatenate([[0], np.cumsum([b.shape[1] for b in precoders.blocks])])
    return [full[row_off[k]:row_off[k + 1], col_off[k]:col_off[k + 1]]
            for k in range(precoders.devices)]


def project_power(precoders, stats):
    """Scale infeasible blocks back to the power boundary.

    Feasible blocks are returned unchanged; infeasible ones are multiplied
    by ``sqrt(budget / power)`` so that the constraint holds with equality.
    A block with zero power and a positive budget is left as is.
    """
    blocks = []
    for k, v in enumerate(precoders.blocks):
        s_kk = stats.block(stats.cov, k, k)
        power = float(np.real(np.trace(v @ s_kk @ v.conj().T)))
        budget = precoders.budgets[k]
        if power > budget and power > 0.0:
            blocks.append(v * np.sqrt(budget / power))
        else:
            blocks.append(v.copy())
    return PrecoderSet(blocks, precoders.budgets)


def kkt_residual(precoders, grads, stats, rtol=FEAS_RTOL):
    """Stationarity residual of the power-constrained ascent problem.

    At a constrained maximizer each gradient block is a nonnegative multiple
    of the power-constraint normal ``V_k Sigma_kk`` (active constraint) or
    zero (inactive).  Returns the largest normalized residual over devices.
    """
    worst = 0.0
    for k, (v, g) in enumerate(zip(precoders.blocks, grads)):
        s_kk = stats.block(stats.cov, k, k)
        power = float(np.real(np.trace(v @ s_kk @ v.conj().T)))
        budget = precoders.budgets[k]
        gnorm = np.linalg.norm(g)
        if power >= budget * (1.0 - 1e-6):
            normal = v @ s_kk
            nn = float(np.real(np.vdot(normal, normal)))
            if nn > 0.0:
                coef = max(0.0, float(np.real(np.vdot(normal, g))) / nn)
                resid = np.linalg.norm(g - coef * normal)
            else:
                resid = gnorm
        else:
            resid = gnorm
        worst = max(worst, resid / (1.0 + gnorm))
    return worst
