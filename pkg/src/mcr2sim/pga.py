"""Projected gradient ascent and the expansion/compression diagnostics.

The ascent iterates ``V <- project(V + eta * grad)`` with a backtracking
step: ``eta`` is halved until the objective does not decrease (floor
1e-12), which makes the trace monotone by construction.

The diagnostics decompose a single gradient step, for the single-device
case, into the two geometric effects that drive it: an expansion term
pushing the received features toward the orthogonal complement of their
current span, and a compression term suppressing the residuals of each
class outside its own subspace.  Both are expressed in the left singular
basis of the channel.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .bca import SolverOptions, SolverReport
from .linalg import herm, psd_sqrt
from .objective import PrecoderSet, delta_r, grad_delta_r, project_power

__all__ = [
    "solve_pga",
    "IncrementDiagnostics",
    "diagnose_increments",
    "ellipsoid_volume",
]

STEP_FLOOR = 1e-12


def solve_pga(v_init, chan, stats, params, opts=None):
    """Backtracking projected gradient ascent from a feasible point.

    Stops when the relative objective change over one accepted step falls
    below ``opts.tol``, when no step above the floor yields ascent, or at
    the iteration cap.
    """
    opts = opts or SolverOptions()
    start = time.perf_counter()
    v = project_power(v_init.copy(), stats)
    trace = [delta_r(v, chan, stats, params)]
    report = SolverReport(trace=trace)
    if opts.keep_iterates:
        report.iterates.append(v.copy())
    step = opts.step_init
    converged = False
    iters = 0
    quiet = 0
    for it in range(opts.max_iters):
        grads = grad_delta_r(v, chan, stats, params)
        accepted = None
        while step >= STEP_FLOOR:
            trial = project_power(
                PrecoderSet([b + step * g for b, g in zip(v.blocks, grads)], v.budgets),
                stats,
            )
            value = delta_r(trial, chan, stats, params)
            if value >= trace[-1]:
                accepted = (trial, value)
                break
            step *= 0.5
        iters = it + 1
        if accepted is None:
            converged = True
            break
        v, value = accepted
        change = abs(value - trace[-1])
        trace.append(value)
        if opts.keep_iterates:
            report.iterates.append(v.copy())
        step = min(4.0 * step, opts.step_init * 2.0 ** 20)
        # A single short backtracked step can make little progress without
        # being near a stationary point; require sustained quiescence.
        if change <= opts.tol * max(1e-12, abs(trace[-2])):
            quiet += 1
            if quiet >= 10:
                converged = True
                break
        else:
            quiet = 0
    report.iterations = iters
    report.converged = converged
    report.wall_time = time.perf_counter() - start
    return v, report


@dataclass
class IncrementDiagnostics:
    """One-step geometry of the gradient update (single device).

    ``expansion`` is the step increment driven by the whole-mixture rate
    term; ``compression`` the (negative) increment driven by the per-class
    terms.  ``basis_left``, ``singvals``, ``basis_right`` come from the SVD
    of the channel; ``rep`` and ``class_reps`` are the received feature
    representations in that basis; ``mix_operator`` and ``class_operators``
    the resolvent matrices acting on them (approximate orthogonal-complement
    projectors, scaled by 1/gamma).
    """

    expansion: np.ndarray
    compression: np.ndarray
    basis_left: np.ndarray
    singvals: np.ndarray
    basis_right: np.ndarray
    rep: np.ndarray
    class_reps: list
    mix_operator: np.ndarray
    class_operators: list
    projector_residual: float
    class_projector_residuals: list
    expansion_identity_error: float
    compression_identity_error: float

    def to_json(self):
        from .channel import _encode_array

        return {
            "expansion": _encode_array(self.expansion),
            "compression": _encode_array(self.compression),
            "singvals": self.singvals.tolist(),
            "projector_residual": self.projector_residual,
            "class_projector_residuals": list(self.class_projector_residuals),
            "expansion_identity_error": self.expansion_identity_error,
            "compression_identity_error": self.compression_identity_error,
        }


def _rect_diag_apply(s, x, rows):
    """Apply the rectangular diagonal of singular values to ``x``."""
    out = np.zeros((rows, x.shape[1]), dtype=x.dtype)
    r = min(rows, s.shape[0], x.shape[0])
    out[:r] = s[:r, None] * x[:r]
    return out


def _complement_projector(g):
    u, s, _ = np.linalg.svd(g, full_matrices=True)
    rank = int(np.sum(s > s.max() * max(g.shape) * np.finfo(float).eps)) if s.size else 0
    return np.eye(g.shape[0], dtype=g.dtype) - u[:, :rank] @ u[:, :rank].conj().T


def diagnose_increments(precoders, chan, stats, params, eta):
    """Decompose one gradient step into expansion and compression parts.

    Restricted to single-device scenarios, where the channel SVD gives an
    orthonormal receive basis in which both parts act.  The closed forms are
    cross-checked against the direct gradient products; the relative errors
    are reported in the result.
    """
    if precoders.devices != 1:
        raise ValueError("increment diagnostics are defined for a single device")
    h = chan.H
    v = precoders.assembled
    alpha, gamma = params.alpha, params.gamma
    sqrt_cov = psd_sqrt(stats.cov)

    p, s, qh = np.linalg.svd(h, full_matrices=True)
    q = qh.conj().T
    n = h.shape[0]

    rep = _rect_diag_apply(s, qh @ v @ sqrt_cov, n)
    mix_op = herm(np.linalg.inv(gamma * np.eye(n) + alpha * (rep @ rep.conj().T)))
    lam2 = np.zeros(n)
    lam2[: s.shape[0]] = s * s

    expansion = 2.0 * eta * alpha * p @ (lam2[:, None] * (mix_op @ rep @ stats.cov))

    class_reps, class_ops = [], []
    compression = np.zeros_like(expansion)
    for j in range(stats.class_count):
        pj = stats.priors[j]
        sqrt_j = psd_sqrt(stats.covs[j])
        rep_j = _rect_diag_apply(s, qh @ v @ sqrt_j, n)
        op_j = herm(np.linalg.inv(gamma * np.eye(n) + alpha * (rep_j @ rep_j.conj().T)))
        class_reps.append(rep_j)
        class_ops.append(op_j)
        if pj <= 0.0:
            continue
        compression = compression - 2.0 * eta * alpha * pj * p @ (
            lam2[:, None] * (op_j @ rep_j @ sqrt_j @ sqrt_cov)
        )

    # Cross-check against the direct products eta * H * grad * S^{1/2}.
    def rel_err(a, b):
        scale = max(np.linalg.norm(b), 1e-30)
        return float(np.linalg.norm(a - b) / scale)

    def resolvent_grad(cov):
        hv = h @ v
        a = herm(gamma * np.eye(n) + alpha * hv @ cov @ hv.conj().T)
        d = np.linalg.solve(a, np.eye(n))
        return 2.0 * alpha * h.conj().T @ herm(d) @ hv @ cov

    direct_exp = eta * h @ resolvent_grad(stats.cov) @ sqrt_cov
    direct_cmp = np.zeros_like(direct_exp)
    for j in range(stats.class_count):
        pj = stats.priors[j]
        if pj <= 0.0:
            continue
        direct_cmp = direct_cmp - eta * pj * h @ resolvent_grad(stats.covs[j]) @ sqrt_cov

    proj = _complement_projector(rep)
    class_resid = [float(np.linalg.norm(op - _complement_projector(g)))
                   for op, g in zip(class_ops, class_reps)]

    return IncrementDiagnostics(
        expansion=expansion,
        compression=compression,
        basis_left=p,
        singvals=s,
        basis_right=q,
        rep=rep,
        class_reps=class_reps,
        mix_operator=mix_op,
        class_operators=class_ops,
        projector_residual=float(np.linalg.norm(mix_op - proj)),
        class_projector_residuals=class_resid,
        expansion_identity_error=rel_err(expansion, direct_exp),
        compression_identity_error=rel_err(compression, direct_cmp),
    )


def ellipsoid_volume(a):
    """Volume of the ellipsoid ``{y : y^T (A A^T)^{-1} y = 1}`` for 3x3 ``A``.

    The semi-axes are the singular values of ``A``, so the volume is
    ``(4 pi / 3) |det A|``; a singular ``A`` gives a degenerate ellipsoid of
    volume zero.
    """
    a = np.asarray(a)
    if a.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    return float(4.0 * np.pi / 3.0 * abs(np.linalg.det(a)))
