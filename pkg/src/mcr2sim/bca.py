"""Block coordinate ascent for the rate-reduction precoding problem.

The non-convex logdet-difference objective is lifted to an equivalent
problem in the WMMSE style: two auxiliary identities trade each logdet term
for a concave surrogate that is tight at a closed-form optimum.

* For Hermitian PD ``F``:
  ``-logdet F = max_{W > 0} logdet W - tr(W F) + r``, attained at
  ``W = F^{-1}``.
* For ``A`` and Hermitian PD ``B``:
  ``logdet(I + A B A^H) = max_{Omega > 0, Xi} logdet Omega
  - tr(Omega K(Xi)) + l`` with
  ``K(Xi) = (I - Xi^H A B^{1/2})(I - Xi^H A B^{1/2})^H + Xi^H Xi``,
  attained at ``Xi = (I + A B A^H)^{-1} A B^{1/2}`` and
  ``Omega = K(Xi)^{-1}``.

The lifted objective is concave in each block (receiver ``U``, weights
``W_j``, per-device precoders ``V_k``) with the others fixed, so cyclic
exact block updates never decrease it; evaluated through the original
objective this yields a monotone trace.  Each ``V_k`` subproblem is a
power-constrained quadratic solved in closed form after whitening, with the
dual variable found by bisection.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    bisect_dual,
    herm,
    logdet_pd,
    psd_inv_sqrt,
    psd_sqrt,
    unvec,
    vec,
)
from .objective import PrecoderSet, delta_r

__all__ = [
    "SolverOptions",
    "SolverReport",
    "BcaState",
    "update_u",
    "update_w",
    "update_v_k",
    "solve_bca",
    "lemma_logdet_surrogate",
    "lemma_rate_surrogate",
]

MONOTONE_SLACK = 1e-8


@dataclass
class SolverOptions:
    """Iteration control shared by the iterative solvers."""

    max_iters: int = 200
    tol: float = 1e-6
    bisect_tol: float = 1e-8
    inner_sweeps: int = 1
    step_init: float = 1.0
    keep_iterates: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.inner_sweeps < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.tol <= 0.0 or self.bisect_tol <= 0.0 or self.step_init <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolverReport:
    """Outcome of one solver run.

    ``trace`` holds the objective after initialization and after each outer
    iteration.  ``iterates`` (optional) stores the precoder set after each
    outer iteration for diagnostics.
    """

    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    duals: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def to_json(self):
        # Wall time is intentionally omitted: serialized artifacts must be
        # reproducible byte-for-byte from (config, seed).
        return {
            "trace": [float(x) for x in self.trace],
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass
class BcaState:
    """Auxiliary variables of the lifted problem plus the precoders."""

    U: np.ndarray
    W0: np.ndarray
    Wj: list
    V: PrecoderSet
    duals: list


def _sqrt_row_block(sqrt_cov, stats, k):
    return stats.row_block(sqrt_cov, k)


def update_u(precoders, chan, stats, params, sqrt_cov=None):
    """Optimal receiver block: the regularized MMSE-style closed form
    ``(H V S V^H H^H + (gamma/alpha) I)^{-1} H V S^{1/2}``."""
    if sqrt_cov is None:
        sqrt_cov = psd_sqrt(stats.cov)
    hv = chan.H @ precoders.assembled
    n = hv.shape[0]
    a = herm(hv @ stats.cov @ hv.conj().T) + (params.gamma / params.alpha) * np.eye(n)
    return np.linalg.solve(herm(a), hv @ sqrt_cov)


def update_w(u, precoders, chan, stats, params, sqrt_cov=None):
    """Optimal weight blocks: inverses of the surrogate error matrices.

    ``W0`` inverts the regularized error covariance of the receiver block;
    each ``W_j`` inverts the received class Gram ``gamma I + alpha H V S_j
    V^H H^H``.  A near-singular error matrix is jittered and flagged.
    """
    if sqrt_cov is None:
        sqrt_cov = psd_sqrt(stats.cov)
    hv = chan.H @ precoders.assembled
    d = sqrt_cov.shape[0]
    n = hv.shape[0]
    resid = np.eye(d) - u.conj().T @ hv @ sqrt_cov
    f0 = herm(resid @ resid.conj().T) + (params.gamma / params.alpha) * herm(u.conj().T @ u)
    f0 = herm(f0)
    flags = []
    try:
        w0 = np.linalg.solve(f0, np.eye(d))
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.real(np.trace(f0)) / d
        w0 = np.linalg.solve(f0 + jitter * np.eye(d), np.eye(d))
        flags.append("w0_jittered")
    w0 = herm(w0)
    wj = []
    eye_n = np.eye(n)
    for j in range(stats.class_count):
        fj = herm(params.gamma * eye_n + params.alpha * hv @ stats.covs[j] @ hv.conj().T)
        wj.append(herm(np.linalg.solve(fj, eye_n)))
    return w0, wj, flags


def update_v_k(k, u, w0, wj, precoders, chan, stats, params, bisect_tol=1e-8,
               inv_sqrt_kk=None):
    """Exact per-device precoder update.

    Builds the quadratic subproblem in ``V_k`` (all other blocks fixed),
    whitens it so the power constraint becomes a norm ball, solves
    ``(M + lam I)^{-1} t`` with the smallest feasible dual ``lam >= 0``
    (bisection on the monotone power curve), and maps back.  Returns the new
    block and the dual variable.
    """
    sqrt_cov = psd_sqrt(stats.cov)
    return _update_v_k_impl(k, u, w0, wj, precoders, chan, stats, params,
                            sqrt_cov, bisect_tol, inv_sqrt_kk)


def _update_v_k_impl(k, u, w0, wj, precoders, chan, stats, params, sqrt_cov,
                     bisect_tol, inv_sqrt_kk=None):
    hk = chan.block(k)
    n_k, d_k = precoders.blocks[k].shape
    budget = precoders.budgets[k]
    alpha = params.alpha

    hv_others = [chan.block(q) @ precoders.blocks[q] for q in range(precoders.devices)]

    hk_u = hk.conj().T @ u
    # Linear term: receiver alignment minus the interference of the other
    # devices through both surrogate weights.
    t_lin = hk_u @ w0 @ _sqrt_row_block(sqrt_cov, stats, k).conj().T
    cross = np.zeros((chan.H.shape[0], d_k), dtype=t_lin.dtype)
    for q in range(precoders.devices):
        if q == k:
            continue
        cross = cross + hv_others[q] @ stats.block(stats.cov, q, k)
    t_lin = t_lin - hk_u @ w0 @ (u.conj().T @ cross)
    for j in range(stats.class_count):
        pj = stats.priors[j]
        if pj <= 0.0:
            continue
        cross_j = np.zeros((chan.H.shape[0], d_k), dtype=t_lin.dtype)
        for q in range(precoders.devices):
            if q == k:
                continue
            cross_j = cross_j + hv_others[q] @ stats.block(stats.covs[j], q, k)
        t_lin = t_lin - alpha * pj * hk.conj().T @ (wj[j] @ cross_j)

    phi = herm(hk_u @ w0 @ hk_u.conj().T)
    s_kk = stats.block(stats.cov, k, k)
    if inv_sqrt_kk is None:
        inv_sqrt_kk = psd_inv_sqrt(s_kk)

    white_cov = herm(inv_sqrt_kk @ s_kk @ inv_sqrt_kk)
    m_tilde = np.kron(white_cov.T, phi)
    for j in range(stats.class_count):
        pj = stats.priors[j]
        if pj <= 0.0:
            continue
        psi = herm(hk.conj().T @ wj[j] @ hk)
        white_j = inv_sqrt_kk @ stats.block(stats.covs[j], k, k) @ inv_sqrt_kk
        m_tilde = m_tilde + alpha * pj * np.kron(white_j.T, psi)
    m_tilde = herm(m_tilde)

    t_tilde = vec(t_lin @ inv_sqrt_kk)
    if not np.any(np.abs(t_tilde) > 0.0):
        zero = np.zeros((n_k, d_k), dtype=t_lin.dtype)
        return zero, 0.0

    eigvals, eigvecs = np.linalg.eigh(m_tilde)
    eigvals = np.clip(eigvals, 0.0, None)
    t_hat = eigvecs.conj().T @ t_tilde
    weights = np.abs(t_hat) ** 2
    lam = bisect_dual(eigvals, weights, budget, rtol=bisect_tol)
    denom = eigvals + lam
    coef = np.where(denom > 0.0, t_hat / np.where(denom > 0.0, denom, 1.0), 0.0)
    v_white = eigvecs @ coef
    v_k = unvec(v_white, (n_k, d_k)) @ inv_sqrt_kk
    if not np.iscomplexobj(precoders.blocks[k]):
        v_k = np.real(v_k)
    return v_k, float(lam)


def solve_bca(v_init, chan, stats, params, opts=None):
    """Run the coordinate-ascent solver from a feasible initial point.

    One outer iteration updates the receiver block, all weight blocks, and
    then sweeps the device precoders (``opts.inner_sweeps`` times).  The
    objective is re-evaluated after every outer iteration; the run stops
    when its relative change drops below ``opts.tol`` or the iteration cap
    is hit.  A decrease beyond a small slack aborts, since the update rules
    guarantee ascent.
    """
    opts = opts or SolverOptions()
    start = time.perf_counter()
    v = v_init.copy()
    sqrt_cov = psd_sqrt(stats.cov)
    inv_sqrts = [psd_inv_sqrt(stats.block(stats.cov, k, k)) for k in range(v.devices)]

    trace = [delta_r(v, chan, stats, params)]
    report = SolverReport(trace=trace)
    if opts.keep_iterates:
        report.iterates.append(v.copy())
    duals = [0.0] * v.devices
    converged = False
    iters = 0
    for it in range(opts.max_iters):
        u = update_u(v, chan, stats, params, sqrt_cov)
        w0, wj, flags = update_w(u, v, chan, stats, params, sqrt_cov)
        report.flags.extend(flags)
        for _ in range(opts.inner_sweeps):
            for k in range(v.devices):
                v_k, lam = _update_v_k_impl(k, u, w0, wj, v, chan, stats, params,
                                            sqrt_cov, opts.bisect_tol, inv_sqrts[k])
                v.blocks[k] = v_k
                duals[k] = lam
        value = delta_r(v, chan, stats, params)
        if value < trace[-1] - MONOTONE_SLACK:
            raise RuntimeError(
                "coordinate ascent decreased the objective "
                f"({trace[-1]:.12g} -> {value:.12g} at iteration {it + 1})"
            )
        change = abs(value - trace[-1])
        trace.append(value)
        if opts.keep_iterates:
            report.iterates.append(v.copy())
        iters = it + 1
        if change <= opts.tol * max(1e-12, abs(trace[-2])):
            converged = True
            break
    report.iterations = iters
    report.converged = converged
    report.duals = list(duals)
    report.wall_time = time.perf_counter() - start
    return v, report


def lemma_logdet_surrogate(f, w):
    """Concave surrogate whose maximum over ``W > 0`` equals ``-logdet F``."""
    r = f.shape[0]
    return logdet_pd(w) - float(np.real(np.trace(w @ f))) + r


def lemma_rate_surrogate(a, b, omega, xi):
    """Concave surrogate whose maximum over ``(Omega > 0, Xi)`` equals
    ``logdet(I + A B A^H)``."""
    l = b.shape[0]
    b_half = psd_sqrt(b)
    resid = np.eye(l) - xi.conj().T @ a @ b_half
    kmat = herm(resid @ resid.conj().T + xi.conj().T @ xi)
    return logdet_pd(omega) - float(np.real(np.trace(omega @ kmat))) + l


def lemma_rate_optimum(a, b):
    """Closed-form maximizers of :func:`lemma_rate_surrogate`."""
    s = a.shape[0]
    b_half = psd_sqrt(b)
    gram = herm(np.eye(s) + a @ b @ a.conj().T)
    xi = np.linalg.solve(gram, a @ b_half)
    omega_inv = herm(np.eye(b.shape[0]) - xi.conj().T @ a @ b_half)
    omega = herm(np.linalg.solve(omega_inv, np.eye(b.shape[0])))
    return xi, omega
