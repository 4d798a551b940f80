"""Reference precoders, detectors, and digital-latency utilities.

Baselines against which the rate-reduction precoder is compared:

* the linear MMSE detector and the alternating-minimization precoder that
  minimizes its mean-square error (a fractional program handled with the
  quadratic transform);
* iterative water-filling, the sum-capacity-achieving input covariance for
  the Gaussian multiple-access channel, mapped to a precoder;
* random and scaled-identity precoders;
* Shannon-capacity latency of digital feature transmission under FDMA or
  TDMA, and the fixed slot latency of analog transmission.
"""

import time

import numpy as np

from .bca import SolverOptions, SolverReport
from .linalg import bisect_dual, herm, psd_inv_sqrt, rand_cn
from .objective import PrecoderSet

__all__ = [
    "lmmse_detect",
    "lmmse_mse",
    "lmmse_precoder",
    "iwf_covariances",
    "iwf_precoder",
    "precoder_from_covariances",
    "random_precoder",
    "identity_precoder",
    "water_fill",
    "digital_latency",
    "proposed_latency",
]


def _received_cov(hv, cov, noise_power):
    n = hv.shape[0]
    return herm(hv @ cov @ hv.conj().T) + noise_power * np.eye(n)


def lmmse_detect(y, precoders, chan, stats):
    """Linear MMSE estimate of the transmit-domain feature vector.

    ``S V^H H^H (H V S V^H H^H + noise I)^{-1} y``; accepts a single vector
    or one vector per column.  No mean centering is applied.
    """
    if chan.noise_power <= 0.0:
        raise ValueError("noise power must be positive")
    hv = chan.H @ precoders.assembled
    m = _received_cov(hv, stats.cov, chan.noise_power)
    return stats.cov @ hv.conj().T @ np.linalg.solve(m, np.asarray(y))


def lmmse_mse(precoders, chan, stats):
    """Analytic mean-square error of :func:`lmmse_detect` for zero-mean
    features: ``tr(S) - tr(S V^H H^H M^{-1} H V S)``."""
    if chan.noise_power <= 0.0:
        raise ValueError("noise power must be positive")
    hv = chan.H @ precoders.assembled
    m = _received_cov(hv, stats.cov, chan.noise_power)
    gain = stats.cov @ hv.conj().T @ np.linalg.solve(m, hv @ stats.cov)
    return float(np.real(np.trace(stats.cov) - np.trace(gain)))


def _surrogate_value(r, hv, stats, noise_power):
    quad = _received_cov(hv, stats.cov, noise_power)
    lin = np.real(np.trace(r.conj().T @ hv @ stats.cov))
    return float(-2.0 * lin + np.real(np.trace(r.conj().T @ quad @ r)))


def lmmse_precoder(chan, stats, budgets, opts=None):
    """Precoder minimizing the LMMSE detection error under per-device power.

    Alternates the closed-form auxiliary update
    ``R = (H V S V^H H^H + noise I)^{-1} H V S`` with per-device quadratic
    updates whose dual variables are found by bisection; the quadratic
    surrogate is non-increasing across rounds and its trace is reported.
    """
    opts = opts or SolverOptions()
    start = time.perf_counter()
    rng = np.random.default_rng(opts.seed)
    k_dev = chan.devices
    budgets = tuple(float(b) for b in np.atleast_1d(budgets))
    v = _random_blocks(chan, stats, budgets, rng)
    inv_kk = [psd_inv_sqrt(stats.block(stats.cov, k, k)) for k in range(k_dev)]
    inv_cov_kk = [m @ m for m in inv_kk]

    hv = chan.H @ v.assembled
    trace = []
    converged = False
    iters = 0
    r = None
    for it in range(opts.max_iters):
        m = _received_cov(hv, stats.cov, chan.noise_power)
        r = np.linalg.solve(m, hv @ stats.cov)
        for k in range(k_dev):
            hk = chan.block(k)
            j_k = stats.row_block(stats.cov, k).copy()
            for q in range(k_dev):
                if q == k:
                    continue
                hv_q = chan.block(q) @ v.blocks[q]
                j_k = j_k - stats.block(stats.cov, k, q) @ hv_q.conj().T @ r
            a = herm(hk.conj().T @ r @ r.conj().T @ hk)
            b = hk.conj().T @ r @ j_k.conj().T @ inv_cov_kk[k]
            v.blocks[k] = _power_capped_solve(a, b, stats.block(stats.cov, k, k),
                                              budgets[k], opts.bisect_tol)
        hv = chan.H @ v.assembled
        value = _surrogate_value(r, hv, stats, chan.noise_power)
        if trace and abs(value - trace[-1]) <= opts.tol * max(1e-12, abs(trace[-1])):
            trace.append(value)
            iters = it + 1
            converged = True
            break
        trace.append(value)
        iters = it + 1
    report = SolverReport(trace=trace, iterations=iters, converged=converged,
                          wall_time=time.perf_counter() - start)
    return v, report


def _power_capped_solve(a, b, s_kk, budget, bisect_tol):
    """Minimize ``-2 Re tr(B'^H V) + tr(A V S V^H)``-type quadratics under
    ``tr(V S V^H) <= budget`` where the unknown enters as ``V = (A + mu I)^{-1} B``.

    The power of ``V(mu)`` decomposes over the eigenbasis of ``A`` as
    ``sum_i c_i / (a_i + mu)^2``, so the dual follows from bisection.
    """
    eigvals, eigvecs = np.linalg.eigh(a)
    eigvals = np.clip(eigvals, 0.0, None)
    b_rot = eigvecs.conj().T @ b
    weights = np.real(np.einsum("ij,jk,ik->i", b_rot, s_kk, b_rot.conj()))
    weights = np.clip(weights, 0.0, None)
    mu = bisect_dual(eigvals, weights, budget, rtol=bisect_tol)
    denom = eigvals + mu
    scale = np.where(denom > 0.0, 1.0 / np.where(denom > 0.0, denom, 1.0), 0.0)
    return eigvecs @ (scale[:, None] * b_rot)


def water_fill(gains, total_power, noise=1.0):
    """Classical water-filling: maximize ``sum_i log(1 + p_i g_i / noise)``
    subject to ``sum_i p_i = total_power``, ``p_i >= 0``.

    Returns the optimal powers.  Channels with zero gain get zero power; if
    no gain is positive the allocation is all zeros.
    """
    gains = np.asarray(gains, dtype=float)
    p = np.zeros_like(gains)
    if total_power <= 0.0 or not np.any(gains > 0.0):
        return p
    pos = np.flatnonzero(gains > 0.0)
    inv = noise / gains[pos]
    order = np.argsort(inv)
    inv_sorted = inv[order]
    level = 0.0
    count = 0
    for m in range(1, inv_sorted.size + 1):
        cand = (total_power + inv_sorted[:m].sum()) / m
        if m < inv_sorted.size and cand > inv_sorted[m]:
            continue
        level = cand
        count = m
        break
    alloc = np.clip(level - inv_sorted[:count], 0.0, None)
    p[pos[order[:count]]] = alloc
    return p


def iwf_covariances(chan, budgets, opts=None):
    """Iterative water-filling for the multiple-access sum rate.

    Cyclically, each device water-fills its transmit covariance against the
    noise-plus-interference of the others; the sum rate
    ``logdet(I + noise^{-1} sum_k H_k Q_k H_k^H)`` is non-decreasing across
    rounds and returned as the report trace (nats).
    """
    opts = opts or SolverOptions()
    start = time.perf_counter()
    budgets = tuple(float(b) for b in np.atleast_1d(budgets))
    k_dev = chan.devices
    n = chan.H.shape[0]
    dtype = chan.H.dtype
    qs = [np.zeros((chan.block(k).shape[1],) * 2, dtype=dtype) for k in range(k_dev)]

    def sum_rate():
        acc = np.eye(n, dtype=dtype) * chan.noise_power
        for k in range(k_dev):
            hk = chan.block(k)
            acc = acc + hk @ qs[k] @ hk.conj().T
        sign, logdet = np.linalg.slogdet(herm(acc) / chan.noise_power)
        return float(logdet)

    trace = []
    converged = False
    iters = 0
    for it in range(opts.max_iters):
        for k in range(k_dev):
            hk = chan.block(k)
            nk = np.eye(n, dtype=dtype) * chan.noise_power
            for q in range(k_dev):
                if q == k:
                    continue
                hq = chan.block(q)
                nk = nk + hq @ qs[q] @ hq.conj().T
            s_k = herm(hk.conj().T @ np.linalg.solve(herm(nk), hk))
            w, e = np.linalg.eigh(s_k)
            p = water_fill(np.clip(w, 0.0, None), budgets[k], noise=1.0)
            qs[k] = herm((e * p) @ e.conj().T)
        value = sum_rate()
        iters = it + 1
        if trace and abs(value - trace[-1]) <= opts.tol * max(1e-12, abs(trace[-1])):
            trace.append(value)
            converged = True
            break
        trace.append(value)
    report = SolverReport(trace=trace, iterations=iters, converged=converged,
                          wall_time=time.perf_counter() - start)
    return qs, report


def precoder_from_covariances(qs, stats, budgets, mode="complex"):
    """Factor transmit covariances into feasible precoder blocks.

    Each covariance is truncated to its strongest ``d_k`` eigenmodes (the
    feature width) and factored as ``V_k = U_r diag(sqrt(p_r)) W^H`` with
    ``W`` a slice of the inverse square root of the device feature
    covariance, so that ``V_k Sigma_kk V_k^H`` reproduces the truncated
    covariance and the power budget carries over.
    """
    budgets = tuple(float(b) for b in np.atleast_1d(budgets))
    blocks = []
    for k, q in enumerate(qs):
        d_k = stats.stream_dims[k]
        w, e = np.linalg.eigh(herm(q))
        order = np.argsort(w)[::-1]
        w = np.clip(w[order], 0.0, None)
        e = e[:, order]
        r = int(min(d_k, np.sum(w > 0.0)))
        inv_kk = psd_inv_sqrt(stats.block(stats.cov, k, k))
        v_k = np.zeros((q.shape[0], d_k), dtype=q.dtype)
        if r > 0:
            v_k = (e[:, :r] * np.sqrt(w[:r])) @ inv_kk[:, :r].conj().T
        if mode == "real":
            v_k = np.real(v_k)
        blocks.append(v_k)
    return PrecoderSet(blocks, budgets)


def iwf_precoder(chan, stats, budgets, opts=None):
    """Iterative water-filling followed by the covariance factorization."""
    qs, _ = iwf_covariances(chan, budgets, opts)
    return precoder_from_covariances(qs, stats, budgets, chan.mode)


def random_precoder(dims, stats, budgets, seed=0):
    """Independent Gaussian blocks scaled to use the power budget exactly."""
    rng = np.random.default_rng(seed)
    budgets = tuple(float(b) for b in np.atleast_1d(budgets))
    blocks = []
    for k in range(dims.devices):
        shape = (dims.slots * dims.tx_antennas[k], dims.stream_dims[k])
        v = rng.standard_normal(shape) if dims.mode == "real" else rand_cn(rng, shape)
        s_kk = stats.block(stats.cov, k, k)
        power = float(np.real(np.trace(v @ s_kk @ v.conj().T)))
        if power > 0.0:
            v = v * np.sqrt(budgets[k] / power)
        blocks.append(v)
    return PrecoderSet(blocks, budgets)


def _random_blocks(chan, stats, budgets, rng):
    blocks = []
    for k in range(chan.devices):
        shape = (chan.block(k).shape[1], stats.stream_dims[k])
        v = (rng.standard_normal(shape) if chan.mode == "real"
             else rand_cn(rng, shape))
        s_kk = stats.block(stats.cov, k, k)
        power = float(np.real(np.trace(v @ s_kk @ v.conj().T)))
        if power > 0.0:
            v = v * np.sqrt(budgets[k] / power)
        blocks.append(v)
    return PrecoderSet(blocks, budgets)


def identity_precoder(dims, p0):
    """Scaled identity ``sqrt(p0) I`` per device (no-precoding reference).

    Requires square blocks (``T N_tk`` equal to the stream width).  The
    nominal budget recorded is ``T p0`` per device; whether the covariance
    power ``tr(V S V^H)`` respects it is reported by the feasibility check,
    not enforced, because this scheme fixes the matrix by construction.
    """
    blocks = []
    for k in range(dims.devices):
        rows = dims.slots * dims.tx_antennas[k]
        cols = dims.stream_dims[k]
        if rows != cols:
            raise ValueError(
                f"identity precoder needs square blocks, device {k} has "
                f"{rows} transmit rows and {cols} feature columns"
            )
        eye = np.eye(rows) if dims.mode == "real" else np.eye(rows, dtype=complex)
        blocks.append(np.sqrt(p0) * eye)
    return PrecoderSet(blocks, tuple(dims.slots * p0 for _ in range(dims.devices)))


def _eigenmode_capacity_bits(h, power, noise_power_band, bandwidth):
    """Shannon capacity (bit/s) of a single-user link with water-filled
    eigenmode transmission at total transmit power ``power``."""
    gains = np.clip(np.linalg.eigvalsh(herm(h.conj().T @ h)), 0.0, None)
    p = water_fill(gains, power, noise=noise_power_band)
    return bandwidth * float(np.sum(np.log2(1.0 + p * gains / noise_power_band)))


def digital_latency(channels, powers, bits, scheme, bandwidth, noise_density_w_hz):
    """Latency of digital feature transmission over per-device links.

    ``channels[k]`` is the single-slot channel matrix of device k.  Under
    FDMA each device gets ``bandwidth / K`` and the latency is the largest
    per-device transfer time; under TDMA devices use the full band in turn
    and the times add.  Devices with zero bits contribute zero; a device
    with positive bits over a zero-capacity link makes the latency infinite.
    """
    scheme = scheme.lower()
    if scheme not in ("fdma", "tdma"):
        raise ValueError("scheme must be 'fdma' or 'tdma'")
    k_dev = len(channels)
    band = bandwidth / k_dev if scheme == "fdma" else bandwidth
    times = []
    for h, p, d in zip(channels, powers, bits):
        if d < 0:
            raise ValueError("bit counts must be nonnegative")
        if d == 0:
            times.append(0.0)
            continue
        cap = _eigenmode_capacity_bits(np.asarray(h), p, noise_density_w_hz * band, band)
        times.append(d / cap if cap > 0.0 else np.inf)
    return max(times) if scheme == "fdma" else float(sum(times))


def proposed_latency(slots, bandwidth):
    """Latency of the analog scheme: slot count over bandwidth."""
    return slots / bandwidth
