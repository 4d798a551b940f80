"""Self-check routines behind the ``lemma-check`` and ``grad-check``
subcommands.  Also used by the test suite to build random scenarios."""

import numpy as np

from .bca import (
    lemma_logdet_surrogate,
    lemma_rate_optimum,
    lemma_rate_surrogate,
)
from .channel import ChannelRealization, SystemDims
from .features import FeatureStats
from .linalg import herm, logdet_pd, rand_cn
from .objective import Mcr2Params, PrecoderSet, delta_r, grad_delta_r

__all__ = ["lemma_check", "grad_check", "random_scenario", "random_feasible"]


def _rand_pd(rng, n, complex_field):
    a = rand_cn(rng, (n, n)) if complex_field else rng.standard_normal((n, n))
    return herm(a @ a.conj().T) + 0.1 * np.eye(n)


def lemma_check(trials=50, seed=0):
    """Worst absolute error of the two surrogate identities at their
    closed-form optima, over random real and complex instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        complex_field = bool(trial % 2)
        r = int(rng.integers(1, 9))
        f = _rand_pd(rng, r, complex_field)
        w_opt = herm(np.linalg.inv(f))
        lhs = -logdet_pd(f)
        rhs = lemma_logdet_surrogate(f, w_opt)
        worst = max(worst, abs(lhs - rhs))

        s = int(rng.integers(1, 9))
        l = int(rng.integers(1, 9))
        a = rand_cn(rng, (s, l)) if complex_field else rng.standard_normal((s, l))
        b = _rand_pd(rng, l, complex_field)
        lhs = logdet_pd(np.eye(s) + a @ b @ a.conj().T)
        xi, omega = lemma_rate_optimum(a, b)
        rhs = lemma_rate_surrogate(a, b, omega, xi)
        worst = max(worst, abs(lhs - rhs))
    return worst


def random_scenario(rng, mode="complex", devices=1, classes=2, feat_per_dev=4,
                    tx_per_dev=2, rx=2, slots=1, noise_power=0.1, eps=0.5,
                    mean_scale=1.0):
    """Random small scenario with exactly consistent mixture statistics.

    Statistics are built directly in the transmit domain (not estimated
    from samples): random class means and PD covariances, priors uniform,
    global covariance assembled through the mixture identity.
    """
    complex_field = mode == "complex"
    feature_dims = (feat_per_dev,) * devices
    dims = SystemDims(feature_dims=feature_dims, tx_antennas=(tx_per_dev,) * devices,
                      rx_antennas=rx, slots=slots, mode=mode)
    d = dims.stream_dim
    priors = np.full(classes, 1.0 / classes)
    means = (rand_cn(rng, (classes, d)) if complex_field
             else rng.standard_normal((classes, d))) * mean_scale
    covs = np.stack([_rand_pd(rng, d, complex_field) * 0.2 for _ in range(classes)])
    if complex_field:
        rels = np.zeros((classes, d, d), dtype=complex)
        for j in range(classes):
            raw = rand_cn(rng, (d, d)) * 0.05
            rels[j] = 0.5 * (raw + raw.T)
    else:
        rels = covs.copy()
    mean_bar = (priors[:, None] * means).sum(axis=0)
    cov = np.zeros_like(covs[0])
    for j in range(classes):
        dm = means[j] - mean_bar
        cov = cov + priors[j] * (covs[j] + np.outer(dm, dm.conj()))
    stats = FeatureStats(priors, means, covs, rels, herm(cov),
                         feature_dims, mode)

    per_slot = []
    for k in range(devices):
        shape = (slots, rx, tx_per_dev)
        per_slot.append(rand_cn(rng, shape) if complex_field
                        else rng.standard_normal(shape))
    chan = ChannelRealization(per_slot=per_slot, noise_power=noise_power, mode=mode)
    params = Mcr2Params.for_scenario(eps, slots, rx, noise_power)
    return dims, chan, stats, params


def random_feasible(rng, dims, stats, budgets):
    """Random precoder set scaled to the power boundary."""
    blocks = []
    budgets = tuple(float(b) for b in np.atleast_1d(budgets))
    for k in range(dims.devices):
        shape = (dims.slots * dims.tx_antennas[k], dims.stream_dims[k])
        v = (rng.standard_normal(shape) if dims.mode == "real"
             else rand_cn(rng, shape))
        s_kk = stats.block(stats.cov, k, k)
        power = float(np.real(np.trace(v @ s_kk @ v.conj().T)))
        if power > 0.0:
            v = v * np.sqrt(budgets[k] / power)
        blocks.append(v)
    return PrecoderSet(blocks, budgets)


def grad_check(scenarios=20, seed=0, directions=8, step=1e-5):
    """Worst relative error between analytic directional derivatives and
    central finite differences over random scenarios in both modes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(scenarios):
        mode = "complex" if trial % 2 == 0 else "real"
        feat = 4 if mode == "complex" else 3
        dims, chan, stats, params = random_scenario(
            rng, mode=mode, devices=int(rng.integers(1, 3)), classes=2,
            feat_per_dev=feat, tx_per_dev=2, rx=2)
        budgets = tuple(1.0 for _ in range(dims.devices))
        v = random_feasible(rng, dims, stats, budgets)
        v = PrecoderSet([0.7 * b for b in v.blocks], budgets)
        grads = grad_delta_r(v, chan, stats, params)
        for _ in range(directions):
            deltas = [rand_cn(rng, b.shape) if dims.mode == "complex"
                      else rng.standard_normal(b.shape) for b in v.blocks]
            analytic = sum(float(np.real(np.vdot(g, d)))
                           for g, d in zip(grads, deltas))
            plus = PrecoderSet([b + step * d for b, d in zip(v.blocks, deltas)],
                               budgets)
            minus = PrecoderSet([b - step * d for b, d in zip(v.blocks, deltas)],
                                budgets)
            fd = (delta_r(plus, chan, stats, params)
                  - delta_r(minus, chan, stats, params)) / (2.0 * step)
            denom = max(abs(fd), abs(analytic), 1e-8)
            worst = max(worst, abs(fd - analytic) / denom)
    return worst
