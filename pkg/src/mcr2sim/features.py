"""Gaussian-mixture feature model.

The transmitted features are modeled as a Gaussian mixture in real space,
one component per class.  For transmission over the complex channel the
real feature vector of each device is folded into a complex vector (first
half becomes the real part, second half the imaginary part).  This module
synthesizes feature datasets, estimates the first- and second-order
statistics consumed by the precoder solvers and the classifier, and
evaluates the sample-level coding-rate quantities.

All coding-rate values are in nats.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import herm

__all__ = [
    "GmSpec",
    "SampleSet",
    "FeatureStats",
    "sample_gm",
    "real_to_complex",
    "complex_to_real",
    "estimate_stats",
    "exact_stats",
    "coding_rate",
    "rate_reduction_samples",
    "sphere_spec",
    "orthogonal_spec",
]

_PRIOR_TOL = 1e-12
_SYM_TOL = 1e-12
_EIG_TOL = 1e-10


@dataclass(frozen=True)
class GmSpec:
    """Ground-truth Gaussian-mixture generator.

    Attributes
    ----------
    priors : (J,) class probabilities, summing to one.
    means : (J, D) real class means.
    covs : (J, D, D) real symmetric PSD class covariances.
    sphere_project : if set, every drawn sample is normalized to unit norm.
    """

    priors: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    sphere_project: bool = False

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float)
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covs, dtype=float)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        if priors.ndim != 1 or means.ndim != 2 or covs.ndim != 3:
            raise ValueError("priors, means, covs must be 1-D, 2-D, 3-D arrays")
        j, d = means.shape
        if priors.shape != (j,) or covs.shape != (j, d, d):
            raise ValueError("inconsistent class count or feature dimension")
        if np.any(priors < 0.0) or abs(priors.sum() - 1.0) > _PRIOR_TOL:
            raise ValueError("priors must be nonnegative and sum to one")
        for c in covs:
            if np.max(np.abs(c - c.T)) > _SYM_TOL:
                raise ValueError("class covariance is not symmetric")
            if np.linalg.eigvalsh(0.5 * (c + c.T)).min() < -_EIG_TOL:
                raise ValueError("class covariance is not PSD")

    @property
    def class_count(self):
        return self.priors.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def to_json(self):
        return {
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
            "sphere_project": self.sphere_project,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            priors=np.asarray(obj["priors"], dtype=float),
            means=np.asarray(obj["means"], dtype=float),
            covs=np.asarray(obj["covs"], dtype=float),
            sphere_project=bool(obj.get("sphere_project", False)),
        )


def sphere_spec(cov_scale=0.02):
    """Three balanced classes in R^3, projected onto the unit sphere."""
    means = np.array([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])
    covs = np.stack([cov_scale * np.eye(3)] * 3)
    return GmSpec(np.full(3, 1.0 / 3.0), means, covs, sphere_project=True)


def orthogonal_spec(classes, dim, seed, cov_scale=0.02, sphere_project=True):
    """Balanced mixture with random orthonormal class means.

    A synthetic stand-in for learned features: unit-norm class centers in
    (near-)orthogonal directions with small isotropic spread, which is the
    geometry the coding-rate-reduction training objective promotes.
    """
    if classes > dim:
        raise ValueError("need dim >= classes for orthonormal means")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    means = q[:, :classes].T.copy()
    covs = np.stack([cov_scale * np.eye(dim)] * classes)
    return GmSpec(np.full(classes, 1.0 / classes), means, covs, sphere_project)


@dataclass
class SampleSet:
    """Feature samples with soft class memberships.

    ``Z`` holds one sample per column.  ``membership[m, j]`` is the
    probability that sample ``m`` belongs to class ``j`` (rows sum to one);
    ``labels`` are the 0-based hard labels.
    """

    Z: np.ndarray
    labels: np.ndarray
    membership: np.ndarray

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.membership = np.asarray(self.membership, dtype=float)
        d, m = self.Z.shape
        if self.labels.shape != (m,) or self.membership.shape[0] != m:
            raise ValueError("labels/membership length must match sample count")
        if np.any(self.membership < -1e-15) or np.any(self.membership > 1 + 1e-15):
            raise ValueError("membership entries must lie in [0, 1]")
        row_sums = self.membership.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > _PRIOR_TOL * max(1, self.membership.shape[1]):
            raise ValueError("membership rows must sum to one")

    @property
    def dim(self):
        return self.Z.shape[0]

    @property
    def count(self):
        return self.Z.shape[1]

    @property
    def class_count(self):
        return self.membership.shape[1]

    @classmethod
    def from_labels(cls, Z, labels, class_count=None):
        labels = np.asarray(labels, dtype=int)
        j = int(class_count if class_count is not None else labels.max() + 1)
        membership = np.zeros((labels.shape[0], j))
        membership[np.arange(labels.shape[0]), labels] = 1.0
        return cls(Z=np.asarray(Z, dtype=float), labels=labels, membership=membership)

    def to_csv(self, path):
        """One row per sample: label followed by the feature values."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for m in range(self.count):
                writer.writerow([int(self.labels[m])] + [repr(v) for v in self.Z[:, m]])


def sample_gm(spec, count, seed):
    """Draw ``count`` i.i.d. samples from a :class:`GmSpec`.

    Class indices are drawn from the priors, then each sample from the
    selected component.  With ``sphere_project`` every column is replaced by
    ``z / ||z||`` (zero-norm draws are redrawn; this has probability zero
    for nondegenerate components).  Deterministic for a fixed seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    j, d = spec.class_count, spec.dim
    roots = [_psd_root(spec.covs[i]) for i in range(j)]
    labels = rng.choice(j, size=count, p=spec.priors)
    g = rng.standard_normal((d, count))
    z = np.empty((d, count))
    for i in range(j):
        sel = labels == i
        z[:, sel] = spec.means[i][:, None] + roots[i] @ g[:, sel]
    if spec.sphere_project:
        norms = np.linalg.norm(z, axis=0)
        while np.any(norms == 0.0):
            bad = np.flatnonzero(norms == 0.0)
            for m in bad:
                z[:, m] = spec.means[labels[m]] + roots[labels[m]] @ rng.standard_normal(d)
            norms = np.linalg.norm(z, axis=0)
        z = z / norms
    return SampleSet.from_labels(z, labels, class_count=j)


def _psd_root(c):
    w, v = np.linalg.eigh(herm(np.asarray(c, dtype=float)))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def real_to_complex(z):
    """Fold a real vector into complex form: first half + j * second half."""
    z = np.asarray(z)
    d = z.shape[0]
    if d % 2 != 0:
        raise ValueError("dimension must be even")
    h = d // 2
    return z[:h] + 1j * z[h:]


def complex_to_real(zc):
    """Inverse of :func:`real_to_complex`."""
    zc = np.asarray(zc)
    return np.concatenate([np.real(zc), np.imag(zc)], axis=0)


def _to_stream(Z, device_dims, mode):
    """Map stacked real features to the per-device transmit-domain vectors.

    In complex mode each device's block of ``Z`` is folded independently;
    in real mode the features are transmitted as-is.
    """
    if mode == "real":
        return np.asarray(Z, dtype=float)
    parts = []
    off = 0
    for dk in device_dims:
        parts.append(real_to_complex(Z[off : off + dk]))
        off += dk
    if off != Z.shape[0]:
        raise ValueError("device dims do not sum to the feature dimension")
    return np.concatenate(parts, axis=0)


@dataclass
class FeatureStats:
    """First- and second-order statistics of the transmit-domain features.

    Per class: mean ``means[j]``, covariance ``covs[j]`` (Hermitian PSD) and
    relation matrix ``rels[j] = E[(z - mu)(z - mu)^T]`` (symmetric; equal to
    the covariance in real mode).  ``cov`` is the covariance of the full
    mixture about its global mean.  ``present[j]`` is False for classes with
    no sample mass; such classes carry zero prior and are excluded from
    classification.

    Block views follow the device layout: device ``k`` owns the contiguous
    index range of width ``stream_dims[k]``.
    """

    priors: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    rels: np.ndarray
    cov: np.ndarray
    device_dims: tuple
    mode: str
    present: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.present is None:
            self.present = np.ones(self.priors.shape[0], dtype=bool)
        expect = sum(self.stream_dims)
        if self.cov.shape != (expect, expect):
            raise ValueError("covariance size does not match device dims")

    @property
    def class_count(self):
        return self.priors.shape[0]

    @property
    def stream_dims(self):
        if self.mode == "real":
            return tuple(self.device_dims)
        return tuple(d // 2 for d in self.device_dims)

    @property
    def dim(self):
        return self.cov.shape[0]

    @property
    def offsets(self):
        out = [0]
        for d in self.stream_dims:
            out.append(out[-1] + d)
        return out

    def block(self, mat, k, q):
        """Device (k, q) block of a transmit-domain matrix."""
        off = self.offsets
        return mat[off[k] : off[k + 1], off[q] : off[q + 1]]

    def row_block(self, mat, k):
        """Device-k row slice of a transmit-domain matrix."""
        off = self.offsets
        return mat[off[k] : off[k + 1], :]

    def to_stream(self, Z):
        return _to_stream(np.asarray(Z), self.device_dims, self.mode)


def estimate_stats(samples, device_dims, mode="complex"):
    """Estimate :class:`FeatureStats` by membership-weighted averaging.

    Priors are the normalized membership masses; class means, covariances
    and relation matrices are membership-weighted sample moments of the
    transmit-domain features; the global covariance is taken about the
    global mean.  Classes with zero mass are flagged absent.
    """
    device_dims = tuple(int(d) for d in device_dims)
    if sum(device_dims) != samples.dim:
        raise ValueError("device dims must sum to the feature dimension")
    if mode == "complex" and any(d % 2 for d in device_dims):
        raise ValueError("complex mode requires even per-device dims")
    zs = _to_stream(samples.Z, device_dims, mode)
    m = samples.count
    pi = samples.membership
    w = pi.sum(axis=0)
    present = w > 0.0
    if not np.any(present):
        raise ValueError("no class has positive sample mass")
    priors = w / m
    d = zs.shape[0]
    dtype = zs.dtype
    means = np.zeros((samples.class_count, d), dtype=dtype)
    covs = np.zeros((samples.class_count, d, d), dtype=dtype)
    rels = np.zeros((samples.class_count, d, d), dtype=dtype)
    for j in range(samples.class_count):
        if not present[j]:
            continue
        means[j] = zs @ pi[:, j] / w[j]
        centered = zs - means[j][:, None]
        weighted = centered * pi[:, j][None, :]
        covs[j] = herm(weighted @ centered.conj().T / w[j])
        rel = weighted @ centered.T / w[j]
        rels[j] = 0.5 * (rel + rel.T)
    global_mean = zs.mean(axis=1)
    centered = zs - global_mean[:, None]
    cov = herm(centered @ centered.conj().T / m)
    return FeatureStats(priors, means, covs, rels, cov, device_dims, mode, present)


def exact_stats(spec, device_dims, mode="complex"):
    """Transmit-domain statistics computed from the generator itself.

    Only valid without sphere projection (projection changes the moments).
    Used as the ground-truth oracle for estimation tests.
    """
    if spec.sphere_project:
        raise ValueError("exact statistics unavailable under sphere projection")
    device_dims = tuple(int(d) for d in device_dims)
    if sum(device_dims) != spec.dim:
        raise ValueError("device dims must sum to the feature dimension")
    j = spec.class_count
    if mode == "real":
        means = spec.means.copy()
        covs = np.stack([herm(c) for c in spec.covs])
        rels = covs.copy()
    else:
        means = np.stack([_to_stream(mu, device_dims, mode) for mu in spec.means])
        d = means.shape[1]
        covs = np.zeros((j, d, d), dtype=complex)
        rels = np.zeros((j, d, d), dtype=complex)
        sel = _half_index(device_dims)
        for i in range(j):
            c = spec.covs[i]
            c11 = c[np.ix_(sel[0], sel[0])]
            c12 = c[np.ix_(sel[0], sel[1])]
            c21 = c[np.ix_(sel[1], sel[0])]
            c22 = c[np.ix_(sel[1], sel[1])]
            covs[i] = herm((c11 + c22) + 1j * (c21 - c12))
            rel = (c11 - c22) + 1j * (c12 + c21)
            rels[i] = 0.5 * (rel + rel.T)
    mean_bar = (spec.priors[:, None] * means).sum(axis=0)
    cov = np.zeros_like(covs[0])
    for i in range(j):
        dm = means[i] - mean_bar
        cov = cov + spec.priors[i] * (covs[i] + np.outer(dm, dm.conj()))
    return FeatureStats(spec.priors.copy(), means, covs, rels, herm(cov),
                        device_dims, mode)


def _half_index(device_dims):
    """Indices of the real-part and imaginary-part coordinates per device."""
    first, second = [], []
    off = 0
    for dk in device_dims:
        h = dk // 2
        first.extend(range(off, off + h))
        second.extend(range(off + h, off + dk))
        off += dk
    return np.asarray(first), np.asarray(second)


def coding_rate(Z, eps):
    """Average nats to encode the columns of ``Z`` up to distortion ``eps``.

    Evaluates ``0.5 * logdet(I + D / (M eps^2) Z Z^T)`` through the singular
    values of ``Z``.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    Z = np.asarray(Z, dtype=float)
    d, m = Z.shape
    if m < 1:
        raise ValueError("need at least one sample")
    s = np.linalg.svd(Z, compute_uv=False)
    return 0.5 * float(np.sum(np.log1p(d / (m * eps * eps) * s * s)))


def rate_reduction_samples(samples, eps):
    """Coding-rate reduction of a sample set: whole-set rate minus the
    membership-weighted per-class rates.  Classes with zero mass contribute
    nothing (that is the zero-mass limit of the class term)."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    Z = samples.Z
    d, m = Z.shape
    total = coding_rate(Z, eps)
    for j in range(samples.class_count):
        pj = samples.membership[:, j]
        tr = float(pj.sum())
        if tr <= 0.0:
            continue
        s = np.linalg.svd(Z * np.sqrt(pj)[None, :], compute_uv=False)
        logdet = float(np.sum(np.log1p(d / (tr * eps * eps) * s * s)))
        total -= tr / (2.0 * m) * logdet
    return total
