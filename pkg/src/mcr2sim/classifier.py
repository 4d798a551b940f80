"""Channel-adaptive MAP classification of received signals.

After the linear channel, each class of the received signal is Gaussian
with mean ``H V mu_j`` and second-order structure given by the propagated
class covariance plus noise and the propagated relation matrix.  In complex
mode the relation matrix is generally nonzero (the feature folding makes
the complex features improper), so densities are evaluated in the real
composite representation ``[Re y; Im y]``, which handles the improper case
exactly.  Classification picks the class with the largest prior-weighted
log density.
"""

from dataclasses import dataclass

import numpy as np

from .channel import draw_noise
from .features import complex_to_real

__all__ = [
    "AugmentedGaussian",
    "augment_stats",
    "map_classify",
    "map_classify_batch",
    "eval_accuracy",
]


@dataclass
class AugmentedGaussian:
    """Real-composite Gaussian model of one received class."""

    mean: np.ndarray
    cov: np.ndarray
    class_index: int
    jittered: bool = False

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError("covariance shape does not match the mean")
        try:
            self._chol = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            jitter = 1e-10 * np.trace(self.cov) / n + 1e-300
            self._chol = np.linalg.cholesky(self.cov + jitter * np.eye(n))
            self.jittered = True
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def log_density(self, r):
        """Gaussian log density at one or more composite vectors (columns)."""
        r = np.atleast_2d(np.asarray(r, dtype=float).T).T
        if r.ndim == 1:
            r = r[:, None]
        diff = r - self.mean[:, None]
        w = np.linalg.solve(self._chol, diff)
        quad = np.sum(w * w, axis=0)
        n = self.mean.shape[0]
        return -0.5 * (n * np.log(2.0 * np.pi) + self._logdet + quad)


def _composite(y, mode):
    y = np.asarray(y)
    if mode == "real":
        return np.real(y).astype(float)
    return complex_to_real(y).astype(float)


def augment_stats(precoders, chan, stats):
    """Per-class received-signal Gaussians in real-composite form.

    Complex mode assembles the composite covariance from the propagated
    Hermitian covariance ``S`` and relation matrix ``G``:
    ``C_aa = (Re S + Re G)/2``, ``C_bb = (Re S - Re G)/2``,
    ``C_ab = (Im G - Im S)/2``, ``C_ba = (Im G + Im S)/2``.  Real mode uses
    mean ``H V mu_j`` and covariance ``H V S_j V^T H^T + noise I`` directly.
    Classes without sample mass are skipped.  A composite covariance that is
    indefinite beyond round-off is rejected; small negative eigenvalues are
    absorbed by the Cholesky jitter.
    """
    hv = chan.H @ precoders.assembled
    n = hv.shape[0]
    models = []
    for j in range(stats.class_count):
        if not stats.present[j]:
            continue
        mean_c = hv @ stats.means[j]
        if chan.mode == "real":
            cov = hv @ stats.covs[j] @ hv.T + chan.noise_power * np.eye(n)
            cov = 0.5 * (cov + cov.T)
            mean = np.real(mean_c).astype(float)
            comp = np.real(cov).astype(float)
        else:
            s = hv @ stats.covs[j] @ hv.conj().T + chan.noise_power * np.eye(n)
            g = hv @ stats.rels[j] @ hv.T
            c_aa = 0.5 * (np.real(s) + np.real(g))
            c_bb = 0.5 * (np.real(s) - np.real(g))
            c_ab = 0.5 * (np.imag(g) - np.imag(s))
            c_ba = 0.5 * (np.imag(g) + np.imag(s))
            comp = np.block([[c_aa, c_ab], [c_ba, c_bb]])
            comp = 0.5 * (comp + comp.T)
            mean = _composite(mean_c, "complex")
        scale = max(np.trace(comp), 1e-300)
        min_eig = float(np.linalg.eigvalsh(comp).min())
        if min_eig < -1e-8 * scale:
            raise ValueError(
                f"class {j}: composite covariance is indefinite "
                f"(min eigenvalue {min_eig:.3e}); covariance and relation "
                "matrices are inconsistent"
            )
        if min_eig < 0.0:
            comp = comp + (-min_eig + 1e-14 * scale) * np.eye(comp.shape[0])
        models.append(AugmentedGaussian(mean=mean, cov=comp, class_index=j))
    if not models:
        raise ValueError("no class available for classification")
    return models


def map_classify(y, models, priors):
    """MAP class index for one received vector (ties go to the smaller
    class index; classes with zero prior never win)."""
    return int(map_classify_batch(np.asarray(y)[:, None], models, priors)[0])


def map_classify_batch(y, models, priors):
    """Vectorized MAP classification, one received vector per column."""
    priors = np.asarray(priors, dtype=float)
    if not np.any(priors[[m.class_index for m in models]] > 0.0):
        raise ValueError("all candidate classes have zero prior")
    y = np.asarray(y)
    mode = "complex" if models[0].mean.shape[0] == 2 * y.shape[0] else "real"
    r = _composite(y, mode)
    if r.ndim == 1:
        r = r[:, None]
    scores = np.full((len(models), r.shape[1]), -np.inf)
    for i, model in enumerate(models):
        p = priors[model.class_index]
        if p <= 0.0:
            continue
        scores[i] = np.log(p) + model.log_density(r)
    best = np.argmax(scores, axis=0)
    idx = np.asarray([m.class_index for m in models])
    return idx[best]


def eval_accuracy(precoders, chan, stats, test_samples, trials_per_sample=1, seed=0):
    """Monte-Carlo inference accuracy of the MAP classifier.

    Every test feature vector is mapped to the transmit domain, sent through
    the channel with ``trials_per_sample`` independent noise draws, and
    classified.  Returns the accuracy and the class-count-squared confusion
    matrix (rows: true class, columns: predicted).  Deterministic for a
    fixed seed.
    """
    if test_samples.count < 1:
        raise ValueError("test set is empty")
    models = augment_stats(precoders, chan, stats)
    zs = stats.to_stream(test_samples.Z)
    clean = chan.H @ (precoders.assembled @ zs)
    rng = np.random.default_rng(seed)
    reps = int(trials_per_sample)
    noisy = np.repeat(clean, reps, axis=1) + draw_noise(
        chan, (clean.shape[0], clean.shape[1] * reps), rng
    )
    pred = map_classify_batch(noisy, models, stats.priors)
    truth = np.repeat(test_samples.labels, reps)
    j = stats.class_count
    confusion = np.zeros((j, j), dtype=int)
    np.add.at(confusion, (truth, pred), 1)
    accuracy = float(np.mean(pred == truth))
    return accuracy, confusion
