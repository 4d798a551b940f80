"""Small linear-algebra helpers shared by the solvers.

Everything here works for both real and complex arrays: conjugate
transposition on a real array is just transposition, so formulas written
with ``.conj().T`` cover both scalar fields.
"""

import numpy as np

__all__ = [
    "herm",
    "logdet_pd",
    "psd_sqrt",
    "psd_inv_sqrt",
    "vec",
    "unvec",
    "block_diag",
    "rand_cn",
    "bisect_dual",
    "dual_power",
]


def herm(a):
    """Symmetrize ``a`` to suppress round-off asymmetry."""
    return 0.5 * (a + a.conj().T)


def logdet_pd(a):
    """Log-determinant of a Hermitian positive definite matrix.

    Uses a Cholesky factorization and falls back to an eigenvalue sum if
    the factorization fails (near-semidefinite input).
    """
    a = herm(np.asarray(a))
    try:
        chol = np.linalg.cholesky(a)
        return 2.0 * float(np.sum(np.log(np.real(np.diag(chol)))))
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(a)
        if np.any(w <= 0):
            raise np.linalg.LinAlgError(
                "matrix is not positive definite (min eigenvalue "
                f"{w.min():.3e})"
            )
        return float(np.sum(np.log(w)))


def psd_sqrt(a):
    """Hermitian PSD square root; tiny negative eigenvalues are clipped."""
    w, v = np.linalg.eigh(herm(np.asarray(a)))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def psd_inv_sqrt(a, floor_rel=1e-12):
    """Inverse Hermitian square root with a relative eigenvalue floor.

    Eigenvalues below ``floor_rel`` times the largest one are raised to the
    floor so that near-singular covariances stay invertible.
    """
    w, v = np.linalg.eigh(herm(np.asarray(a)))
    w_max = float(w.max()) if w.size else 0.0
    if w_max <= 0.0:
        raise np.linalg.LinAlgError("matrix has no positive eigenvalue")
    w = np.maximum(w, floor_rel * w_max)
    return (v / np.sqrt(w)) @ v.conj().T


def vec(a):
    """Column-major vectorization (stack columns)."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v, shape):
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape(shape, order="F")


def block_diag(blocks, dtype=None):
    """Block-diagonal matrix from a sequence of 2-D arrays."""
    blocks = [np.atleast_2d(b) for b in blocks]
    if dtype is None:
        dtype = np.result_type(*[b.dtype for b in blocks])
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols), dtype=dtype)
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def rand_cn(rng, shape):
    """Standard circularly symmetric complex Gaussian entries (unit variance)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def dual_power(eigvals, weights, lam):
    """Evaluate ``sum_i w_i / (m_i + lam)^2`` with 0/0 treated as 0.

    This is the squared norm of ``(M + lam I)^{-1} t`` expressed in the
    eigenbasis of the Hermitian PSD matrix ``M`` (``w_i = |t_i|^2``).
    """
    denom = (eigvals + lam) ** 2
    out = 0.0
    for w, d in zip(weights, denom):
        if d > 0.0:
            out += w / d
        elif w > 0.0:
            return np.inf
    return out


def bisect_dual(eigvals, weights, budget, rtol=1e-8, max_iter=400):
    """Smallest dual variable ``lam >= 0`` with ``dual_power(lam) <= budget``.

    ``dual_power`` is strictly decreasing in ``lam``, so the root of
    ``dual_power(lam) = budget`` (when the unconstrained solution is
    infeasible) is found by bisection.  The returned value is always on the
    feasible side of the bracket.

    Parameters
    ----------
    eigvals : array, nonnegative eigenvalues of the quadratic form.
    weights : array, squared magnitudes of the linear term in the eigenbasis.
    budget : float, power budget (right-hand side).
    rtol : float, relative tolerance on the dual variable.
    """
    eigvals = np.asarray(eigvals, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if budget <= 0.0:
        raise ValueError("budget must be positive")
    total = float(weights.sum())
    if total == 0.0:
        return 0.0
    if dual_power(eigvals, weights, 0.0) <= budget:
        return 0.0
    hi = np.sqrt(total / budget)
    # By construction dual_power(hi) <= total / hi^2 = budget; the loop is a
    # pure round-off safeguard.
    while dual_power(eigvals, weights, hi) > budget:
        hi *= 2.0
    lo = 0.0
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if dual_power(eigvals, weights, mid) > budget:
            lo = mid
        else:
            hi = mid
    return hi
