"""Dense numerical primitives: eigendecomposition, covariance, distances, RNG.

Matrices are plain float64 numpy arrays (rows = samples). All operations are
pure; SeededRng is the only stateful object and must be single-owner.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DataError, ShapeError

_EIGH_SYMMETRY_ATOL = 1e-9


@dataclass(frozen=True)
class EigenDecomposition:
    """Symmetric eigendecomposition with eigenvalues sorted descending.

    Column j of ``eigenvectors`` pairs with ``eigenvalues[j]``; columns are
    orthonormal and sign-fixed (largest-magnitude entry positive).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _fix_eigenvector_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigen(a: np.ndarray) -> EigenDecomposition:
    """Eigendecompose a symmetric matrix, eigenvalues descending.

    Raises ShapeError for non-square or asymmetric input (tolerance 1e-9),
    DataError for non-finite entries, ConvergenceError if the solver fails.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError("matrix contains non-finite entries")
    if a.size and np.max(np.abs(a - a.T)) > _EIGH_SYMMETRY_ATOL:
        raise ShapeError("matrix is not symmetric within 1e-9")
    sym = (a + a.T) / 2.0
    try:
        values, vectors = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver did not converge: {exc}") from exc
    order = np.argsort(values, kind="stable")[::-1]
    values = values[order]
    vectors = _fix_eigenvector_signs(np.ascontiguousarray(vectors[:, order]))
    return EigenDecomposition(values, vectors)


def covariance(x: np.ndarray, mean: np.ndarray, block: int = 8192) -> np.ndarray:
    """Unnormalized centered scatter matrix sum_i (x_i - mean)(x_i - mean)^T.

    Accumulated over fixed-size row blocks so N x dim inputs never need a
    full centered copy in memory; the block order is fixed, so results are
    deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if x.ndim != 2 or mean.ndim != 1 or mean.shape[0] != x.shape[1]:
        raise ShapeError(
            f"mean of length {mean.shape} does not match matrix with {x.shape} columns"
        )
    dim = x.shape[1]
    cov = np.zeros((dim, dim), dtype=np.float64)
    for start in range(0, x.shape[0], block):
        centered = x[start : start + block] - mean
        cov += centered.T @ centered
    return (cov + cov.T) / 2.0


def pairwise_sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of squared Euclidean distances between rows of a and rows of b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"column mismatch: {a.shape} vs {b.shape}")
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_INV_2_53 = float(2.0**-53)


class SeededRng:
    """Counter-based deterministic random source (splitmix64 core).

    Identical seeds give identical draw sequences on every platform; the
    counter advances by a fixed amount per call, so draws can be pre-planned
    or split by counter ranges for parallel work.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        z = (np.uint64(self.seed) + (idx + np.uint64(1)) * _GOLDEN).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def uniform01(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1)."""
        return (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return low + (high - low) * self.uniform01(n)

    def normal(self, n: int) -> np.ndarray:
        """n standard-normal doubles via Box-Muller on uniform pairs."""
        pairs = (n + 1) // 2
        u1 = ((self._raw(pairs) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = self.uniform01(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(theta)
        out[1::2] = radius * np.sin(theta)
        return out[:n]

    def cauchy(self, n: int) -> np.ndarray:
        """n standard-Cauchy doubles via tan of a scaled open-interval uniform."""
        u = ((self._raw(n) >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
        return np.tan(np.pi * (u - 0.5))

    def sample_without_replacement(self, n_total: int, k: int) -> np.ndarray:
        """k distinct indices from range(n_total) via partial Fisher-Yates."""
        if k > n_total:
            raise ShapeError(f"cannot draw {k} distinct indices from {n_total}")
        pool = np.arange(n_total, dtype=np.int64)
        u = self.uniform01(k)
        for i in range(k):
            span = n_total - i
            # min() guards the round-to-even case u*span == span at u -> 1
            j = i + min(int(u[i] * span), span - 1)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
