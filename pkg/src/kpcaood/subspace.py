"""Principal-subspace fitting and reconstruction errors in the mapped space.

fit_subspace eigendecomposes the unnormalized centered scatter matrix. When
the mapped dimension exceeds the row count it switches to the Gram-matrix
dual (same nonzero spectrum, eigenvectors lifted through the data), which
keeps high-dimensional random-feature fits cheap; the full basis needed by
residual_form_error is then unavailable.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError, ShapeError, UsageError
from .linalg import _fix_eigenvector_signs, covariance, sym_eigen


@dataclass
class SubspaceModel:
    """Mean, top-q orthonormal projection, and the covariance spectrum."""

    mean: np.ndarray
    projection: np.ndarray  # (dim, q)
    spectrum: np.ndarray  # descending, length = mapped dim
    q: int
    evr_threshold: float
    full_basis: np.ndarray | None = None  # (dim, dim) when fitted densely

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _choose_q(spectrum: np.ndarray, threshold: float) -> int:
    positive = spectrum[spectrum > 0.0]
    if positive.size == 0:
        raise DataError("covariance spectrum has no positive eigenvalues")
    cum = np.cumsum(positive)
    ratios = cum / cum[-1]
    return int(np.argmax(ratios >= threshold)) + 1


def fit_subspace(mapped: np.ndarray, evr_threshold: float) -> SubspaceModel:
    """Fit mean + principal subspace of the mapped rows.

    q is the smallest count of leading eigenvalues whose cumulative share of
    the strictly positive spectrum reaches evr_threshold.
    """
    mapped = np.asarray(mapped, dtype=np.float64)
    if mapped.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix of mapped rows, got {mapped.shape}")
    rows, dim = mapped.shape
    if rows < 2:
        raise DataError(f"need at least 2 rows to fit a subspace, got {rows}")
    if not 0.0 < evr_threshold <= 1.0:
        raise ParameterError(f"evr_threshold must be in (0, 1], got {evr_threshold}")
    mean = mapped.mean(axis=0)

    if dim <= rows:
        eig = sym_eigen(covariance(mapped, mean))
        spectrum = eig.eigenvalues
        q = _choose_q(spectrum, evr_threshold)
        return SubspaceModel(mean, np.ascontiguousarray(eig.eigenvectors[:, :q]),
                             spectrum, q, evr_threshold, full_basis=eig.eigenvectors)

    centered = mapped - mean
    eig = sym_eigen(centered @ centered.T)
    spectrum = np.zeros(dim, dtype=np.float64)
    n_pos = int(np.count_nonzero(eig.eigenvalues > 0.0))
    spectrum[:n_pos] = eig.eigenvalues[:n_pos]
    q = _choose_q(spectrum, evr_threshold)
    lifted = centered.T @ eig.eigenvectors[:, :q]
    lifted /= np.linalg.norm(lifted, axis=0)
    return SubspaceModel(mean, _fix_eigenvector_signs(lifted), spectrum, q,
                         evr_threshold, full_basis=None)


def _as_batch(model: SubspaceModel, v: np.ndarray):
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    if v.ndim != 2 or v.shape[1] != model.dim:
        raise ShapeError(f"expected vectors of dim {model.dim}, got shape {v.shape}")
    return v, single


def reconstruction_error(model: SubspaceModel, v: np.ndarray):
    """|| (I - U_q U_q^T)(v - mean) ||_2 for a vector or each matrix row."""
    batch, single = _as_batch(model, v)
    centered = batch - model.mean
    coeffs = centered @ model.projection
    residual = centered - coeffs @ model.projection.T
    errors = np.linalg.norm(residual, axis=1)
    return float(errors[0]) if single else errors


def residual_form_error(model: SubspaceModel, v: np.ndarray):
    """|| U_p^T (v - mean) ||_2 using the trailing dim - q eigenvectors.

    Requires the full eigenvector basis (dense fits keep it); agrees with
    reconstruction_error to rounding.
    """
    if model.full_basis is None or model.full_basis.shape[1] != model.dim:
        raise UsageError("model does not retain the full eigenvector basis")
    batch, single = _as_batch(model, v)
    residual_coeffs = (batch - model.mean) @ model.full_basis[:, model.q :]
    errors = np.linalg.norm(residual_coeffs, axis=1)
    return float(errors[0]) if single else errors
