"""Exact kernel-PCA reconstruction errors from the full kernel matrix.

This is the ground-truth reference for small instances: O(N^3) in the
training size, capped at 5000 rows on purpose. Two error forms coexist:

* paper form   ||U_p^T k_z||, the residual-eigenvector projection of the
  raw kernel vector (uncentered, no eigenvalue scaling);
* standard form  sqrt(k(z,z) - sum_{j<=q} (u_j . k_z)^2 / lambda_j), the
  feature-space residual norm with optional double centering. This is the
  form that matches the explicit-map pipelines exactly.
"""

from dataclasses import dataclass

import numpy as np

from .approx import EIGENVALUE_REL_CUTOFF
from .dataio import FeatureMatrix
from .errors import DataError, ParameterError, ResourceError, ShapeError, UsageError
from .kernels import KernelSpec, kernel_eval, kernel_matrix
from .linalg import EigenDecomposition, sym_eigen

ORACLE_SIZE_CAP = 5000


@dataclass
class ExactKpcaModel:
    train: np.ndarray  # (N, m), post-cosine when the spec is prefixed
    spec: KernelSpec
    eig: EigenDecomposition  # of K (or the double-centered K when centered)
    p: int  # residual eigenpair count
    centered: bool
    row_means: np.ndarray  # (1/N) K 1
    grand_mean: float  # (1/N^2) 1^T K 1

    @property
    def n_train(self) -> int:
        return self.train.shape[0]


def fit_exact(train: FeatureMatrix, spec: KernelSpec, p: int, centered: bool) -> ExactKpcaModel:
    """Build and eigendecompose the full training kernel matrix."""
    n = train.rows
    if n < 2:
        raise DataError(f"need at least 2 training rows, got {n}")
    if n > ORACLE_SIZE_CAP:
        raise ResourceError(f"exact oracle is capped at {ORACLE_SIZE_CAP} rows, got {n}")
    if not 0 <= p < n:
        raise ParameterError(f"residual count p must be in [0, {n}), got {p}")
    kmat = kernel_matrix(spec, train.data, train.data)
    row_means = kmat.mean(axis=1)
    grand_mean = float(row_means.mean())
    if centered:
        kmat = kmat - row_means[None, :] - row_means[:, None] + grand_mean
    eig = sym_eigen(kmat)
    return ExactKpcaModel(
        train=np.array(train.data, dtype=np.float64),
        spec=spec,
        eig=eig,
        p=p,
        centered=centered,
        row_means=row_means,
        grand_mean=grand_mean,
    )


def _kernel_vectors(model: ExactKpcaModel, z: np.ndarray):
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != model.train.shape[1]:
        raise ShapeError(
            f"expected query dim {model.train.shape[1]}, got shape {z.shape}"
        )
    return kernel_matrix(model.spec, z, model.train), z, single


def _self_kernel(spec: KernelSpec, z: np.ndarray) -> np.ndarray:
    if spec.base in ("gaussian", "laplacian", "cosine"):
        return np.ones(z.shape[0], dtype=np.float64)
    if spec.cosine_prefix:
        return np.full(z.shape[0], kernel_eval(spec, z[0], z[0]), dtype=np.float64)
    sq = np.sum(z * z, axis=1)
    if spec.base == "linear":
        return sq
    return (sq + spec.c) ** spec.d


def exact_error_paper_form(model: ExactKpcaModel, z_hat: np.ndarray):
    """Residual-eigenvector projection norm of the raw kernel vector."""
    if model.centered:
        raise UsageError("paper-form errors are defined on the uncentered kernel matrix")
    kvec, _, single = _kernel_vectors(model, z_hat)
    if model.p == 0:
        errors = np.zeros(kvec.shape[0], dtype=np.float64)
    else:
        residual = kvec @ model.eig.eigenvectors[:, model.n_train - model.p :]
        errors = np.linalg.norm(residual, axis=1)
    return float(errors[0]) if single else errors


def exact_error_standard_form(model: ExactKpcaModel, z_hat: np.ndarray):
    """Feature-space residual norm outside the top-q kernel principal axes.

    q = N - p; eigenpairs at or below the relative cutoff are excluded from
    the projection sum. Squared errors are clamped at zero against rounding.
    """
    kvec, z, single = _kernel_vectors(model, z_hat)
    diag = _self_kernel(model.spec, z if not model.spec.cosine_prefix else _normalize(z))
    if model.centered:
        query_means = kvec.mean(axis=1)
        kbar = kvec - model.row_means[None, :] - query_means[:, None] + model.grand_mean
        self_bar = diag - 2.0 * query_means + model.grand_mean
    else:
        kbar = kvec
        self_bar = diag
    q = model.n_train - model.p
    lam = model.eig.eigenvalues
    usable = lam > EIGENVALUE_REL_CUTOFF * max(lam[0], 0.0)
    usable[q:] = False
    sq = self_bar.copy()
    if np.any(usable):
        coeffs = kbar @ model.eig.eigenvectors[:, usable]
        sq -= np.sum(coeffs * coeffs / lam[usable], axis=1)
    errors = np.sqrt(np.maximum(sq, 0.0))
    return float(errors[0]) if single else errors


def _normalize(z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / norms
