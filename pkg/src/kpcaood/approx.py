"""Explicit finite-dimensional approximations of the detection kernels.

Two families: data-independent random Fourier features (shift-invariant
kernels only) and the data-dependent low-rank landmark map. Both expect
already cosine-normalized inputs whenever their spec carries the prefix;
the fitted maps are immutable and safe to share across threads.
"""

from dataclasses import dataclass

import numpy as np

from .dataio import ROLE_LOGITS, FeatureMatrix
from .errors import (
    DegenerateKernelError,
    ParameterError,
    ShapeError,
    UnsupportedKernelError,
    UsageError,
)
from .kernels import KernelSpec, kernel_matrix
from .linalg import SeededRng, sym_eigen

SAMPLING_SCHEMES = ("low-energy", "high-energy", "uniform")

# relative cutoff replacing the pseudo-inverse: eigenpairs with
# lambda <= cutoff * lambda_max cannot survive the inverse square root
EIGENVALUE_REL_CUTOFF = 1e-10


@dataclass(frozen=True)
class RffMap:
    """Random Fourier feature map: z -> sqrt(2/M) * cos(z @ omega + u)."""

    omega: np.ndarray  # (m, n_features) frequency draws
    u: np.ndarray  # (n_features,) phase draws in [0, 2pi)
    n_features: int
    spec: KernelSpec
    seed: int

    @property
    def input_dim(self) -> int:
        return self.omega.shape[0]

    @property
    def output_dim(self) -> int:
        return self.n_features


@dataclass(frozen=True)
class NystromMap:
    """Landmark map: z -> diag(lambda)^(-1/2) U^T [k(z, landmark_i)]_i."""

    landmarks: np.ndarray  # (n_landmarks, m), post-cosine when prefixed
    u_tilde: np.ndarray  # (n_landmarks, kept) eigenvectors of the landmark kernel
    lambda_tilde: np.ndarray  # (kept,) retained eigenvalues, descending, > 0
    kept: int
    spec: KernelSpec
    sampling: str = "low-energy"

    @property
    def input_dim(self) -> int:
        return self.landmarks.shape[1]

    @property
    def output_dim(self) -> int:
        return self.kept


@dataclass(frozen=True)
class EnergyScores:
    """Per-sample log-sum-exp confidence scores at temperature T."""

    values: np.ndarray
    temperature: float


def fit_rff(spec: KernelSpec, dim: int, n_features: int, rng: SeededRng) -> RffMap:
    """Draw the random frequencies and phases for a shift-invariant kernel.

    gaussian: omega entries are normal with standard deviation sqrt(2*gamma)
    (the Fourier transform of exp(-gamma * ||.||^2)); laplacian: standard
    Cauchy scaled by gamma. Phases are uniform on [0, 2pi).
    """
    if spec.base not in ("gaussian", "laplacian"):
        raise UnsupportedKernelError(
            f"random Fourier features need a shift-invariant kernel, got {spec.base!r}"
        )
    if n_features < 1:
        raise ParameterError(f"n_features must be >= 1, got {n_features}")
    if dim < 1:
        raise ParameterError(f"input dim must be >= 1, got {dim}")
    seed = rng.seed
    if spec.base == "gaussian":
        omega = np.sqrt(2.0 * spec.gamma) * rng.normal(dim * n_features)
    else:
        omega = spec.gamma * rng.cauchy(dim * n_features)
    u = rng.uniform(n_features, 0.0, 2.0 * np.pi)
    return RffMap(omega.reshape(dim, n_features), u, n_features, spec, seed)


def apply_rff(rff: RffMap, z: np.ndarray) -> np.ndarray:
    """Map a vector (or matrix of rows) through the random feature map."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != rff.input_dim:
        raise ShapeError(f"expected inputs of dim {rff.input_dim}, got shape {z.shape}")
    mapped = np.sqrt(2.0 / rff.n_features) * np.cos(z @ rff.omega + rff.u)
    return mapped[0] if single else mapped


def energy_scores(logits: FeatureMatrix, temperature: float = 1.0) -> EnergyScores:
    """T * log sum_j exp(logit_j / T) per row, max-subtracted for stability."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    if logits.role != ROLE_LOGITS:
        raise UsageError(f"energy scores need a logits matrix, got role {logits.role!r}")
    scaled = logits.data / temperature
    peak = np.max(scaled, axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(np.sum(np.exp(scaled - peak), axis=1))
    return EnergyScores(temperature * lse, temperature)


def select_landmarks(
    train: FeatureMatrix,
    energies: EnergyScores | None,
    n_landmarks: int,
    sampling: str,
    rng: SeededRng | None = None,
) -> np.ndarray:
    """Pick landmark row indices from the training set.

    low-energy / high-energy take the n_landmarks smallest / largest energy
    rows (ties broken by lower index); uniform draws distinct indices from
    the rng. The returned order is the selection order.
    """
    if sampling not in SAMPLING_SCHEMES:
        raise UsageError(f"unknown sampling scheme {sampling!r}")
    if n_landmarks < 1 or n_landmarks > train.rows:
        raise ParameterError(
            f"n_landmarks must be in [1, {train.rows}], got {n_landmarks}"
        )
    if sampling == "uniform":
        if rng is None:
            raise UsageError("uniform sampling requires an rng")
        return rng.sample_without_replacement(train.rows, n_landmarks)
    if energies is None:
        raise UsageError(f"{sampling} sampling requires energy scores")
    if energies.values.shape[0] != train.rows:
        raise ShapeError(
            f"{energies.values.shape[0]} energies for {train.rows} training rows"
        )
    keys = energies.values if sampling == "low-energy" else -energies.values
    order = np.argsort(keys, kind="stable")
    return order[:n_landmarks]


def fit_nystrom(spec: KernelSpec, landmarks: FeatureMatrix) -> NystromMap:
    """Eigendecompose the landmark kernel matrix and keep the usable pairs.

    Eigenpairs at or below EIGENVALUE_REL_CUTOFF * lambda_max are dropped so
    the inverse square root stays finite on rank-deficient landmark sets.
    """
    kmat = kernel_matrix(spec, landmarks.data, landmarks.data)
    eig = sym_eigen(kmat)
    lam_max = eig.eigenvalues[0] if eig.eigenvalues.size else 0.0
    if lam_max <= 0:
        raise DegenerateKernelError("landmark kernel matrix has no positive eigenvalues")
    keep = eig.eigenvalues > EIGENVALUE_REL_CUTOFF * lam_max
    kept = int(np.count_nonzero(keep))
    if kept == 0:
        raise DegenerateKernelError("all eigenpairs fell below the relative cutoff")
    return NystromMap(
        landmarks=np.array(landmarks.data, dtype=np.float64),
        u_tilde=np.ascontiguousarray(eig.eigenvectors[:, keep]),
        lambda_tilde=eig.eigenvalues[keep].copy(),
        kept=kept,
        spec=spec,
    )


def apply_nystrom(nys: NystromMap, z: np.ndarray) -> np.ndarray:
    """Map a vector (or matrix of rows) through the landmark map.

    Inputs must live in the landmark space (post-cosine when the spec is
    prefixed; re-normalization is a no-op there).
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != nys.input_dim:
        raise ShapeError(f"expected inputs of dim {nys.input_dim}, got shape {z.shape}")
    kvec = kernel_matrix(nys.spec, z, nys.landmarks)
    mapped = (kvec @ nys.u_tilde) / np.sqrt(nys.lambda_tilde)
    return mapped[0] if single else mapped
