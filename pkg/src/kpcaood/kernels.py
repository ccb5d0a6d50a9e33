"""Exact kernel evaluations: cosine, gaussian, laplacian, polynomial, linear.

A KernelSpec optionally carries a cosine prefix, meaning inputs are
l2-normalized before the base kernel is applied (the only composition the
detection pipelines use). The cosine map is idempotent, so feeding already
normalized vectors through a prefixed spec is harmless.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError
from .linalg import pairwise_sq_dist

KERNEL_BASES = ("gaussian", "laplacian", "polynomial", "linear", "cosine")
_NEEDS_GAMMA = ("gaussian", "laplacian")


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel description.

    gamma is the width of gaussian/laplacian; c and d parameterize the
    polynomial kernel (x.y + c)^d; cosine_prefix applies l2-normalization
    before the base kernel.
    """

    base: str
    gamma: float | None = None
    c: float = 0.0
    d: int = 1
    cosine_prefix: bool = False

    def __post_init__(self):
        if self.base not in KERNEL_BASES:
            raise ParameterError(f"unknown kernel base {self.base!r}")
        if self.base in _NEEDS_GAMMA:
            if self.gamma is None or not self.gamma > 0:
                raise ParameterError(f"{self.base} kernel requires gamma > 0, got {self.gamma}")
        if self.base == "polynomial" and self.d < 1:
            raise ParameterError(f"polynomial degree must be >= 1, got {self.d}")
        if self.base == "cosine" and self.cosine_prefix:
            raise ParameterError("cosine base with cosine_prefix is redundant; drop the prefix")


def cos_map(z: np.ndarray) -> np.ndarray:
    """Project vectors (or matrix rows) onto the unit sphere, z / ||z||.

    Raises DegenerateInputError if any input has zero norm.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        norm = np.linalg.norm(z)
        if norm == 0.0:
            raise DegenerateInputError("cannot cosine-normalize a zero vector")
        return z / norm
    norms = np.linalg.norm(z, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"zero-norm row at index {zero[0]}")
    return z / norms[:, None]


def kernel_eval(spec: KernelSpec, z1: np.ndarray, z2: np.ndarray) -> float:
    """Evaluate the kernel on a single pair of equal-length vectors."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 1:
        raise ShapeError(f"expected two equal-length vectors, got {z1.shape} and {z2.shape}")
    if spec.cosine_prefix:
        z1 = cos_map(z1)
        z2 = cos_map(z2)
    base = spec.base
    if base == "gaussian":
        diff = z1 - z2
        return float(np.exp(-spec.gamma * np.dot(diff, diff)))
    if base == "laplacian":
        return float(np.exp(-spec.gamma * np.sum(np.abs(z1 - z2))))
    if base == "polynomial":
        return float((np.dot(z1, z2) + spec.c) ** spec.d)
    if base == "linear":
        return float(np.dot(z1, z2))
    return float(np.dot(cos_map(z1), cos_map(z2)))


def kernel_matrix(
    spec: KernelSpec, a: np.ndarray, b: np.ndarray, block: int = 1024
) -> np.ndarray:
    """Matrix of kernel values between rows of a and rows of b.

    The laplacian path is evaluated in row blocks to bound the size of the
    broadcasted |a_i - b_j| intermediate.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"column mismatch: {a.shape} vs {b.shape}")
    if spec.cosine_prefix:
        a = cos_map(a)
        b = cos_map(b)
    base = spec.base
    if base == "gaussian":
        return np.exp(-spec.gamma * pairwise_sq_dist(a, b))
    if base == "laplacian":
        out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
        for start in range(0, a.shape[0], block):
            chunk = a[start : start + block]
            l1 = np.sum(np.abs(chunk[:, None, :] - b[None, :, :]), axis=2)
            out[start : start + chunk.shape[0]] = np.exp(-spec.gamma * l1)
        return out
    if base == "polynomial":
        return (a @ b.T + spec.c) ** spec.d
    if base == "linear":
        return a @ b.T
    return cos_map(a) @ cos_map(b).T
