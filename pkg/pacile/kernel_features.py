"""
Input-space kernels, explicit feature maps, Gram matrices and the kernel bound kappa
"""
from dataclasses import dataclass
from typing import Optional, Tuple
import logging
import math

import numpy as np
from scipy.spatial.distance import cdist

from pacile.errors import InputError
from pacile.models import KernelKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Kernel:
    """
    A positive semidefinite kernel on R^d.

    LINEAR and COSINE have explicit feature maps (x and x/||x||). GAUSSIAN is
    implicit only and requires a bandwidth.
    """
    kind: KernelKind = KernelKind.LINEAR
    bandwidth: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.GAUSSIAN:
            if self.bandwidth is None or not self.bandwidth > 0:
                raise InputError("gaussian kernel needs a positive bandwidth")
        elif self.bandwidth is not None:
            raise InputError(f"{self.kind.value} kernel takes no bandwidth")

    @property
    def explicit(self) -> bool:
        return self.kind is not KernelKind.GAUSSIAN

    @property
    def kappa_sq(self) -> Optional[float]:
        """sup_x k(x, x) when known in closed form, else None (computed from data)"""
        if self.kind in (KernelKind.GAUSSIAN, KernelKind.COSINE):
            return 1.0
        return None

    def __call__(self, x, z) -> float:
        return float(cross_gram(self, np.atleast_2d(x), np.atleast_2d(z))[0, 0])


def _check_inputs(xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[None, :]
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise InputError(f"inputs must be a non-empty (m, d) matrix, got shape {xs.shape}")
    if not np.all(np.isfinite(xs)):
        raise InputError("inputs contain non-finite values")
    return xs


def _normalize_rows(xs: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(xs, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return xs / safe


def feature_map(kernel: Kernel, xs) -> np.ndarray:
    """Explicit features X(x) as rows"""
    xs = _check_inputs(xs)
    if kernel.kind is KernelKind.LINEAR:
        return xs
    if kernel.kind is KernelKind.COSINE:
        return _normalize_rows(xs)
    raise InputError("the gaussian kernel has no finite-dimensional feature map")


def cross_gram(kernel: Kernel, xs, zs) -> np.ndarray:
    """k(x_i, z_j) as an (n_x, n_z) matrix"""
    xs = _check_inputs(xs)
    zs = _check_inputs(zs)
    if xs.shape[1] != zs.shape[1]:
        raise InputError(f"input dimensions differ: {xs.shape[1]} vs {zs.shape[1]}")
    if kernel.kind is KernelKind.GAUSSIAN:
        sq = cdist(xs, zs, metric="sqeuclidean")
        return np.exp(-sq / (2.0 * kernel.bandwidth ** 2))
    fx = feature_map(kernel, xs)
    fz = feature_map(kernel, zs)
    return fx @ fz.T


def gram_matrix(kernel: Kernel, xs) -> np.ndarray:
    """Symmetric m x m Gram matrix"""
    gram = cross_gram(kernel, xs, xs)
    return 0.5 * (gram + gram.T)


def kernel_diagonal(kernel: Kernel, xs) -> np.ndarray:
    """k(x_i, x_i) without forming the Gram matrix"""
    xs = _check_inputs(xs)
    if kernel.kind is KernelKind.GAUSSIAN:
        return np.ones(xs.shape[0])
    features = feature_map(kernel, xs)
    return np.einsum("ij,ij->i", features, features)


def empirical_kappa(kernel: Kernel, xs) -> float:
    """max over the data of sqrt(k(x, x)); exactly 1 for the gaussian kernel"""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise InputError("cannot estimate kappa on an empty dataset")
    if kernel.kind is KernelKind.GAUSSIAN:
        return 1.0
    kappa = math.sqrt(float(np.max(kernel_diagonal(kernel, xs))))
    logger.info(f"Empirical kappa for {kernel.kind.value} kernel over {xs.shape[0]} rows: {kappa:.6g}")
    return kappa


def standardize(xs) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column mean 0, variance 1; constant columns are only centered"""
    xs = _check_inputs(xs)
    mean = xs.mean(axis=0)
    scale = xs.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (xs - mean) / scale, mean, scale
