"""
Linear surrogate regressors g = W o X, the kernel ridge fit ILE(lambda), and
empirical surrogate and task risks.

The ridge objective is the mean-squared form

    (1/m) sum_i ||g(x_i) - phi(y_i)||^2 + lambda ||W||_F^2

so the normal equations carry m * lambda on the diagonal. Multiply lambda by m
to convert from the sum-of-squares convention.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union
import logging

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from pacile.config import settings
from pacile.errors import InputError, NumericalError
from pacile.kernel_features import Kernel, cross_gram, feature_map, gram_matrix
from pacile.loss_embedding import LossEmbedding, as_labels, decode_rows, enumerate_labels
from pacile.utils import chunk_ranges, frobenius_norm_sq

logger = logging.getLogger(__name__)


# ========== Regressors ==========

@dataclass(frozen=True, eq=False)
class LinearRegressor:
    """W in L(F, H) stored as a (dim_h, dim_f) matrix, read-only"""
    w: np.ndarray
    kernel: Kernel = field(default_factory=Kernel)
    lam: Optional[float] = None
    dataset_sha256: Optional[str] = None

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.size == 0:
            raise InputError(f"regressor weights must be a non-empty matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InputError("regressor weights contain non-finite values")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def dim_h(self) -> int:
        return self.w.shape[0]

    @property
    def dim_f(self) -> int:
        return self.w.shape[1]

    @property
    def n_params(self) -> int:
        return self.w.size

    def frobenius_norm(self) -> float:
        return float(np.sqrt(frobenius_norm_sq(self.w)))

    def operator_norm(self) -> float:
        return float(np.linalg.norm(self.w, 2))

    def features(self, xs) -> np.ndarray:
        features = feature_map(self.kernel, xs)
        if features.shape[1] != self.dim_f:
            raise InputError(f"feature dimension {features.shape[1]} does not match regressor dim_f {self.dim_f}")
        return features

    def predict(self, xs) -> np.ndarray:
        return self.features(xs) @ self.w.T

    def with_weights(self, w) -> "LinearRegressor":
        return LinearRegressor(w, self.kernel, self.lam, self.dataset_sha256)


@dataclass(frozen=True, eq=False)
class DualRegressor:
    """
    Kernel ridge solution in coefficient form: g(x) = sum_i k(x, x_i) coef_i.

    Keeps the Cholesky factor of K + m*lambda*I so loss-trick weights
    alpha(x) = (K + m*lambda*I)^-1 k_x can be computed for new inputs.
    """
    kernel: Kernel
    train_xs: np.ndarray
    train_ys: np.ndarray
    coef: np.ndarray
    gram: np.ndarray
    factor: Tuple[np.ndarray, bool]
    lam: float
    dataset_sha256: Optional[str] = None

    @property
    def dim_h(self) -> int:
        return self.coef.shape[1]

    def predict(self, xs) -> np.ndarray:
        return cross_gram(self.kernel, xs, self.train_xs) @ self.coef

    def loss_trick_weights(self, xs) -> np.ndarray:
        """alpha_i(x) for every training point i (rows) and query x (columns)"""
        return cho_solve(self.factor, cross_gram(self.kernel, self.train_xs, xs))

    def rkhs_norm_sq(self) -> float:
        """||g||^2 = tr(C^T K C)"""
        return float(np.einsum("ij,ij->", self.coef, self.gram @ self.coef))


Regressor = Union[LinearRegressor, DualRegressor]


# ========== Ridge solvers ==========

def _spd_solve(system: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, Tuple[np.ndarray, bool]]:
    """Cholesky solve with a condition guard and a normwise residual check"""
    system = 0.5 * (system + system.T)
    eigenvalues = np.linalg.eigvalsh(system)
    condition = eigenvalues[-1] / eigenvalues[0] if eigenvalues[0] > 0 else np.inf
    if condition > settings.KRR_CONDITION_LIMIT:
        raise NumericalError("ridge system is singular or ill-conditioned", condition=float(condition))

    factor = cho_factor(system, lower=True)
    solution = cho_solve(factor, rhs)

    residual = np.linalg.norm(system @ solution - rhs)
    scale = np.linalg.norm(system) * np.linalg.norm(solution) + np.linalg.norm(rhs)
    if scale > 0 and residual / scale > settings.KRR_RESIDUAL_TOL:
        raise NumericalError(
            f"normal equations residual {residual / scale:.3e} exceeds {settings.KRR_RESIDUAL_TOL:.1e}",
            condition=float(condition),
        )
    return solution, factor


def solve_ridge(features, targets, lam: float) -> np.ndarray:
    """
    Minimizer W of (1/m) sum_i ||W x_i - t_i||^2 + lam ||W||_F^2.

    Solves the d x d primal system when m >= d and the m x m dual system
    otherwise; both give the same W.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or targets.ndim != 2 or features.shape[0] != targets.shape[0]:
        raise InputError(f"features {features.shape} and targets {targets.shape} do not align")
    if not lam > 0:
        raise InputError(f"ridge parameter must be positive, got {lam}")
    m, d = features.shape
    if m < 1:
        raise InputError("ridge regression needs at least one sample")

    if d <= m:
        system = features.T @ features + m * lam * np.eye(d)
        coef, _ = _spd_solve(system, features.T @ targets)
        return coef.T
    system = features @ features.T + m * lam * np.eye(m)
    dual, _ = _spd_solve(system, targets)
    return (features.T @ dual).T


def fit_krr(
    embedding: LossEmbedding,
    kernel: Kernel,
    xs,
    ys,
    lam: float,
    dataset_sha256: Optional[str] = None,
) -> LinearRegressor:
    """ILE(lambda): closed-form kernel ridge fit of phi(y) on X(x)"""
    if not kernel.explicit:
        raise InputError("fit_krr needs an explicit feature map; use fit_krr_dual for the gaussian kernel")
    features = feature_map(kernel, xs)
    targets = embedding.phi_matrix(as_labels(ys, embedding.n_labels))
    w = solve_ridge(features, targets, lam)
    regressor = LinearRegressor(w, kernel, lam, dataset_sha256)
    logger.info(
        f"Fitted KRR: m={features.shape[0]}, dim_f={regressor.dim_f}, dim_h={regressor.dim_h}, "
        f"lambda={lam:.3g}, ||W||_F={regressor.frobenius_norm():.6g}"
    )
    return regressor


def fit_krr_dual(
    embedding: LossEmbedding,
    kernel: Kernel,
    xs,
    ys,
    lam: float,
    dataset_sha256: Optional[str] = None,
) -> DualRegressor:
    """Same minimizer as fit_krr, in coefficient form (works for implicit kernels)"""
    if not lam > 0:
        raise InputError(f"ridge parameter must be positive, got {lam}")
    xs = np.asarray(xs, dtype=float)
    ys = as_labels(ys, embedding.n_labels)
    gram = gram_matrix(kernel, xs)
    m = gram.shape[0]
    coef, factor = _spd_solve(gram + m * lam * np.eye(m), embedding.phi_matrix(ys))
    logger.info(f"Fitted dual KRR: m={m}, kernel={kernel.kind.value}, lambda={lam:.3g}")
    return DualRegressor(kernel, xs, ys, coef, gram, factor, lam, dataset_sha256)


# ========== Prediction and risks ==========

def predict_embedding(r: Regressor, x) -> np.ndarray:
    """g(x) = W X(x) for a single input"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError(f"predict_embedding takes a single feature vector, got shape {x.shape}")
    return r.predict(x[None, :])[0]


def predict_embeddings(r: Regressor, xs) -> np.ndarray:
    return r.predict(xs)


def task_predict(r: Regressor, embedding: LossEmbedding, xs) -> np.ndarray:
    """Plug-in predictor f = decode o g"""
    return decode_rows(embedding, predict_embeddings(r, xs))


def _residuals(r: Regressor, embedding: LossEmbedding, xs, ys) -> np.ndarray:
    targets = embedding.phi_matrix(as_labels(ys, embedding.n_labels))
    predictions = predict_embeddings(r, xs)
    if predictions.shape != targets.shape:
        raise InputError(f"predictions {predictions.shape} and targets {targets.shape} do not align")
    return targets - predictions


def empirical_quadratic_risk(r: Regressor, embedding: LossEmbedding, xs, ys) -> float:
    """(1/m) sum_i ||phi(y_i) - g(x_i)||^2"""
    residuals = _residuals(r, embedding, xs, ys)
    return float(np.mean(np.einsum("ij,ij->i", residuals, residuals)))


def empirical_absolute_risk(r: Regressor, embedding: LossEmbedding, xs, ys) -> float:
    """(1/m) sum_i ||phi(y_i) - g(x_i)||"""
    residuals = _residuals(r, embedding, xs, ys)
    return float(np.mean(np.linalg.norm(residuals, axis=1)))


def empirical_task_risk(r: Regressor, embedding: LossEmbedding, xs, ys) -> float:
    """(1/m) sum_i Delta(f(x_i), y_i) for the plug-in predictor"""
    ys = as_labels(ys, embedding.n_labels)
    return float(np.mean(embedding.loss_rows(task_predict(r, embedding, xs), np.atleast_2d(ys))))


def decode_loss_trick(embedding: LossEmbedding, weights, train_ys) -> np.ndarray:
    """
    argmin_z sum_i alpha_i(x) Delta(z, y_i), using loss evaluations only.

    `weights` is (m,) for one query or (m, n) for n queries.
    """
    weights = np.asarray(weights, dtype=float)
    single = weights.ndim == 1
    weights = weights[:, None] if single else weights
    train_ys = np.atleast_2d(as_labels(train_ys, embedding.n_labels))
    if weights.shape[0] != train_ys.shape[0]:
        raise InputError(f"{weights.shape[0]} weights for {train_ys.shape[0]} training labels")

    labels = enumerate_labels(embedding.n_labels)
    best_score = np.full(weights.shape[1], np.inf)
    best_index = np.zeros(weights.shape[1], dtype=np.int64)
    for start, stop in chunk_ranges(labels.shape[0], settings.DECODE_CHUNK_SIZE):
        scores = embedding.loss_matrix(labels[start:stop], train_ys) @ weights
        local = np.argmin(scores, axis=0)
        local_score = scores[local, np.arange(weights.shape[1])]
        better = local_score < best_score
        best_score[better] = local_score[better]
        best_index[better] = start + local[better]
    decoded = labels[best_index]
    return decoded[0] if single else decoded
