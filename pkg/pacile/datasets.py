"""
Multi-label datasets: the in-memory model, CSV ingestion with a JSON sidecar,
and finite synthetic tasks with exact oracles (g*, f*, Bayes risk, true risks).

CSV layout: UTF-8, one header row, feature columns (conventionally x_0, x_1, ...)
as decimal floats and label columns label_0 ... label_{l-1} with values in {0, 1}.
The sidecar `<name>.meta.json` holds {name, n_features, n_labels, sha256} where
sha256 is the content digest of the parsed arrays.
"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union
import logging
import re

import numpy as np
import pandas as pd
from scipy.special import softmax

from pacile.errors import DatasetParseError, InputError
from pacile.gaussian_posterior import GaussianPosterior, mc_values
from pacile.kernel_features import feature_map, standardize
from pacile.loss_embedding import (
    LossEmbedding,
    as_labels,
    build_embedding,
    decode_rows,
    enumerate_labels,
    labels_from_indices,
)
from pacile.models import LossName
from pacile.rng import SeedLike, as_stream
from pacile.storage import atomic_write_text, write_json
from pacile.utils import hash_bytes, safe_json_loads, standard_error

logger = logging.getLogger(__name__)

LABEL_PREFIX = "label_"
FEATURE_PREFIX = "x_"
SYNTHETIC_MAX_LABELS = 8
SYNTHETIC_MAX_SUPPORT = 64


# ========== Datasets ==========

def dataset_digest(xs: np.ndarray, ys: np.ndarray) -> str:
    """sha256 over the shapes, float64 features and int8 labels"""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.int8)
    shape = f"{xs.shape[0]}x{xs.shape[1]}|{ys.shape[0]}x{ys.shape[1]}".encode()
    return hash_bytes(shape, xs.tobytes(), ys.tobytes())


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    xs: np.ndarray
    ys: np.ndarray
    name: str = "dataset"
    digest: str = field(default="")

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        if xs.ndim != 2 or xs.shape[0] < 1 or xs.shape[1] < 1:
            raise InputError(f"features must be a non-empty (m, d) matrix, got shape {xs.shape}")
        if not np.all(np.isfinite(xs)):
            raise InputError("features contain non-finite values")
        ys = np.array(as_labels(self.ys))
        if ys.ndim != 2 or ys.shape[0] != xs.shape[0]:
            raise InputError(f"{xs.shape[0]} feature rows but labels of shape {ys.shape}")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "digest", dataset_digest(xs, ys))

    @property
    def m(self) -> int:
        return self.xs.shape[0]

    @property
    def n_features(self) -> int:
        return self.xs.shape[1]

    @property
    def n_labels(self) -> int:
        return self.ys.shape[1]

    def metadata(self) -> dict:
        return {"name": self.name, "n_features": self.n_features, "n_labels": self.n_labels, "sha256": self.digest}


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.meta.json")


def _label_order(columns: Sequence[str], label_columns: Optional[Sequence[str]]) -> List[str]:
    if label_columns is not None:
        missing = [c for c in label_columns if c not in columns]
        if missing:
            raise DatasetParseError(f"label columns not found in header: {missing}", line=1)
        return list(label_columns)
    labels = [c for c in columns if c.startswith(LABEL_PREFIX)]
    if not labels:
        raise DatasetParseError(f"no '{LABEL_PREFIX}k' columns in header", line=1)
    expected = [f"{LABEL_PREFIX}{k}" for k in range(len(labels))]
    if sorted(labels, key=lambda c: (len(c), c)) != expected:
        raise DatasetParseError(f"label columns must be {expected[0]} ... {expected[-1]}, got {labels}", line=1)
    return expected


def _check_numeric(frame: pd.DataFrame, columns: Sequence[str]) -> None:
    for column in columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = values.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DatasetParseError(f"column {column!r}: missing or non-numeric value", line=row + 2)


def load_csv(path: Union[str, Path], label_columns: Optional[Sequence[str]] = None) -> MultiLabelDataset:
    """Parse a dataset CSV and verify its sidecar when one exists"""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip", skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DatasetParseError(f"{path} is empty", line=1) from e
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetParseError(f"malformed row in {path}: {e}", line=int(match.group(1)) if match else None) from e
    if frame.empty:
        raise DatasetParseError(f"{path} has a header but no rows", line=2)

    columns = [str(c) for c in frame.columns]
    label_names = _label_order(columns, label_columns)
    feature_names = [c for c in columns if c not in label_names]
    if not feature_names:
        raise DatasetParseError("no feature columns in header", line=1)

    _check_numeric(frame, feature_names + label_names)
    xs = frame[feature_names].apply(pd.to_numeric).to_numpy(dtype=np.float64)
    labels = frame[label_names].apply(pd.to_numeric).to_numpy()
    not_binary = ~((labels == 0) | (labels == 1))
    if not_binary.any():
        row, col = np.argwhere(not_binary)[0]
        raise DatasetParseError(f"label {label_names[col]!r} must be 0 or 1, got {labels[row, col]}", line=int(row) + 2)
    non_finite = ~np.isfinite(xs)
    if non_finite.any():
        raise DatasetParseError("non-finite feature value", line=int(np.argwhere(non_finite)[0][0]) + 2)

    name = path.stem
    meta_path = sidecar_path(path)
    meta = None
    if meta_path.is_file():
        meta = safe_json_loads(meta_path.read_text(encoding="utf-8"))
        name = meta.get("name", name)

    dataset = MultiLabelDataset(xs, labels.astype(np.int8), name=name)
    if meta is not None:
        expected = {"n_features": dataset.n_features, "n_labels": dataset.n_labels, "sha256": dataset.digest}
        mismatched = [key for key, value in expected.items() if meta.get(key) != value]
        if mismatched:
            raise DatasetParseError(f"{meta_path.name} does not match {path.name}: {mismatched}")

    logger.info(
        f"Loaded dataset {dataset.name}: m={dataset.m}, d={dataset.n_features}, "
        f"l={dataset.n_labels}, sha256={dataset.digest[:12]}"
    )
    return dataset


def write_csv(dataset: MultiLabelDataset, path: Union[str, Path]) -> Path:
    """Write the documented CSV layout plus its sidecar"""
    path = Path(path)
    frame = pd.DataFrame(dataset.xs, columns=[f"{FEATURE_PREFIX}{k}" for k in range(dataset.n_features)])
    for k in range(dataset.n_labels):
        frame[f"{LABEL_PREFIX}{k}"] = dataset.ys[:, k].astype(np.int64)
    atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))
    meta = dataset.metadata()
    meta["name"] = path.stem
    write_json(sidecar_path(path), meta)
    logger.info(f"Wrote dataset {path.stem} ({dataset.m} rows) to {path}")
    return path


# ========== Synthetic tasks ==========

@dataclass(frozen=True, eq=False)
class SyntheticTask:
    """
    A finite distribution: rho_X over `x_support` rows and rho(y|x) as one row of
    `conditional_table` per support point, columns in label enumeration order.
    """
    x_support: np.ndarray
    conditional_table: np.ndarray
    embedding: LossEmbedding
    marginal: Optional[np.ndarray] = None

    def __post_init__(self):
        x_support = np.array(self.x_support, dtype=float)
        table = np.array(self.conditional_table, dtype=float)
        n = x_support.shape[0]
        if x_support.ndim != 2 or n < 1:
            raise InputError(f"support must be a non-empty (n, d) matrix, got shape {x_support.shape}")
        if table.shape != (n, 2 ** self.embedding.n_labels):
            raise InputError(f"conditional table must be ({n}, {2 ** self.embedding.n_labels}), got {table.shape}")
        if np.any(table < 0) or np.max(np.abs(table.sum(axis=1) - 1.0)) > 1e-12:
            raise InputError("conditional rows must be probability vectors")
        marginal = np.full(n, 1.0 / n) if self.marginal is None else np.array(self.marginal, dtype=float)
        if marginal.shape != (n,) or np.any(marginal < 0) or abs(marginal.sum() - 1.0) > 1e-12:
            raise InputError("marginal must be a probability vector over the support")
        for arr in (x_support, table, marginal):
            arr.setflags(write=False)
        object.__setattr__(self, "x_support", x_support)
        object.__setattr__(self, "conditional_table", table)
        object.__setattr__(self, "marginal", marginal)

    @property
    def n_labels(self) -> int:
        return self.embedding.n_labels

    @property
    def n_support(self) -> int:
        return self.x_support.shape[0]

    def labels(self) -> np.ndarray:
        return enumerate_labels(self.n_labels)


def _dirichlet_rows(rng: np.random.Generator, n_rows: int, n_cols: int, concentration: float) -> np.ndarray:
    """
    Symmetric Dirichlet rows sampled in log space: Gamma(a) = Gamma(a + 1) U^(1/a),
    which stays finite for very small concentrations.
    """
    log_gamma = np.log(rng.standard_gamma(concentration + 1.0, size=(n_rows, n_cols)))
    log_u = np.log1p(-rng.random((n_rows, n_cols)))
    return softmax(log_gamma + log_u / concentration, axis=1)


def make_synthetic(
    seed: SeedLike,
    n_support: int = 16,
    n_labels: int = 3,
    concentration: float = 1.0,
    loss: LossName = LossName.HAMMING,
    n_features: Optional[int] = None,
) -> SyntheticTask:
    """
    Random finite task. Support points are one-hot rows of the identity by
    default (so g* is exactly linear in the features) or standard Gaussian
    rows when `n_features` is given.
    """
    if not 1 <= n_labels <= SYNTHETIC_MAX_LABELS:
        raise InputError(f"synthetic tasks need 1 <= l <= {SYNTHETIC_MAX_LABELS}, got {n_labels}")
    if not 1 <= n_support <= SYNTHETIC_MAX_SUPPORT:
        raise InputError(f"synthetic tasks need 1 <= |support| <= {SYNTHETIC_MAX_SUPPORT}, got {n_support}")
    if not concentration > 0:
        raise InputError(f"concentration must be positive, got {concentration}")

    rng = as_stream(seed).child("synthetic").generator(0)
    if n_features is None:
        x_support = np.eye(n_support)
    else:
        x_support = rng.standard_normal((n_support, n_features))
    table = _dirichlet_rows(rng, n_support, 2 ** n_labels, concentration)
    task = SyntheticTask(x_support, table, build_embedding(LossName(loss), n_labels))
    logger.debug(f"Synthetic task: support={n_support}, l={n_labels}, concentration={concentration:g}")
    return task


def support_indices(task: SyntheticTask, xs) -> np.ndarray:
    """Row index in the support of every input; exact match required"""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[1] != task.x_support.shape[1]:
        raise InputError(f"inputs have {xs.shape[1]} features, support has {task.x_support.shape[1]}")
    lookup = {row.tobytes(): i for i, row in enumerate(task.x_support)}
    indices = np.empty(xs.shape[0], dtype=np.int64)
    for k, row in enumerate(np.ascontiguousarray(xs)):
        index = lookup.get(row.tobytes())
        if index is None:
            raise InputError(f"input {k} is not in the task support")
        indices[k] = index
    return indices


# ========== Oracles ==========

def oracle_g_star_all(task: SyntheticTask) -> np.ndarray:
    """g*(x) = sum_y rho(y|x) phi(y) for every support point"""
    return task.conditional_table @ task.embedding.phi_matrix(task.labels())


def oracle_g_star(task: SyntheticTask, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError(f"oracle_g_star takes a single input, got shape {x.shape}")
    index = support_indices(task, x[None, :])[0]
    return oracle_g_star_all(task)[index]


def oracle_g_star_weights(task: SyntheticTask, kernel) -> np.ndarray:
    """Minimum-norm W with W X(x) = g*(x) on the support (least squares if not representable)"""
    features = feature_map(kernel, task.x_support)
    g_star = oracle_g_star_all(task)
    solution, *_ = np.linalg.lstsq(features, g_star, rcond=None)
    w = solution.T
    residual = float(np.max(np.abs(features @ solution - g_star)))
    if residual > 1e-8:
        logger.warning(f"g* is not linear in the features (max residual {residual:.3g}); using the least-squares fit")
    return w


def _conditional_risks(task: SyntheticTask, predictions: np.ndarray) -> np.ndarray:
    """sum_y rho(y|x) Delta(f(x), y) for each support point"""
    losses = task.embedding.loss_matrix(predictions, task.labels())
    return np.einsum("ij,ij->i", task.conditional_table, losses)


def oracle_f_star_and_bayes_risk(task: SyntheticTask) -> Tuple[np.ndarray, float]:
    """f*(x) = decode(g*(x)) on the support and E(f*)"""
    f_star = decode_rows(task.embedding, oracle_g_star_all(task))
    return f_star, float(task.marginal @ _conditional_risks(task, f_star))


def oracle_f_star_direct(task: SyntheticTask) -> np.ndarray:
    """argmin_z sum_y rho(y|x) Delta(z, y) by enumeration"""
    labels = task.labels()
    expected = task.conditional_table @ task.embedding.loss_matrix(labels, labels).T
    return labels[np.argmin(expected, axis=1)]


Predictor = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def oracle_true_risk(task: SyntheticTask, predictor: Predictor) -> float:
    """
    E(f) = sum_x rho_X(x) sum_y rho(y|x) Delta(f(x), y).

    `predictor` is either the (n_support, l) table of predictions or a
    callable mapping support inputs to labels.
    """
    predictions = predictor(task.x_support) if callable(predictor) else predictor
    predictions = np.atleast_2d(as_labels(predictions, task.n_labels))
    if predictions.shape[0] != task.n_support:
        raise InputError(f"{predictions.shape[0]} predictions for {task.n_support} support points")
    return float(task.marginal @ _conditional_risks(task, predictions))


def oracle_expected_posterior_risk(
    task: SyntheticTask,
    q: GaussianPosterior,
    n_samples: int,
    seed: SeedLike,
) -> Tuple[float, float]:
    """E_{f~Q} E(f) by Monte Carlo over regressors, each evaluated exactly"""
    features = q.mean.features(task.x_support)
    if q.variance == 0:
        predictions = decode_rows(task.embedding, features @ q.mean.w.T)
        return oracle_true_risk(task, predictions), 0.0

    def risks(batch: np.ndarray) -> np.ndarray:
        return np.array([oracle_true_risk(task, decode_rows(task.embedding, features @ w.T)) for w in batch])

    values = mc_values(q, risks, n_samples, seed)
    return float(np.mean(values)), standard_error(values)


def oracle_empirical_abs_term(
    task: SyntheticTask,
    q: GaussianPosterior,
    xs,
    n_samples: int,
    seed: SeedLike,
) -> Tuple[float, float]:
    """E_{g~Q} (1/m) sum_i ||g*(x_i) - g(x_i)|| by Monte Carlo"""
    g_star = oracle_g_star_all(task)[support_indices(task, xs)]
    features = q.mean.features(xs)

    def terms(batch: np.ndarray) -> np.ndarray:
        residuals = g_star[None, :, :] - np.einsum("nhd,md->nmh", batch, features)
        return np.mean(np.linalg.norm(residuals, axis=2), axis=1)

    if q.variance == 0:
        return float(terms(q.mean.w[None])[0]), 0.0
    values = mc_values(q, terms, n_samples, seed)
    return float(np.mean(values)), standard_error(values)


def oracle_population_quadratic_risk(task: SyntheticTask, g_values) -> float:
    """R(g) = sum_x rho_X(x) sum_y rho(y|x) ||phi(y) - g(x)||^2"""
    g_values = np.asarray(g_values, dtype=float)
    phi = task.embedding.phi_matrix(task.labels())
    if g_values.shape != (task.n_support, phi.shape[1]):
        raise InputError(f"g values must be ({task.n_support}, {phi.shape[1]}), got {g_values.shape}")
    diff = phi[None, :, :] - g_values[:, None, :]
    per_point = np.einsum("xy,xyh,xyh->x", task.conditional_table, diff, diff)
    return float(task.marginal @ per_point)


def sample_training_set(task: SyntheticTask, m: int, seed: SeedLike) -> MultiLabelDataset:
    """m i.i.d. pairs: x from rho_X, then y from rho(y|x), both by inverse CDF"""
    if m < 1:
        raise InputError(f"m must be positive, got {m}")
    rng = as_stream(seed).child("sample").generator(0)
    x_cdf = np.cumsum(task.marginal)
    x_index = np.minimum(np.searchsorted(x_cdf, rng.random(m) * x_cdf[-1], side="right"), task.n_support - 1)

    y_cdf = np.cumsum(task.conditional_table, axis=1)[x_index]
    u = rng.random(m)[:, None] * y_cdf[:, -1:]
    y_index = np.minimum(np.sum(y_cdf <= u, axis=1), y_cdf.shape[1] - 1)
    return MultiLabelDataset(
        task.x_support[x_index],
        labels_from_indices(y_index, task.n_labels),
        name=f"synthetic-m{m}",
    )


# ========== Preprocessing ==========

def standardize_dataset(
    dataset: MultiLabelDataset,
    task: Optional[SyntheticTask] = None,
) -> Tuple[MultiLabelDataset, Optional[SyntheticTask]]:
    """
    Per-column standardization fitted on the training inputs. A synthetic
    task's support is mapped with the same mean and scale so its oracles
    still match the training rows.
    """
    xs, mean, scale = standardize(dataset.xs)
    standardized = MultiLabelDataset(xs, dataset.ys, name=dataset.name)
    if task is not None:
        task = replace(task, x_support=(task.x_support - mean) / scale)
    logger.info(f"Standardized {dataset.n_features} feature columns, sha256={standardized.digest[:12]}")
    return standardized, task
