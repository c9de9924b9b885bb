"""
Implicit loss embeddings for multi-label tasks and the decoders that turn a
surrogate output h in H into a label.

A loss Delta on {0,1}^l is embedded as Delta(z, y) = <psi(z), phi(y)>. Labels are
int8 arrays of shape (l,) or (n, l); label i of the enumeration is the binary
expansion of i, most significant bit first, so enumeration order is
lexicographic order.
"""
from dataclasses import dataclass
from typing import Optional
import logging
import math

import numpy as np

from pacile.config import settings
from pacile.errors import InputError
from pacile.models import LossName
from pacile.utils import chunk_ranges

logger = logging.getLogger(__name__)

Label = np.ndarray


# ========== Label helpers ==========

def as_labels(labels, n_labels: Optional[int] = None) -> np.ndarray:
    """Validate binary labels and return them as an int8 array (1-D or 2-D)"""
    arr = np.asarray(labels)
    if arr.ndim not in (1, 2) or arr.shape[-1] < 1:
        raise InputError(f"labels must have shape (l,) or (n, l), got {arr.shape}")
    if n_labels is not None and arr.shape[-1] != n_labels:
        raise InputError(f"label length {arr.shape[-1]} does not match l = {n_labels}")
    if not np.all((arr == 0) | (arr == 1)):
        raise InputError("label entries must be exactly 0 or 1")
    return arr.astype(np.int8)


def _check_enumerable(n_labels: int) -> None:
    if n_labels < 1 or n_labels > settings.ENUMERATION_MAX_LABELS:
        raise InputError(
            f"enumeration over {{0,1}}^l needs 1 <= l <= {settings.ENUMERATION_MAX_LABELS}, got {n_labels}"
        )


def labels_from_indices(indices: np.ndarray, n_labels: int) -> np.ndarray:
    """Bits of each index, most significant first"""
    shifts = np.arange(n_labels - 1, -1, -1, dtype=np.int64)
    return ((np.asarray(indices, dtype=np.int64)[:, None] >> shifts) & 1).astype(np.int8)


def label_indices(labels: np.ndarray) -> np.ndarray:
    """Inverse of `labels_from_indices`"""
    labels = np.atleast_2d(labels)
    n_labels = labels.shape[1]
    weights = np.int64(1) << np.arange(n_labels - 1, -1, -1, dtype=np.int64)
    return labels.astype(np.int64) @ weights


def enumerate_labels(n_labels: int) -> np.ndarray:
    """All 2^l labels in lexicographic order"""
    _check_enumerable(n_labels)
    return labels_from_indices(np.arange(2 ** n_labels), n_labels)


def hamming_loss(z, y) -> float:
    """Fraction of coordinates where z and y disagree"""
    z = np.asarray(z)
    y = np.asarray(y)
    if z.ndim != 1 or y.ndim != 1 or z.shape != y.shape:
        raise InputError(f"labels must be 1-D of equal length, got {z.shape} and {y.shape}")
    z = as_labels(z)
    y = as_labels(y)
    return float(np.count_nonzero(z != y)) / z.shape[0]


# ========== Embeddings ==========

@dataclass(frozen=True)
class LossEmbedding:
    """
    A task loss with finite-dimensional maps psi, phi into H = R^dim_h.

    Subclasses provide the maps and a score routine `label_scores` computing
    <psi(z), h> for many labels and many h at once.
    """
    loss_name: LossName
    n_labels: int
    dim_h: int
    c_delta: float
    loss_range: tuple = (0.0, 1.0)

    def psi_matrix(self, zs) -> np.ndarray:
        raise NotImplementedError

    def phi_matrix(self, ys) -> np.ndarray:
        raise NotImplementedError

    def psi_sq_norms(self, zs) -> np.ndarray:
        psi = self.psi_matrix(zs)
        return np.einsum("ij,ij->i", psi, psi)

    def psi(self, z) -> np.ndarray:
        return self.psi_matrix(np.atleast_2d(as_labels(z, self.n_labels)))[0]

    def phi(self, y) -> np.ndarray:
        return self.phi_matrix(np.atleast_2d(as_labels(y, self.n_labels)))[0]

    def loss_rows(self, zs, ys) -> np.ndarray:
        """Delta(z_i, y_i) for paired rows, computed directly (no embedding)"""
        raise NotImplementedError

    def loss(self, z, y) -> float:
        z = as_labels(z, self.n_labels)
        y = as_labels(y, self.n_labels)
        if z.ndim != 1 or y.ndim != 1:
            raise InputError("loss takes two single labels")
        return float(self.loss_rows(z[None, :], y[None, :])[0])

    def loss_matrix(self, zs, ys) -> np.ndarray:
        """Delta(z_i, y_j) for every pair"""
        zs = np.atleast_2d(as_labels(zs, self.n_labels))
        ys = np.atleast_2d(as_labels(ys, self.n_labels))
        out = np.empty((zs.shape[0], ys.shape[0]))
        for i in range(zs.shape[0]):
            out[i] = self.loss_rows(np.broadcast_to(zs[i], ys.shape), ys)
        return out

    def label_scores(self, zs: np.ndarray, hs: np.ndarray) -> np.ndarray:
        """<psi(z_j), h_i> as an (n_h, n_z) array"""
        return hs @ self.psi_matrix(zs).T

    def check_vectors(self, hs) -> np.ndarray:
        hs = np.asarray(hs, dtype=float)
        if hs.shape[-1] != self.dim_h or hs.ndim not in (1, 2):
            raise InputError(f"vectors in H must have length {self.dim_h}, got shape {hs.shape}")
        return hs


@dataclass(frozen=True)
class HammingEmbedding(LossEmbedding):
    """
    psi(z) = (1, [z_k = 0]_k, [z_k = 1]_k), phi(y) = (1, -[y_k = 0]_k / l, -[y_k = 1]_k / l)
    """

    def psi_matrix(self, zs) -> np.ndarray:
        zs = np.atleast_2d(as_labels(zs, self.n_labels)).astype(float)
        ones = np.ones((zs.shape[0], 1))
        return np.hstack([ones, 1.0 - zs, zs])

    def phi_matrix(self, ys) -> np.ndarray:
        ys = np.atleast_2d(as_labels(ys, self.n_labels)).astype(float)
        ones = np.ones((ys.shape[0], 1))
        return np.hstack([ones, -(1.0 - ys) / self.n_labels, -ys / self.n_labels])

    def psi_sq_norms(self, zs) -> np.ndarray:
        zs = np.atleast_2d(zs).astype(float)
        return 1.0 + ((1.0 - zs) ** 2).sum(axis=1) + (zs ** 2).sum(axis=1)

    def loss_rows(self, zs, ys) -> np.ndarray:
        return np.count_nonzero(np.asarray(zs) != np.asarray(ys), axis=-1) / self.n_labels

    def label_scores(self, zs: np.ndarray, hs: np.ndarray) -> np.ndarray:
        # Per-coordinate terms are selected, not multiplied, so labels that only
        # differ where h[1+k] == h[1+l+k] get bitwise-equal scores.
        l = self.n_labels
        zero_part = hs[:, 1:1 + l]
        one_part = hs[:, 1 + l:]
        terms = np.where(zs[None, :, :].astype(bool), one_part[:, None, :], zero_part[:, None, :])
        return hs[:, :1] + terms.sum(axis=2)


@dataclass(frozen=True)
class ZeroOneEmbedding(LossEmbedding):
    """psi(z) = (1, -e_z), phi(y) = (1, e_y) with e_. the one-hot code of the label index"""

    def psi_matrix(self, zs) -> np.ndarray:
        zs = np.atleast_2d(as_labels(zs, self.n_labels))
        out = np.zeros((zs.shape[0], self.dim_h))
        out[:, 0] = 1.0
        out[np.arange(zs.shape[0]), 1 + label_indices(zs)] = -1.0
        return out

    def phi_matrix(self, ys) -> np.ndarray:
        ys = np.atleast_2d(as_labels(ys, self.n_labels))
        out = np.zeros((ys.shape[0], self.dim_h))
        out[:, 0] = 1.0
        out[np.arange(ys.shape[0]), 1 + label_indices(ys)] = 1.0
        return out

    def psi_sq_norms(self, zs) -> np.ndarray:
        return np.full(np.atleast_2d(zs).shape[0], 2.0)

    def loss_rows(self, zs, ys) -> np.ndarray:
        return np.any(np.asarray(zs) != np.asarray(ys), axis=-1).astype(float)

    def label_scores(self, zs: np.ndarray, hs: np.ndarray) -> np.ndarray:
        return hs[:, :1] - hs[:, 1 + label_indices(zs)]


def _enumerated_c_delta(embedding: LossEmbedding) -> float:
    best = 0.0
    for start, stop in chunk_ranges(2 ** embedding.n_labels, settings.DECODE_CHUNK_SIZE):
        zs = labels_from_indices(np.arange(start, stop), embedding.n_labels)
        best = max(best, float(np.max(embedding.psi_sq_norms(zs))))
    return math.sqrt(best)


def build_hamming_embedding(n_labels: int) -> HammingEmbedding:
    """Hamming loss embedding with dim_h = 2l + 1 and c_delta = sqrt(1 + l)"""
    if int(n_labels) != n_labels or n_labels < 1:
        raise InputError(f"number of labels must be a positive integer, got {n_labels}")
    n_labels = int(n_labels)
    provisional = HammingEmbedding(LossName.HAMMING, n_labels, 2 * n_labels + 1, math.sqrt(1 + n_labels))
    if n_labels <= settings.ENUMERATION_MAX_LABELS:
        c_delta = _enumerated_c_delta(provisional)
    else:
        c_delta = math.sqrt(1 + n_labels)
    return HammingEmbedding(LossName.HAMMING, n_labels, 2 * n_labels + 1, c_delta)


def build_zeroone_embedding(n_labels: int) -> ZeroOneEmbedding:
    """0-1 loss embedding with dim_h = 2^l + 1"""
    if int(n_labels) != n_labels:
        raise InputError(f"number of labels must be an integer, got {n_labels}")
    n_labels = int(n_labels)
    _check_enumerable(n_labels)
    provisional = ZeroOneEmbedding(LossName.ZERO_ONE, n_labels, 2 ** n_labels + 1, math.sqrt(2.0))
    return ZeroOneEmbedding(LossName.ZERO_ONE, n_labels, 2 ** n_labels + 1, _enumerated_c_delta(provisional))


def build_embedding(loss: LossName, n_labels: int) -> LossEmbedding:
    loss = LossName(loss)
    if loss is LossName.HAMMING:
        return build_hamming_embedding(n_labels)
    return build_zeroone_embedding(n_labels)


# ========== Decoding ==========

def decode_batch(embedding: LossEmbedding, hs) -> np.ndarray:
    """
    Naive decoder: argmin over all z in {0,1}^l of <psi(z), h> for each row h.

    Ties go to the lexicographically smallest label: within a chunk argmin keeps
    the first index, across chunks only a strictly smaller score replaces the
    incumbent.
    """
    hs = embedding.check_vectors(hs)
    single = hs.ndim == 1
    hs = np.atleast_2d(hs)
    _check_enumerable(embedding.n_labels)

    best_index = np.zeros(hs.shape[0], dtype=np.int64)
    for row_start, row_stop in chunk_ranges(hs.shape[0], 256):
        block = hs[row_start:row_stop]
        best_score = np.full(block.shape[0], np.inf)
        rows = np.arange(block.shape[0])
        for start, stop in chunk_ranges(2 ** embedding.n_labels, settings.DECODE_CHUNK_SIZE):
            zs = labels_from_indices(np.arange(start, stop), embedding.n_labels)
            scores = embedding.label_scores(zs, block)
            local = np.argmin(scores, axis=1)
            local_score = scores[rows, local]
            better = local_score < best_score
            best_score[better] = local_score[better]
            best_index[row_start:row_stop][better] = start + local[better]

    decoded = labels_from_indices(best_index, embedding.n_labels)
    return decoded[0] if single else decoded


def decode(embedding: LossEmbedding, h_vec) -> Label:
    """Decode a single vector of H"""
    h_vec = embedding.check_vectors(h_vec)
    if h_vec.ndim != 1:
        raise InputError("decode takes a single vector; use decode_batch for several")
    return decode_batch(embedding, h_vec)


def decode_hamming_fast_batch(embedding: LossEmbedding, hs) -> np.ndarray:
    """Per-coordinate decoder for the Hamming embedding: z_k = 0 iff h[1+k] <= h[1+l+k]"""
    if not isinstance(embedding, HammingEmbedding):
        raise InputError(f"fast decoding needs a Hamming embedding, got {embedding.loss_name.value}")
    hs = embedding.check_vectors(hs)
    l = embedding.n_labels
    return (hs[..., 1:1 + l] > hs[..., 1 + l:]).astype(np.int8)


def decode_hamming_fast(embedding: LossEmbedding, h_vec) -> Label:
    h_vec = embedding.check_vectors(h_vec)
    if h_vec.ndim != 1:
        raise InputError("decode_hamming_fast takes a single vector")
    return decode_hamming_fast_batch(embedding, h_vec)


def decode_rows(embedding: LossEmbedding, hs) -> np.ndarray:
    """Decode many vectors with the fastest exact decoder available"""
    if isinstance(embedding, HammingEmbedding):
        return decode_hamming_fast_batch(embedding, np.atleast_2d(hs))
    return decode_batch(embedding, np.atleast_2d(hs))
