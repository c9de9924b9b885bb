import math

import numpy as np
import pytest

from pacile.errors import InputError
from pacile.loss_embedding import (
    as_labels,
    build_embedding,
    build_hamming_embedding,
    build_zeroone_embedding,
    decode,
    decode_batch,
    decode_hamming_fast,
    decode_hamming_fast_batch,
    decode_rows,
    enumerate_labels,
    hamming_loss,
    label_indices,
)
from pacile.models import LossName


# ========== Embedding identities ==========

@pytest.mark.parametrize("n_labels", [1, 2, 3, 4, 5, 6])
def test_hamming_embedding_reproduces_loss(n_labels):
    embedding = build_hamming_embedding(n_labels)
    labels = enumerate_labels(n_labels)
    inner = embedding.psi_matrix(labels) @ embedding.phi_matrix(labels).T
    brute = np.array([[hamming_loss(z, y) for y in labels] for z in labels])

    assert embedding.dim_h == 2 * n_labels + 1
    assert embedding.c_delta == pytest.approx(math.sqrt(1 + n_labels))
    np.testing.assert_allclose(inner, brute, atol=1e-12)
    np.testing.assert_allclose(embedding.loss_matrix(labels, labels), brute, atol=1e-12)


@pytest.mark.parametrize("n_labels", [1, 2, 3, 4, 5, 6])
def test_zeroone_embedding_reproduces_loss(n_labels):
    embedding = build_zeroone_embedding(n_labels)
    labels = enumerate_labels(n_labels)
    inner = embedding.psi_matrix(labels) @ embedding.phi_matrix(labels).T

    assert embedding.dim_h == 2 ** n_labels + 1
    assert embedding.c_delta == pytest.approx(math.sqrt(2.0))
    np.testing.assert_allclose(inner, 1.0 - np.eye(2 ** n_labels), atol=1e-12)


def test_enumeration_is_lexicographic():
    np.testing.assert_array_equal(enumerate_labels(2), [[0, 0], [0, 1], [1, 0], [1, 1]])
    np.testing.assert_array_equal(label_indices(enumerate_labels(4)), np.arange(16))


def test_single_label_helpers(hamming3):
    z = np.array([1, 0, 1])
    y = np.array([1, 1, 0])
    assert hamming3.loss(z, y) == pytest.approx(2 / 3)
    assert hamming3.psi(z) @ hamming3.phi(y) == pytest.approx(2 / 3)


@pytest.mark.parametrize("labels", [[0, 2, 1], [[0.5, 1.0]], [[[0, 1]]]])
def test_invalid_labels_rejected(labels):
    with pytest.raises(InputError):
        as_labels(labels)


def test_label_length_mismatch(hamming3):
    with pytest.raises(InputError):
        hamming3.phi([0, 1])


def test_enumeration_limits():
    with pytest.raises(InputError):
        build_zeroone_embedding(21)
    with pytest.raises(InputError):
        build_hamming_embedding(0)
    assert build_embedding(LossName.HAMMING, 25).dim_h == 51


# ========== Decoding ==========

@pytest.mark.parametrize("loss,n_labels", [(LossName.HAMMING, 8), (LossName.ZERO_ONE, 8), (LossName.HAMMING, 3)])
def test_naive_decoder_minimizes_score(rng, loss, n_labels):
    embedding = build_embedding(loss, n_labels)
    hs = rng.standard_normal((1000, embedding.dim_h))
    scores = hs @ embedding.psi_matrix(enumerate_labels(n_labels)).T
    decoded = decode_batch(embedding, hs)
    chosen = np.einsum("ij,ij->i", embedding.psi_matrix(decoded), hs)
    np.testing.assert_allclose(chosen, scores.min(axis=1), atol=1e-12)


def test_fast_hamming_decoder_matches_naive_with_ties(rng):
    embedding = build_hamming_embedding(5)
    # small integers make coordinate ties frequent
    hs = rng.integers(-2, 3, size=(2000, embedding.dim_h)).astype(float)
    np.testing.assert_array_equal(decode_hamming_fast_batch(embedding, hs), decode_batch(embedding, hs))


def test_ties_go_to_smallest_label():
    embedding = build_zeroone_embedding(2)
    h = np.array([0.0, 1.0, 1.0, 1.0, 1.0])
    np.testing.assert_array_equal(decode(embedding, h), [0, 0])
    hamming = build_hamming_embedding(2)
    np.testing.assert_array_equal(decode_hamming_fast(hamming, np.zeros(5)), [0, 0])


def test_decode_recovers_embedded_label(hamming3):
    for y in enumerate_labels(3):
        np.testing.assert_array_equal(decode(hamming3, hamming3.phi(y)), y)
    np.testing.assert_array_equal(decode_rows(hamming3, hamming3.phi_matrix(enumerate_labels(3))), enumerate_labels(3))


def test_decode_shape_errors(hamming3):
    with pytest.raises(InputError):
        decode(hamming3, np.zeros(4))
    with pytest.raises(InputError):
        decode(hamming3, np.zeros((2, 7)))
    with pytest.raises(InputError):
        decode_hamming_fast(build_zeroone_embedding(2), np.zeros(5))
