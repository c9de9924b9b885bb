"""
Shared fixtures: seeded generators, small synthetic tasks and tiny datasets
"""
import numpy as np
import pytest

from pacile.datasets import make_synthetic, sample_training_set
from pacile.gaussian_posterior import PriorConfig
from pacile.kernel_features import Kernel
from pacile.loss_embedding import build_hamming_embedding, enumerate_labels
from pacile.optimizers import build_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def hamming3():
    return build_hamming_embedding(3)


@pytest.fixture
def small_task():
    return make_synthetic(11, n_support=8, n_labels=3)


@pytest.fixture
def small_dataset(small_task):
    return sample_training_set(small_task, 60, 5)


@pytest.fixture
def realizable():
    """Four one-hot inputs, each with a fixed 2-bit label, repeated to m = 30"""
    embedding = build_hamming_embedding(2)
    support = np.arange(30) % 4
    xs = np.eye(4)[support]
    ys = enumerate_labels(2)[support]
    problem = build_problem(embedding, Kernel(), xs, ys)
    return embedding, xs, ys, problem


@pytest.fixture
def unit_prior():
    return PriorConfig(alpha=0.5, t=0.5, kappa=1.0, m=30)


@pytest.fixture
def tiny_csv(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("x_0,x_1,label_0,label_1\n0.5,-1.25,1,0\n2,3e-1,0,1\n", encoding="utf-8")
    return path
