import os
import sys

import numpy as np
import pytest

from tfexplain.classifier import FunctionClassifier, TrainConfig, train_classifier
from tfexplain.dataset import SynthConfig, generate_synthetic, split_dataset

HERE = os.path.dirname(__file__)
sys.path.insert(0, HERE)


@pytest.fixture(scope="session")
def synth_cfg():
    return SynthConfig()


@pytest.fixture(scope="session")
def synth_data(synth_cfg):
    return generate_synthetic(synth_cfg)


@pytest.fixture(scope="session")
def synth_splits(synth_data):
    return split_dataset(synth_data, seed=0)


@pytest.fixture(scope="session")
def trained_mlp(synth_splits):
    train, val, test = synth_splits
    return train_classifier(train, val, TrainConfig(kind="mlp", seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def linear_model(weights, length, bias=0.0):
    """Two-class classifier whose class-1 probability is affine in the input.

    The weights are scaled so the output stays inside (0, 1) for the
    bounded signals used in tests.
    """
    weights = np.asarray(weights, dtype=float)

    def fn(X):
        p = bias + X @ weights
        return np.column_stack([1.0 - p, p])
    return FunctionClassifier(fn, 2, length)


@pytest.fixture
def script(tmp_path):
    """Write a Python test-double script and return its command line."""
    def make(body, name="double.py"):
        path = tmp_path / name
        path.write_text(body)
        return f'"{sys.executable}" "{path}"'
    return make


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
