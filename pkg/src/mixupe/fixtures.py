"""Small deterministic models and batches used by the verification commands."""

from __future__ import annotations

import numpy as np

from . import nn

# Frozen |LHS - RHS(K)| / |LHS| tolerances for the Beta(20, 1) decomposition
# on the tiny-net fixture, K = 1..4. Calibrated over seeds 0-4 of
# ``tiny_net_fixture`` (largest observed ratios 1.6e-4, 2.4e-5, 6.7e-6, 2.0e-6).
DECOMPOSITION_TOLERANCES = (5e-4, 1e-4, 2e-5, 5e-6)


def tiny_net_fixture(seed: int = 0, n: int = 16, d: int = 4, hidden: int = 6, classes: int = 3, scale: float = 0.2):
    """tanh network ``d -> hidden -> classes`` with a small Gaussian batch."""
    model = nn.init_model(nn.Architecture(d, (hidden,), classes, "tanh"), seed)
    rng = np.random.default_rng(100 + seed)
    x = rng.normal(size=(n, d)) * scale
    y = np.eye(classes)[rng.integers(0, classes, n)]
    return model, x, y


def homogeneous_relu_instance(seed: int, d: int = 5, hidden=(16, 16), classes: int = 3, m: int = 8):
    """Bias-free ReLU net with a zero-mean batch and one-hot targets."""
    rng = np.random.default_rng(seed)
    model = nn.init_model(nn.Architecture(d, tuple(hidden), classes, "relu", homogeneous=True), seed)
    x = rng.normal(size=(m, d))
    x -= x.mean(axis=0, keepdims=True)
    y = np.eye(classes)[rng.integers(0, classes, m)]
    return model, x, y
