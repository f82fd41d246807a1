"""MixupE: Mixup with an explicit first-order directional-derivative penalty."""

from . import data, harness, mixup, nn, tensor, theory
from ._kernels import BACKEND
from .mixup import BetaParams, expected_a_lambda, loss_h, mixupe_loss, q_exact, q_hat, regularizer_R
from .nn import Architecture, MlpModel, init_model
from .tensor import Tensor, backward, jacobian_rows

__all__ = [
    "Architecture",
    "BACKEND",
    "BetaParams",
    "MlpModel",
    "Tensor",
    "backward",
    "data",
    "expected_a_lambda",
    "harness",
    "init_model",
    "jacobian_rows",
    "loss_h",
    "mixup",
    "mixupe_loss",
    "nn",
    "q_exact",
    "q_hat",
    "regularizer_R",
    "tensor",
    "theory",
]

__version__ = "0.1.0"
