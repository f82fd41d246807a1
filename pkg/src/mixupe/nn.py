"""Dense layers, MLP construction, optimizers and checkpoints."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = ("relu", "tanh", "softplus", "identity")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    activation: str = "relu"
    homogeneous: bool = False

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden, self.output_dim)
        if any(int(d) <= 0 for d in dims):
            raise ValueError(f"layer dimensions must be positive, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "homogeneous": self.homogeneous,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden=tuple(d.get("hidden", ())),
            output_dim=int(d["output_dim"]),
            activation=d.get("activation", "relu"),
            homogeneous=bool(d.get("homogeneous", False)),
        )


def _activate(z: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return T.relu(z)
    if kind == "tanh":
        return T.tanh(z)
    if kind == "softplus":
        return T.softplus(z)
    return z


def _activation_slope(z: Tensor, a: Tensor, kind: str) -> Tensor:
    """Derivative of the activation at ``z`` (``a`` is the activated value)."""
    if kind == "relu":
        return T.relu_mask(z)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "softplus":
        return T.sigmoid(z)
    raise ValueError(kind)


@dataclass
class DenseLayer:
    weight: Tensor
    bias: Tensor | None
    activation: str = "identity"

    def __call__(self, x: Tensor) -> Tensor:
        return _activate(T.linear(x, self.weight, self.bias), self.activation)

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpModel:
    """Feed-forward network returning logits (no output squashing)."""

    layers: list[DenseLayer]
    arch: Architecture

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_features != b.in_features:
                raise ValueError(f"layer widths do not chain: {a.out_features} -> {b.in_features}")
        if self.layers[-1].activation != "identity":
            raise ValueError("final layer must be linear (logits out)")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_features

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_features

    @property
    def activation(self) -> str:
        return self.arch.activation

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            if layer.bias is not None:
                out.append(layer.bias)
        return out

    def forward(self, x: Tensor) -> Tensor:
        x = T.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.input_dim:
            raise T.ShapeError(f"model expects (m, {self.input_dim}) input, got {x.shape}")
        for layer in self.layers:
            x = layer(x)
        return x

    __call__ = forward

    def forward_tangent(self, x: Tensor, v) -> tuple[Tensor, Tensor]:
        """Logits and the directional derivative ``J_f(x) v`` per row.

        The tangent is built from ordinary graph ops, so it is itself
        differentiable with respect to the parameters. ``v`` is ``(m, d)`` or
        a ``(1, d)`` row shared by all samples.
        """
        x = T.as_tensor(x)
        t = T.as_tensor(v)
        if t.shape[0] == 1 and x.shape[0] > 1:
            t = Tensor(np.broadcast_to(t.data, x.shape).copy())
        for layer in self.layers:
            z = T.linear(x, layer.weight, layer.bias)
            tz = T.linear(t, layer.weight)
            if layer.activation == "identity":
                x, t = z, tz
            else:
                x = _activate(z, layer.activation)
                t = _activation_slope(z, x, layer.activation) * tz
        return x, t

    def predict(self, x) -> np.ndarray:
        """Logits as a plain array, no graph recorded."""
        with T.no_grad():
            return self.forward(T.as_tensor(x)).data

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def snapshot(self) -> "MlpModel":
        """Independent deep copy with gradient state dropped."""
        clone = copy.deepcopy(self)
        clone.zero_grad()
        return clone

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.parameters()])

    def set_flat_parameters(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.parameters():
            n = p.data.size
            p.data = np.asarray(flat[i : i + n], dtype=np.float64).reshape(p.shape).copy()
            i += n
        if i != len(flat):
            raise ValueError(f"expected {i} parameters, got {len(flat)}")


def init_model(arch: Architecture, seed: int) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.

    With ``arch.homogeneous`` the biases are omitted entirely.
    """
    rng = np.random.default_rng(seed)
    dims = arch.dims
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = Tensor(rng.uniform(-bound, bound, size=(fan_out, fan_in)), requires_grad=True)
        b = None if arch.homogeneous else Tensor(np.zeros((1, fan_out)), requires_grad=True)
        act = "identity" if k == len(dims) - 2 else arch.activation
        layers.append(DenseLayer(w, b, act))
    return MlpModel(layers, arch)


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


class MissingGradientError(RuntimeError):
    pass


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    buffers: list[list[np.ndarray]] = field(default_factory=list)
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd_momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")


def sgd(learning_rate: float, momentum: float = 0.9) -> OptimizerState:
    return OptimizerState("sgd_momentum", learning_rate, momentum=momentum)


def adam(learning_rate: float = 1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> OptimizerState:
    return OptimizerState("adam", learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon)


def step(opt: OptimizerState, params: Sequence[Tensor]) -> None:
    """Apply one update from ``p.grad`` and reset the gradients.

    SGD: ``v <- mu v + g; p <- p - lr v``. Adam uses bias-corrected moments.
    Parameters that received no gradient raise ``MissingGradientError``.
    """
    missing = [i for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise MissingGradientError(f"parameters {missing} have no gradient; call backward() first")
    if not opt.buffers:
        nbuf = 1 if opt.kind == "sgd_momentum" else 2
        opt.buffers = [[np.zeros_like(p.data) for p in params] for _ in range(nbuf)]
    opt.step_count += 1
    if opt.kind == "sgd_momentum":
        (vel,) = opt.buffers
        for p, v in zip(params, vel):
            v *= opt.momentum
            v += p.grad
            p.data = p.data - opt.learning_rate * v
    else:
        m1, m2 = opt.buffers
        t = opt.step_count
        c1 = 1.0 - opt.beta1**t
        c2 = 1.0 - opt.beta2**t
        for p, m, v in zip(params, m1, m2):
            g = p.grad
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * g * g
            p.data = p.data - opt.learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.epsilon)
    for p in params:
        p.grad = None


def make_optimizer(spec: dict) -> OptimizerState:
    spec = dict(spec)
    kind = spec.pop("kind", "adam")
    if kind == "adam":
        return adam(**{"learning_rate": 1e-3, **spec})
    if kind in ("sgd", "sgd_momentum"):
        return sgd(**{"learning_rate": 0.1, **spec})
    raise ValueError(f"unknown optimizer {kind!r}")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: MlpModel, path: str | Path) -> None:
    """Write an ``.npz`` holding the architecture JSON and raw float64 arrays.

    Keys: ``format`` (``"mixupe-mlp"``), ``version``, ``architecture`` (JSON
    string), ``param_00``, ``param_01``, ... in :meth:`MlpModel.parameters`
    order (weight then bias per layer).
    """
    arrays = {f"param_{i:02d}": p.data for i, p in enumerate(model.parameters())}
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format=np.array("mixupe-mlp"),
            version=np.array(CHECKPOINT_VERSION),
            architecture=np.array(json.dumps(model.arch.to_dict())),
            **arrays,
        )


def load_checkpoint(path: str | Path) -> MlpModel:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != "mixupe-mlp":
            raise ValueError(f"{path}: not a mixupe checkpoint")
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        arch = Architecture.from_dict(json.loads(str(z["architecture"])))
        model = init_model(arch, seed=0)
        params = model.parameters()
        for i, p in enumerate(params):
            arr = z[f"param_{i:02d}"]
            if arr.shape != p.shape:
                raise ValueError(f"{path}: param_{i:02d} has shape {arr.shape}, expected {p.shape}")
            p.data = arr.astype(np.float64, copy=True)
    return model


def build(arch_like: Architecture | dict, seed: int) -> MlpModel:
    arch = arch_like if isinstance(arch_like, Architecture) else Architecture.from_dict(arch_like)
    return init_model(arch, seed)

