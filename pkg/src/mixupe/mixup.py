"""Mixup sampling and mixing, the logit loss, and the MixupE objective.

The per-sample loss is written as ``h(f) - y.f`` where ``f`` are the logits
and ``h`` is log-sum-exp (softmax head) or softplus (sigmoid head). The
MixupE objective adds the mean absolute first-order term, weighted by the
expected partner weight ``E[1 - lambda]``, and rescales the sum so its
magnitude equals the plain Mixup loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import tensor as T
from .tensor import Tensor

HEADS = ("softmax", "sigmoid")


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @classmethod
    def symmetric(cls, alpha: float) -> "BetaParams":
        return cls(alpha, alpha)


def _log_gamma_variate(shape: float, rng: np.random.Generator, size=None):
    # G(a) = G(a + 1) * U**(1/a) keeps small shapes from underflowing to 0.
    g = rng.gamma(shape + 1.0, size=size)
    u = 1.0 - rng.random(size=size)
    return np.log(g) + np.log(u) / shape


def sample_beta(p: BetaParams, rng: np.random.Generator, size=None):
    """Draw lambda ~ Beta(alpha, beta) from two Gamma variates.

    Works in log space so that tiny shape parameters still give a value
    strictly inside (0, 1).
    """
    la = _log_gamma_variate(p.alpha, rng, size)
    lb = _log_gamma_variate(p.beta, rng, size)
    lam = K.np_sigmoid(np.atleast_1d(np.asarray(la - lb, dtype=np.float64)))
    lam = np.clip(lam, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))
    return float(lam[0]) if size is None else lam.reshape(np.shape(la))


def expected_a_lambda(p: BetaParams) -> float:
    """``E[1 - lambda]`` under the mixture
    ``a/(a+b) Beta(a+1, b) + b/(a+b) Beta(b+1, a)``.

    Equals ``2ab / ((a+b)(a+b+1))``; for ``a == b`` this is
    ``1 - (a+1)/(2a+1)``.
    """
    a, b = p.alpha, p.beta
    s = a + b
    return (a / s) * (b / (s + 1.0)) + (b / s) * (a / (s + 1.0))


def sample_mixture_lambda(p: BetaParams, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draws from the mixture above (used for Monte-Carlo checks)."""
    first = rng.random(size) < p.alpha / (p.alpha + p.beta)
    lam = np.empty(size)
    n1 = int(first.sum())
    lam[first] = sample_beta(BetaParams(p.alpha + 1.0, p.beta), rng, n1)
    lam[~first] = sample_beta(BetaParams(p.beta + 1.0, p.alpha), rng, size - n1)
    return lam


# ---------------------------------------------------------------------------
# mixing
# ---------------------------------------------------------------------------


@dataclass
class MixedBatch:
    x_mixed: Tensor
    y_mixed: Tensor
    lam: float
    permutation: np.ndarray


def _array(a) -> np.ndarray:
    return a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)


def mix_batch(x, y, lam: float, rng: np.random.Generator | None = None, perm=None) -> MixedBatch:
    """Mix the batch with a shuffled copy of itself using one lambda."""
    xd, yd = _array(x), _array(y)
    if xd.shape[0] != yd.shape[0]:
        raise T.ShapeError(f"x has {xd.shape[0]} rows but y has {yd.shape[0]}")
    m = xd.shape[0]
    if m < 1:
        raise T.ShapeError("cannot mix an empty batch")
    if perm is None:
        if rng is None:
            raise ValueError("mix_batch needs either rng or perm")
        perm = rng.permutation(m)
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(m)):
        raise ValueError("perm is not a permutation of the batch indices")
    return MixedBatch(Tensor(K.mix_rows(xd, perm, lam)), Tensor(K.mix_rows(yd, perm, lam)), float(lam), perm)


def mix_streams(x1, y1, x2, y2, lam: float) -> MixedBatch:
    """Two-loader variant: mix a batch with an independently drawn batch."""
    x1d, y1d, x2d, y2d = (_array(a) for a in (x1, y1, x2, y2))
    if x1d.shape != x2d.shape or y1d.shape != y2d.shape or x1d.shape[0] != y1d.shape[0]:
        raise T.ShapeError("both streams must provide batches of the same shape")
    b = 1.0 - lam
    m = x1d.shape[0]
    return MixedBatch(Tensor(lam * x1d + b * x2d), Tensor(lam * y1d + b * y2d), float(lam), np.arange(m))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _check_head(logits: Tensor, head: str) -> None:
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}")
    c = logits.shape[1]
    if head == "softmax" and c < 2:
        raise T.ShapeError("softmax head needs at least 2 logits")
    if head == "sigmoid" and c != 1:
        raise T.ShapeError(f"sigmoid head needs exactly 1 logit, got {c}")


def link(logits: Tensor, head: str = "softmax") -> Tensor:
    """``g(f)``: softmax rows or elementwise sigmoid."""
    return T.softmax_rows(logits) if head == "softmax" else T.sigmoid(logits)


def loss_h(logits: Tensor, y, head: str = "softmax") -> Tensor:
    """Batch mean of ``h(f) - y.f``."""
    y = T.as_tensor(y)
    _check_head(logits, head)
    if y.shape != logits.shape:
        raise T.ShapeError(f"targets {y.shape} do not match logits {logits.shape}")
    h = T.log_sum_exp_rows(logits) if head == "softmax" else T.softplus(logits)
    return T.mean(h - T.sum_rows(y * logits))


def q_exact(model, x_i, y_i, mean_x, head: str = "softmax") -> float:
    """``(g(f(x)) - y)^T J_f(x) (mean_x - x)`` for one sample (no graph)."""
    x_i, y_i, mean_x = (_array(a).reshape(1, -1) for a in (x_i, y_i, mean_x))
    jac = T.jacobian_rows(model, x_i, params=model.parameters())
    with T.no_grad():
        g = link(model(Tensor(x_i)), head).data[0]
    return float((g - y_i[0]) @ jac @ (mean_x[0] - x_i[0]))


def q_hat(logits: Tensor, y, head: str = "softmax") -> Tensor:
    """Per-row ``(y - g(f))^T f`` as an ``(m, 1)`` tensor.

    Gradients flow through both the logits and ``g(f)``.
    """
    y = T.as_tensor(y)
    _check_head(logits, head)
    return T.sum_rows((y - link(logits, head)) * logits)


def q_tangent(model, x, y, mean_x, head: str = "softmax") -> Tensor:
    """Per-row exact first-order term using a tangent pass, ``(m, 1)``.

    Same quantity as :func:`q_exact` but batched and differentiable in the
    parameters.
    """
    xd = _array(x)
    direction = _array(mean_x).reshape(1, -1) - xd
    f, jv = model.forward_tangent(Tensor(xd), direction)
    return T.sum_rows((link(f, head) - T.as_tensor(y)) * jv)


def regularizer_R(
    model,
    x,
    y,
    p: BetaParams,
    mode: str = "approximate",
    mean_x=None,
    head: str = "softmax",
) -> Tensor:
    """``E[a_lambda] * mean_i |q(x_i)|`` on the un-mixed batch."""
    xd = _array(x)
    if xd.shape[0] < 1:
        raise T.ShapeError("regularizer needs a nonempty batch")
    if mode == "approximate":
        q = q_hat(model(Tensor(xd)), y, head)
    elif mode == "exact":
        if mean_x is None:
            raise ValueError("exact mode needs mean_x")
        q = q_tangent(model, xd, y, mean_x, head)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return T.mean(T.abs(q)) * expected_a_lambda(p)


@dataclass
class LossBreakdown:
    l_mix: float
    r_term: float
    eta_hat: float
    total: float
    expected_a_lambda: float
    lambda_used: float


def mixupe_loss(
    model,
    x,
    y,
    p: BetaParams,
    eta: float,
    head: str = "softmax",
    mode: str = "approximate",
    mean_x=None,
    rng: np.random.Generator | None = None,
    *,
    lam: float | None = None,
    perm=None,
    partner=None,
    mix: bool = True,
) -> tuple[Tensor, LossBreakdown]:
    """``eta_hat * (L_mix + eta * R)`` with ``eta_hat`` held constant.

    ``eta_hat = |L_mix| / |L_mix + eta R|`` is computed from plain floats, so
    it does not carry gradient. A zero denominator falls back to 1. With
    ``eta == 0`` the regularizer is not evaluated and the result is the
    Mixup loss itself. ``mix=False`` skips mixing (lambda = 1) and gives
    the ERM-plus-regularizer objective. ``partner=(x2, y2)`` selects the
    two-stream mixing form instead of a permutation.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if mix:
        if lam is None:
            if rng is None:
                raise ValueError("rng is required to sample lambda")
            lam = sample_beta(p, rng)
        if partner is not None:
            batch = mix_streams(x, y, partner[0], partner[1], lam)
        else:
            batch = mix_batch(x, y, lam, rng=rng, perm=perm)
        xm, ym, lam_used = batch.x_mixed, batch.y_mixed, batch.lam
    else:
        xm, ym, lam_used = T.as_tensor(x), T.as_tensor(y), 1.0
    l_mix = loss_h(model(xm), ym, head)
    ea = expected_a_lambda(p)
    lv = l_mix.item()
    if eta == 0:
        return l_mix, LossBreakdown(lv, 0.0, 1.0, lv, ea, lam_used)
    r = regularizer_R(model, x, y, p, mode, mean_x, head)
    joint = l_mix + r * eta
    denom = np.abs(joint.item())
    eta_hat = float(np.abs(lv) / denom) if denom > 0 else 1.0
    total = joint * eta_hat
    return total, LossBreakdown(lv, r.item(), eta_hat, total.item(), ea, lam_used)
