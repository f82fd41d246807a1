"""Numerical checks of the Mixup Taylor decomposition and the bound formulas.

Higher-order directional derivatives are taken along the mixing path
``a -> loss(x_i + a (x' - x_i), y_i)``: a scalar function of one variable,
so central finite differences with Richardson extrapolation give every
order up to 4 without forming derivative tensors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from . import tensor as T
from .mixup import BetaParams, link, loss_h, sample_beta
from .tensor import Tensor

DEFAULT_STEPS = (1e-2, 5e-3, 2.5e-3)
MAX_ORDER = 4

# Second-order accurate central stencils: offsets (in units of h) and weights;
# the k-th derivative is sum(w * f(o h)) / h**k.
_STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


class VerificationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# path evaluation
# ---------------------------------------------------------------------------


def row_losses(logits: np.ndarray, y: np.ndarray, head: str = "softmax") -> np.ndarray:
    """Per-row ``h(f) - y.f`` without building a graph."""
    if head == "softmax":
        h = K.logsumexp_rows(logits)[:, 0]
    else:
        h = K.softplus(logits)[:, 0]
    return h - np.einsum("ij,ij->i", y, logits)


def _as_row(a) -> np.ndarray:
    a = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    return a.reshape(1, -1)


def path_values(model, base, direction, y, a_values, head: str = "softmax") -> np.ndarray:
    """Losses at ``base + a * direction`` for every row and every ``a``.

    ``base``, ``direction`` are ``(P, d)``, ``y`` is ``(P, C)``; the result is
    ``(P, len(a_values))``.
    """
    base = np.atleast_2d(base)
    direction = np.atleast_2d(direction)
    y = np.atleast_2d(y)
    a = np.asarray(a_values, dtype=np.float64).ravel()
    pts = base[:, None, :] + a[None, :, None] * direction[:, None, :]
    p, na, d = pts.shape
    with T.no_grad():
        logits = model(Tensor(pts.reshape(p * na, d))).data
    return row_losses(logits, np.repeat(y, na, axis=0), head).reshape(p, na)


def path_loss(model, x_i, y_i, x_prime, a: float, head: str = "softmax") -> float:
    """``loss(x_i + a (x' - x_i), y_i)`` evaluated directly."""
    x_i, y_i, x_prime = _as_row(x_i), _as_row(y_i), _as_row(x_prime)
    return float(path_values(model, x_i, x_prime - x_i, y_i, [a], head)[0, 0])


def path_gradient(model, x_i, y_i, x_prime, head: str = "softmax") -> float:
    """First path derivative at 0 by reverse mode: ``grad_x loss . (x' - x_i)``."""
    x_i, y_i, x_prime = _as_row(x_i), _as_row(y_i), _as_row(x_prime)
    with T.frozen(model.parameters()):
        xt = Tensor(x_i.copy(), requires_grad=True)
        T.backward(loss_h(model(xt), y_i, head))
    return float(xt.grad[0] @ (x_prime - x_i)[0])


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def _richardson(estimates: list[np.ndarray], ratio: float, noise: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Richardson tableau over steps h, h/r, h/r**2, ... with entry selection.

    Every tableau entry gets a truncation estimate (distance to its less
    extrapolated neighbour) and a rounding estimate (propagated from
    ``noise``). The entry with the smallest sum wins, elementwise; that sum
    is returned as the error. Pure extrapolation would amplify rounding
    noise at high orders and small steps.
    """
    n = len(estimates)
    if n == 1:
        return estimates[0], np.full_like(estimates[0], np.nan)
    vals, errs = [], []
    level, lnoise = list(estimates), list(noise)
    for i in range(n):
        j = i + 1 if i < n - 1 else i - 1
        vals.append(level[i])
        errs.append(np.abs(level[i] - level[j]) + lnoise[i])
    for lv in range(1, n):
        f = ratio ** (2 * lv)
        nxt = [(f * level[i + 1] - level[i]) / (f - 1.0) for i in range(len(level) - 1)]
        nxt_noise = [np.hypot(f * lnoise[i + 1], lnoise[i]) / (f - 1.0) for i in range(len(level) - 1)]
        for i, v in enumerate(nxt):
            vals.append(v)
            errs.append(np.abs(v - level[i + 1]) + nxt_noise[i])
        level, lnoise = nxt, nxt_noise
    vals, errs = np.stack(vals), np.stack(errs)
    pick = np.argmin(errs, axis=0)
    return np.take_along_axis(vals, pick[None], 0)[0], np.take_along_axis(errs, pick[None], 0)[0]


def fd_derivatives(
    fun: Callable[[np.ndarray], np.ndarray],
    order: int,
    steps: Sequence[float] = DEFAULT_STEPS,
) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives 1..order of a scalar path at 0.

    ``fun`` maps a 1-D array of ``a`` values to values with ``a`` on the last
    axis (extra leading axes are carried through). Returns ``(values,
    errors)`` with the order on the last axis; see :func:`_richardson` for
    how the estimate and its error are chosen.
    """
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}, got {order}")
    steps = [float(h) for h in steps]
    ratios = {round(steps[i] / steps[i + 1], 12) for i in range(len(steps) - 1)}
    if len(ratios) > 1:
        raise ValueError("steps must form a geometric sequence")
    ratio = ratios.pop() if ratios else 2.0

    grid = sorted({o * h for h in steps for k in range(1, order + 1) for o in _STENCILS[k][0]} | {0.0})
    index = {a: i for i, a in enumerate(grid)}
    vals = np.asarray(fun(np.asarray(grid)), dtype=np.float64)

    # rounding scale of one function value
    unit = np.finfo(np.float64).eps * np.max(np.abs(vals), axis=-1)
    values, errors = [], []
    for k in range(1, order + 1):
        offsets, weights = _STENCILS[k]
        wnorm = float(np.sqrt(np.sum(np.square(weights))))
        per_step, noise = [], []
        for h in steps:
            acc = sum(w * vals[..., index[o * h]] for o, w in zip(offsets, weights))
            per_step.append(acc / h**k)
            noise.append(unit * wnorm / h**k)
        best, err = _richardson(per_step, ratio, noise)
        values.append(best)
        errors.append(err)
    return np.stack(values, axis=-1), np.stack(errors, axis=-1)


def _require_smooth(model, order: int) -> None:
    act = getattr(model, "activation", None)
    if order >= 2 and act == "relu":
        raise ValueError(
            "derivatives of order >= 2 need a smooth activation (tanh or softplus); "
            "a ReLU network is piecewise linear and its higher path derivatives are not defined at the kinks"
        )


def directional_derivatives(
    model,
    x_i,
    y_i,
    x_prime,
    order: int,
    head: str = "softmax",
    steps: Sequence[float] = DEFAULT_STEPS,
    path_fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``d^k/da^k loss(x_i + a(x' - x_i), y_i)`` at 0 for k = 1..order.

    ``path_fn`` replaces the model path by an arbitrary scalar function of
    ``a`` (used to check the differentiator on known polynomials).
    """
    if path_fn is None:
        _require_smooth(model, order)
        x_i, y_i, x_prime = _as_row(x_i), _as_row(y_i), _as_row(x_prime)

        def path_fn(a):
            return path_values(model, x_i, x_prime - x_i, y_i, a, head)[0]

    return fd_derivatives(path_fn, order, steps)


# ---------------------------------------------------------------------------
# pointwise Taylor check
# ---------------------------------------------------------------------------


def loglog_slope(a: np.ndarray, v: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    v = np.abs(np.asarray(v, dtype=np.float64))
    keep = v > 0
    if keep.sum() < 2:
        return float("inf")
    return float(np.polyfit(np.log(a[keep]), np.log(v[keep]), 1)[0])


@dataclass
class ExpansionReport:
    K: int
    a_values: np.ndarray
    per_order_terms: np.ndarray  # (K, len(a))
    truncated_sum: np.ndarray
    exact_loss: np.ndarray
    remainder: np.ndarray
    base_loss: float
    derivatives: np.ndarray
    derivative_errors: np.ndarray
    remainder_slopes: list[float] = field(default_factory=list)
    required_slope: float = 0.0
    passed: bool = False

    @property
    def slope(self) -> float:
        return self.remainder_slopes[-1]

    def to_csv(self, path: str | Path) -> None:
        """One row per (a, order); truncation and remainder are cumulative
        up to that order. A trailing comment line holds the fitted slopes."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "order", "term_value", "truncated_sum", "exact", "remainder"])
            for j, a in enumerate(self.a_values):
                partial = self.base_loss
                for k in range(self.K):
                    partial += self.per_order_terms[k, j]
                    w.writerow(
                        [repr(float(a)), k + 1, repr(float(self.per_order_terms[k, j])), repr(float(partial)),
                         repr(float(self.exact_loss[j])), repr(float(self.exact_loss[j] - partial))]
                    )
            slopes = " ".join(f"order{k + 1}={s:.4f}" for k, s in enumerate(self.remainder_slopes))
            fh.write(f"# remainder_slopes: {slopes} required={self.required_slope:.2f} "
                     f"status={'pass' if self.passed else 'FAIL'}\n")


def default_a_grid(lo: float = 0.01, hi: float = 0.2, num: int = 9) -> np.ndarray:
    return np.geomspace(lo, hi, num)


def verify_pointwise_taylor(
    model,
    x_i,
    y_i,
    x_prime,
    K: int,
    a_grid=None,
    head: str = "softmax",
    steps: Sequence[float] = DEFAULT_STEPS,
    slope_margin: float = 0.7,
) -> ExpansionReport:
    """Compare the exact path loss with its order-K Taylor polynomial.

    The remainder must shrink like ``a**(K+1)``: the fitted log-log slope of
    ``|exact - truncated|`` over ``a_grid`` has to reach ``K + slope_margin``.
    A failing slope is reported through ``passed``, not raised.
    """
    _require_smooth(model, K)
    a = default_a_grid() if a_grid is None else np.asarray(a_grid, dtype=np.float64)
    if np.any(a <= 0) or np.any(a > 0.5):
        raise ValueError("a_grid must lie in (0, 0.5]")
    x_i, y_i, x_prime = _as_row(x_i), _as_row(y_i), _as_row(x_prime)
    derivs, errs = directional_derivatives(model, x_i, y_i, x_prime, K, head, steps)
    exact = path_values(model, x_i, x_prime - x_i, y_i, a, head)[0]
    base = path_loss(model, x_i, y_i, x_prime, 0.0, head)
    terms = np.array([a ** (k + 1) / math.factorial(k + 1) * derivs[k] for k in range(K)])
    partial = base + np.cumsum(terms, axis=0)
    slopes = [loglog_slope(a, exact - partial[k]) for k in range(K)]
    required = K + slope_margin
    return ExpansionReport(
        K=K,
        a_values=a,
        per_order_terms=terms,
        truncated_sum=partial[-1],
        exact_loss=exact,
        remainder=exact - partial[-1],
        base_loss=base,
        derivatives=derivs,
        derivative_errors=errs,
        remainder_slopes=slopes,
        required_slope=required,
        passed=bool(slopes[-1] >= required),
    )


# ---------------------------------------------------------------------------
# distributional decomposition
# ---------------------------------------------------------------------------


def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def beta_pdf(lam: np.ndarray, p: BetaParams) -> np.ndarray:
    return stats.beta.pdf(lam, p.alpha, p.beta)


def mixture_pdf(lam: np.ndarray, p: BetaParams) -> np.ndarray:
    """Density of ``a/(a+b) Beta(a+1, b) + b/(a+b) Beta(b+1, a)``."""
    s = p.alpha + p.beta
    return (p.alpha / s) * stats.beta.pdf(lam, p.alpha + 1.0, p.beta) + (p.beta / s) * stats.beta.pdf(
        lam, p.beta + 1.0, p.alpha
    )


def mixture_a_moment(p: BetaParams, k: int) -> float:
    """Closed-form ``E[(1 - lambda)**k]`` under the mixture."""

    def beta_moment(a: float, b: float) -> float:
        out = 1.0
        for r in range(k):
            out *= (b + r) / (a + b + r)
        return out

    s = p.alpha + p.beta
    return (p.alpha / s) * beta_moment(p.alpha + 1.0, p.beta) + (p.beta / s) * beta_moment(p.beta + 1.0, p.alpha)


def _pairwise_mixup_loss(model, x: np.ndarray, y: np.ndarray, lam: float, head: str) -> float:
    n = x.shape[0]
    xi, xj = np.repeat(x, n, axis=0), np.tile(x, (n, 1))
    yi, yj = np.repeat(y, n, axis=0), np.tile(y, (n, 1))
    xm = lam * xi + (1.0 - lam) * xj
    ym = lam * yi + (1.0 - lam) * yj
    with T.no_grad():
        logits = model(Tensor(xm)).data
    return float(row_losses(logits, ym, head).mean())


@dataclass
class DecompositionReport:
    lhs: float
    lhs_refined: float
    quadrature_converged: bool
    lhs_mc: float
    lhs_mc_se: float
    l_std: float
    moments: np.ndarray
    moments_closed_form: np.ndarray
    rhs: np.ndarray  # rhs[k-1] = RHS truncated at order k
    gaps: np.ndarray  # |LHS - RHS(k)|
    fd_error: np.ndarray  # propagated finite-difference uncertainty of RHS(k)
    monotone: bool
    mc_agrees: bool

    def summary(self) -> dict:
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


def verify_mixup_decomposition(
    model,
    x,
    y,
    p: BetaParams | None,
    K: int = MAX_ORDER,
    mc_samples: int = 100_000,
    head: str = "softmax",
    nodes: int = 64,
    rng: np.random.Generator | None = None,
    steps: Sequence[float] = DEFAULT_STEPS,
    quad_tol: float = 1e-6,
) -> DecompositionReport:
    """Expected Mixup loss against ``L_std`` plus the order-k path expansion.

    LHS: all ``n**2`` ordered pairs with mixed labels, integrated over
    ``Beta(alpha, beta)`` by Gauss-Legendre (and again with twice the nodes
    as a convergence check), plus a Monte-Carlo estimate over random
    ``(lambda, i, j)``. RHS(k): ``L_std`` plus, for every pair, the path
    derivatives at ``a = 0`` weighted by ``E[a**k] / k!`` under the
    mixture distribution (moments by the same quadrature).

    ``p=None`` means a point mass at ``lambda = 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if K >= 2:
        _require_smooth(model, K)
    rng = np.random.default_rng(0) if rng is None else rng

    base_losses = path_values(model, x, np.zeros_like(x), y, [0.0], head)[:, 0]
    l_std = float(base_losses.mean())

    if p is None:
        lhs = _pairwise_mixup_loss(model, x, y, 1.0, head)
        zeros = np.zeros(K)
        return DecompositionReport(lhs, lhs, True, lhs, 0.0, l_std, zeros, zeros, np.full(K, l_std),
                                   np.abs(lhs - np.full(K, l_std)), zeros, True, True)

    def quad_lhs(num):
        lam, w = gauss_legendre_01(num)
        vals = np.array([_pairwise_mixup_loss(model, x, y, float(l), head) for l in lam])
        return float(np.sum(w * beta_pdf(lam, p) * vals))

    lhs = quad_lhs(nodes)
    lhs_refined = quad_lhs(2 * nodes)
    converged = abs(lhs - lhs_refined) <= quad_tol

    lam_mc = sample_beta(p, rng, mc_samples)
    i = rng.integers(0, n, mc_samples)
    j = rng.integers(0, n, mc_samples)
    lm = lam_mc[:, None]
    xm = lm * x[i] + (1.0 - lm) * x[j]
    ym = lm * y[i] + (1.0 - lm) * y[j]
    with T.no_grad():
        mc_vals = row_losses(model(Tensor(xm)).data, ym, head)
    lhs_mc = float(mc_vals.mean())
    lhs_mc_se = float(mc_vals.std(ddof=1) / np.sqrt(mc_samples))

    lam, w = gauss_legendre_01(nodes)
    dens = mixture_pdf(lam, p)
    moments = np.array([np.sum(w * dens * (1.0 - lam) ** k) for k in range(1, K + 1)])
    closed = np.array([mixture_a_moment(p, k) for k in range(1, K + 1)])

    base = np.repeat(x, n, axis=0)
    direction = np.tile(x, (n, 1)) - base
    yi = np.repeat(y, n, axis=0)
    derivs, errs = fd_derivatives(lambda a: path_values(model, base, direction, yi, a, head), K, steps)
    fact = np.array([math.factorial(k) for k in range(1, K + 1)])
    contrib = (derivs * moments / fact).mean(axis=0)
    contrib_err = (errs * moments / fact).mean(axis=0)
    rhs = l_std + np.cumsum(contrib)
    fd_error = np.cumsum(contrib_err)
    gaps = np.abs(lhs - rhs)
    slack = fd_error + 1e-12
    monotone = bool(all(gaps[k + 1] <= gaps[k] + slack[k + 1] for k in range(K - 1)))
    mc_agrees = abs(lhs_mc - lhs) <= 3.0 * lhs_mc_se
    return DecompositionReport(lhs, lhs_refined, converged, lhs_mc, lhs_mc_se, l_std, moments, closed,
                               rhs, gaps, fd_error, monotone, mc_agrees)


# ---------------------------------------------------------------------------
# alpha coefficients
# ---------------------------------------------------------------------------


def alpha_coefficients(model, x_i, y_i, mean_x, head: str = "softmax") -> np.ndarray:
    """Per-class residual times the cosine between the Jacobian row and
    ``mean_x - x_i``. A zero-length row or direction gives cosine 0."""
    x_i, y_i, mean_x = _as_row(x_i), _as_row(y_i), _as_row(mean_x)
    jac = T.jacobian_rows(model, x_i, params=model.parameters())
    with T.no_grad():
        g = link(model(Tensor(x_i)), head).data[0]
    direction = (mean_x - x_i)[0]
    dn = np.linalg.norm(direction)
    rn = np.linalg.norm(jac, axis=1)
    denom = rn * dn
    cos = np.divide(jac @ direction, denom, out=np.zeros_like(rn), where=denom > 0)
    return (g - y_i[0]) * cos


def recombine_alpha(alpha: np.ndarray, jac: np.ndarray, direction) -> float:
    """``sum_j alpha_j ||J_j|| ||direction||``."""
    return float(np.sum(alpha * np.linalg.norm(jac, axis=1)) * np.linalg.norm(np.ravel(direction)))


def batch_alpha_coefficients(model, x, y, mean_x, head: str = "softmax") -> np.ndarray:
    """``(m, C)`` alpha coefficients, with the Jacobian rows obtained by C
    backward passes over the whole batch (rows do not interact in an MLP)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    params = model.parameters()
    with T.no_grad():
        g = link(model(Tensor(x)), head).data
    c = g.shape[1]
    direction = _as_row(mean_x) - x
    dots = np.empty_like(g)
    norms = np.empty_like(g)
    with T.frozen(params):
        for j in range(c):
            xt = Tensor(x.copy(), requires_grad=True)
            T.backward(T.sum(T.column(model(xt), j)))
            rows = xt.grad
            dots[:, j] = np.einsum("ij,ij->i", rows, direction)
            norms[:, j] = np.linalg.norm(rows, axis=1)
    denom = norms * np.linalg.norm(direction, axis=1, keepdims=True)
    cos = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    return (g - y) * cos


@dataclass
class AlphaTrace:
    iteration: int
    min_alpha: float
    frac_negative: float


class AlphaTracker:
    """Training callback recording min alpha on a fixed probe set every
    ``every_k`` iterations (iteration 0 is the untrained model)."""

    def __init__(self, probe_x, probe_y, mean_x, every_k: int = 1, head: str = "softmax"):
        if every_k < 1:
            raise ValueError("every_k must be >= 1")
        self.probe_x = np.atleast_2d(np.asarray(probe_x, dtype=np.float64))
        self.probe_y = np.atleast_2d(np.asarray(probe_y, dtype=np.float64))
        self.mean_x = _as_row(mean_x)
        self.every_k = every_k
        self.head = head
        self.trace: list[AlphaTrace] = []

    def __call__(self, iteration: int, model) -> None:
        if iteration % self.every_k:
            return
        alpha = batch_alpha_coefficients(model, self.probe_x, self.probe_y, self.mean_x, self.head)
        self.trace.append(AlphaTrace(iteration, float(alpha.min()), float((alpha < 0).mean())))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "min_alpha", "frac_negative"])
            for t in self.trace:
                w.writerow([t.iteration, repr(t.min_alpha), repr(t.frac_negative)])


def track_min_alpha(run: Callable[[Callable[[int, object], None]], object], tracker: AlphaTracker) -> list[AlphaTrace]:
    """Run ``run(callback)`` with the tracker attached and return its trace.

    ``run`` must call the callback with ``(0, model)`` before the first
    update and with ``(t, model)`` after update ``t``.
    """
    run(tracker)
    return list(tracker.trace)


# ---------------------------------------------------------------------------
# generalization bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundInputs:
    L_A: float
    gamma: float
    script_X: float
    n: int
    delta: float
    B: float
    eta: float = 1.0
    eta_hat: float = 1.0
    xi: float = 1.0
    empirical_l_mix: float = 0.0

    def __post_init__(self):
        for name in ("L_A", "script_X", "n", "B", "xi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gamma", "eta", "eta_hat", "empirical_l_mix"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @classmethod
    def from_file(cls, path: str | Path) -> "BoundInputs":
        with open(path) as fh:
            raw = json.load(fh)
        raw.pop("config_version", None)
        return cls(**raw)


def bound_terms(b: BoundInputs) -> tuple[float, float, float]:
    """(empirical, complexity, confidence) terms of the MixupE bound."""
    empirical = b.eta_hat * b.empirical_l_mix
    complexity = 2.0 * b.eta_hat * b.eta * b.L_A * b.gamma * b.script_X / (math.sqrt(b.n) * (1.0 + b.L_A))
    confidence = b.B * math.sqrt(math.log(1.0 / b.delta) / (2.0 * b.n))
    return empirical, complexity, confidence


def bound_mixupe(b: BoundInputs) -> float:
    return float(sum(bound_terms(b)))


@dataclass(frozen=True)
class BoundComparison:
    mixupe_complexity: float
    vanilla_complexity: float
    shrink_condition_holds: bool


def bound_compare(b: BoundInputs) -> BoundComparison:
    """Rademacher-level complexity under the MixupE constraint versus a
    plain norm ball ``||theta||**2 <= xi``."""
    mix = b.L_A * b.gamma * b.script_X / ((1.0 + b.L_A) * math.sqrt(b.n))
    van = b.L_A * math.sqrt(b.xi * b.script_X / b.n)
    return BoundComparison(mix, van, bool(b.gamma * math.sqrt(b.script_X) <= (1.0 + b.L_A) * math.sqrt(b.xi)))


def format_bound_table(b: BoundInputs) -> str:
    emp, cplx, conf = bound_terms(b)
    cmp_ = bound_compare(b)
    rows = [
        ("empirical term", emp),
        ("complexity term", cplx),
        ("confidence term", conf),
        ("mixupe bound", emp + cplx + conf),
        ("mixupe complexity", cmp_.mixupe_complexity),
        ("vanilla complexity", cmp_.vanilla_complexity),
    ]
    width = max(len(r[0]) for r in rows)
    lines = [f"{name:<{width}}  {value:.6g}" for name, value in rows]
    lines.append(f"{'shrink condition':<{width}}  {'holds' if cmp_.shrink_condition_holds else 'fails'}")
    return "\n".join(lines)
