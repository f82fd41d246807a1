"""Acceptance criteria 1-12, each at its stated tolerance.

Run with pytest (a summary block lists one PASS/FAIL line per criterion) or
directly: ``python3 tests/test_acceptance.py``.
"""

import math
import statistics
import sys
import time

import numpy as np
import pytest

from mixupe import fixtures, nn
from mixupe import harness as H
from mixupe import tensor as T
from mixupe import theory as th
from mixupe.mixup import (
    BetaParams,
    expected_a_lambda,
    loss_h,
    mix_batch,
    mixupe_loss,
    q_exact,
    q_hat,
    sample_mixture_lambda,
)
from mixupe.tensor import Tensor, jacobian_rows

RESULTS: dict[int, str] = {}


def report(num, title, ok, detail, t0):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2} {title}: {detail} ({time.perf_counter() - t0:.1f} s)"
    RESULTS[num] = line
    print(line)
    assert ok, line


# 1 -------------------------------------------------------------------------


def gradient_instances(n=50):
    for s in range(n):
        r = np.random.default_rng(1000 + s)
        d, c, m = int(r.integers(2, 6)), int(r.integers(2, 4)), int(r.integers(2, 7))
        act = ("tanh", "softplus")[s % 2]
        model = nn.init_model(nn.Architecture(d, (int(r.integers(2, 7)),), c, act), s)
        x = r.normal(size=(m, d))
        y = np.eye(c)[r.integers(0, c, m)]
        yield dict(
            model=model, x=x, y=y, p=BetaParams(float(r.uniform(0.2, 3)), float(r.uniform(0.2, 3))),
            eta=float(r.uniform(0.01, 2.0)), lam=float(r.uniform(0, 1)), perm=r.permutation(m),
            mode=("approximate", "exact")[(s // 2) % 2], mean_x=x.mean(0, keepdims=True),
        )


def criterion_1():
    worst = 0.0
    count = 0
    for inst in gradient_instances():
        model, kw = inst["model"], {k: inst[k] for k in ("mode", "mean_x", "lam", "perm")}
        args = (inst["x"], inst["y"], inst["p"], inst["eta"])
        total, bd = mixupe_loss(model, *args, **kw)
        T.backward(total)
        grad = np.concatenate([q.grad.ravel() for q in model.parameters()])
        flat = model.flat_parameters()
        fd = np.empty_like(flat)
        h = 1e-6
        for i in range(flat.size):
            vals = []
            for sgn in (1, -1):
                f2 = flat.copy()
                f2[i] += sgn * h
                model.set_flat_parameters(f2)
                with T.no_grad():
                    _, b = mixupe_loss(model, *args, **kw)
                vals.append(bd.eta_hat * (b.l_mix + inst["eta"] * b.r_term))
            fd[i] = (vals[0] - vals[1]) / (2 * h)
        model.set_flat_parameters(flat)
        worst = max(worst, float(np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-12)))
        count += 1
    return count >= 50 and worst < 1e-4, f"max relative error {worst:.2e} over {count} instances (limit 1e-4)"


# 2 -------------------------------------------------------------------------


def criterion_2():
    r = np.random.default_rng(2)
    ce_err = 0.0
    bitwise_mix = bitwise_erm = True
    for s in range(100):
        f = r.normal(size=(8, 4)) * 4
        y = np.eye(4)[r.integers(0, 4, 8)]
        z = f - f.max(1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(1, keepdims=True))
        ce_err = max(ce_err, abs(loss_h(Tensor(f), y).item() + np.mean(np.sum(y * logp, 1))))

        model = nn.init_model(nn.Architecture(4, (6,), 4, "relu"), s)
        x = r.normal(size=(8, 4))
        lam, perm = float(r.uniform()), r.permutation(8)
        total, bd = mixupe_loss(model, x, y, BetaParams(1, 1), 0.0, lam=lam, perm=perm)
        mb = mix_batch(x, y, lam, perm=perm)
        bitwise_mix &= total.item() == loss_h(model(mb.x_mixed), mb.y_mixed).item() and bd.eta_hat == 1.0
        total1, _ = mixupe_loss(model, x, y, BetaParams(1, 1), 0.0, lam=1.0, perm=perm)
        bitwise_erm &= total1.item() == loss_h(model(Tensor(x)), y).item()
    ok = ce_err <= 1e-12 and bitwise_mix and bitwise_erm
    return ok, (f"max |loss_h - CE| {ce_err:.1e} (limit 1e-12); eta=0 equals Mixup bitwise: {bitwise_mix}; "
                f"lambda=1 equals ERM bitwise: {bitwise_erm}")


# 3 -------------------------------------------------------------------------


def criterion_3():
    worst_q = worst_h = 0.0
    for s in range(100):
        model, x, y = fixtures.homogeneous_relu_instance(s)
        for i in range(x.shape[0]):
            xi, yi = x[i : i + 1], y[i : i + 1]
            qe = q_exact(model, xi, yi, np.zeros_like(xi))
            qh = q_hat(model(Tensor(xi)), yi).item()
            worst_q = max(worst_q, abs(qe - qh))
            jac = jacobian_rows(model, xi, model.parameters())
            worst_h = max(worst_h, float(np.max(np.abs(jac @ xi[0] - model.predict(xi)[0]))))
    ok = worst_q < 1e-9 and worst_h < 1e-9
    return ok, f"100 instances: max |q - q_hat| {worst_q:.1e}, max |J x - f(x)| {worst_h:.1e} (limit 1e-9)"


# 4 -------------------------------------------------------------------------


def criterion_4():
    worst = 0.0
    for s in range(100):
        r = np.random.default_rng(4000 + s)
        act = ("relu", "tanh")[s % 2]
        model = nn.init_model(nn.Architecture(5, (8, 8), 3, act), s)
        x, mean = r.normal(size=(1, 5)), r.normal(size=(1, 5))
        y = np.eye(3)[s % 3]
        alpha = th.alpha_coefficients(model, x, y, mean)
        jac = jacobian_rows(model, x, model.parameters())
        worst = max(worst, abs(th.recombine_alpha(alpha, jac, mean - x) - q_exact(model, x, y, mean)))
    return worst < 1e-9, f"100 instances: max |recombined alpha - q| {worst:.1e} (limit 1e-9)"


# 5 -------------------------------------------------------------------------


def criterion_5():
    slopes = {1: [], 2: [], 3: []}
    ok = True
    for s in range(5):
        model, x, y = fixtures.tiny_net_fixture(s, d=4 + s % 3, hidden=6 + s % 3)
        for K in (1, 2, 3):
            rep = th.verify_pointwise_taylor(model, x[0], y[0], x[1], K)
            slopes[K].append(rep.slope)
            ok &= rep.slope >= K + 0.7
    detail = "; ".join(f"K={K} min slope {min(v):.2f} (need {K + 0.7:.1f})" for K, v in slopes.items())
    return ok, detail + " over 5 tanh nets"


# 6 -------------------------------------------------------------------------


def criterion_6():
    tol_rel = np.array(fixtures.DECOMPOSITION_TOLERANCES)
    shrinking = bool(np.all(np.diff(tol_rel) < 0))
    ok = shrinking
    worst = np.zeros(4)
    mc_z = 0.0
    for s in range(5):
        model, x, y = fixtures.tiny_net_fixture(s)
        rep = th.verify_mixup_decomposition(model, x, y, BetaParams(20, 1), K=4, mc_samples=100_000,
                                            rng=np.random.default_rng(s))
        rel = rep.gaps / abs(rep.lhs)
        worst = np.maximum(worst, rel / tol_rel)
        mc_z = max(mc_z, abs(rep.lhs_mc - rep.lhs) / rep.lhs_mc_se)
        ok &= bool(np.all(rel <= tol_rel)) and rep.mc_agrees and rep.quadrature_converged
    return ok, (f"Beta(20,1), 5 fixtures: worst gap/tolerance per K {np.round(worst, 2).tolist()} with "
                f"tolerances {tol_rel.tolist()} x |LHS| (shrinking: {shrinking}); "
                f"max MC deviation {mc_z:.2f} SE (limit 3)")


# 7 -------------------------------------------------------------------------


def criterion_7():
    ok = abs(expected_a_lambda(BetaParams(1, 1)) - 1 / 3) < 1e-15
    r = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        p = BetaParams(float(r.uniform(0.05, 5)), float(r.uniform(0.05, 5)))
        a = 1 - sample_mixture_lambda(p, r, 1_000_000)
        z = abs(a.mean() - expected_a_lambda(p)) / (a.std(ddof=1) / 1000.0)
        worst = max(worst, z)
    ok &= worst <= 3.0
    return ok, f"Beta(1,1) -> {expected_a_lambda(BetaParams(1, 1)):.15f}; 10 random (alpha, beta): max {worst:.2f} SE (limit 3)"


# 8 -------------------------------------------------------------------------


def criterion_8():
    cfg = H.ExperimentConfig(dataset={"name": "iris"}, method="mixup", alpha=1.0, epochs=1, batch_size=32,
                             alpha_trace_every=1, alpha_trace_probe=64)
    ds = H.load_data(cfg)
    mins = [H.alpha_trace_run(cfg, s, ds).trace[0].min_alpha for s in range(5)]
    neg = sum(m < 0 for m in mins)
    return neg >= 4, f"iris, fresh init: min alpha at iteration 0 {np.round(mins, 3).tolist()}; negative in {neg}/5 (need 4)"


# 9 -------------------------------------------------------------------------


def criterion_9():
    base = H.ExperimentConfig.from_file(H.Path(H.__file__).parent / "configs" / "loss_gap_wine.json")
    ds = H.load_data(base)
    mu = H.run_experiment(base.with_(method="mixup", eta=0.0, out_dir=None), ds)
    me = H.run_experiment(base.with_(out_dir=None), ds)
    tr = [(e.final.train_loss_total, u.final.train_loss_total) for e, u in zip(me, mu)]
    te = [(e.final.test_loss, u.final.test_loss) for e, u in zip(me, mu)]
    n_tr = sum(a > b for a, b in tr)
    n_te = sum(a < b for a, b in te)
    mean = lambda v, k: float(np.mean([p[k] for p in v]))  # noqa: E731
    ok = mean(tr, 0) > mean(tr, 1) and mean(te, 0) < mean(te, 1) and n_tr >= 4 and n_te >= 4
    return ok, (f"wine 2x128: mean final train loss MixupE {mean(tr, 0):.4f} vs Mixup {mean(tr, 1):.4f} "
                f"(higher in {n_tr}/5); mean test loss {mean(te, 0):.4f} vs {mean(te, 1):.4f} (lower in {n_te}/5)")


# 10 ------------------------------------------------------------------------


GRID_DATASETS = ("iris", "wine", "balance_scale", "breast_cancer")


def criterion_10():
    wins = ties = 0
    parts = []
    for name in GRID_DATASETS:
        base = H.ExperimentConfig(dataset={"name": name})
        ds = H.load_data(base)
        mu = H.grid_search(base.with_(method="mixup"), H.DEFAULT_ALPHA_GRID, [0.0], ds).best_cell
        me = H.grid_search(base.with_(method="mixupe"), H.DEFAULT_ALPHA_GRID, H.DEFAULT_ETA_GRID, ds).best_cell
        wins += me.mean_test_error <= mu.mean_test_error
        ties += me.mean_test_error == mu.mean_test_error
        parts.append(f"{name} {100 * me.mean_test_error:.2f} vs {100 * mu.mean_test_error:.2f}"
                     f" (eta {me.eta:g})")
    n = len(GRID_DATASETS)
    ok = wins > n / 2
    return ok, f"MixupE <= Mixup on {wins}/{n} datasets ({ties} exact ties); test error %: " + ", ".join(parts)


# 11 ------------------------------------------------------------------------


def criterion_11():
    conf = math.sqrt(math.log(20) / 200)
    cases = [
        (dict(gamma=1.0), 0.5 + 0.1 + conf),
        (dict(gamma=0.0, eta_hat=0.8), 0.8 * 0.5 + conf),
        (dict(gamma=2.0), 0.5 + 0.2 + conf),
    ]
    worst = 0.0
    for kw, expected in cases:
        b = th.BoundInputs(**{**dict(L_A=1.0, gamma=1.0, script_X=1.0, n=100, delta=0.05, B=1.0, eta=1.0,
                                     eta_hat=1.0, xi=1.0, empirical_l_mix=0.5), **kw})
        worst = max(worst, abs(th.bound_mixupe(b) - expected))
    boundary = th.bound_compare(th.BoundInputs(L_A=1, gamma=2, script_X=1, n=100, delta=0.05, B=1)).shrink_condition_holds
    zero = th.bound_compare(th.BoundInputs(L_A=1, gamma=0, script_X=1, n=100, delta=0.05, B=1))
    r = np.random.default_rng(11)
    sweep_ok = True
    for _ in range(10_000):
        la, xi, sx, b_, eh, et = r.uniform(0.01, 10, 6)
        n = int(r.integers(1, 10**6))
        g = r.uniform(0, 1) * (1 + la) * math.sqrt(xi / sx)
        kw = dict(L_A=la, xi=xi, script_X=sx, n=n, delta=float(r.uniform(0.001, 0.5)), B=b_, eta=et, eta_hat=eh)
        c = th.bound_compare(th.BoundInputs(gamma=g, **kw))
        sweep_ok &= c.shrink_condition_holds and c.mixupe_complexity <= c.vanilla_complexity * (1 + 1e-12)
        sweep_ok &= th.bound_mixupe(th.BoundInputs(gamma=g * 1.1, **kw)) >= th.bound_mixupe(th.BoundInputs(gamma=g, **kw))
        sweep_ok &= th.bound_mixupe(th.BoundInputs(gamma=g, **{**kw, "n": 4 * n})) <= th.bound_mixupe(th.BoundInputs(gamma=g, **kw))
    ok = worst < 1e-14 and boundary and zero.mixupe_complexity == 0 < zero.vanilla_complexity and sweep_ok
    return ok, (f"3 hand fixtures max error {worst:.1e}; boundary 2 <= 2 holds: {boundary}; "
                f"gamma=0 complexity {zero.mixupe_complexity:g}; 10^4-input sweep: {sweep_ok}")


# 12 ------------------------------------------------------------------------


def criterion_12():
    base = H.ExperimentConfig(dataset={"name": "wine"}, alpha=1.0, eta=1.0, epochs=10, seeds=(0, 1, 2))
    ds = H.load_data(base)
    H.train_run(base.with_(method="mixupe", epochs=1), ds, 0)  # warm caches
    per_epoch = {}
    for method in ("mixup", "mixupe"):
        times = []
        for _ in range(3):
            for s in base.seeds:
                run = H.train_run(base.with_(method=method), ds, s)
                times.extend(r.train_seconds for r in run.records)
        per_epoch[method] = statistics.median(times)
    ratio = per_epoch["mixupe"] / per_epoch["mixup"]
    return ratio <= 2.0, (f"wine 2x128, median epoch time MixupE {1e3 * per_epoch['mixupe']:.2f} ms vs Mixup "
                          f"{1e3 * per_epoch['mixup']:.2f} ms: ratio {ratio:.2f} (limit 2.0)")


CRITERIA = [
    (1, "gradient correctness", criterion_1),
    (2, "loss identities", criterion_2),
    (3, "q equals q_hat", criterion_3),
    (4, "alpha recombination", criterion_4),
    (5, "pointwise Taylor remainder", criterion_5),
    (6, "distributional decomposition", criterion_6),
    (7, "E[a_lambda] closed form", criterion_7),
    (8, "negative alpha at initialization", criterion_8),
    (9, "train/test loss ordering", criterion_9),
    (10, "grid-selected test error ordering", criterion_10),
    (11, "bound calculators", criterion_11),
    (12, "epoch time overhead", criterion_12),
]


@pytest.mark.parametrize("num, title, fn", CRITERIA, ids=[f"criterion_{n:02d}" for n, _, _ in CRITERIA])
def test_acceptance(num, title, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    report(num, title, ok, detail, t0)


if __name__ == "__main__":
    failed = 0
    for num, title, fn in CRITERIA:
        t0 = time.perf_counter()
        try:
            test_acceptance(num, title, fn)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
