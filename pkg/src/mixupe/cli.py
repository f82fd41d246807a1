"""Command-line entry point: ``mixupe <subcommand> [--config PATH] [--seed N] [--out-dir DIR]``.

Exit codes: 0 success, 1 run or verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fixtures, harness as H, theory as th
from .mixup import BetaParams, q_exact, q_hat
from .tensor import Tensor, jacobian_rows

log = logging.getLogger("mixupe")


class RunFailed(RuntimeError):
    pass


def _read_json(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise H.ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise H.ConfigError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise H.ConfigError(f"{p}: top level must be an object")
    version = raw.pop("config_version", H.CONFIG_VERSION)
    if version != H.CONFIG_VERSION:
        raise H.ConfigError(f"{p}: unsupported config_version {version}")
    return raw


def _experiment(args) -> H.ExperimentConfig:
    if args.config is None:
        raise H.ConfigError(f"'{args.command}' needs --config")
    cfg = H.ExperimentConfig.from_file(args.config)
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    changes["out_dir"] = args.out_dir or cfg.out_dir or "runs"
    return cfg.with_(**changes)


def _out_dir(args, default: str = "runs") -> Path:
    out = Path(args.out_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> None:
    cfg = _experiment(args)
    runs = H.run_experiment(cfg)
    for r in runs:
        print(f"seed {r.seed}: best val epoch {r.best_val_epoch}, test error {r.test_error_at_best_val:.4f}, "
              f"final test loss {r.final.test_loss:.4f}")


def _grids(args, cfg_raw: dict) -> tuple[list[float], list[float]]:
    if args.reduced:
        return [0.1, 0.5, 2.0], [0.01, 0.1, 1.0]
    alphas = args.alphas or cfg_raw.get("alpha_grid") or list(H.DEFAULT_ALPHA_GRID)
    etas = args.etas or cfg_raw.get("eta_grid") or list(H.DEFAULT_ETA_GRID)
    return [float(a) for a in alphas], [float(e) for e in etas]


def _split_grid_keys(path: str) -> tuple[H.ExperimentConfig, dict]:
    raw = json.loads(Path(path).read_text(encoding="utf-8")) if Path(path).is_file() else None
    if raw is None:
        raise H.ConfigError(f"config file not found: {path}")
    grids = {k: raw.pop(k) for k in ("alpha_grid", "eta_grid") if k in raw}
    return H.ExperimentConfig.from_dict(raw, base_dir=Path(path).parent), grids


def cmd_grid(args) -> None:
    if args.config is None:
        raise H.ConfigError("'grid' needs --config")
    cfg, grids = _split_grid_keys(args.config)
    cfg = cfg.with_(out_dir=args.out_dir or cfg.out_dir or "runs", **({"seeds": (args.seed,)} if args.seed is not None else {}))
    alphas, etas = _grids(args, grids)
    if cfg.method == "mixup":
        etas = [0.0]
    res = H.grid_search(cfg, alphas, etas)
    c = res.best_cell
    print(f"selected alpha={c.alpha} eta={c.eta}: val accuracy {c.mean_val_accuracy:.4f}, "
          f"test error {c.mean_test_error:.4f} +- {c.std_test_error:.4f}")


def cmd_ablate(args) -> None:
    if args.config is None:
        raise H.ConfigError("'ablate' needs --config")
    cfg, grids = _split_grid_keys(args.config)
    cfg = cfg.with_(out_dir=args.out_dir or cfg.out_dir or "runs", **({"seeds": (args.seed,)} if args.seed is not None else {}))
    alphas, etas = _grids(args, grids)
    for row in H.ablation_suite(cfg, alphas, etas):
        print(f"{row['arm']:<32} alpha={row['alpha']:<6} eta={row['eta']:<7} "
              f"test error {row['mean_test_error']:.4f} +- {row['std_test_error']:.4f}")


def cmd_verify_taylor(args) -> None:
    raw = _read_json(args.config)
    seed = args.seed if args.seed is not None else int(raw.get("fixture_seed", 0))
    k_max = int(raw.get("max_order", 3))
    p = BetaParams(float(raw.get("alpha", 20.0)), float(raw.get("beta", 1.0)))
    out = _out_dir(args)
    model, x, y = fixtures.tiny_net_fixture(seed)
    ok = True
    for K in range(1, k_max + 1):
        rep = th.verify_pointwise_taylor(model, x[0], y[0], x[1], K)
        rep.to_csv(out / f"taylor_K{K}.csv")
        ok &= rep.passed
        print(f"pointwise K={K}: remainder slope {rep.slope:.3f} (need >= {rep.required_slope:.2f}) "
              f"{'pass' if rep.passed else 'FAIL'}")
    dec = th.verify_mixup_decomposition(model, x, y, p, K=4, mc_samples=int(raw.get("mc_samples", 100_000)),
                                        rng=np.random.default_rng(seed))
    tol = np.array(fixtures.DECOMPOSITION_TOLERANCES) * abs(dec.lhs)
    within = bool(np.all(dec.gaps <= tol))
    summary = dec.summary() | {"tolerances": tol.tolist(), "within_tolerances": within}
    (out / "decomposition.json").write_text(json.dumps(summary, indent=2) + "\n")
    for k, (g, t) in enumerate(zip(dec.gaps, tol), start=1):
        print(f"decomposition K={k}: |LHS-RHS| {g:.3e} (tolerance {t:.1e})")
    print(f"quadrature vs Monte-Carlo: {dec.lhs:.8f} vs {dec.lhs_mc:.8f} +- {dec.lhs_mc_se:.2e}")
    ok &= within and dec.mc_agrees and dec.quadrature_converged
    if not ok:
        raise RunFailed("Taylor verification failed")


def cmd_verify_approx(args) -> None:
    raw = _read_json(args.config)
    n = int(raw.get("instances", 100))
    first = args.seed if args.seed is not None else int(raw.get("seed", 0))
    out = _out_dir(args)
    worst_q = worst_h = 0.0
    lines = ["seed,q_exact,q_hat,abs_diff,homogeneity_residual"]
    for s in range(first, first + n):
        model, x, y = fixtures.homogeneous_relu_instance(s)
        xi, yi = x[:1], y[:1]
        qe = q_exact(model, xi, yi, np.zeros_like(xi))
        qh = float(q_hat(model(Tensor(xi)), yi))
        hom = float(np.max(np.abs(jacobian_rows(model, xi, model.parameters()) @ xi[0] - model.predict(xi)[0])))
        worst_q, worst_h = max(worst_q, abs(qe - qh)), max(worst_h, hom)
        lines.append(f"{s},{qe!r},{qh!r},{abs(qe - qh)!r},{hom!r}")
    (out / "approx.csv").write_text("\n".join(lines) + "\n")
    print(f"{n} instances: max |q - q_hat| = {worst_q:.3e}, max |J x - f(x)| = {worst_h:.3e}")
    if worst_q >= 1e-9 or worst_h >= 1e-9:
        raise RunFailed("q / q_hat equivalence violated")


def cmd_track_alpha(args) -> None:
    cfg = _experiment(args)
    if cfg.alpha_trace_every < 1:
        cfg = cfg.with_(alpha_trace_every=1)
    ds = H.load_data(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        tracker = H.alpha_trace_run(cfg, seed, ds)
        tracker.to_csv(out / f"{cfg.label}_seed{seed}_alpha.csv")
        t0 = tracker.trace[0]
        print(f"seed {seed}: {len(tracker.trace)} checkpoints, min alpha at iteration 0 = {t0.min_alpha:.4f}")


def cmd_bounds(args) -> None:
    if args.config is None:
        raise H.ConfigError("'bounds' needs --config")
    raw = _read_json(args.config)
    try:
        b = th.BoundInputs(**raw)
    except (TypeError, ValueError) as exc:
        raise H.ConfigError(f"{args.config}: {exc}") from None
    print(th.format_bound_table(b))


COMMANDS = {
    "train": cmd_train,
    "grid": cmd_grid,
    "ablate": cmd_ablate,
    "verify-taylor": cmd_verify_taylor,
    "verify-approx": cmd_verify_approx,
    "track-alpha": cmd_track_alpha,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixupe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="run a single seed")
        sp.add_argument("--out-dir", help="output directory (default: runs)")
        if name in ("grid", "ablate"):
            sp.add_argument("--alphas", type=float, nargs="+")
            sp.add_argument("--etas", type=float, nargs="+")
            sp.add_argument("--reduced", action="store_true", help="3x3 grid instead of the full one")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except H.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RunFailed, H.TrainingAborted) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
