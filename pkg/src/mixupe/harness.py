"""Config-driven training runs, hyperparameter grids and the four-arm ablation."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import data as D
from . import nn
from . import tensor as T
from .mixup import BetaParams, loss_h, mixupe_loss
from .theory import AlphaTracker, row_losses

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
METHODS = ("erm", "mixup", "mixupe", "erm_plus_reg")
MIXING = ("mixup", "mixupe")
METRIC_COLUMNS = (
    "epoch",
    "train_loss_total",
    "train_l_mix",
    "train_R",
    "eta_hat_mean",
    "train_error",
    "val_error",
    "test_error",
)
DEFAULT_ALPHA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0)
DEFAULT_ETA_GRID = (0.0001, 0.001, 0.01, 0.1, 1.0)


class ConfigError(ValueError):
    pass


class TrainingAborted(RuntimeError):
    def __init__(self, diagnostic: dict):
        super().__init__(f"non-finite loss, run aborted: {diagnostic}")
        self.diagnostic = diagnostic


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"name": "iris"})
    method: str = "mixupe"
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "relu"
    homogeneous: bool = False
    alpha: float = 1.0
    beta: float | None = None
    eta: float = 0.1
    head: str = "softmax"
    mode: str = "approximate"
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "learning_rate": 0.001})
    epochs: int = 25
    batch_size: int = 100
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    split_seed: int = 0
    stratified: bool = True
    standardize: bool = True
    mixing: str = "permute"
    fixed_lambda: float | None = None
    alpha_trace_every: int = 0
    alpha_trace_probe: int = 64
    name: str = "run"
    out_dir: str | None = None
    base_dir: str = "."
    config_version: int = CONFIG_VERSION

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        self.validate()

    def validate(self) -> None:
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config_version {self.config_version}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method in MIXING and self.batch_size < 2:
            raise ConfigError("mixing methods need batch_size >= 2")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.alpha <= 0 or (self.beta is not None and self.beta <= 0):
            raise ConfigError("Beta parameters must be positive")
        if self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        if self.mode not in ("approximate", "exact"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mixing not in ("permute", "two_stream"):
            raise ConfigError(f"unknown mixing {self.mixing!r}")
        if self.fixed_lambda is not None and not 0 <= self.fixed_lambda <= 1:
            raise ConfigError("fixed_lambda must lie in [0, 1]")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if "name" not in self.dataset and not {"csv", "spec"} <= set(self.dataset):
            raise ConfigError("dataset needs either 'name' or both 'csv' and 'spec'")

    @property
    def beta_params(self) -> BetaParams:
        return BetaParams(self.alpha, self.alpha if self.beta is None else self.beta)

    @property
    def label(self) -> str:
        return f"{self.name}_{self.method}"

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        raw = dict(raw)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw.setdefault("base_dir", str(base_dir))
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw, base_dir=path.parent)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(copy.deepcopy(self), **changes)


def load_data(cfg: ExperimentConfig) -> D.Dataset:
    ds = cfg.dataset
    try:
        if "name" in ds:
            csv_path, spec_path = D.bundled(ds["name"])
        else:
            base = Path(cfg.base_dir)
            csv_path, spec_path = base / ds["csv"], base / ds["spec"]
            for p in (csv_path, spec_path):
                if not p.is_file():
                    raise ConfigError(f"dataset file not found: {p}")
        return D.load_dataset(csv_path, spec_path, cfg.split_fractions, cfg.split_seed, cfg.stratified, cfg.standardize)
    except D.DataError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class EpochRecord:
    epoch: int
    train_loss_total: float
    train_l_mix: float
    train_R: float
    eta_hat_mean: float
    train_error: float
    val_error: float
    test_error: float
    train_loss: float = math.nan
    val_loss: float = math.nan
    test_loss: float = math.nan
    train_seconds: float = 0.0

    def csv_row(self) -> list[str]:
        return [str(self.epoch)] + [repr(float(getattr(self, c))) for c in METRIC_COLUMNS[1:]]


@dataclass
class RunMetrics:
    seed: int
    method: str
    records: list[EpochRecord]
    best_val_epoch: int
    test_error_at_best_val: float
    val_error_at_best_val: float
    wall_time: float

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    def summary(self) -> dict:
        f = self.final
        return {
            "seed": self.seed,
            "method": self.method,
            "best_val_epoch": self.best_val_epoch,
            "val_error_at_best_val": self.val_error_at_best_val,
            "test_error_at_best_val": self.test_error_at_best_val,
            "final_train_loss_total": f.train_loss_total,
            "final_train_l_mix": f.train_l_mix,
            "final_train_loss": f.train_loss,
            "final_val_loss": f.val_loss,
            "final_test_loss": f.test_loss,
            "final_test_error": f.test_error,
            "wall_time": self.wall_time,
        }


def _error_and_loss(model, x: np.ndarray, y: np.ndarray, head: str) -> tuple[float, float]:
    if x.shape[0] == 0:
        return math.nan, math.nan
    logits = model.predict(x)
    if head == "softmax":
        wrong = logits.argmax(axis=1) != y.argmax(axis=1)
    else:
        wrong = (logits[:, 0] > 0) != (y[:, 0] > 0.5)
    return float(wrong.mean()), float(row_losses(logits, y, head).mean())


def _labels_for_head(y: np.ndarray, head: str) -> np.ndarray:
    # sigmoid head: binary task, keep the indicator of the second class
    if head == "sigmoid":
        if y.shape[1] != 2:
            raise ConfigError("sigmoid head needs a binary label column")
        return y[:, 1:2]
    return y


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    out = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:
        out.pop()
    return out


def train_run(
    cfg: ExperimentConfig,
    ds: D.Dataset,
    seed: int,
    callback: Callable[[int, nn.MlpModel], None] | None = None,
) -> RunMetrics:
    """Train one seed; evaluate on train/val/test after each epoch."""
    head = cfg.head
    xtr, ytr = ds.train
    ytr = _labels_for_head(ytr, head)
    parts = {k: (ds.part(k)[0], _labels_for_head(ds.part(k)[1], head)) for k in D.SPLITS}
    out_dim = 1 if head == "sigmoid" else ds.n_classes
    model = nn.init_model(nn.Architecture(ds.dim, cfg.hidden, out_dim, cfg.activation, cfg.homogeneous), seed)
    params = model.parameters()
    opt = nn.make_optimizer(cfg.optimizer)
    p = cfg.beta_params
    mean_x = ds.train_mean()
    mix_rng = np.random.default_rng([seed, 1])
    records = []
    iteration = 0
    t_start = time.perf_counter()
    if callback is not None:
        callback(0, model)
    for epoch in range(1, cfg.epochs + 1):
        shuffle_rng = np.random.default_rng([seed, 2, epoch])
        batches = _batches(len(xtr), cfg.batch_size, shuffle_rng)
        partners = _batches(len(xtr), cfg.batch_size, shuffle_rng) if cfg.mixing == "two_stream" else None
        sums = np.zeros(4)
        t0 = time.perf_counter()
        for b, idx in enumerate(batches):
            xb, yb = xtr[idx], ytr[idx]
            lam = cfg.fixed_lambda
            try:
                if cfg.method == "erm":
                    loss = loss_h(model(T.Tensor(xb)), yb, head)
                    v = loss.item()
                    stats = (v, v, 0.0, 1.0)
                else:
                    partner = None
                    if partners is not None and cfg.method in MIXING:
                        pidx = partners[b % len(partners)]
                        if len(pidx) != len(idx):
                            pidx = partners[0][: len(idx)]
                        partner = (xtr[pidx], ytr[pidx])
                    eta = 0.0 if cfg.method == "mixup" else cfg.eta
                    loss, bd = mixupe_loss(
                        model, xb, yb, p, eta, head, cfg.mode, mean_x, mix_rng,
                        lam=lam, partner=partner, mix=cfg.method in MIXING,
                    )
                    stats = (bd.total, bd.l_mix, bd.r_term, bd.eta_hat)
                if not np.all(np.isfinite(stats)):
                    raise T.NonFiniteError("loss")
            except T.NonFiniteError as exc:
                raise TrainingAborted({"seed": seed, "epoch": epoch, "batch": b, "lambda": lam,
                                       "eta_hat": None, "op": exc.op}) from exc
            T.backward(loss)
            nn.step(opt, params)
            iteration += 1
            sums += stats
            if callback is not None:
                callback(iteration, model)
        train_seconds = time.perf_counter() - t0
        means = sums / len(batches)
        errs = {k: _error_and_loss(model, *parts[k], head) for k in D.SPLITS}
        records.append(EpochRecord(
            epoch, *map(float, means),
            errs["train"][0], errs["val"][0], errs["test"][0],
            errs["train"][1], errs["val"][1], errs["test"][1],
            train_seconds,
        ))
    val = np.array([r.val_error for r in records])
    best = int(np.nanargmin(val)) if np.isfinite(val).any() else len(records) - 1
    return RunMetrics(seed, cfg.method, records, records[best].epoch, records[best].test_error,
                      records[best].val_error, time.perf_counter() - t_start)


def write_metrics(run: RunMetrics, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in run.records:
            w.writerow(r.csv_row())
    side = path.with_name(path.stem + "_summary.json")
    side.write_text(json.dumps(run.summary(), indent=2) + "\n")


def run_experiment(
    cfg: ExperimentConfig,
    ds: D.Dataset | None = None,
    callback_factory: Callable[[int], Callable] | None = None,
) -> list[RunMetrics]:
    """Train every seed of ``cfg``; write metrics files when ``out_dir`` is set."""
    ds = load_data(cfg) if ds is None else ds
    runs = []
    for seed in cfg.seeds:
        cb = callback_factory(seed) if callback_factory else None
        try:
            run = train_run(cfg, ds, seed, cb)
        except TrainingAborted as exc:
            if cfg.out_dir:
                out = Path(cfg.out_dir) / f"{cfg.label}_seed{seed}_aborted.json"
                out.parent.mkdir(parents=True, exist_ok=True)
                out.write_text(json.dumps(exc.diagnostic, indent=2) + "\n")
            raise
        if cfg.out_dir:
            write_metrics(run, Path(cfg.out_dir) / f"{cfg.label}_seed{seed}.csv")
        runs.append(run)
    return runs


# ---------------------------------------------------------------------------
# grid search and ablation
# ---------------------------------------------------------------------------


@dataclass
class GridCell:
    alpha: float
    eta: float
    mean_val_accuracy: float
    mean_test_error: float
    std_test_error: float
    status: str = "ok"
    runs: list[RunMetrics] = field(default_factory=list, repr=False)


@dataclass
class GridResult:
    best: ExperimentConfig
    best_cell: GridCell
    table: list[GridCell]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha", "eta", "mean_val_accuracy", "mean_test_error", "std_test_error", "status", "selected"])
            for c in self.table:
                w.writerow([c.alpha, c.eta, repr(c.mean_val_accuracy), repr(c.mean_test_error),
                            repr(c.std_test_error), c.status, int(c is self.best_cell)])


def select_cell(cells: Sequence[GridCell]) -> GridCell:
    """Highest mean validation accuracy; ties go to smaller eta, then smaller alpha."""
    ok = [c for c in cells if c.status == "ok"]
    if not ok:
        raise RuntimeError("every grid cell failed")
    return min(ok, key=lambda c: (-c.mean_val_accuracy, c.eta, c.alpha))


def _summarize(alpha: float, eta: float, runs: list[RunMetrics]) -> GridCell:
    val_acc = [1.0 - r.val_error_at_best_val for r in runs]
    test = [r.test_error_at_best_val for r in runs]
    return GridCell(alpha, eta, float(np.mean(val_acc)), float(np.mean(test)), float(np.std(test)), "ok", runs)


def grid_search(
    cfg: ExperimentConfig,
    alpha_grid: Sequence[float],
    eta_grid: Sequence[float],
    ds: D.Dataset | None = None,
) -> GridResult:
    """Train every (alpha, eta) cell over all seeds and pick by validation accuracy."""
    if not alpha_grid or not eta_grid:
        raise ConfigError("grids must be nonempty")
    ds = load_data(cfg) if ds is None else ds
    cells = []
    for alpha in alpha_grid:
        for eta in eta_grid:
            cell_cfg = cfg.with_(alpha=float(alpha), eta=float(eta), out_dir=None)
            try:
                runs = run_experiment(cell_cfg, ds)
            except (TrainingAborted, T.TensorError) as exc:
                log.warning("grid cell alpha=%s eta=%s failed: %s", alpha, eta, exc)
                cells.append(GridCell(float(alpha), float(eta), math.nan, math.nan, math.nan, f"failed: {exc}"))
                continue
            cells.append(_summarize(float(alpha), float(eta), runs))
    best = select_cell(cells)
    result = GridResult(cfg.with_(alpha=best.alpha, eta=best.eta), best, cells)
    if cfg.out_dir:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        result.to_csv(Path(cfg.out_dir) / f"{cfg.label}_grid.csv")
    return result


ARMS = (
    ("erm", "ERM"),
    ("mixup", "Mixup"),
    ("erm_plus_reg", "ERM+additional loss"),
    ("mixupe", "Mixup+additional loss (MixupE)"),
)


def arm_grids(method: str, alpha_grid, eta_grid) -> tuple[list[float], list[float]]:
    if method == "erm":
        return [1.0], [0.0]
    if method == "mixup":
        return list(alpha_grid), [0.0]
    return list(alpha_grid), list(eta_grid)


def ablation_suite(
    cfg: ExperimentConfig,
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    eta_grid: Sequence[float] = DEFAULT_ETA_GRID,
    ds: D.Dataset | None = None,
) -> list[dict]:
    """ERM / Mixup / ERM+regularizer / MixupE with shared seeds, each at its
    grid-selected hyperparameters."""
    ds = load_data(cfg) if ds is None else ds
    rows = []
    for method, label in ARMS:
        a_grid, e_grid = arm_grids(method, alpha_grid, eta_grid)
        res = grid_search(cfg.with_(method=method, out_dir=None), a_grid, e_grid, ds)
        c = res.best_cell
        rows.append({
            "arm": label, "method": method, "alpha": c.alpha, "eta": c.eta,
            "mean_test_error": c.mean_test_error, "std_test_error": c.std_test_error,
            "mean_val_accuracy": c.mean_val_accuracy, "seeds": " ".join(map(str, cfg.seeds)),
        })
    if cfg.out_dir:
        out = Path(cfg.out_dir) / f"{cfg.name}_ablation.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return rows


def alpha_trace_run(cfg: ExperimentConfig, seed: int, ds: D.Dataset | None = None) -> AlphaTracker:
    """Train one seed with a min-alpha tracker on a fixed probe subset."""
    ds = load_data(cfg) if ds is None else ds
    xtr, ytr = ds.train
    probe = np.random.default_rng([seed, 3]).permutation(len(xtr))[: cfg.alpha_trace_probe]
    tracker = AlphaTracker(xtr[probe], _labels_for_head(ytr[probe], cfg.head), ds.train_mean(),
                           max(cfg.alpha_trace_every, 1), cfg.head)
    train_run(cfg, ds, seed, tracker)
    return tracker
