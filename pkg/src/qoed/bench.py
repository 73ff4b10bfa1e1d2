"""Seeded comparisons of the three bonuses and the threshold sweep.

Every (method, seed[, cell]) run is a pure function of the configuration:
seed ``s`` draws the hidden parameters and the held-out probes from stream
``[s, 0]`` and drives the learner from stream ``[s, 1]``, so all methods of a
seed face the same system and share random numbers.  Runs are farmed out to
worker processes (``QOED_THREADS`` caps the count) and always emitted sorted.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .config import ExperimentConfig
from .design import (ExplorationReport, HiddenSystem, make_eval_set, run_exploration)
from .estimation import prior_belief
from .objectives import Thresholds, selection_classes

__all__ = [
    "CSV_COLUMNS",
    "SWEEP_COLUMNS",
    "BenchRow",
    "ComparisonTable",
    "worker_count",
    "hidden_setup",
    "run_one",
    "run_bench",
    "run_sweep",
    "sweep_csv",
    "sweep_summary",
]

CSV_COLUMNS = ("method", "seed", "round", "param_rmse_x100", "dyn_rmse_x100",
               "bonus", "eta", "beta", "rho")
SWEEP_COLUMNS = ("delta_eig", "alpha_eig", "delta_cos", "method", "dyn_rmse_x100")

# seed-averaged improvements of the quasi-optimal bonus on the robot benchmarks,
# printed as context only
REFERENCE_IMPROVEMENT_PCT = {"agnostic": 21.98, "boed": 35.23}


def worker_count(n_tasks: int) -> int:
    raw = os.environ.get("QOED_THREADS", "").strip()
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


def hidden_setup(cfg: ExperimentConfig, seed: int):
    """Model, hidden system and held-out probes of one seed."""
    model = cfg.make_model()
    rng = np.random.default_rng([seed, 0])
    phi = rng.uniform(model.lower, model.upper)
    ex = cfg.exploration
    eval_set = make_eval_set(model, ex.eval_episodes, ex.steps, rng)
    return model, HiddenSystem(model, phi, np.zeros(model.d_s)), eval_set


def run_one(cfg: ExperimentConfig, method: str, seed: int,
            thresholds: Thresholds | None = None, observer=None) -> ExplorationReport:
    model, system, eval_set = hidden_setup(cfg, seed)
    return run_exploration(system, model, method, cfg.exploration, cfg.cem,
                           np.random.default_rng([seed, 1]),
                           prior_belief(model, cfg.prior_width),
                           cfg.thresholds if thresholds is None else thresholds,
                           eval_set, observer)


def _task(args):
    cfg, method, seed, thresholds = args
    return run_one(cfg, method, seed, thresholds)


def _map(tasks, fn=_task):
    n = worker_count(len(tasks))
    if n == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n))))


@dataclass(frozen=True)
class BenchRow:
    method: str
    seed: int
    round: int
    param_rmse_x100: float
    dyn_rmse_x100: float
    bonus: float
    eta: float | None
    beta: float | None
    rho: float | None

    @classmethod
    def from_report(cls, seed: int, rep: ExplorationReport) -> "BenchRow":
        last = rep.rounds[-1]
        return cls(rep.kind, seed, len(rep.rounds), rep.param_rmse_x100, rep.dyn_rmse_x100,
                   last["bonus"], last["eta"], last["beta"], last["rho"])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _mean_std(xs) -> dict:
    xs = np.asarray(xs, dtype=float)
    return {"mean": float(xs.mean()), "std": float(xs.std())}


@dataclass
class ComparisonTable:
    """Per-run rows sorted by (method, seed) plus seed aggregates."""

    rows: list

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.method, r.seed))

    @property
    def methods(self) -> list:
        return sorted({r.method for r in self.rows})

    def column(self, method: str, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows if r.method == method])

    def summary(self) -> dict:
        out = {}
        for m in self.methods:
            out[m] = {
                "n": int(sum(r.method == m for r in self.rows)),
                "param_rmse_x100": _mean_std(self.column(m, "param_rmse_x100")),
                "dyn_rmse_x100": _mean_std(self.column(m, "dyn_rmse_x100")),
            }
        return out

    def improvement_pct(self, base: str = "qoed") -> dict:
        """Relative reduction of mean dyn RMSE of ``base`` over each other method."""
        s = self.summary()
        if base not in s:
            return {}
        ref = s[base]["dyn_rmse_x100"]["mean"]
        return {m: 100.0 * (v["dyn_rmse_x100"]["mean"] - ref) / v["dyn_rmse_x100"]["mean"]
                for m, v in s.items() if m != base and v["dyn_rmse_x100"]["mean"] > 0}

    def normalized(self) -> dict:
        """Min-max normalization of the mean dyn RMSE over the compared methods."""
        means = {m: v["dyn_rmse_x100"]["mean"] for m, v in self.summary().items()}
        lo, hi = min(means.values()), max(means.values())
        span = hi - lo
        return {m: (0.0 if span == 0 else (v - lo) / span) for m, v in means.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self, config: ExperimentConfig | None = None) -> dict:
        d = {
            "columns": list(CSV_COLUMNS),
            "rows": [asdict(r) for r in self.rows],
            "summary": self.summary(),
            "improvement_pct": self.improvement_pct(),
            "reference_improvement_pct": dict(REFERENCE_IMPROVEMENT_PCT),
            "normalized_dyn_rmse": self.normalized(),
        }
        if config is not None:
            d["config"] = _jsonable(config.to_dict())
        return d

    def to_json(self, config: ExperimentConfig | None = None) -> str:
        return json.dumps(self.to_dict(config), indent=2, sort_keys=True,
                          allow_nan=False) + "\n"

    def format_text(self) -> str:
        lines = [f"{'method':<10} {'n':>3}  {'param RMSE x100':>20}  {'dyn RMSE x100':>20}"]
        for m, v in self.summary().items():
            p, d = v["param_rmse_x100"], v["dyn_rmse_x100"]
            lines.append(f"{m:<10} {v['n']:>3}  {p['mean']:>9.3f} +- {p['std']:<7.3f}"
                         f"  {d['mean']:>9.3f} +- {d['std']:<7.3f}")
        for m, pct in sorted(self.improvement_pct().items()):
            ref = REFERENCE_IMPROVEMENT_PCT.get(m)
            ctx = f" (reference: {ref:.2f}%)" if ref is not None else ""
            lines.append(f"qoed vs {m}: {pct:+.2f}% dyn RMSE reduction{ctx}")
        return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def run_bench(cfg: ExperimentConfig) -> ComparisonTable:
    tasks = [(cfg, m, s, None) for m in cfg.methods for s in cfg.seeds]
    reports = _map(tasks)
    return ComparisonTable([BenchRow.from_report(t[2], r) for t, r in zip(tasks, reports)])


class _Diverged(Exception):
    def __init__(self, labels):
        super().__init__("threshold settings diverged")
        self.labels = labels


def _sweep_task(args):
    """Final dyn RMSE of one (method, seed) for every threshold setting.

    All settings start in one group, simulated once with its first member
    while every design FIM is checked with :func:`selection_classes`.  When
    the members stop agreeing the group splits and each part is re-run from
    the start.  A group that finishes unsplit saw identical selections and
    bonuses throughout, so its result is exact for every member.
    """
    cfg, method, seed, ths = args
    out = [None] * len(ths)
    stack = [list(range(len(ths)))]
    runs = 0
    while stack:
        group = stack.pop()
        members = [ths[i] for i in group]

        def observer(fims):
            if len(members) > 1:
                for F in fims:
                    labels = selection_classes(F, members)
                    if labels.max() > 0:
                        raise _Diverged(labels)

        runs += 1
        try:
            rep = run_one(cfg, method, seed, members[0], observer)
        except _Diverged as exc:
            for c in range(exc.labels.max(), -1, -1):
                stack.append([g for g, lab in zip(group, exc.labels) if lab == c])
            continue
        for i in group:
            out[i] = rep.dyn_rmse_x100
    return out, runs


def run_sweep(cfg: ExperimentConfig, stats: dict | None = None) -> list:
    """Seed-averaged dyn RMSE for every grid cell and sweep method.

    Returns dicts with keys :data:`SWEEP_COLUMNS`, sorted by cell then method.
    Cells that behave identically for a (method, seed) share one simulation;
    ``stats``, if given, receives the number of simulations per method.
    """
    grid = cfg.sweep
    seeds = grid.seeds or cfg.seeds
    base = cfg.thresholds
    ths = [replace(base, delta_eig=d, alpha_eig=a, delta_cos=c) for d, a, c in grid.cells()]
    tasks = [(cfg, m, s, ths) for m in grid.methods for s in seeds]
    results = _map(tasks, _sweep_task)
    rows = []
    for m in grid.methods:
        per_seed = [r for (_, mm, _, _), (r, _) in zip(tasks, results) if mm == m]
        if stats is not None:
            stats[m] = sum(n for (_, mm, _, _), (_, n) in zip(tasks, results) if mm == m)
        for i, th in enumerate(ths):
            v = float(np.mean([r[i] for r in per_seed]))
            rows.append(dict(zip(SWEEP_COLUMNS,
                                 (th.delta_eig, th.alpha_eig, th.delta_cos, m, v))))
    return sorted(rows, key=lambda r: (r["delta_eig"], r["alpha_eig"], r["delta_cos"], r["method"]))


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def sweep_summary(rows) -> dict:
    """Mean and standard deviation of the per-cell dyn RMSE, per method."""
    by = {}
    for r in rows:
        by.setdefault(r["method"], []).append(r["dyn_rmse_x100"])
    return {m: {"cells": len(v), **_mean_std(v)} for m, v in sorted(by.items())}
