"""``qoed`` command line: bonus, bench, verify and sweep.

Exit codes: 0 success, 1 verification failure, 2 configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from .config import ExperimentConfig, load_config
from .design import breakdown_constants
from .errors import QoedError
from .objectives import KINDS, analyze_fim
from .fisher import estimate_fim

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common(p):
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--seed", type=int, help="run a single seed")
    p.add_argument("--seeds", type=int, metavar="N", help="run seeds 0..N-1")
    p.add_argument("--method", choices=KINDS, help="restrict to one bonus")
    p.add_argument("--out", help="output directory")
    p.add_argument("--delta-eig", type=float)
    p.add_argument("--alpha-eig", type=float)
    p.add_argument("--delta-cos", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qoed", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("bonus", help="information bonus of scores or a trajectory")
    _common(p)
    p.add_argument("input", help=".npy/.csv score matrix (N x m) or .npz with "
                                 "'scores' or 'states' + 'actions' [+ 'phi']")
    p = sub.add_parser("bench", help="compare bonuses over seeds (CSV + JSON)")
    _common(p)
    p = sub.add_parser("verify", help="run the identity / bound / invariant checks")
    _common(p)
    p.add_argument("--only", nargs="*", metavar="ID", help="check ids to run")
    p = sub.add_parser("sweep", help="threshold robustness grid (CSV)")
    _common(p)
    return ap


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, seeds=args.seeds, method=args.method,
                              out=args.out, delta_eig=args.delta_eig,
                              alpha_eig=args.alpha_eig, delta_cos=args.delta_cos,
                              eps=args.eps, max_rounds=args.max_rounds)


def _write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def load_scores(path: str, cfg: ExperimentConfig) -> np.ndarray:
    """Score samples from a file; trajectories yield one score per transition."""
    try:
        if path.endswith(".npz"):
            with np.load(path) as z:
                if "scores" in z:
                    return np.asarray(z["scores"], dtype=float)
                if "states" not in z or "actions" not in z:
                    raise QoedError("bad-input", f"{path}: need 'scores' or 'states'+'actions'")
                model = cfg.make_model()
                states = np.asarray(z["states"], dtype=float).reshape(-1, model.d_s)
                actions = np.asarray(z["actions"], dtype=float).reshape(-1, model.d_a)
                phi = (np.asarray(z["phi"], dtype=float) if "phi" in z
                       else 0.5 * (model.lower + model.upper))
            if len(states) != len(actions) + 1:
                raise QoedError("bad-input", "states must have one more row than actions")
            return model.step_score(states[:-1], actions, phi, states[1:])
        if path.endswith(".csv"):
            return np.loadtxt(path, delimiter=",", ndmin=2)
        return np.load(path)
    except OSError as exc:
        raise QoedError("bad-input", f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise QoedError("bad-input", f"{path}: {exc}") from None


def cmd_bonus(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _config(args)
    kind = args.method or "qoed"
    F = estimate_fim(load_scores(args.input, cfg))
    bd = analyze_fim(F, cfg.thresholds)
    eta, beta, rho = breakdown_constants(bd)
    doc = {
        "kind": kind,
        "bonus": bd.value(kind),
        "k": [int(i) for i in bd.k],
        "o": [int(i) for i in bd.split.observable_idx],
        "eigenvalues": [float(x) for x in bd.eigenvalues],
        "threshold": float(bd.split.threshold_used),
        "boed": bd.boed,
        "agnostic": bd.agnostic,
        "qoed": bd.qoed,
        "eta": eta,
        "beta": beta,
        "rho": rho,
        "samples": int(F.sample_count),
    }
    print(json.dumps(doc, indent=2), file=out)
    return EXIT_OK


def cmd_bench(args, out=None) -> int:
    out = out or sys.stdout
    from .bench import run_bench
    cfg = _config(args)
    t0 = time.perf_counter()
    table = run_bench(cfg)
    _write(os.path.join(cfg.out_dir, "bench.csv"), table.to_csv())
    _write(os.path.join(cfg.out_dir, "bench.json"), table.to_json(cfg))
    print(table.format_text(), file=out)
    print(f"wall-clock {time.perf_counter() - t0:.1f} s; wrote {cfg.out_dir}/bench.csv, "
          f"{cfg.out_dir}/bench.json", file=out)
    return EXIT_OK


def cmd_verify(args, out=None) -> int:
    out = out or sys.stdout
    from .verify import report_dict, run_checks
    cfg = _config(args)
    seed = cfg.seeds[0] if args.seed is not None else 0
    results = run_checks(seed=seed, only=set(args.only) if args.only else None)
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        extra = f"  ({r.detail})" if r.detail else ""
        print(f"{tag}  {r.id:<3} {r.module:<16} measured={r.measured:.3g} "
              f"tol={r.tolerance:.3g}  {r.description}{extra}", file=out)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed", file=out)
    if args.out:
        _write(os.path.join(cfg.out_dir, "verify.json"),
               json.dumps(report_dict(results), indent=2, allow_nan=False,
                          default=float) + "\n")
    return EXIT_FAIL if n_fail else EXIT_OK


def cmd_sweep(args, out=None) -> int:
    out = out or sys.stdout
    from .bench import run_sweep, sweep_csv, sweep_summary
    cfg = _config(args)
    t0 = time.perf_counter()
    rows = run_sweep(cfg)
    _write(os.path.join(cfg.out_dir, "sweep.csv"), sweep_csv(rows))
    for m, s in sweep_summary(rows).items():
        print(f"{m:<10} cells={s['cells']:<5} dyn RMSE x100 {s['mean']:.3f} +- {s['std']:.3f}",
              file=out)
    print(f"wall-clock {time.perf_counter() - t0:.1f} s; wrote {cfg.out_dir}/sweep.csv", file=out)
    return EXIT_OK


COMMANDS = {"bonus": cmd_bonus, "bench": cmd_bench, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except QoedError as exc:
        print(f"qoed: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
