"""One exploration loop per bonus on the nuisance-coupled system.

The settings are scaled down so the script finishes in seconds; the
benchmark (``qoed bench --config configs/bench.ini``) uses the full ones.

    python demos/single_exploration.py [seed]
"""
import sys

import numpy as np

from qoed.design import ExplorationConfig, HiddenSystem, run_exploration
from qoed.estimation import CemConfig, prior_belief
from qoed.models import NuisanceCoupled

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
model = NuisanceCoupled()
phi = np.random.default_rng(seed).uniform(model.lower, model.upper)
system = HiddenSystem(model, phi, np.zeros(model.d_s))
cfg = ExplorationConfig(max_rounds=4, n_mc=16, design_samples=32, design_iterations=3)
cem = CemConfig(samples_per_iter=512)

print("true phi:", np.round(phi, 3))
for kind in ("boed", "agnostic", "qoed"):
    rep = run_exploration(system, model, kind, cfg, cem, seed, prior_belief(model))
    print(f"\n{kind}: {len(rep.rounds)} round(s), terminated={rep.terminated}")
    for r in rep.rounds:
        print(f"  trace={r['belief_trace']:.4f}  dyn_rmse_x100={r['rmse_x100']:.3f}  "
              f"bonus={r['bonus']:.3g}")
    print("  phi_hat:", np.round(rep.phi_hat, 3))
