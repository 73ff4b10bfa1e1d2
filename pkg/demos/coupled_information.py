"""Why the trace of the critical block overstates what a design teaches.

Two parameters share one measurement direction. The critical parameter's
diagonal entry looks large, but almost all of it can be explained away by the
nuisance parameter. Only the Schur complement reflects what is left after
the nuisance is marginalised out.

    python demos/coupled_information.py
"""
import numpy as np

from qoed.models import counterexample_family
from qoed.objectives import agnostic_objective, analyze_fim, qoed_objective, quasiopt_constants


def show(name, F, k):
    print(f"{name}: F =\n{np.array2string(F, precision=3)}")
    print(f"  on k={k}: tr F_kk={agnostic_objective(F, k):.3f}  "
          f"Schur trace={qoed_objective(F, k, eps=1e-12):.3f}")
    bd = analyze_fim(F)
    print(f"  automatic selection k={bd.k}: boed={bd.boed:.3f}  qoed={bd.qoed:.3f}")


# one shared direction, then the same direction plus a little private signal
u = np.array([1.0, 0.99])
show("shared", 10.0 * np.outer(u, u), [0])
show("shared + private", 10.0 * np.outer(u, u) + np.diag([0.5, 0.0]), [0])

c = quasiopt_constants(10.0 * np.outer(u, u) + np.diag([0.5, 0.0]), [0])
print(f"constants: eta={c.eta:.3f} beta={c.beta:.3f} rho={c.rho:.3f}")

# with parameter 0 critical, the full trace prefers B although A is the
# design that says more about parameter 0
print("\ntwo-design family, parameter 0 critical:")
for name, F in counterexample_family().items():
    print(f"  design {name}: boed={analyze_fim(F).boed:.1f}  "
          f"F_00={agnostic_objective(F.matrix, [0]):.1f}")
