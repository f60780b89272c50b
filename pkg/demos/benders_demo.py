"""Multi-cut, single-cut and random-K Benders on one EV instance.

All three must reach the extensive-form optimum; they differ in how many
iterations and master cuts that takes.
"""

from rlbd.benders import Aggregate, RandomK, SelectAll, run_benders
from rlbd.milp import solve_extensive_form
from rlbd.model import ev_to_standard_form, make_ev_instance

problem = ev_to_standard_form(make_ev_instance(seed=7, n_stations=2,
                                               n_sites=3, n_scenarios=8))
ef = solve_extensive_form(problem).objective
print(f"extensive form objective {ef:.6f}")
for name, sel in [("multi_cut", SelectAll()), ("single_cut", Aggregate()),
                  ("random_k", RandomK(3, seed=0))]:
    res = run_benders(problem, sel, eps_tol=1e-6, timing="proxy")
    print(f"{name:10s} obj {res.objective:.6f} iterations {res.iterations:3d}"
          f" master cuts {res.master_cuts:4d} gap {res.gap:.2e}")
