"""LP duals and a small knapsack MILP with the in-house solvers."""

import numpy as np

from rlbd.lp import LinearProgram, solve_lp
from rlbd.milp import MixedIntegerProgram, solve_mip

# min -3x - 2y  s.t.  x + y <= 4,  x + 3y <= 6,  x, y >= 0
lp = LinearProgram(c=np.array([-3.0, -2.0]),
                   A=np.array([[1.0, 1.0], [1.0, 3.0]]),
                   senses=np.array(["<=", "<="]), rhs=np.array([4.0, 6.0]))
sol = solve_lp(lp)
print("LP   status", sol.status.name, "x", sol.primal, "obj", sol.objective)
print("     duals (<= rows are nonpositive)", sol.duals)

# knapsack: max 5a + 4b + 3c  s.t.  2a + 3b + c <= 5, binary
knap = LinearProgram(c=-np.array([5.0, 4.0, 3.0]),
                     A=np.array([[2.0, 3.0, 1.0]]), senses=np.array(["<="]),
                     rhs=np.array([5.0]), lower=np.zeros(3), upper=np.ones(3))
mip = solve_mip(MixedIntegerProgram(knap, np.arange(3)))
print("MILP status", mip.status.name, "x", mip.primal, "obj", mip.objective,
      "nodes", mip.nodes_explored)
