"""REINFORCE on the three-armed bandit, then a short EV training run.

Afterwards the greedy policy is compared with multi-cut on fresh instances
by the number of cuts left in the master at a 1% gap.
"""

import numpy as np

from rlbd.benders import SelectAll, run_benders
from rlbd.model import ev_to_standard_form, make_ev_instance
from rlbd.policy import PolicyGreedy, forward, softmax
from rlbd.reinforce import BanditEnv, BendersEnv, RewardConfig, TrainConfig, train

env = BanditEnv(seed=0)
res = train(env, TrainConfig(k=1, episodes=500), RewardConfig(gamma=1.0))
print("bandit arm probabilities", np.round(softmax(forward(res.params, env.states)), 3))

problem = ev_to_standard_form(make_ev_instance(0, 4, 6, 20))
rcfg = RewardConfig(timing="proxy")
tcfg = TrainConfig(k=5, episodes=30, seed=0)
res = train(BendersEnv(problem, rcfg, tcfg), tcfg, rcfg,
            progress=lambda r: print(f"episode {r['episode']:3d} reward "
                                     f"{r['total_reward']:.4f} steps {r['steps']}"))
greedy = PolicyGreedy(res.params, 5, t_max=tcfg.t_max)
for seed in (1, 2, 3):
    p = ev_to_standard_form(make_ev_instance(seed, 4, 6, 20))
    m = run_benders(p, SelectAll(), eps_tol=0.01, timing="proxy")
    g = run_benders(p, greedy, eps_tol=0.01, timing="proxy")
    print(f"instance {seed}: master cuts multi_cut {m.master_cuts}, "
          f"greedy {g.master_cuts}")
