"""Epsilon-greedy learning curve on the synthetic two-arm environment.

Runs a handful of seeded trajectories and prints the time-averaged regret
at a grid of rounds: the per-round gap between the best arm's mean and the
pulled arm's mean shrinks as the index directions and links are learned.
"""

import numpy as np

from ksib.harness import Scenario, run_trajectory

scenario = Scenario(d=2, sigma=0.10, seed=11)
grid = (50, 100, 200, 400, 700, 1000)

paths = []
for rep in range(5):
    log, means, ledger, env = run_trajectory(scenario, rep)
    paths.append([ledger.average(t) for t in grid])
    pulls = np.bincount(log.arm, minlength=2)
    print(f"rep {rep}: final avg regret {ledger.average():.4f}, "
          f"pulls per arm {pulls.tolist()}, "
          f"exploration rounds {(log.arm != log.greedy).sum()}")

mean_path = np.mean(paths, axis=0)
print(f"\n{'t':>5}  mean R_t/t")
for t, v in zip(grid, mean_path):
    bar = "#" * int(round(v * 400))
    print(f"{t:5d}  {v:.4f}  {bar}")
