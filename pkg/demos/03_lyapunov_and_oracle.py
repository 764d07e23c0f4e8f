"""
Per-slot drift-plus-penalty problem
===================================

The virtual queues turn the long-term AoI constraint into per-slot weights H.
Each service falls into one of three download cases, which fixes its cache
gain G.  The exhaustive oracle then solves the slot problem exactly.
"""
import numpy as np

from freshedge import lyapunov as L
from freshedge.instances import random_subproblem
from freshedge.policy import oracle_solve_p2

sub = random_subproblem(np.random.default_rng(3), num_users=4, num_services=5)
names = {L.FRESH_NEEDED: "fresh download", L.REFRESH_WORTHWHILE: "refresh", L.KEEP_STALE: "keep stale"}
for j in range(sub.num_services):
    print(f"service {j}: H={sub.H[j]:7.2f}  case={names[sub.case[j]]:14s}  G={sub.G[j]:.4g}")

best = oracle_solve_p2(sub)
print("cache   :", best.cache)
print("offload :", best.offload.sum(axis=1))
print("value   :", best.value, "reward", L.reward(sub, best.offload, best.cache))
