"""
Square-root allocation of bandwidth and computing
=================================================

Minimising sum(load / share) under a budget gives shares proportional to
sqrt(load).  We compare the closed form with a generic constrained solver.
"""
import numpy as np
from scipy.optimize import minimize

from freshedge.delay_alloc import sqrt_share

rng = np.random.default_rng(1)
load = rng.uniform(1, 10, 5)
budget = 40.0

closed = sqrt_share(load, budget)
res = minimize(lambda w: np.sum(load / w), np.full(5, budget / 5), method="SLSQP",
               bounds=[(1e-6, budget)] * 5, constraints=[{"type": "eq", "fun": lambda w: w.sum() - budget}],
               options={"ftol": 1e-14, "maxiter": 500})

print("closed form :", np.round(closed, 6))
print("SLSQP       :", np.round(res.x, 6))
print("objectives  :", np.sum(load / closed), res.fun)
