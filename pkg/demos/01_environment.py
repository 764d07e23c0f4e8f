"""
Stepping the edge environment
=============================

Every slot the users draw tasks, the cloud may publish new service versions,
and the edge server decides what to cache, refresh and serve locally.  Here
the edge keeps two services cached and never refreshes them, so their age of
information grows without bound and so do their virtual queues.  The
drift-plus-penalty weights exist to prevent exactly this.
"""
import numpy as np

from freshedge.config import EnvConfig
from freshedge.env import EdgeEnv, complete_decision

cfg = EnvConfig(horizon=30)
env = EdgeEnv(cfg, seed=0)
print("AoI thresholds:", np.round(env.aoi_max, 2))

z = np.zeros(cfg.num_services, int)
z[list(cfg.fixed_services)] = 1
while not env.done:
    # download only on the first slot, keep the stale copies afterwards
    y = z * (1 - env.services.cached)
    x = env.tasks.present * z[None, :]
    out = env.step(complete_decision(env.tasks, x, y, z, cfg))
    if env.t % 5 == 0:
        print(f"slot {env.t:2d}  utility {out.utility:.4g}  AoI of cached {out.aoi_es[:2]}  "
              f"queues {np.round(out.queue[:2], 2)}")
