"""
Comparing the benchmark policies
================================

A short horizon at a small size, so the exhaustive oracle stays cheap.
"""
from freshedge import harness as H
from freshedge.config import EnvConfig
from freshedge.policy import PolicyKind
from freshedge.sdr import RelaxationCache

cfg = EnvConfig(num_users=3, num_services=5, horizon=100)
cache = RelaxationCache()
for kind in (PolicyKind.OPTIMAL, PolicyKind.JSCR, PolicyKind.SDP_ONLY, PolicyKind.FIXED):
    res = H.run_policy(cfg, kind, seed=0, relaxations=cache)
    print(f"{kind.value:9s} cumulative utility {res.rows[-1]['cumulative_utility']:.6g}  "
          f"mean queue {res.queue.mean():.3f}  failed slots {res.failed_slots}")
