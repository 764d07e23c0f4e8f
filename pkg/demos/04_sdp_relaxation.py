"""
Semidefinite relaxation and sampling
====================================

The slot problem is written as a QCQP in u = [z, x, f, Dbar, 1], lifted to
U = u u^T and relaxed by dropping rank one.  The relaxation bounds the oracle
from below; its corner entries give cache probabilities that we sample.
"""
import numpy as np

from freshedge import sdr
from freshedge.instances import random_subproblem
from freshedge.policy import oracle_solve_p2

rng = np.random.default_rng(5)
sub = random_subproblem(rng, num_users=3, num_services=4)
rel = sdr.solve_relaxation(sub)
print("relaxation bound :", rel.objective)
print("oracle value     :", oracle_solve_p2(sub).value)
c = rel.certificate
print(f"duality gap {c.duality_gap:.1e}, primal infeasibility {c.primal_infeasibility:.1e}, "
      f"min eigenvalue {c.min_eigenvalue:.1e}")

z_prob, _ = sdr.extract_relaxed_decisions(rel.U, sub.num_users)
print("cache probabilities:", np.round(z_prob, 3))
groups = sdr.sample_and_repair(z_prob, 8, rng, sub.sizes, sub.storage, sub.case)
print("sampled cache groups:\n", groups.cache)
