"""
Sweeping the drift-plus-penalty weight
======================================

Larger V puts more weight on utility and less on the AoI queues, so the
queues grow slightly while utility creeps up.  The utility level is dominated
by the byte-scaled storage term, so the change is printed against V=0.1.
"""
import tempfile

from freshedge import harness as H
from freshedge.config import EnvConfig

spec = H.ExperimentSpec(EnvConfig(horizon=300), ["optimal"], tempfile.mkdtemp(),
                        sweep_axis="V", sweep_values=(0.1, 1.0, 10.0), replications=2)
_, rows = H.run_experiment(spec)
agg = H.aggregate(rows)
for r in agg:
    print(f"V={r['sweep_value']:>4}  utility {r['avg_utility']:.6g} ({r['avg_utility'] - agg[0]['avg_utility']:+.3g})  "
          f"queue {r['avg_queue']:.4f}  AoI ok {r['aoi_satisfied']}")
