# The discrete dual problem and two Gronwall lemmas
# =================================================
#
# The dual problem runs backwards in time, linearized at the average of
# the exact and the discrete velocity. Its solution stays bounded in terms
# of the data, uniformly in k and h.

#%%
from dgnse import builtin_case
from dgnse.study import dual_stability_study

case = builtin_case("taylor-vortex-box")
for row in dual_stability_study(case, 1, [(4, 4), (8, 8), (16, 16)]):
    print(f"n={row['n']:3d}  stability ratio {row['stability_ratio']:.4f}  A_h ratio {row['h2_ratio']:.4f}")

#%%
# Gronwall bounds are checked against an oracle sequence that satisfies
# each hypothesis with equality. The comparison runs on logarithms, since
# the bounds overflow for long sequences.

import numpy as np

from dgnse.gronwall import GronwallInstance, gronwall_bound, oracle_recursion, soundness_suite

inst = GronwallInstance(gamma=np.full(10, 0.5), c=np.ones(10), B=1.0, k=np.full(10, 0.1))
print("oracle", np.round(oracle_recursion(inst).lhs, 4))
print("bound ", round(gronwall_bound(inst), 4))

for kind in ("lemma", "quadlinear"):
    print(soundness_suite(2000, seed=42, kind=kind))
