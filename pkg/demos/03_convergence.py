# Convergence rates
# =================
#
# Two small refinement studies. In space the time step is fine enough for
# the P2 error to dominate; in time the mesh is fine enough for the dG
# error to dominate. The full-size versions live in the acceptance suite.

#%%
from dgnse import builtin_case
from dgnse.study import best_approx_ratios, eoc, refinement_study

case = builtin_case("taylor-vortex-box")

spatial = refinement_study(case, 1, [(4, 32), (8, 32), (16, 32)])
for norm in ("err_LinfL2", "err_L2L2", "err_L2H1"):
    print("h-EOC", norm, [round(r, 2) for r in eoc(spatial, "h", norm)])

#%%
# dG(0) is first order in time.

temporal = refinement_study(case, 0, [(24, 4), (24, 8), (24, 16)])
print("k-EOC dG(0) L2(L2):", [round(r, 2) for r in eoc(temporal, "k", "err_L2L2")])

#%%
# Best-approximation ratios: the error divided by projection errors of the
# exact solution. Roughly constant ratios mean the discrete solution is as
# good as the best element of the discrete space, up to a fixed factor.

joint = refinement_study(case, 1, [(4, 4), (8, 8), (16, 16)], with_rhs=True)
for rec in joint:
    ratios = best_approx_ratios(rec, case.T)
    print(f"h={rec.h:.3f}", {k: round(v, 3) for k, v in ratios.items()})
