"""Slab averages, level sets, norm integrals and the volume representation on a whole-line run."""
# %%
import numpy as np

from lagns import GasParams, InitialDataSpec, StepControls, representation_residual, run, slab_check
from lagns.functionals import level_set_bound, level_set_measures
from lagns.runner import RunConfig

init = InitialDataSpec("compact_perturbation", a_v=0.3, a_u=0.3, a_theta=-0.4, core_radius=1.5)
dt = 1e-4
cfg = RunConfig("cauchy", 4.0, 160, 0.5, GasParams(beta=1.0),
                StepControls(dt_init=dt, dt_max=dt, dt_min=1e-12, safety=0.9), init,
                snapshot_every=1e-3)
history = run(cfg)
state = history.final_state

# %% [markdown]
# Unit slabs: the averages of v and theta over [N, N+1] must lie between the
# two roots of x - log x - 1 = e0.

# %%
a1, a2 = history.roots
slabs = slab_check(state, a1, a2)
print(f"roots ({a1:.4f}, {a2:.4f})")
for left, iv, it in zip(slabs.left, slabs.int_v, slabs.int_theta):
    print(f"[{left:+d}, {left + 1:+d}]  int v = {iv:.5f}  int theta = {it:.5f}")
print("violations:", slabs.violation_count)

# %%
lt, gt = level_set_measures(state)
print(f"|theta < 1/2| + |theta > 2| = {lt + gt:.3f} <= {level_set_bound(history.e0):.3f}")

# %% [markdown]
# The volume can be rebuilt from the velocity history and the effective
# viscous flux at the slab's left end.  The defect measures time and space
# discretization error only.

# %%
for n in (-2, -1, 0, 1):
    print(f"slab {n:+d}: representation defect {representation_residual(history, n, t=0.5):.2e}")

# %%
for key, value in sorted(history.integrals.items()):
    print(f"{key:>20} {value:.6f}")
print("v range over the run:", history.extrema["min_v"], history.extrema["max_v"])
print("theta range over the run:", history.extrema["min_theta"], history.extrema["max_theta"])
