"""Grid convergence against manufactured solutions."""
# %%
from lagns import convergence_study, manufactured_case
from lagns.scenarios import CATALOGUE

print("catalogue:", sorted(CATALOGUE))

# %% [markdown]
# Each case forces the equations so that a decaying sine profile is the exact
# solution.  Refining h with dt = h/4 should show errors falling like dt + h^2,
# so the observed slopes sit between 1 and 2.

# %%
for case_id in ("sine-beta0.5", "sine-beta1", "sine-beta2"):
    report = convergence_study(manufactured_case(case_id), [20, 40, 80, 160])
    print(f"--- {case_id}")
    print(report.summary())

# %% [markdown]
# The constant state is reproduced to the last bit.

# %%
print(convergence_study(manufactured_case("constant"), [20, 40, 80]).summary())

# %%
case = manufactured_case("sine-beta1")
for name, term in case.theta_source_terms([0.25], 0.0).items():
    print(f"{name:>10}: {term[0]: .6f}")
