"""Lagrangian 1D compressible Navier-Stokes with temperature-degenerate heat conduction.

The simulator advances ``(v, u, theta)`` in mass coordinates; the functionals
evaluate the entropy energy, dissipation and the a-priori norms along a run
and check the bounds they must satisfy.
"""
from .core import (
    ConfigurationError,
    DomainError,
    DomainKind,
    GasParams,
    MassGrid,
    State,
    internal_energy,
    pressure,
    transport_coefficients,
    validate_state,
)
from .functionals import (
    EstimateReport,
    dissipation,
    entropy_energy,
    jensen_roots,
    level_set_measures,
    norm_suite,
    representation_residual,
    slab_check,
)
from .runner import RunConfig, RunHistory, parse_config, render_config, run, truncation_study, write_outputs
from .scenarios import InitialDataSpec, convergence_study, make_initial_data, manufactured_case
from .stepper import (
    SimulationAbort,
    StepControls,
    StepOutcome,
    advance,
    apply_boundary,
    continuity_update,
    momentum_solve,
    temperature_solve,
    tridiagonal_solve,
)

__version__ = "0.1.0"
