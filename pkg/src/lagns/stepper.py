"""One time step of the Lagrangian system, split momentum -> continuity -> temperature.

Momentum uses explicit pressure and implicit viscosity. Continuity is exact on
the staggered grid. Temperature is solved by Picard iteration on the
conductivity with the compression work implicit and viscous heating explicit.
All implicit solves are written for the increment over the old level, so a
state with vanishing fluxes is reproduced bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dgtsv

from .core import (
    ConfigurationError,
    DomainError,
    DomainKind,
    GasParams,
    State,
    transport_coefficients,
    validate_state,
)


class SingularSystemError(ArithmeticError):
    def __init__(self, row: int):
        super().__init__(f"zero pivot in tridiagonal system at row {row}")
        self.row = row


class StepRejected(Exception):
    """Raised by a sub-solve when the trial step must be retried with a smaller dt."""

    def __init__(self, stage: str, reason: str):
        super().__init__(f"{stage}: {reason}")
        self.stage = stage
        self.reason = reason


class SimulationAbort(RuntimeError):
    """Time step fell below ``dt_min``; carries the last valid state."""

    def __init__(self, state: State, stage: str, reason: str, dt: float):
        super().__init__(
            f"time step underflow at t={state.t:.6g} (dt={dt:.3g}); "
            f"last failing sub-solve: {stage} ({reason})"
        )
        self.state = state
        self.stage = stage
        self.reason = reason
        self.dt = dt


@dataclass(frozen=True)
class StepControls:
    dt_init: float = 1e-3
    dt_min: float = 1e-9
    dt_max: float = 1e-2
    safety: float = 0.5
    picard_tol: float = 1e-10
    picard_max: int = 50
    growth_factor: float = 1.2
    growth_after: int = 5

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ConfigurationError(
                f"need 0 < dt_min <= dt_init <= dt_max, got "
                f"{self.dt_min}, {self.dt_init}, {self.dt_max}"
            )
        if not (0 < self.safety < 1):
            raise ConfigurationError(f"safety must lie in (0, 1), got {self.safety}")
        if not self.picard_tol > 0:
            raise ConfigurationError(f"picard_tol must be positive, got {self.picard_tol}")
        if int(self.picard_max) != self.picard_max or self.picard_max < 1:
            raise ConfigurationError(f"picard_max must be an integer >= 1, got {self.picard_max}")
        if not (1 <= self.growth_factor <= 1.2):
            raise ConfigurationError(f"growth_factor must lie in [1, 1.2], got {self.growth_factor}")
        if int(self.growth_after) != self.growth_after or self.growth_after < 1:
            raise ConfigurationError(f"growth_after must be an integer >= 1, got {self.growth_after}")


@dataclass(frozen=True)
class StepOutcome:
    state: State
    dt_used: float
    picard_iters: int
    rejections: int
    dt_next: float
    streak: int


def tridiagonal_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` for tridiagonal ``A``.

    ``lower[i]`` multiplies ``x[i]`` in row ``i + 1`` and ``upper[i]``
    multiplies ``x[i + 1]`` in row ``i``.
    """
    diag = np.asarray(diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[0]
    if n < 1:
        raise ValueError("empty system")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != (n - 1,) or upper.shape != (n - 1,) or rhs.shape != (n,):
        raise ValueError(
            f"inconsistent sizes: diag {n}, lower {lower.shape}, upper {upper.shape}, rhs {rhs.shape}"
        )
    if n == 1:
        if diag[0] == 0:
            raise SingularSystemError(0)
        return rhs / diag
    *_, x, info = dgtsv(lower, diag, upper, rhs)
    if info > 0:
        raise SingularSystemError(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} passed to dgtsv")
    return x


# -- boundary handling -------------------------------------------------------

# ghost temperature is affine in the first interior cell: theta_g = a + b*theta_0
_LEFT_THETA_GHOST = {
    DomainKind.CAUCHY: (1.0, 0.0),
    DomainKind.HALFLINE_NEUMANN: (0.0, 1.0),
    DomainKind.HALFLINE_DIRICHLET: (2.0, -1.0),
}


def ghost_values(state: State, domain_kind=None):
    """Return ``((v_left, theta_left), (v_right, theta_right))`` ghost cell values."""
    kind = DomainKind.parse(domain_kind or state.grid.domain_kind)
    a, b = _LEFT_THETA_GHOST[kind]
    if kind is DomainKind.CAUCHY:
        left = (1.0, 1.0)
    else:
        left = (float(state.v[0]), a + b * float(state.theta[0]))
    return left, (1.0, 1.0)


def apply_boundary(state: State, domain_kind=None) -> State:
    """Impose the edge velocities; temperature and volume ghosts are implicit in the solvers.

    All three configurations pin ``u = 0`` at both computational ends.
    """
    kind = DomainKind.parse(domain_kind or state.grid.domain_kind)
    if kind is not state.grid.domain_kind:
        raise ConfigurationError(f"state grid is {state.grid.domain_kind.value}, not {kind.value}")
    if state.u[0] == 0 and state.u[-1] == 0:
        return state
    u = state.u.copy()
    u[0] = 0.0
    u[-1] = 0.0
    return state.replace(u=u)


def stable_dt(state: State, params: GasParams, safety: float) -> float:
    """Heuristic limit for the explicit pressure coupling."""
    h = state.grid.h
    ux = np.diff(state.u) / h
    speed = np.abs(ux) + np.sqrt(params.R * state.theta / state.v)
    return safety * h / float(np.max(speed))


# -- sub-solves --------------------------------------------------------------

def _cell_viscosity(theta, params):
    if params.gamma == 0:
        return np.full_like(theta, params.mu_bar)
    return params.mu_bar * theta**params.gamma


def momentum_solve(state: State, dt: float, params: GasParams, source=None) -> np.ndarray:
    """Edge velocities after one step with explicit pressure and implicit viscous flux."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    h = state.grid.h
    v, u, theta = state.v, state.u, state.theta
    p = params.R * theta / v
    a = _cell_viscosity(theta, params) / (v * h)  # mu / (v h) per cell
    ux = np.diff(u)
    flux = a * ux - p  # effective viscous flux per cell, old level
    rhs = dt * np.diff(flux) / h
    if source is not None:
        x_int = state.grid.edges[1:-1]
        rhs = rhs + dt * source(x_int, state.t + dt)
    c = dt / h
    diag = 1.0 + c * (a[1:] + a[:-1])
    off = -c * a[1:-1]
    try:
        delta = tridiagonal_solve(off, diag, off, rhs)
    except SingularSystemError as exc:
        raise StepRejected("momentum", str(exc)) from exc
    if not np.all(np.isfinite(delta)):
        raise StepRejected("momentum", "non-finite velocity")
    u_new = u.copy()
    u_new[1:-1] = u[1:-1] + delta
    u_new[0] = 0.0
    u_new[-1] = 0.0
    return u_new


def continuity_update(state: State, u_new, dt: float, source=None) -> np.ndarray:
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    u_new = np.asarray(u_new, dtype=float)
    rate = np.diff(u_new) / state.grid.h
    if source is not None:
        rate = rate + source(state.grid.centers, state.t + dt)
    v_new = state.v + dt * rate
    bad = ~(v_new > 0)
    if np.any(bad):
        raise StepRejected("continuity", f"non-positive volume at cells {np.flatnonzero(bad)[:8].tolist()}")
    return v_new


def face_conductance(theta, v_new, kind, params):
    """kappa/v at every face (N+1 values), arithmetic mean of adjacent cells."""
    _, kappa = transport_coefficients(theta, params)
    g = kappa / v_new
    if kind is DomainKind.CAUCHY:
        g_left = params.kappa_bar
    elif kind is DomainKind.HALFLINE_NEUMANN:
        g_left = g[0]
    else:
        # face value theta = 1 replaces the reflected ghost, which may be non-positive
        g_left = params.kappa_bar / v_new[0]
    g_right = params.kappa_bar
    faces = np.empty(theta.size + 1)
    faces[1:-1] = 0.5 * (g[1:] + g[:-1])
    faces[0] = 0.5 * (g_left + g[0])
    faces[-1] = 0.5 * (g[-1] + g_right)
    return faces


def _diffusion(theta, K, kind, h):
    """Discrete (K theta_x)_x per cell using ghost cells."""
    a, b = _LEFT_THETA_GHOST[kind]
    ext = np.empty(theta.size + 2)
    ext[1:-1] = theta
    ext[0] = a + b * theta[0]
    ext[-1] = 1.0
    flux = K * np.diff(ext) / h
    return np.diff(flux) / h


def temperature_solve(
    state: State,
    v_new,
    u_new,
    dt: float,
    params: GasParams,
    controls: StepControls,
    source=None,
):
    """Return ``(theta_new, picard_iterations)``."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    grid = state.grid
    kind = grid.domain_kind
    h = grid.h
    theta0 = state.theta
    v_new = np.asarray(v_new, dtype=float)
    ux = np.diff(np.asarray(u_new, dtype=float)) / h
    mu = _cell_viscosity(theta0, params)

    work = params.R * ux / v_new
    explicit = mu * ux * ux / v_new - work * theta0
    if source is not None:
        explicit = explicit + source(grid.centers, state.t + dt)

    _, b_left = _LEFT_THETA_GHOST[kind]
    c = dt / (h * h)
    n = theta0.size
    theta_k = theta0
    linear = params.beta == 0
    for it in range(1, controls.picard_max + 1):
        K = face_conductance(theta_k, v_new, kind, params)
        rhs = dt * (explicit + _diffusion(theta0, K, kind, h))
        diag = params.c_v + dt * work + c * (K[1:] + K[:-1])
        diag[0] -= c * K[0] * b_left
        off = -c * K[1:-1]
        try:
            delta = tridiagonal_solve(off, diag, off, rhs)
        except SingularSystemError as exc:
            raise StepRejected("temperature", str(exc)) from exc
        theta_next = theta0 + delta
        if not np.all(np.isfinite(theta_next)):
            raise StepRejected("temperature", "non-finite temperature")
        bad = theta_next <= 0
        if np.any(bad):
            raise StepRejected(
                "temperature", f"non-positive temperature at cells {np.flatnonzero(bad)[:8].tolist()}"
            )
        change = float(np.max(np.abs(theta_next - theta_k))) if n else 0.0
        theta_k = theta_next
        if linear or change < controls.picard_tol:
            return theta_k, it
    raise StepRejected("temperature", f"Picard iteration did not converge in {controls.picard_max} passes")


def _trial_step(state, dt, params, controls, sources):
    su = sv = st = None
    if sources is not None:
        sv, su, st = sources.source_v, sources.source_u, sources.source_theta
    u_new = momentum_solve(state, dt, params, su)
    v_new = continuity_update(state, u_new, dt, sv)
    theta_new, iters = temperature_solve(state, v_new, u_new, dt, params, controls, st)
    new = State(state.t + dt, v_new, u_new, theta_new, state.grid)
    new = apply_boundary(new)
    check = validate_state(new)
    if not check.ok:
        raise StepRejected("validation", str(check))
    return new, iters


def advance(
    state: State,
    controls: StepControls,
    params: GasParams,
    dt: float | None = None,
    streak: int = 0,
    t_stop: float | None = None,
    sources=None,
) -> StepOutcome:
    """Advance one accepted step, halving the trial step on every rejection.

    ``dt`` is the requested step (``controls.dt_init`` when omitted); it is
    capped by ``dt_max`` and the pressure-coupling estimate, and clipped so
    that ``t + dt`` does not pass ``t_stop``. ``streak`` counts consecutive
    unrejected steps and drives step growth.
    """
    dt_req = controls.dt_init if dt is None else dt
    dt_base = min(dt_req, controls.dt_max, stable_dt(state, params, controls.safety))
    dt_base = max(dt_base, controls.dt_min)
    dt_try = dt_base
    clipped = False
    if t_stop is not None and state.t + dt_try >= t_stop:
        dt_try = t_stop - state.t
        clipped = True
        if not dt_try > 0:
            raise DomainError(f"t_stop={t_stop} does not lie ahead of t={state.t}")

    rejections = 0
    while True:
        try:
            new, iters = _trial_step(state, dt_try, params, controls, sources)
            break
        except StepRejected as exc:
            rejections += 1
            dt_try *= 0.5
            clipped = False
            if dt_try < controls.dt_min:
                raise SimulationAbort(state, exc.stage, exc.reason, dt_try) from exc
    if clipped:
        # land exactly on the stop time
        new = new.replace(t=t_stop)

    if rejections:
        streak, dt_next = 0, dt_try
    else:
        streak += 1
        dt_next = dt_base
        if streak >= controls.growth_after:
            dt_next = min(dt_base * controls.growth_factor, controls.dt_max)
            streak = 0
    return StepOutcome(new, dt_try, iters, rejections, dt_next, streak)
