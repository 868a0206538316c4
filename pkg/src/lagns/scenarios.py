"""Admissible initial data, manufactured solutions and grid-convergence studies."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigurationError, DomainError, DomainKind, GasParams, MassGrid, State, validate_state
from .functionals import entropy_energy
from .stepper import SimulationAbort, StepControls, advance


class Family(str, enum.Enum):
    CONSTANT = "constant"
    GAUSSIAN_BUMP = "gaussian_bump"
    COMPACT_PERTURBATION = "compact_perturbation"


def smooth_cutoff(s):
    """C-infinity function equal to 1 for ``s <= 1/2`` and 0 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)

    def phi(z):
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = np.exp(-1.0 / z[pos])
        return out

    a = phi(1.0 - s)
    b = phi(s - 0.5)
    return a / (a + b)


def _bump(family, x, center, width, radius):
    s = np.abs(x - center) / radius
    if family is Family.GAUSSIAN_BUMP:
        return np.exp(-0.5 * ((x - center) / width) ** 2) * smooth_cutoff(s)
    if family is Family.COMPACT_PERTURBATION:
        out = np.zeros_like(s)
        inside = s < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out
    return np.zeros_like(s)


@dataclass(frozen=True)
class InitialDataSpec:
    """Perturbation of the far-field state ``(1, 0, 1)`` supported in ``|x - center| < core_radius``.

    A negative amplitude produces a dip; magnitudes must stay below 1.
    ``center=None`` puts the bump at 0 on the whole line and at ``L/2`` on the half-line.
    """

    family: Family = Family.CONSTANT
    a_v: float = 0.0
    a_u: float = 0.0
    a_theta: float = 0.0
    width: float = 0.5
    core_radius: float = 2.0
    center: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        for name in ("a_v", "a_theta"):
            value = getattr(self, name)
            if not abs(value) < 1:
                raise DomainError(f"amplitude {name}={value} would make the initial {name[2:]} non-positive")
        if not (math.isfinite(self.a_u)):
            raise DomainError(f"a_u must be finite, got {self.a_u}")
        if not self.width > 0:
            raise DomainError(f"width must be positive, got {self.width}")
        if not self.core_radius > 0:
            raise DomainError(f"core_radius must be positive, got {self.core_radius}")


def make_initial_data(spec: InitialDataSpec, grid: MassGrid, config=None):
    """Sample the initial state on ``grid`` and return ``(state, e0)``."""
    kind = DomainKind.parse(config or grid.domain_kind)
    if kind is not grid.domain_kind:
        raise ConfigurationError(f"grid is {grid.domain_kind.value}, requested {kind.value}")
    if spec.family is Family.CONSTANT:
        state = State.constant(grid)
        return state, entropy_energy(state)
    center = spec.center
    if center is None:
        center = 0.0 if kind is DomainKind.CAUCHY else 0.5 * grid.L
    lo, hi = center - spec.core_radius, center + spec.core_radius
    # u0(0) = 0, theta0(0) = 1 and theta0_x(0) = 0 hold because the core avoids the boundary
    if lo <= grid.x_left or hi >= grid.x_right:
        raise ConfigurationError(
            f"core [{lo}, {hi}] must lie strictly inside the domain [{grid.x_left}, {grid.x_right}]"
        )
    bc = _bump(spec.family, grid.centers, center, spec.width, spec.core_radius)
    be = _bump(spec.family, grid.edges, center, spec.width, spec.core_radius)
    v = 1.0 + spec.a_v * bc
    theta = 1.0 + spec.a_theta * bc
    u = spec.a_u * be
    u[0] = u[-1] = 0.0
    state = State(0.0, v, u, theta, grid)
    check = validate_state(state)
    if not check.ok:
        raise DomainError(f"initial data not admissible: {check}")
    return state, entropy_energy(state)


# -- manufactured solutions ----------------------------------------------------

@dataclass(frozen=True)
class ManufacturedCase:
    """Decaying sine-type targets on ``[-L, L]`` with whole-line truncation.

    With ``A = exp(-rate t)``, ``q = sin(pi x / L)**2`` and ``s = sin(pi x / L)``::

        v* = 1 + a_v A q,   u* = a_u A s,   theta* = 1 + a_theta A q

    ``q`` and its derivative vanish at ``x = +-L``, so the far-field ghost
    values are consistent to second order.  The sources are what remains
    after substituting the targets into

        v_t - u_x
        u_t + P_x - (mu u_x / v)_x
        c_v theta_t + R theta u_x / v - (kappa theta_x / v)_x - mu u_x^2 / v
    """

    name: str
    params: GasParams
    a_v: float = 0.2
    a_u: float = 0.2
    a_theta: float = 0.3
    rate: float = 1.0
    L: float = 1.0

    def _k(self):
        return math.pi / self.L

    def _parts(self, x, t):
        k = self._k()
        x = np.asarray(x, dtype=float)
        A = math.exp(-self.rate * t)
        sn, cs = np.sin(k * x), np.cos(k * x)
        q, qx, qxx = sn * sn, k * np.sin(2 * k * x), 2 * k * k * np.cos(2 * k * x)
        s, sx, sxx = sn, k * cs, -k * k * sn
        v = 1 + self.a_v * A * q
        u = self.a_u * A * s
        th = 1 + self.a_theta * A * q
        return dict(
            v=v, v_t=-self.rate * self.a_v * A * q, v_x=self.a_v * A * qx,
            u=u, u_t=-self.rate * u, u_x=self.a_u * A * sx, u_xx=self.a_u * A * sxx,
            th=th, th_t=-self.rate * self.a_theta * A * q, th_x=self.a_theta * A * qx,
            th_xx=self.a_theta * A * qxx,
        )

    def v(self, x, t):
        return self._parts(x, t)["v"]

    def u(self, x, t):
        return self._parts(x, t)["u"]

    def theta(self, x, t):
        return self._parts(x, t)["th"]

    def source_v(self, x, t):
        f = self._parts(x, t)
        return f["v_t"] - f["u_x"]

    def source_u(self, x, t):
        f = self._parts(x, t)
        p = self.params
        v, th = f["v"], f["th"]
        mu = p.mu_bar * th**p.gamma
        mu_x = p.mu_bar * p.gamma * th ** (p.gamma - 1) * f["th_x"] if p.gamma else 0.0
        P_x = p.R * (f["th_x"] / v - th * f["v_x"] / v**2)
        visc_x = mu_x * f["u_x"] / v + mu * f["u_xx"] / v - mu * f["u_x"] * f["v_x"] / v**2
        return f["u_t"] + P_x - visc_x

    def source_theta(self, x, t):
        return sum(self.theta_source_terms(x, t).values())

    def theta_source_terms(self, x, t):
        """The temperature source split into storage, work, conduction and heating terms."""
        f = self._parts(x, t)
        p = self.params
        v, th = f["v"], f["th"]
        mu = p.mu_bar * th**p.gamma
        kappa = p.kappa_bar * th**p.beta
        kappa_x = p.kappa_bar * p.beta * th ** (p.beta - 1) * f["th_x"]
        cond = (kappa_x * f["th_x"] + kappa * f["th_xx"]) / v - kappa * f["th_x"] * f["v_x"] / v**2
        return {
            "storage": p.c_v * f["th_t"],
            "work": p.R * th * f["u_x"] / v,
            "conduction": -cond,
            "heating": -mu * f["u_x"] ** 2 / v,
        }

    def grid(self, n_cells: int) -> MassGrid:
        return MassGrid(DomainKind.CAUCHY, self.L, n_cells)

    def initial_state(self, grid: MassGrid) -> State:
        return self.exact_state(grid, 0.0)

    def exact_state(self, grid: MassGrid, t: float) -> State:
        u = self.u(grid.edges, t)
        u[0] = u[-1] = 0.0
        return State(t, self.v(grid.centers, t), u, self.theta(grid.centers, t), grid)


class CatalogueError(KeyError):
    pass


def _catalogue():
    cases = {"constant": ManufacturedCase("constant", GasParams(beta=1.0), 0.0, 0.0, 0.0)}
    for beta in (0.5, 1.0, 2.0):
        name = f"sine-beta{beta:g}"
        cases[name] = ManufacturedCase(name, GasParams(beta=beta))
    return cases


CATALOGUE = _catalogue()


def manufactured_case(case_id: str) -> ManufacturedCase:
    try:
        return CATALOGUE[case_id]
    except KeyError:
        raise CatalogueError(f"unknown manufactured case {case_id!r}; known: {sorted(CATALOGUE)}") from None


class StudyError(RuntimeError):
    def __init__(self, n_cells, cause):
        super().__init__(f"run with n_cells={n_cells} aborted: {cause}")
        self.n_cells = n_cells


@dataclass
class OrderReport:
    h: np.ndarray
    errors: dict
    slopes: dict
    exact: bool = False
    steps: list = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"{'h':>12} " + " ".join(f"{k:>12}" for k in self.errors)]
        for i, h in enumerate(self.h):
            lines.append(f"{h:12.4e} " + " ".join(f"{self.errors[k][i]:12.4e}" for k in self.errors))
        if self.exact:
            lines.append("slopes: exact (errors at machine precision)")
        else:
            lines.append("slopes: " + ", ".join(f"{k}={s:.3f}" for k, s in self.slopes.items()))
        return "\n".join(lines)


def run_manufactured(case: ManufacturedCase, n_cells: int, dt: float, t_end: float,
                     controls: StepControls | None = None):
    """March the forced system with a fixed step and return ``(final_state, steps)``."""
    grid = case.grid(n_cells)
    base = controls or StepControls()
    fixed = StepControls(
        dt_init=dt, dt_min=dt, dt_max=dt, safety=base.safety,
        picard_tol=base.picard_tol, picard_max=base.picard_max,
    )
    state = case.initial_state(grid)
    steps = 0
    while state.t < t_end:
        out = advance(state, fixed, case.params, dt=dt, t_stop=t_end, sources=case)
        state = out.state
        steps += 1
    return state, steps


def convergence_study(case: ManufacturedCase, grids, controls: StepControls | None = None,
                      t_end: float = 0.5, dt_per_h: float = 0.25) -> OrderReport:
    """Sup-norm errors at ``t_end`` under simultaneous refinement ``dt = dt_per_h * h``."""
    grids = list(grids)
    if len(grids) < 3:
        raise ConfigurationError("a convergence study needs at least 3 resolutions")
    hs, errs, steps = [], {"v": [], "u": [], "theta": []}, []
    for n in grids:
        grid = case.grid(n)
        dt = dt_per_h * grid.h
        try:
            state, n_steps = run_manufactured(case, n, dt, t_end, controls)
        except SimulationAbort as exc:
            raise StudyError(n, exc) from exc
        exact = case.exact_state(grid, state.t)
        hs.append(grid.h)
        steps.append(n_steps)
        errs["v"].append(float(np.max(np.abs(state.v - exact.v))))
        errs["u"].append(float(np.max(np.abs(state.u - exact.u))))
        errs["theta"].append(float(np.max(np.abs(state.theta - exact.theta))))
    hs = np.array(hs)
    errors = {k: np.array(e) for k, e in errs.items()}
    is_exact = all(np.all(e <= 1e-12) for e in errors.values())
    slopes = {}
    for k, e in errors.items():
        if is_exact or np.any(e <= 0):
            slopes[k] = float("nan")
        else:
            slopes[k] = float(np.polyfit(np.log(hs), np.log(e), 1)[0])
    return OrderReport(hs, errors, slopes, is_exact, steps)
