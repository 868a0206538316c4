"""Discrete state, gas parameters and constitutive laws of an ideal polytropic gas.

Fields live on a staggered grid in Lagrangian mass coordinates: specific
volume ``v`` and temperature ``theta`` at cell centers, velocity ``u`` at
cell edges.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np


class DomainError(ValueError):
    """A value lies outside the domain of a constitutive law or functional."""


class ConfigurationError(ValueError):
    """Inconsistent grid, boundary configuration or run setup."""


class DomainKind(str, enum.Enum):
    CAUCHY = "cauchy"
    HALFLINE_NEUMANN = "halfline_neumann"
    HALFLINE_DIRICHLET = "halfline_dirichlet"

    @classmethod
    def parse(cls, value) -> "DomainKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(f"unknown domain configuration {value!r}") from None


@dataclass(frozen=True)
class GasParams:
    """Constitutive constants; ``mu = mu_bar*theta**gamma``, ``kappa = kappa_bar*theta**beta``."""

    R: float = 1.0
    c_v: float = 1.0
    mu_bar: float = 1.0
    kappa_bar: float = 1.0
    gamma: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("R", "c_v", "mu_bar", "kappa_bar"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive, got {value!r}")
        for name in ("gamma", "beta"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be non-negative, got {value!r}")

    @property
    def theorem_regime(self) -> bool:
        return self.gamma == 0 and self.beta > 0

    @property
    def normalized(self) -> bool:
        return self.R == self.c_v == self.mu_bar == self.kappa_bar == 1.0


@dataclass(frozen=True)
class MassGrid:
    """Uniform grid over ``[-L, L]`` (Cauchy) or ``[0, L]`` (half-line)."""

    domain_kind: DomainKind
    L: float
    n_cells: int

    def __post_init__(self):
        object.__setattr__(self, "domain_kind", DomainKind.parse(self.domain_kind))
        if not (np.isfinite(self.L) and self.L > 0):
            raise ConfigurationError(f"L must be positive, got {self.L!r}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ConfigurationError(f"n_cells must be an integer >= 4, got {self.n_cells!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def x_left(self) -> float:
        return -self.L if self.domain_kind is DomainKind.CAUCHY else 0.0

    @property
    def x_right(self) -> float:
        return self.L

    @property
    def length(self) -> float:
        return self.x_right - self.x_left

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def edges(self) -> np.ndarray:
        return self.x_left + np.arange(self.n_cells + 1) * self.h


@dataclass(frozen=True, eq=False)
class State:
    """Fields at one time level. Arrays are made read-only on construction."""

    t: float
    v: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    grid: MassGrid

    def __post_init__(self):
        for name in ("v", "u", "theta"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def constant(cls, grid: MassGrid, t: float = 0.0) -> "State":
        n = grid.n_cells
        return cls(t, np.ones(n), np.zeros(n + 1), np.ones(n), grid)

    def replace(self, **changes) -> "State":
        return replace(self, **changes)

    def bitwise_equal(self, other: "State") -> bool:
        return (
            self.grid == other.grid
            and np.float64(self.t).tobytes() == np.float64(other.t).tobytes()
            and all(
                getattr(self, f).tobytes() == getattr(other, f).tobytes()
                for f in ("v", "u", "theta")
            )
        )


def _require_positive(name, value):
    arr = np.asarray(value, dtype=float)
    bad = ~(arr > 0)
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))
        raise DomainError(f"non-positive or non-finite {name} at index {idx.tolist()}")
    return arr


def pressure(v, theta, params: GasParams = GasParams()):
    v = _require_positive("specific volume v", v)
    theta = _require_positive("temperature theta", theta)
    return params.R * theta / v


def transport_coefficients(theta, params: GasParams = GasParams()):
    """Return ``(viscosity, conductivity)`` evaluated at ``theta``."""
    theta = _require_positive("temperature theta", theta)
    if params.gamma == 0:
        mu = np.full_like(theta, params.mu_bar) if theta.ndim else params.mu_bar
    else:
        mu = params.mu_bar * theta**params.gamma
    kappa = params.kappa_bar * theta**params.beta
    return mu, kappa


def internal_energy(theta, params: GasParams = GasParams()):
    # additive constant fixed to zero; it never enters the dynamics
    theta = _require_positive("temperature theta", theta)
    return params.c_v * theta


@dataclass
class Violation:
    field: str
    index: int
    reason: str


@dataclass
class ValidationResult:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def cells(self, reason: str | None = None) -> list:
        return [w.index for w in self.violations if reason is None or w.reason == reason]

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(f"{w.field}[{w.index}]: {w.reason}" for w in self.violations)


def validate_state(state: State) -> ValidationResult:
    result = ValidationResult()
    n = state.grid.n_cells
    expected = {"v": n, "u": n + 1, "theta": n}
    for name, size in expected.items():
        arr = getattr(state, name)
        if arr.shape != (size,):
            result.violations.append(Violation(name, -1, f"length {arr.shape} != ({size},)"))
    if not result.ok:
        return result
    if (np.isfinite(state.t) and np.isfinite(state.u).all()
            and (state.v > 0).all() and (state.theta > 0).all()
            and np.isfinite(state.v).all() and np.isfinite(state.theta).all()):
        return result
    for name in ("v", "u", "theta"):
        arr = getattr(state, name)
        for j in np.flatnonzero(~np.isfinite(arr)):
            result.violations.append(Violation(name, int(j), "non-finite"))
    for name, label in (("v", "non-positive volume"), ("theta", "non-positive temperature")):
        arr = getattr(state, name)
        for j in np.flatnonzero(np.isfinite(arr) & (arr <= 0)):
            result.violations.append(Violation(name, int(j), label))
    if not np.isfinite(state.t):
        result.violations.append(Violation("t", -1, "non-finite"))
    result.violations.sort(key=lambda w: (w.index, w.field))
    return result
