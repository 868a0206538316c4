"""Entropy-energy functionals, a-priori norms and bound checks evaluated on discrete states.

Cell quantities use the midpoint rule, edge quantities the trapezoid rule.
The temperature-gradient terms are evaluated on faces exactly as the
temperature solver discretizes the heat flux, so the discrete energy balance
closes up to the time-stepping error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigurationError, DomainError, DomainKind, GasParams, State, validate_state
from .stepper import face_conductance

LEVEL_SET_CONSTANT = 2.0 * math.log(2.0) - 1.0


def _checked(state: State) -> State:
    result = validate_state(state)
    if not result.ok:
        raise DomainError(f"invalid state: {result}")
    return state


def _entropy_density(x):
    return x - np.log(x) - 1.0


def _theta_faces(state: State):
    """Face gradients of theta with quadrature weights and the products theta_L*theta_R."""
    h = state.grid.h
    theta = state.theta
    kind = state.grid.domain_kind
    ext = np.empty(theta.size + 2)
    ext[1:-1] = theta
    ext[-1] = 1.0
    weights = np.full(theta.size + 1, h)
    prod = np.empty(theta.size + 1)
    prod[1:-1] = theta[1:] * theta[:-1]
    prod[-1] = theta[-1]
    if kind is DomainKind.CAUCHY:
        ext[0] = 1.0
        prod[0] = theta[0]
    elif kind is DomainKind.HALFLINE_NEUMANN:
        ext[0] = theta[0]
        prod[0] = theta[0] ** 2
    else:
        # half-cell between the boundary face (theta = 1) and the first center
        ext[0] = 2.0 - theta[0]
        prod[0] = theta[0]
        weights[0] = 0.5 * h
    grad = np.diff(ext) / h
    return grad, weights, prod, ext


def _volume_faces(state: State):
    h = state.grid.h
    v = state.v
    ext = np.empty(v.size + 2)
    ext[1:-1] = v
    ext[-1] = 1.0
    ext[0] = 1.0 if state.grid.domain_kind is DomainKind.CAUCHY else v[0]
    return np.diff(ext) / h, np.full(v.size + 1, h)


def _state_conductance(state: State, params: GasParams):
    return face_conductance(state.theta, state.v, state.grid.domain_kind, params)


def entropy_energy(state: State, params: GasParams | None = None) -> float:
    """Kinetic energy plus the relative entropies of volume and temperature."""
    _checked(state)
    R, c_v = (1.0, 1.0) if params is None else (params.R, params.c_v)
    u2 = state.u * state.u
    kinetic = 0.25 * (u2[1:] + u2[:-1])
    density = kinetic + R * _entropy_density(state.v) + c_v * _entropy_density(state.theta)
    return float(np.sum(density) * state.grid.h)


def dissipation(state: State, params: GasParams = GasParams()) -> float:
    _checked(state)
    h = state.grid.h
    grad, weights, prod, _ = _theta_faces(state)
    K = _state_conductance(state, params)
    thermal = np.sum(weights * K * grad * grad / prod)
    ux = np.diff(state.u) / h
    if params.gamma == 0:
        mu = params.mu_bar
    else:
        mu = params.mu_bar * state.theta**params.gamma
    viscous = np.sum(mu * ux * ux / (state.v * state.theta)) * h
    return float(thermal + viscous)


def _bisect(f, lo, hi):
    """Bisection to full double precision; ``f(lo)`` and ``f(hi)`` have opposite signs."""
    flo = f(lo)
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fmid = f(mid)
        if fmid == 0:
            return mid
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def jensen_roots(e0: float):
    """Roots ``alpha1 <= 1 <= alpha2`` of ``x - log(x) - 1 = e0``."""
    e0 = float(e0)
    if not (e0 >= 0 and math.isfinite(e0)):
        raise DomainError(f"e0 must be a finite non-negative number, got {e0!r}")
    if e0 == 0:
        return 1.0, 1.0

    def f(x):
        return x - math.log(x) - 1.0 - e0

    # f(x) >= -log(x) - 1 - e0 and f(2e0 + 4) > 0 bracket the roots
    lo = math.exp(-e0 - 1.0) * 0.5
    alpha1 = _bisect(f, lo, 1.0)
    alpha2 = _bisect(f, 1.0, 2.0 * e0 + 4.0)
    return min(alpha1, 1.0), max(alpha2, 1.0)


def slab_roots(e0: float, params: GasParams | None = None):
    """Jensen roots for slab averages; with non-unit R, c_v the energy splits unevenly."""
    scale = 1.0 if params is None else min(params.R, params.c_v)
    return jensen_roots(e0 / scale)


@dataclass
class SlabDecomposition:
    left: np.ndarray  # integer left ends N of the unit slabs [N, N+1]
    int_v: np.ndarray
    int_theta: np.ndarray
    anchor: np.ndarray  # cell-center coordinate minimizing pointwise entropy in each slab
    anchor_entropy: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def violation_count(self) -> int:
        return len(self.violations)


def _cumulative(values, edges):
    out = np.zeros(edges.size)
    np.cumsum(values * np.diff(edges), out=out[1:])
    return out


def slab_check(state: State, alpha1: float, alpha2: float, tol: float = 1e-6) -> SlabDecomposition:
    """Unit-mass slab integrals of v and theta against ``[alpha1, alpha2]``.

    Slabs reaching past a truncation boundary are completed with the far-field
    value 1, which is what the truncation assumes lies beyond it.
    """
    _checked(state)
    grid = state.grid
    if grid.length < 1.0:
        raise ConfigurationError(f"unit slab exceeds the domain length {grid.length}")
    xl, xr = grid.x_left, grid.x_right
    edges = grid.edges
    lefts = np.arange(math.floor(xl), math.ceil(xr), dtype=float)
    a = np.maximum(lefts, xl)
    b = np.minimum(lefts + 1.0, xr)
    outside = 1.0 - (b - a)
    ints = []
    for arr in (state.v, state.theta):
        cum = _cumulative(arr, edges)
        ints.append(np.interp(b, edges, cum) - np.interp(a, edges, cum) + outside)
    int_v, int_theta = ints

    centers = grid.centers
    pointwise = _entropy_density(state.v) + _entropy_density(state.theta)
    slab_of_cell = np.floor(centers).astype(int) - int(lefts[0])
    anchor = np.full(lefts.size, np.nan)
    anchor_val = np.full(lefts.size, np.nan)
    order = np.lexsort((pointwise, slab_of_cell))
    first = np.unique(slab_of_cell[order], return_index=True)
    for s, k in zip(*first):
        j = order[k]
        anchor[s] = centers[j]
        anchor_val[s] = pointwise[j]

    violations = []
    for name, vals in (("v", int_v), ("theta", int_theta)):
        for s in np.flatnonzero((vals < alpha1 - tol) | (vals > alpha2 + tol)):
            violations.append((int(lefts[s]), name, float(vals[s])))
    return SlabDecomposition(lefts.astype(int), int_v, int_theta, anchor, anchor_val, violations)


def level_set_measures(state: State):
    """Measures of ``theta < 1/2`` and ``theta > 2``, counted in whole cells."""
    _checked(state)
    h = state.grid.h
    return float(h * np.count_nonzero(state.theta < 0.5)), float(h * np.count_nonzero(state.theta > 2.0))


def level_set_bound(e0: float, params: GasParams | None = None) -> float:
    c_v = 1.0 if params is None else params.c_v
    return 2.0 * e0 / (c_v * LEVEL_SET_CONSTANT)


NORM_KEYS = ("L2_ux", "L2_thetax_weighted", "L2_vx", "L2_uxx", "L2_ut", "L2_thetat", "L2_thetaxx")


def _edge_second_difference(u, h):
    d2 = np.empty_like(u)
    d2[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    # boundary edges: linear extrapolation of the interior second difference
    d2[0] = 2.0 * d2[1] - d2[2]
    d2[-1] = 2.0 * d2[-2] - d2[-3]
    return d2


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def norm_suite(state: State, prev: State | None = None, dt: float | None = None) -> dict:
    """Squared L2 norms of the a-priori estimate quantities.

    Time derivatives are backward differences against ``prev``; without a
    previous level they are reported as 0.
    """
    _checked(state)
    grid = state.grid
    h = grid.h
    if prev is not None:
        _checked(prev)
        if prev.grid != grid:
            raise DomainError("states live on different grids")
        if dt is None or not dt > 0:
            raise DomainError(f"dt must be positive, got {dt}")

    ux = np.diff(state.u) / h
    grad, weights, _, theta_ext = _theta_faces(state)
    theta_face = 0.5 * (theta_ext[1:] + theta_ext[:-1])
    vgrad, vweights = _volume_faces(state)
    uxx = _edge_second_difference(state.u, h)
    theta_xx = np.diff(grad) / h

    out = {
        "L2_ux": float(np.sum(ux * ux) * h),
        "L2_thetax_weighted": float(np.sum(weights * grad * grad / theta_face)),
        "L2_vx": float(np.sum(vweights * vgrad * vgrad)),
        "L2_uxx": float(np.sum(_trapezoid_weights(uxx.size, h) * uxx * uxx)),
        "L2_thetaxx": float(np.sum(theta_xx * theta_xx) * h),
        "L2_ut": 0.0,
        "L2_thetat": 0.0,
    }
    if prev is not None:
        ut = (state.u - prev.u) / dt
        tt = (state.theta - prev.theta) / dt
        out["L2_ut"] = float(np.sum(_trapezoid_weights(ut.size, h) * ut * ut))
        out["L2_thetat"] = float(np.sum(tt * tt) * h)
    return out


class SnapshotDensityError(ValueError):
    pass


def _snapshot_list(history):
    snaps = getattr(history, "snapshots", history)
    out = []
    for item in snaps:
        st = item[1] if isinstance(item, tuple) else item
        out.append(st)
    return out


def representation_residual(history, slab: int, t: float | None = None,
                            params: GasParams = GasParams(), max_interval: float = 1e-2) -> float:
    """Defect of the volume representation through the effective viscous flux, in slab ``[slab, slab+1]``.

    Rebuilds ``v`` from the initial volume, the velocity displacement
    ``D = v0 exp(int_N^x (u - u0) / mu)``, the flux factor
    ``Y = exp(int_0^t sigma(N, s) ds / mu)`` and
    ``v = D Y (1 + int_0^t R theta / (mu D Y) ds)`` by trapezoid quadrature
    over the snapshots, and returns the maximum relative defect against the
    simulated volume at cell centers of the slab at time ``t`` (the last
    snapshot by default).
    """
    if params.gamma != 0:
        raise DomainError("the representation requires constant viscosity (gamma = 0)")
    states = _snapshot_list(history)
    if not states:
        raise SnapshotDensityError("history holds no snapshots")
    if states[0].t != 0.0:
        raise SnapshotDensityError("first snapshot must be the initial state at t = 0")
    if t is not None:
        states = [s for s in states if s.t <= t + 1e-12]
        if abs(states[-1].t - t) > 1e-12:
            raise SnapshotDensityError(f"no snapshot at t = {t}")
    times = np.array([s.t for s in states])
    if times.size > 1:
        gap = float(np.max(np.diff(times)))
        if gap > max_interval * (1 + 1e-9):
            raise SnapshotDensityError(
                f"snapshot interval {gap:.3g} exceeds the required interval {max_interval:.3g}"
            )

    grid = states[0].grid
    h = grid.h
    edges = grid.edges
    i0 = int(round((slab - grid.x_left) / h))
    i1 = int(round((slab + 1 - grid.x_left) / h))
    if i0 < 0 or i1 > grid.n_cells or abs(edges[i0] - slab) > 1e-9 * max(1.0, abs(slab)) \
            or abs(edges[i1] - slab - 1) > 1e-9 * max(1.0, abs(slab)):
        raise ConfigurationError(f"slab [{slab}, {slab + 1}] is not aligned with grid edges inside the domain")

    mu, R = params.mu_bar, params.R
    u0 = states[0].u
    v0 = states[0].v[i0:i1]
    n_t = len(states)
    logD = np.empty((n_t, i1 - i0))
    sigma_N = np.empty(n_t)
    theta = np.empty((n_t, i1 - i0))
    for k, s in enumerate(states):
        w = (s.u - u0)[i0:i1 + 1]
        cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (w[1:] + w[:-1]))))
        logD[k] = (cum[:-1] + h * (3.0 * w[:-1] + w[1:]) / 8.0) / mu
        sig = (mu * np.diff(s.u) / h - R * s.theta) / s.v
        if 0 < i0 < grid.n_cells:
            sigma_N[k] = 0.5 * (sig[i0 - 1] + sig[i0])
        else:
            sigma_N[k] = sig[min(i0, grid.n_cells - 1)]
        theta[k] = s.theta[i0:i1]

    dts = np.diff(times)
    logY = np.concatenate(([0.0], np.cumsum(0.5 * dts * (sigma_N[1:] + sigma_N[:-1])))) / mu
    DY = v0[None, :] * np.exp(logD + logY[:, None])
    integrand = R * theta / (mu * DY)
    inner = np.concatenate(
        (np.zeros((1, integrand.shape[1])), np.cumsum(0.5 * dts[:, None] * (integrand[1:] + integrand[:-1]), axis=0))
    )
    v_rep = DY[-1] * (1.0 + inner[-1])
    v_sim = states[-1].v[i0:i1]
    return float(np.max(np.abs(v_rep - v_sim) / v_sim))


@dataclass
class EstimateReport:
    t: float
    E: float
    W: float
    cumulative_W: float
    energy_residual: float
    min_v: float
    max_v: float
    min_theta: float
    max_theta: float
    meas_theta_lt_half: float
    meas_theta_gt_2: float
    slab_violations: int
    norm_suite: dict
    representation_residual: float = float("nan")
    dt: float = 0.0
    picard_iters: int = 0

    def level_set_ok(self, e0: float, params: GasParams | None = None) -> bool:
        return self.meas_theta_lt_half + self.meas_theta_gt_2 <= level_set_bound(e0, params) + 1e-12


def estimate_report(state: State, params: GasParams, e0: float, cumulative_W: float,
                    roots, prev: State | None = None, dt: float | None = None,
                    slab_tol: float = 1e-6, picard_iters: int = 0) -> EstimateReport:
    E = entropy_energy(state, params)
    W = dissipation(state, params)
    lt, gt = level_set_measures(state)
    slabs = slab_check(state, roots[0], roots[1], slab_tol)
    norms = norm_suite(state, prev, dt)
    return EstimateReport(
        t=state.t, E=E, W=W, cumulative_W=cumulative_W,
        energy_residual=E + cumulative_W - e0,
        min_v=float(state.v.min()), max_v=float(state.v.max()),
        min_theta=float(state.theta.min()), max_theta=float(state.theta.max()),
        meas_theta_lt_half=lt, meas_theta_gt_2=gt,
        slab_violations=slabs.violation_count, norm_suite=norms,
        dt=0.0 if dt is None else float(dt), picard_iters=int(picard_iters),
    )
