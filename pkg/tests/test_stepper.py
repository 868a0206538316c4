import numpy as np
import pytest

from lagns import (
    DomainError,
    DomainKind,
    GasParams,
    MassGrid,
    SimulationAbort,
    State,
    StepControls,
    advance,
    apply_boundary,
    continuity_update,
    momentum_solve,
    temperature_solve,
    tridiagonal_solve,
)
from lagns.stepper import SingularSystemError, ghost_values, stable_dt

KINDS = list(DomainKind)


def _dense(lower, diag, upper):
    return np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)


def test_tridiagonal_small_example():
    x = tridiagonal_solve([1.0], [2.0, 2.0], [1.0], [3.0, 3.0])
    np.testing.assert_allclose(x, [1.0, 1.0])
    assert tridiagonal_solve([], [4.0], [], [2.0])[0] == 0.5


def test_tridiagonal_matches_dense_on_nonsymmetric_system():
    rng = np.random.default_rng(3)
    n = 57
    lo, up = rng.normal(size=n - 1), rng.normal(size=n - 1)
    d = 5 + rng.random(n)
    b = rng.normal(size=n)
    np.testing.assert_allclose(tridiagonal_solve(lo, d, up, b), np.linalg.solve(_dense(lo, d, up), b), rtol=1e-12)


def test_tridiagonal_singular_reports_row():
    with pytest.raises(SingularSystemError) as info:
        tridiagonal_solve([0.0, 0.0], [1.0, 0.0, 1.0], [0.0, 0.0], [1.0, 1.0, 1.0])
    assert info.value.row == 1
    with pytest.raises(SingularSystemError):
        tridiagonal_solve([], [0.0], [], [1.0])


def test_tridiagonal_shape_errors():
    with pytest.raises(ValueError):
        tridiagonal_solve([1.0], [1.0, 1.0, 1.0], [1.0, 1.0], [1.0, 1.0, 1.0])


def _bumpy_state(kind, n=40, L=4.0):
    g = MassGrid(kind, L, n)
    xc, xe = g.centers, g.edges
    mid = 0.5 * (g.x_left + g.x_right)
    v = 1 + 0.2 * np.exp(-((xc - mid) ** 2))
    th = 1 + 0.3 * np.exp(-((xc - mid) ** 2))
    u = 0.1 * np.exp(-((xe - mid) ** 2)) * (xe - mid)
    u[0] = u[-1] = 0.0
    return State(0.0, v, u, th, g)


def test_ghost_values_by_configuration():
    s = _bumpy_state(DomainKind.HALFLINE_NEUMANN)
    (vl, tl), right = ghost_values(s)
    assert right == (1.0, 1.0)
    assert vl == s.v[0] and tl == s.theta[0]
    (_, tl), _ = ghost_values(s.replace(grid=MassGrid(DomainKind.HALFLINE_DIRICHLET, 4.0, 40)))
    assert tl == pytest.approx(2.0 - s.theta[0])
    c = State.constant(MassGrid(DomainKind.CAUCHY, 1.0, 4))
    assert ghost_values(c) == ((1.0, 1.0), (1.0, 1.0))


def test_apply_boundary_pins_end_velocities():
    g = MassGrid(DomainKind.CAUCHY, 1.0, 4)
    s = State(0.0, np.ones(4), np.arange(5.0), np.ones(4), g)
    out = apply_boundary(s)
    assert out.u[0] == 0 and out.u[-1] == 0
    np.testing.assert_array_equal(out.u[1:-1], [1.0, 2.0, 3.0])


def test_stable_dt_example():
    s = State.constant(MassGrid(DomainKind.CAUCHY, 1.0, 4))
    # sound speed 1, h = 0.5
    assert stable_dt(s, GasParams(), 0.5) == 0.25
    assert stable_dt(s, GasParams(R=4.0), 1.0) == 0.25


def test_momentum_solve_is_implicit_euler_for_viscosity():
    g = MassGrid(DomainKind.CAUCHY, 2.0, 30)
    h, dt, mu = g.h, 0.05, 1.3
    u = np.sin(np.pi * (g.edges + 2.0) / 4.0)
    u[0] = u[-1] = 0.0
    s = State(0.0, np.ones(30), u, np.ones(30), g)
    got = momentum_solve(s, dt, GasParams(mu_bar=mu))
    m = u.size - 2
    c = dt * mu / h**2
    A = _dense(np.full(m - 1, -c), np.full(m, 1 + 2 * c), np.full(m - 1, -c))
    np.testing.assert_allclose(got[1:-1], np.linalg.solve(A, u[1:-1]), rtol=1e-12, atol=1e-14)
    assert got[0] == 0 and got[-1] == 0


def test_continuity_update_is_exact_discrete_balance():
    s = _bumpy_state(DomainKind.CAUCHY)
    u_new = s.u * 0.5
    v_new = continuity_update(s, u_new, 0.01)
    np.testing.assert_allclose(v_new, s.v + 0.01 * np.diff(u_new) / s.grid.h, rtol=0, atol=0)
    # total volume changes only through the end velocities, which are zero
    assert np.sum(v_new) == pytest.approx(np.sum(s.v), rel=1e-14)


@pytest.mark.parametrize("kind,ghost", [
    (DomainKind.CAUCHY, "one"),
    (DomainKind.HALFLINE_NEUMANN, "mirror"),
    (DomainKind.HALFLINE_DIRICHLET, "reflect"),
])
def test_linear_temperature_solve_matches_dense_implicit_euler(kind, ghost):
    n, dt = 25, 0.02
    g = MassGrid(kind, 3.0, n)
    th0 = 1 + 0.4 * np.exp(-((g.centers - 0.5 * (g.x_left + g.x_right)) ** 2))
    s = State(0.0, np.ones(n), np.zeros(n + 1), th0, g)
    params = GasParams(beta=0.0, kappa_bar=0.7, c_v=1.5)
    theta, iters = temperature_solve(s, np.ones(n), np.zeros(n + 1), dt, params, StepControls())
    assert iters == 1
    c = dt * params.kappa_bar / g.h**2
    A = np.diag(np.full(n, params.c_v + 2 * c)) + np.diag(np.full(n - 1, -c), 1) + np.diag(np.full(n - 1, -c), -1)
    b = params.c_v * th0
    b[-1] += c  # far-field ghost 1 on the right
    if ghost == "one":
        b[0] += c
    elif ghost == "mirror":
        A[0, 0] -= c
    else:
        A[0, 0] += c
        b[0] += 2 * c
    np.testing.assert_allclose(theta, np.linalg.solve(A, b), rtol=1e-12)


def test_picard_converges_for_nonlinear_conductivity():
    s = _bumpy_state(DomainKind.CAUCHY)
    ctl = StepControls(picard_tol=1e-12)
    theta, iters = temperature_solve(s, s.v, s.u, 0.01, GasParams(beta=2.0), ctl)
    assert 1 < iters < ctl.picard_max
    assert np.all(theta > 0)


@pytest.mark.parametrize("kind", KINDS)
def test_constant_state_fixed_point(kind):
    s = State.constant(MassGrid(kind, 2.0, 16))
    out = advance(s, StepControls(), GasParams())
    assert s.replace(t=out.state.t).bitwise_equal(out.state)


def test_advance_clips_to_stop_time_exactly():
    s = _bumpy_state(DomainKind.CAUCHY)
    out = advance(s, StepControls(dt_init=0.01), GasParams(), t_stop=0.003)
    assert out.state.t == 0.003 and out.dt_used == pytest.approx(0.003)


def test_advance_grows_step_after_streak():
    s = _bumpy_state(DomainKind.CAUCHY)
    ctl = StepControls(dt_init=1e-3, dt_max=1e-2, growth_after=5, growth_factor=1.2)
    dt, streak = None, 0
    seen = []
    for _ in range(6):
        out = advance(s, ctl, GasParams(), dt=dt, streak=streak)
        s, dt, streak = out.state, out.dt_next, out.streak
        seen.append(out.dt_used)
    assert seen[:5] == [1e-3] * 5
    assert seen[5] == pytest.approx(1.2e-3)


class _Drain:
    """Volume sink strong enough that only small steps keep v positive."""

    def source_v(self, x, t):
        return np.full_like(x, -100.0)

    def source_u(self, x, t):
        return np.zeros_like(x)

    def source_theta(self, x, t):
        return np.zeros_like(x)


def test_advance_halves_until_accepted():
    s = State.constant(MassGrid(DomainKind.CAUCHY, 1.0, 10))
    ctl = StepControls(dt_init=0.1, dt_max=0.1, dt_min=1e-6, safety=0.9)
    out = advance(s, ctl, GasParams(), sources=_Drain())
    # 1 - 100 dt > 0 first holds at dt = 0.1 / 2**4
    assert out.rejections == 4
    assert out.dt_used == 0.00625
    assert out.dt_next == out.dt_used and out.streak == 0


def test_advance_aborts_below_minimum_step():
    s = State.constant(MassGrid(DomainKind.CAUCHY, 1.0, 10))
    ctl = StepControls(dt_init=0.1, dt_max=0.1, dt_min=0.02, safety=0.9)
    with pytest.raises(SimulationAbort) as info:
        advance(s, ctl, GasParams(), sources=_Drain())
    assert info.value.state is s
    assert info.value.stage == "continuity"


def test_advance_rejects_stop_time_in_the_past():
    s = State.constant(MassGrid(DomainKind.CAUCHY, 1.0, 8), t=1.0)
    with pytest.raises(DomainError):
        advance(s, StepControls(), GasParams(), t_stop=1.0)


def test_step_controls_validation():
    with pytest.raises(Exception):
        StepControls(dt_min=1.0, dt_max=0.1)
    with pytest.raises(Exception):
        StepControls(safety=0.0)
