import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctesn.integrators import OdeProblem, SolveOptions, solve_stiff
from ctesn.models import (
    C_ROOM,
    DAY,
    KAPPA,
    TAU,
    UA,
    FixedParams,
    get_model,
    robertson,
    split_toy_hvac,
    t_amb,
    toy_hvac,
)

TIGHT = SolveOptions(abstol=1e-10, reltol=1e-8)


def test_robertson_rhs_examples():
    m = robertson()
    assert np.allclose(m.rhs(np.array([1.0, 0.0, 0.0]), m.default_p, 0.0), [-0.04, 0.04, 0.0], rtol=0, atol=1e-15)
    assert m.rhs(np.array([0.0, 1e-5, 0.0]), m.default_p, 0.0)[2] == pytest.approx(3e-3, rel=1e-12)
    sp = m.param_space
    assert list(sp.lower) == [0.036, 2.7e7, 0.9e4] and list(sp.upper) == [0.044, 3.3e7, 1.1e4]
    grid = m.save_grid()
    assert grid.size == 200 and grid[0] == 0.0 and grid[1] == 1e-5 and grid[-1] == 1e5


@given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.floats(0.036, 0.044), st.floats(2.7e7, 3.3e7), st.floats(9e3, 1.1e4))
def test_robertson_rates_cancel(y, k1, k2, k3):
    f = robertson().rhs(np.array(y), np.array([k1, k2, k3]), 0.0)
    assert abs(f.sum()) <= 1e-9 * (1 + np.abs(f).max())


def test_robertson_mass_conservation():
    m = robertson()
    traj = m.simulate(m.default_p)
    assert np.max(np.abs(traj.values.sum(axis=1) - 1.0)) <= 1e-6


def test_toy_examples():
    m = toy_hvac()
    traj = m.simulate([50.0, 300.0, 0.05], saveat=np.linspace(0, 20, 5), tspan=(0, 20))
    assert traj.column("Q_c")[-1] == pytest.approx(1000.0, abs=0.1)
    assert traj.labels == ("T_r", "Q_c", "CSP", "COP")
    # CSP at T_r = T_amb
    t = np.array([0.0, 1e4, 3e4])
    u = np.column_stack([t_amb(t), np.full(3, 500.0)])
    assert np.allclose(m.outputs(u, [50.0, 300.0, 0.0], t)[:, 2], 300.0, rtol=1e-14)
    # algebraic balance at T_amb = 300 (t = 0): T_r = 300 + (200 - 1000)/50 = 284 is a rest point
    assert m.rhs(np.array([284.0, 1000.0]), np.array([50.0, 300.0, 0.0]), 0.0)[0] == pytest.approx(0.0, abs=1e-15)


@given(st.floats(250, 350), st.floats(0, 2000), st.floats(45, 55), st.floats(270, 330), st.floats(0, 0.1), st.floats(0, DAY))
def test_toy_stiffness_and_finiteness(tr, qc, omega, fan, g, t):
    m = toy_hvac()
    u, p = np.array([tr, qc]), np.array([omega, fan, g])
    lam = np.abs(np.linalg.eigvals(m.jac(u, p, t)))
    assert lam.max() / lam.min() >= 1e3
    assert np.all(np.isfinite(m.rhs(u, p, t)))
    assert np.all(np.isfinite(m.outputs(u[None, :], p, np.array([t]))))


def _coupled(room, hvac, omega, fan, g):
    """Split units joined with continuous (instantaneous) coupling."""

    def rhs(u, p, t):
        return np.concatenate([room.rhs(u[:1], np.array([g, u[1]]), t), hvac.rhs(u[1:], np.array([omega, fan, u[0]]), t)])

    return OdeProblem(rhs, np.array([300.0, 0.0]), (0.0, DAY))


def test_split_matches_monolithic():
    room, hvac = split_toy_hvac()
    p = np.array([52.0, 290.0, 0.07])
    grid = np.linspace(0, DAY, 200)
    mono = toy_hvac().simulate(p, opts=TIGHT)
    split = solve_stiff(_coupled(room, hvac, *p), TIGHT.replace(saveat=grid))
    csp = np.array([hvac.outputs(split.values[i:i + 1, 1:], [p[0], p[1], split.values[i, 0]], grid[i:i + 1])[0, 1]
                    for i in range(grid.size)])
    for ref, got in ((mono.column("T_r"), split.values[:, 0]), (mono.column("Q_c"), split.values[:, 1]), (mono.column("CSP"), csp)):
        assert np.max(np.abs(ref - got)) / np.max(np.abs(ref)) <= 1e-6


def test_room_envelope_closed_form():
    room = get_model("toy_hvac_room")
    grid = np.linspace(0, 3 * DAY, 301)
    traj = room.solve_states([0.0, 0.0], saveat=grid, tspan=(0, 3 * DAY), opts=TIGHT)
    a, w = UA / C_ROOM, 2 * np.pi / DAY
    periodic = 304.0 + 5 * a * (a * np.sin(w * grid) - w * np.cos(w * grid)) / (a**2 + w**2)
    c = 300.0 - (304.0 - 5 * a * w / (a**2 + w**2))
    exact = periodic + c * np.exp(-a * grid)
    assert np.max(np.abs(traj.values[:, 0] - exact)) <= 1e-5


def test_hvac_first_order_lag():
    hvac = get_model("toy_hvac_unit")
    grid = np.linspace(0, 20, 41)
    traj = hvac.simulate([48.0, 310.0, 295.0], saveat=grid, tspan=(0, 20), opts=TIGHT)
    target = KAPPA * 48.0 * 310.0 / 300.0
    assert np.allclose(traj.column("Q_c"), target * (1 - np.exp(-grid / TAU)), rtol=0, atol=1e-6 * target)


def test_registry_and_fixed_params():
    assert get_model("robertson").name == "robertson"
    with pytest.raises(KeyError):
        get_model("nope")
    hvac = get_model("toy_hvac_unit")
    local = FixedParams(hvac, {"omega": 50.0, "fan": 300.0}, tspan=(0, 60))
    assert local.param_names == ("T_r",) and local.tspan == (0, 60)
    assert np.array_equal(local.full([291.0]), [50.0, 300.0, 291.0])
    with pytest.raises(KeyError):
        FixedParams(hvac, {"speed": 1.0})
