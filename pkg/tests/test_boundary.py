import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparselb import kernels as K
from sparselb.boundary import (
    BEAT_PROFILE,
    BEAT_TABLE,
    BoundaryConfigError,
    LatticeUnits,
    PressureBC,
    TimeTable,
    VelocityBC,
    beat_profile,
    bounce_back,
    ladd_velocity,
    nash_pressure,
    parabolic_weight,
)
from sparselb.engine import SimulationConfig, initialize
from sparselb.geometry import Iolet, build_pipe, classify_sites
from sparselb.lattice import CS2, INVERSE, Q, VELOCITIES, WEIGHTS, equilibrium


def test_bounce_back_rule():
    f = np.zeros(Q)
    f[1] = 0.2
    assert bounce_back(f, 1) == (2, 0.2)


def test_ladd_correction_example():
    # w=1/18, rho=1, u.c=0.05: -2 * (1/18) * 0.05 * 3 = -1/60
    f = np.zeros(Q)
    j, val = ladd_velocity(f, 1, 1.0, np.array([0.05, 0.0, 0.0]))
    assert j == 2
    assert val == pytest.approx(-1 / 60, abs=1e-15)


def test_ladd_zero_velocity_is_bounce_back(rng):
    f = rng.random(Q)
    for i in range(1, Q):
        assert ladd_velocity(f, i, 1.3, np.zeros(3)) == bounce_back(f, i)
        assert K._ladd(f[i], i, 1.3, 0.0, 0.0, 0.0, 1.0) == f[i]


def test_kernel_ladd_matches_reference(rng):
    n = np.array([0.0, 0.0, 1.0])
    for i in range(1, Q):
        fi, rho, ub = rng.random(), rng.uniform(0.9, 1.1), rng.uniform(0, 0.05)
        _, ref = ladd_velocity(np.full(Q, fi), i, rho, ub * n)
        assert K._ladd(fi, i, rho, ub, *n) == pytest.approx(ref, abs=1e-16)


def test_ladd_scales_with_weight():
    io = Iolet("inlet", (0, 0, -0.5), (0, 0, 1), 4.0)
    w_centre = parabolic_weight([0, 0, 0], io)
    w_rim = parabolic_weight([3.9, 0, 0], io)
    f = np.zeros(Q)
    i = int(np.flatnonzero((VELOCITIES == (0, 0, -1)).all(axis=1))[0])
    c_centre = ladd_velocity(f, i, 1.0, 0.05 * w_centre * np.array(io.normal))[1]
    c_rim = ladd_velocity(f, i, 1.0, 0.05 * w_rim * np.array(io.normal))[1]
    assert c_rim / c_centre == pytest.approx(w_rim / w_centre)


def test_parabolic_weight_range():
    io = Iolet("inlet", (1.0, 2.0, 0.0), (1.0, 0.0, 0.0), 5.0)
    assert parabolic_weight([1.0, 2.0, 0.0], io) == 1.0
    assert parabolic_weight([7.0, 2.0, 0.0], io) == 1.0  # along the axis
    assert parabolic_weight([1.0, 4.5, 0.0], io) == pytest.approx(1 - 2.5**2 / 25)
    assert parabolic_weight([1.0, 9.0, 0.0], io) == 0.0


def test_nash_rest_state():
    out = nash_pressure(np.zeros(3), [6, 11, 13], 1.0, (0, 0, 1))
    for i in (6, 11, 13):
        assert out[int(INVERSE[i])] == pytest.approx(WEIGHTS[INVERSE[i]], abs=1e-17)


def test_nash_uses_normal_projection():
    u = np.array([0.02, -0.01, 0.03])
    out = nash_pressure(u, [6], 1.05, (0, 0, 1))
    ref = equilibrium(1.05, np.array([0.0, 0.0, 0.03]))
    assert out[5] == pytest.approx(ref[5], abs=1e-16)
    assert K._nash(5, 1.05, *u, 0.0, 0.0, 1.0) == pytest.approx(ref[5], abs=1e-16)


def test_pressure_bc_ghost_density():
    bc = PressureBC(0, TimeTable.constant(CS2))
    assert bc.ghost_density(0.0) == pytest.approx(1.0)
    with pytest.raises(BoundaryConfigError):
        PressureBC(0, TimeTable.from_pairs([(0, 0.1), (1, -0.1)])).check()


def test_table_nodes_exact():
    for t, v in BEAT_TABLE:
        assert beat_profile(t) == v


def test_table_midpoint():
    (a, va), (b, vb) = BEAT_TABLE[3], BEAT_TABLE[4]
    assert beat_profile((a + b) / 2) == pytest.approx((va + vb) / 2, abs=1e-15)


def test_table_wraps_last_to_first():
    t_last, v_last = BEAT_TABLE[-1]
    mid = (t_last + 1.0) / 2
    assert beat_profile(mid) == pytest.approx((v_last + BEAT_TABLE[0][1]) / 2, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0), st.integers(1, 5))
def test_table_periodic(t, k):
    assert beat_profile(t + k) == pytest.approx(beat_profile(t), abs=1e-12)


def test_table_rejects_bad_input():
    with pytest.raises(BoundaryConfigError):
        TimeTable((), ())
    with pytest.raises(BoundaryConfigError):
        TimeTable((0.0, 0.0), (1.0, 2.0))
    with pytest.raises(BoundaryConfigError):
        TimeTable((0.0, 1.5), (1.0, 2.0), period=1.0)


def test_aperiodic_table_holds_ends():
    t = TimeTable.from_pairs([(0.0, 1.0), (1.0, 3.0)])
    assert t(-1.0) == 1.0 and t(5.0) == 3.0 and t(0.25) == 1.5


def test_lattice_units():
    u = LatticeUnits(1e-4, 0.8, 4e-6)
    # dt = cs2 (tau - 1/2) dx^2 / nu
    assert u.dt == pytest.approx((0.3 / 3) * 1e-8 / 4e-6, rel=1e-15)
    assert u.steps_for(1.0) == int(np.ceil(1.0 / u.dt))
    assert u.velocity_to_physical(0.05) == pytest.approx(0.05 * 1e-4 / u.dt)


def _macros_by_coord(domain, rho, u):
    order = np.lexsort(domain.coords.T[::-1])
    return rho[order], u[order]


def test_zero_speed_inlet_equals_wall_in_engine():
    """A velocity iolet at zero speed reproduces a plain wall bitwise."""
    d = build_pipe(3, 10)
    walled = classify_sites(d.coords, d.iolets[1:], d.voxel_size)
    rho0 = 1.0
    out = PressureBC(1, TimeTable.constant(CS2 * 0.99))
    a = initialize(d, SimulationConfig(tau=0.7, boundaries={0: VelocityBC(0, TimeTable.constant(0.0)), 1: out}))
    b = initialize(walled, SimulationConfig(tau=0.7, boundaries={0: PressureBC(0, TimeTable.constant(CS2 * 0.99))}))
    a.advance(30)
    b.advance(30)
    ra, ua = _macros_by_coord(d, *a.macros())
    rb, ub = _macros_by_coord(walled, *b.macros())
    assert np.array_equal(ra, rb) and np.array_equal(ua, ub)
    assert rho0 != ra[0]


def test_equal_pressures_stay_at_rest():
    d = build_pipe(3, 10)
    bc = {k: PressureBC(k, TimeTable.constant(CS2)) for k in range(2)}
    with initialize(d, SimulationConfig(tau=0.8, boundaries=bc)) as sim:
        sim.advance(200)
        rho, u = sim.macros()
    assert np.abs(u).max() <= 1e-10
    assert np.abs(rho - 1).max() <= 1e-12
