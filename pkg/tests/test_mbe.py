import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from masersoliton.errors import BlowUpError, DomainError
from masersoliton.mbe import (
    MbeConfig, MbeState, lasing_threshold, mbe_cw_fixed_point, mbe_step, noise_state,
    run_mbe, trivial_state,
)
from masersoliton.params import default_physical_params, mode_cooperativities


def smooth_problem(**kw):
    base = dict(theta=(0.3,), gamma=(1.0,), C=(1.0,), delta=0.5, gamma_a=2.0, gamma_i=0.7,
                d0_over_chi=-1.5, t_end=2.0)
    base.update(kw)
    return MbeConfig(**base)


def smooth_init(cfg):
    return MbeState(np.array([[0.4 + 0.2j]]), np.array([[0.1 - 0.3j]]), np.array([[-0.8]]))


def test_config_validation():
    with pytest.raises(DomainError):
        MbeConfig(theta=(0.0, 1.0), gamma=(1.0,), C=(1.0,))
    with pytest.raises(DomainError):
        MbeConfig(grid_points=12)
    with pytest.raises(DomainError):
        MbeConfig(theta=(0.0, 1.0), gamma=(1.0, 1.0), C=(1.0, 1.0), spin_packets=1,
                  packet_sharing="disjoint")


@settings(max_examples=20, deadline=None)
@given(st.floats(0.001, 2.0), st.floats(-3, 0), st.floats(-2, 2), st.sampled_from([1, 4]))
def test_trivial_equilibrium_is_exact(dt, d0, theta, n):
    cfg = MbeConfig(theta=(theta,), d0_over_chi=d0, dt=dt, t_end=20 * dt, grid_points=n,
                    c_eff=1.0 if n > 1 else 0.0)
    s = trivial_state(cfg)
    out = run_mbe(cfg, s).final
    assert np.all(out.F == 0) and np.all(out.J == 0)
    assert np.all(out.D == d0)


def test_fixed_point_closed_form():
    cfg = MbeConfig(d0_over_chi=-1.0, gamma_a=2.0, gamma_i=0.5)
    fp = mbe_cw_fixed_point(cfg)
    # theta = delta = 0: D = -1/(2C), |F|^2 = d0/D - 1
    assert fp.lasing
    assert fp.D == -0.5 and fp.intensity == pytest.approx(1.0, rel=1e-15)
    assert fp.residual < 1e-10
    assert fp.pulled_frequency == 0.0
    s = fp.state(cfg)
    assert s.J[0, 0] == pytest.approx(-s.F[0, 0] / 2, rel=1e-15)


@pytest.mark.parametrize("C", [0.5, 1.0, 2.0])
def test_exactly_at_threshold_gives_no_lasing(C):
    fp = mbe_cw_fixed_point(MbeConfig(C=(C,), d0_over_chi=-1 / (2 * C)))
    assert fp.intensity == 0.0 and not fp.lasing


def test_zero_pump_is_purely_dissipative():
    cfg = MbeConfig(theta=(0.5,), delta=-0.3, d0_over_chi=0.0, t_end=20.0)
    traj = run_mbe(cfg, noise_state(cfg, seed=2, amplitude=0.5))
    power = np.abs(traj.outputs[0].samples) ** 2
    assert not mbe_cw_fixed_point(cfg).lasing
    assert np.all(np.diff(power[len(power) // 4:]) <= 0)


def test_fixed_point_is_stationary_under_integration():
    cfg = MbeConfig(d0_over_chi=-1.0, gamma_a=2.0, gamma_i=0.5, t_end=10.0)
    fp = mbe_cw_fixed_point(cfg)
    s0 = fp.state(cfg, phase=0.4)
    out = run_mbe(cfg, s0).final
    assert np.max(np.abs(out.F - s0.F)) < 1e-12
    assert np.max(np.abs(out.D - s0.D)) < 1e-12


def test_below_threshold_has_no_lasing_state():
    cfg = MbeConfig(d0_over_chi=-0.3)
    fp = mbe_cw_fixed_point(cfg)
    assert not fp.lasing and fp.intensity == 0.0 and fp.D == -0.3


def test_threshold_formula():
    assert lasing_threshold(MbeConfig(C=(2.0,))) == -0.25
    cfg = MbeConfig(theta=(-0.7,), delta=0.7, C=(1.0,))
    assert lasing_threshold(cfg) == pytest.approx(-(1 + 0.49) / 2)


def test_rk4_fourth_order():
    init = smooth_init(None)
    ref = run_mbe(smooth_problem(dt=0.05 / 8), init).final
    err = []
    for dt in (0.05, 0.025):
        f = run_mbe(smooth_problem(dt=dt), init).final
        err.append(max(np.max(np.abs(f.F - ref.F)), np.max(np.abs(f.J - ref.J)),
                       np.max(np.abs(f.D - ref.D))))
    assert 14 <= err[0] / err[1] <= 18


def test_free_advection_is_exact():
    n = 32
    cfg = MbeConfig(gamma=(0.0,), C=(0.0,), gamma_a=0.0, gamma_i=0.0, grid_points=n,
                    c_eff=1.3, radius=0.7, d0_over_chi=0.0, t_end=2 * math.pi * 0.7 / 1.3)
    rng = np.random.default_rng(2)
    F0 = rng.standard_normal((1, n)) + 1j * rng.standard_normal((1, n))
    s = MbeState(F0, np.zeros((1, n)), np.zeros((1, n)))
    out = run_mbe(cfg, s)
    assert out.final.t == pytest.approx(cfg.round_trip_time, rel=1e-14)
    assert np.max(np.abs(out.final.F - F0)) < 1e-10


def test_advection_translates_by_one_cell():
    n = 16
    R, c = 1.0, 1.0
    dz = 2 * math.pi * R / n
    cfg = MbeConfig(gamma=(0.0,), C=(0.0,), gamma_a=0.0, gamma_i=0.0, grid_points=n,
                    c_eff=c, radius=R, d0_over_chi=0.0, t_end=dz / c)
    F0 = np.exp(1j * 2 * np.arange(n) * 2 * math.pi / n)[None, :]
    out = run_mbe(cfg, MbeState(F0, np.zeros((1, n)), np.zeros((1, n)))).final
    assert np.max(np.abs(out.F - np.roll(F0, 1, axis=1))) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_gauge_symmetry(alpha):
    cfg = MbeConfig(theta=(0.4,), delta=-0.3, d0_over_chi=-2.0, gamma_a=3.0, gamma_i=0.5,
                    t_end=5.0, grid_points=8, c_eff=0.5, radius=1.0)
    s = noise_state(cfg, seed=3, amplitude=0.1)
    u = np.exp(1j * alpha)
    r = MbeState(s.F * u, s.J * u, s.D)
    a = run_mbe(cfg, s)
    b = run_mbe(cfg, r)
    assert np.max(np.abs(b.outputs[0].samples - u * a.outputs[0].samples)) < 1e-12
    assert np.max(np.abs(b.final.D - a.final.D)) < 1e-12


@pytest.mark.parametrize("theta,delta", [(0.6, -0.2), (-0.5, 0.9), (1.2, 0.4)])
def test_frequency_pulling(theta, delta):
    cfg = MbeConfig(theta=(theta,), delta=delta, gamma=(1.0,), gamma_a=2.0, gamma_i=1.0,
                    d0_over_chi=-3.0, t_end=150.0)
    traj = run_mbe(cfg)
    z = traj.outputs[0].tail(0.3)
    phase = np.unwrap(np.angle(z.samples))
    slope = np.polyfit(z.t, phase, 1)[0]
    nu = mbe_cw_fixed_point(cfg).pulled_frequency
    assert -slope == pytest.approx(nu, rel=0.02)
    assert abs(z.samples[-1]) ** 2 == pytest.approx(mbe_cw_fixed_point(cfg).intensity, rel=1e-3)


def test_below_threshold_decay_rate_matches_linearization():
    theta, delta, gamma, ga, C, d0 = 0.5, -0.4, 1.0, 2.0, 1.0, -0.3
    cfg = MbeConfig(theta=(theta,), delta=delta, gamma=(gamma,), C=(C,), gamma_a=ga,
                    gamma_i=1.0, d0_over_chi=d0, t_end=30.0, noise_amplitude=1e-6)
    m = np.array([[-gamma / 2 * (1 + 1j * theta), -gamma * C],
                  [ga / 2 * d0, -ga / 2 * (1 + 1j * delta)]])
    rate = max(np.linalg.eigvals(m).real)
    traj = run_mbe(cfg)
    z = traj.outputs[0].tail(0.5)
    slope = np.polyfit(z.t, np.log(np.abs(z.samples)), 1)[0]
    assert slope == pytest.approx(rate, rel=0.01)


def test_adiabatic_elimination_matches_rate_equations():
    gamma, ga, gi, C, d0 = 1.0, 1000.0, 0.5, 1.0, -1.0
    cfg = MbeConfig(theta=(0.0,), delta=0.0, gamma=(gamma,), C=(C,), gamma_a=ga, gamma_i=gi,
                    d0_over_chi=d0, t_end=30.0, sample_stride=100)
    I0, D0 = 0.05, d0
    s = MbeState(np.array([[math.sqrt(I0)]]), np.array([[math.sqrt(I0) * D0]]), np.array([[D0]]))
    traj = run_mbe(cfg, s)

    def rates(t, y):
        I, D = y
        return [-gamma * I * (1 + 2 * C * D), -gi * (D - d0 + I * D)]

    z = traj.outputs[0]
    sol = solve_ivp(rates, (0, 30.0), [I0, D0], t_eval=z.t, rtol=1e-10, atol=1e-12)
    I_mbe = np.abs(z.samples) ** 2
    late = z.t > 15.0
    assert np.max(np.abs(I_mbe[late] - sol.y[0][late]) / sol.y[0][late]) < 0.01


def test_two_modes_share_packets_by_default():
    cfg = MbeConfig(theta=(-1.0, 1.0), gamma=(1.0, 1.0), C=(1.0, 1.0), spin_packets=4,
                    packet_spread=0.5)
    assert np.array_equal(cfg.coupling(), np.ones((2, 4)))
    d, w = cfg.packet_detunings()
    assert d == pytest.approx(-d[::-1]) and w.sum() == pytest.approx(1.0)


def test_disjoint_packets_go_to_nearest_mode():
    cfg = MbeConfig(theta=(1.0, -1.0), gamma=(1.0, 1.0), C=(1.0, 1.0), spin_packets=4,
                    packet_spread=0.5, packet_sharing="disjoint")
    a = cfg.coupling()
    assert np.array_equal(a, [[0, 0, 1, 1], [1, 1, 0, 0]])


def test_single_packet_grid_matches_homogeneous():
    # a uniform field on a ring behaves like the homogeneous model
    base = dict(theta=(0.2,), delta=0.1, d0_over_chi=-2.0, gamma_a=2.0, gamma_i=0.5,
                t_end=5.0, dt=0.01)
    s1 = MbeState(np.array([[0.1]]), np.array([[0.0]]), np.array([[-2.0]]))
    s8 = MbeState(np.full((1, 8), 0.1), np.zeros((1, 8)), np.full((1, 8), -2.0))
    a = run_mbe(MbeConfig(**base), s1).final
    b = run_mbe(MbeConfig(grid_points=8, c_eff=1.0, **base), s8).final
    assert np.max(np.abs(b.F - a.F[0, 0])) < 1e-12


def test_from_physical_uses_shared_scaling():
    p = default_physical_params()
    p = p.with_frame(p.omega_m[0])
    cfg = MbeConfig.from_physical(p, 1.0)
    assert cfg.theta[0] == 0.0
    assert cfg.C == pytest.approx(mode_cooperativities(p.g_m, p.gamma_m, 1.0))
    assert cfg.theta[1] == pytest.approx(2 * (p.omega_m[0] - p.omega_m[1]) / p.gamma_m[1])


def test_blow_up_is_reported():
    cfg = MbeConfig(gamma=(0.0,), C=(0.0,), gamma_a=0.0, gamma_i=0.0, t_end=1.0, dt=0.1)
    s = MbeState(np.array([[2e6]]), np.array([[0.0]]), np.array([[0.0]]))
    with pytest.raises(BlowUpError) as info:
        run_mbe(cfg, s)
    assert info.value.partial is not None and not info.value.partial.completed


def test_single_step_api():
    cfg = smooth_problem(dt=0.01)
    s = mbe_step(smooth_init(cfg), cfg)
    assert s.t == pytest.approx(0.01)
    assert s.F.shape == (1, 1)


def test_seeded_runs_are_reproducible():
    cfg = MbeConfig(d0_over_chi=-2.0, t_end=10.0)
    a = run_mbe(cfg, noise_state(cfg, seed=1)).outputs[0].samples
    b = run_mbe(cfg, noise_state(cfg, seed=1)).outputs[0].samples
    assert np.array_equal(a, b)


def test_no_bound_warning_on_physical_runs():
    cfg = MbeConfig(d0_over_chi=-2.0, gamma_a=2.0, gamma_i=0.5, t_end=50.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        traj = run_mbe(cfg)
    assert traj.d_bound_violations == 0
