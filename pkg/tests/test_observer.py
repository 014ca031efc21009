import dataclasses

import mpmath
import numpy as np
import pytest

from spmexp.numerics import RadialGrid, _sphere_rhs, electrolyte_rhs, radial_moment_integral, volume_average
from spmexp.observer import (Measurement, Mode, ObserverError, compute_backstepping_gains,
                             conservation_estimate, electrolyte_observer_rhs,
                             expansion_gradient_law, expansion_inversion_step, expansion_map,
                             expansion_regressor, initial_observer_state, make_gains,
                             negative_observer_rhs, observer_from_plant, observer_outputs,
                             positive_observer_rhs, step_observer, voltage_inversion_step,
                             voltage_map, voltage_regressor)
from spmexp.params import NEG, POS, Curve, MaterialCurves
from spmexp.plant import (initial_plant_state, intercalation_flux, plant_outputs, step_plant,
                          voltage_parts)

R = 5e-6
D = 2e-14


# backstepping gains


def test_gains_lambda_zero():
    g = RadialGrid(16, R)
    p_bar, p0 = compute_backstepping_gains(0.0, g, D)
    np.testing.assert_array_equal(p_bar, 0.0)
    assert p0 == 3 / (2 * R)


def test_gain_lambda_minus_one_at_centre():
    g = RadialGrid(16, R)
    p_bar, p0 = compute_backstepping_gains(-1.0, g, D)
    with mpmath.workdps(40):
        ref = D / (2 * R**2) * (mpmath.besseli(1, 1) + 2 * mpmath.besseli(2, 1))
    assert p_bar[0] == pytest.approx(float(ref), rel=1e-12)
    assert p0 == pytest.approx(4 / (2 * R), rel=1e-15)


def _kernel_oracle(lam, r):
    with mpmath.workdps(40):
        w = mpmath.mpf(lam) * (mpmath.mpf(r) ** 2 / mpmath.mpf(R) ** 2 - 1)
        if w == 0:
            bracket = mpmath.mpf(1) / 2 - mpmath.mpf(lam) / 4
        elif w > 0:
            z = mpmath.sqrt(w)
            bracket = mpmath.besseli(1, z) / z - 2 * lam * mpmath.besseli(2, z) / z**2
        else:
            s = mpmath.sqrt(-w)      # z = i s: I1(z)/z = J1(s)/s, I2(z)/z^2 = J2(s)/s^2
            bracket = mpmath.besselj(1, s) / s - 2 * lam * mpmath.besselj(2, s) / s**2
        return float(-lam * D / (2 * R**2) * bracket)


@pytest.mark.parametrize("lam", [-20.0, -3.0, 0.2])
def test_gain_profile_matches_oracle(lam):
    g = RadialGrid(16, R)
    p_bar, _ = compute_backstepping_gains(lam, g, D)
    assert np.all(np.isfinite(p_bar))
    ref = np.array([_kernel_oracle(lam, r) for r in g.r])
    np.testing.assert_allclose(p_bar, ref, rtol=1e-11)


def test_gain_series_limit_at_surface():
    g = RadialGrid(16, R)
    lam = -20.0
    p_bar, _ = compute_backstepping_gains(lam, g, D)
    assert p_bar[-1] == pytest.approx(-lam * D / (2 * R**2) * (0.5 - lam / 4), rel=1e-14)


def test_gain_lambda_limit():
    with pytest.raises(ObserverError, match="1/4"):
        compute_backstepping_gains(0.25, RadialGrid(16, R), D)


def _error_jacobian(cell, lam):
    """Linearized estimation-error dynamics of the positive observer with a perfect inversion."""
    gains = make_gains(cell, lam=lam)
    n = cell.grid_pos.n_nodes
    base = np.full(n, 2e4)
    f0 = positive_observer_rhs(base, 0.0, base[-1], gains, cell)
    J = np.empty((n, n))
    for k in range(n):
        e = base.copy()
        e[k] += 1.0
        # truth stays at base, so the innovation is base_ss - chat_ss
        J[:, k] = positive_observer_rhs(e, 0.0, base[-1], gains, cell) - f0
    return J


def test_gain_moves_error_spectrum(cell):
    scale = cell.p.D_s_pos / cell.p.R_p_pos**2
    slow0 = -np.max(np.linalg.eigvals(_error_jacobian(cell, 0.0)).real) / scale
    slow20 = -np.max(np.linalg.eigvals(_error_jacobian(cell, -20.0)).real) / scale
    assert slow0 > 0
    assert slow20 - slow0 >= 10.0


# regressors


def _random_obs(cell, rng):
    p = cell.p
    obs = initial_observer_state(cell, rng.uniform(0.1, 0.9))
    obs.chat_s_neg = obs.chat_s_neg * (1 + 0.05 * np.sin(np.linspace(0, 3, len(obs.chat_s_neg))) * rng.uniform(-1, 1))
    obs.chat_e = rng.uniform(800, 1200, len(obs.chat_e))
    meas = Measurement(V_t=3.8, T_b=rng.uniform(290, 310), dt_b=0.0,
                       I=rng.uniform(-2, 2) * p.one_c_current(), t=0.0)
    return obs, meas


def test_voltage_map_is_terminal_voltage(cell):
    rng = np.random.default_rng(11)
    for _ in range(10):
        obs, meas = _random_obs(cell, rng)
        h = voltage_map(obs, meas, cell)
        c = rng.uniform(0.3, 0.95) * cell.p.c_s_max_pos
        ref = voltage_parts(c, obs.chat_s_neg[-1], obs.chat_e, meas.I, meas.T_b, cell).V_t
        assert h(c) == pytest.approx(ref, abs=1e-12)


def test_voltage_regressor_matches_fd_oracle(cell):
    rng = np.random.default_rng(12)
    c_max = cell.p.c_s_max_pos
    for _ in range(10):
        obs, meas = _random_obs(cell, rng)
        c = rng.uniform(0.3, 0.95) * c_max
        d = 1e-4 * c_max
        ref_h = lambda v: voltage_parts(v, obs.chat_s_neg[-1], obs.chat_e, meas.I, meas.T_b, cell).V_t  # noqa: E731
        ref = (ref_h(c + d) - ref_h(c - d)) / (2 * d)
        assert voltage_regressor(c, obs, meas, cell) == pytest.approx(ref, rel=1e-6)


def test_expansion_regressor_matches_fd_oracle(cell):
    rng = np.random.default_rng(13)
    c_max = cell.p.c_s_max_neg
    g = cell.grid_neg
    for _ in range(10):
        obs, _ = _random_obs(cell, rng)
        profile = obs.chat_s_neg - volume_average(obs.chat_s_neg, g)
        c = rng.uniform(0.15, 0.85) * c_max
        d = 1e-4 * c_max
        ref_h = lambda v: radial_moment_integral(cell.m.dV_neg(profile + v), g)  # noqa: E731
        ref = (ref_h(c + d) - ref_h(c - d)) / (2 * d)
        assert expansion_regressor(c, obs, cell) == pytest.approx(ref, rel=1e-6)
        assert expansion_map(obs, cell)(c) == pytest.approx(ref_h(c), rel=1e-12)


def test_affine_strain_regressor(cell):
    a, b = 1e-3, 2.5e-6
    xs = np.linspace(-4e4, 8e4, 9)
    affine = Curve(xs, a + b * xs)
    c2 = dataclasses.replace(cell, m=MaterialCurves(cell.m.U_pos, cell.m.U_neg, cell.m.dV_pos, affine))
    obs = initial_observer_state(c2, 0.4)
    obs.chat_s_neg = obs.chat_s_neg + np.linspace(-500, 800, len(obs.chat_s_neg))
    phi = expansion_regressor(12000.0, obs, c2)
    assert phi == pytest.approx(b * cell.p.R_p_neg / 3, rel=1e-9)


def test_voltage_fixed_point_exact(cell):
    rng = np.random.default_rng(14)
    obs, meas = _random_obs(cell, rng)
    gains = make_gains(cell)
    check = 0.6 * cell.p.c_s_max_pos
    meas = dataclasses.replace(meas, V_t=voltage_map(obs, meas, cell)(check))
    out, clamped = voltage_inversion_step(check, meas, obs, cell, gains, 0.5)
    assert out == check and not clamped


def test_expansion_fixed_point_exact(cell):
    rng = np.random.default_rng(15)
    obs, _ = _random_obs(cell, rng)
    gains = make_gains(cell)
    check = 0.5 * cell.p.c_s_max_neg
    target = expansion_map(obs, cell)(check)
    out, clamped = expansion_gradient_law(check, target, obs, cell, gains, 0.5)
    assert out == check and not clamped


def test_voltage_inversion_converges(cell):
    rng = np.random.default_rng(16)
    obs, meas = _random_obs(cell, rng)
    gains = make_gains(cell)
    c_true = 0.6 * cell.p.c_s_max_pos
    meas = dataclasses.replace(meas, V_t=voltage_map(obs, meas, cell)(c_true))
    c = 0.62 * cell.p.c_s_max_pos
    for _ in range(400):
        c, _ = voltage_inversion_step(c, meas, obs, cell, gains, 0.5)
    assert c == pytest.approx(c_true, rel=1e-6)


def test_expansion_inversion_needs_mode_and_compliance(cell):
    obs = initial_observer_state(cell, 0.3)
    meas = Measurement(3.7, 298.15, 1e-5, 1.0)
    with pytest.raises(ObserverError, match="V\\+EXP"):
        expansion_inversion_step(obs, meas, cell, make_gains(cell, Mode.V_ONLY), 0.5)
    c2 = dataclasses.replace(cell, p=dataclasses.replace(cell.p, kappa_b=0.0))
    with pytest.raises(ObserverError, match="expansion inversion undefined"):
        expansion_inversion_step(obs, meas, c2, make_gains(c2), 0.5)


def test_inversion_clamps_flagged(cell):
    obs = initial_observer_state(cell, 0.3)
    meas = Measurement(99.0, 298.15, 0.0, 0.0)   # unreachable voltage
    gains = dataclasses.replace(make_gains(cell), gamma_v=1e13)
    c, clamped = voltage_inversion_step(0.5 * cell.p.c_s_max_pos, meas, obs, cell, gains, 0.5)
    assert clamped
    assert 0 < c < cell.p.c_s_max_pos


# PDE observers


def test_positive_zero_innovation_is_plant(cell):
    gains = make_gains(cell)
    c = np.linspace(3e4, 2.5e4, cell.grid_pos.n_nodes)
    I = 3.1
    ref = _sphere_rhs(c, cell.grid_pos, cell.p.D_s_pos, intercalation_flux(I, POS, cell.p))
    np.testing.assert_array_equal(positive_observer_rhs(c, I, c[-1], gains, cell), ref)


def test_positive_lambda_zero_boundary_only(cell):
    gains = make_gains(cell, lam=0.0)
    g = cell.grid_pos
    c = np.full(g.n_nodes, 2e4)
    innov = 50.0
    diff = positive_observer_rhs(c, 0.0, c[-1] + innov, gains, cell) - positive_observer_rhs(c, 0.0, c[-1], gains, cell)
    np.testing.assert_array_equal(diff[:-1], 0.0)
    # D dc/dr = D p0 innov at the surface, into the particle
    assert diff[-1] == pytest.approx(g.R_p**2 * cell.p.D_s_pos * 3 / (2 * g.R_p) * innov / g.volumes[-1], rel=1e-12)


def test_positive_surface_moves_toward_inversion(cell):
    gains = make_gains(cell)
    obs = initial_observer_state(cell, 0.5)
    target = obs.chat_s_pos[-1] + 200.0
    c = obs.chat_s_pos
    from spmexp.numerics import rk4_step
    prev = c[-1]
    for _ in range(10):
        hold = float(c[-1])
        c = rk4_step(c, lambda v: positive_observer_rhs(v, 0.0, target, gains, cell, hold), 0.5)
        assert prev < c[-1] < target
        prev = c[-1]


def test_electrolyte_observer_is_plant_operator(cell):
    c = np.random.default_rng(5).uniform(800, 1200, cell.grid_e.n_nodes)
    np.testing.assert_array_equal(electrolyte_observer_rhs(c, 2.0, cell),
                                  electrolyte_rhs(c, 2.0, cell.p, cell.grid_e, cell.e_op))


def test_electrolyte_observer_keeps_offset(cell):
    from spmexp.plant import advance_electrolyte
    c = np.random.default_rng(6).uniform(800, 1200, cell.grid_e.n_nodes)
    a, b = c.copy(), c + 25.0
    for _ in range(200):
        a = advance_electrolyte(a, 4.0, 0.5, cell)
        b = advance_electrolyte(b, 4.0, 0.5, cell)
    np.testing.assert_allclose(b - a, 25.0, rtol=1e-9)


def test_negative_zero_innovation_is_plant(cell):
    c = np.linspace(5e3, 6e3, cell.grid_neg.n_nodes)
    I = 3.1
    ref = _sphere_rhs(c, cell.grid_neg, cell.p.D_s_neg, intercalation_flux(I, NEG, cell.p))
    avg = volume_average(c, cell.grid_neg)
    np.testing.assert_array_equal(negative_observer_rhs(c, I, avg, 0.01, cell), ref)


def test_uniform_injection_keeps_profile(cell):
    from spmexp.numerics import rk4_step
    g = cell.grid_neg
    c = np.linspace(5e3, 6e3, g.n_nodes) ** 1.01
    avg = volume_average(c, g)
    I = 4.0
    on = rk4_step(c, lambda v: negative_observer_rhs(v, I, avg + 300.0, 0.01, cell, avg), 0.5)
    off = rk4_step(c, lambda v: negative_observer_rhs(v, I, avg, 0.01, cell, avg), 0.5)
    prof_on = on - volume_average(on, g)
    prof_off = off - volume_average(off, g)
    np.testing.assert_allclose(prof_on, prof_off, rtol=0, atol=1e-12 * avg)
    assert volume_average(on, g) - volume_average(off, g) == pytest.approx(0.01 * 300 * 0.5, rel=1e-9)


def test_conservation_estimate(cell):
    obs = initial_observer_state(cell, 0.2)
    assert conservation_estimate(obs, cell) == obs.c_ref_neg
    p = cell.p
    obs.chat_s_pos = obs.chat_s_pos - 1000.0
    expect = obs.c_ref_neg + p.eps_s_pos * p.L_pos / (p.eps_s_neg * p.L_neg) * 1000.0
    assert conservation_estimate(obs, cell) == pytest.approx(expect, rel=1e-12)


# full cascade


def _track(cell, mode, I, pre=40, steps=100, **gain_kw):
    """Observer started at a plant state; worst relative error against truth over ``steps``."""
    s = initial_plant_state(cell, 0.3)
    for _ in range(pre):                    # non-uniform profiles
        s, _ = step_plant(s, cell.p.one_c_current(), 0.5, cell)
    obs = observer_from_plant(cell, s)
    gains = make_gains(cell, mode, **gain_kw)
    worst = 0.0
    for k in range(steps):
        o = plant_outputs(s, I, cell)
        meas = Measurement(o.V_t, o.T_b, o.dt_b, I, 0.5 * k)
        obs = step_observer(obs, meas, gains, cell, 0.5)
        s, _ = step_plant(s, I, 0.5, cell)
        for est, tru in ((obs.chat_s_pos, s.c_s_pos), (obs.chat_s_neg, s.c_s_neg), (obs.chat_e, s.c_e)):
            worst = max(worst, float(np.max(np.abs(est / tru - 1))))
    return worst, obs


# inversion converged within every step: gamma phi^2 dt/n_sub ~ 0.45 for voltage
FAST = {"gamma_v": 1e11, "gamma_e": 1e24}


@pytest.mark.parametrize("mode", list(Mode))
def test_observer_tracks_truth_under_load(cell, mode):
    worst, obs = _track(cell, mode, cell.p.one_c_current(), **FAST)
    assert worst < 1e-6
    assert not obs.clamped_v and not obs.clamped_e


@pytest.mark.parametrize("mode", list(Mode))
def test_observer_exact_at_rest(cell, mode):
    worst, _ = _track(cell, mode, 0.0, pre=0)
    assert worst == 0.0


def test_operating_gain_lag_shrinks_with_gain(cell):
    I = cell.p.one_c_current()
    slow, _ = _track(cell, Mode.V_ONLY, I)
    mid, _ = _track(cell, Mode.V_ONLY, I, gamma_v=1e10)
    assert 1e-4 < slow < 1e-2
    assert mid < slow / 100


def test_observer_outputs_at_truth(cell):
    s = initial_plant_state(cell, 0.4)
    obs = observer_from_plant(cell, s)
    o = plant_outputs(s, 2.0, cell)
    e = observer_outputs(obs, 2.0, s.T_b, cell)
    assert e.V_t == o.V_t and e.dt_b == o.dt_b and e.soc == o.soc
