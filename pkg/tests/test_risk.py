from importlib.resources import files

import numpy as np
import pytest
from conftest import quiet_ergodic
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import backward_reference, gaussian_entropic

from ergorisk.grid import Grid1D
from ergorisk.model import (CappedLinearTheta, ConstantTheta, ModelSpec, OUDrift, PayoffSpec,
                            estimate_lipschitz_constants, figure_model, figure_payoff, parse_config)
from ergorisk.risk import (auxiliary_process_means, driver_g, forward_entropic_risk,
                           hedging_from_fields, hedging_strategy, optimal_position_with_risk,
                           q_constant, risk_bound_checks,
                           solve_risk_bsde, time_consistency_check)
from ergorisk.sde import McConfig


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 4))
def test_driver_g_vanishes_at_zero_zbar(v, z1, z2, gamma):
    m = ModelSpec(gamma=gamma, theta=CappedLinearTheta(3.0))
    assert driver_g(m, v, np.array([z1, z2]), np.zeros(2)) == pytest.approx(0.0, abs=1e-12)


def test_driver_g_examples():
    line = ModelSpec(gamma=2.0, theta=ConstantTheta(1.0))
    assert driver_g(line, 0.0, np.array([0.0, 1.0]), np.array([1.0, 1.0])) == pytest.approx(1.0)
    full = ModelSpec(theta=ConstantTheta(1.0), constraint="full_space")
    assert driver_g(full, 0.0, np.array([0.7, -0.2]), np.array([2.0, 3.0])) == pytest.approx(-2.0)


@given(st.floats(-5, 5), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(0.2, 4))
def test_driver_g_line_form(v, z1, z2, zb1, zb2, gamma):
    m = ModelSpec(gamma=gamma, theta=CappedLinearTheta(2.0))
    th = max(2.0 - abs(v), 0.0)
    expected = -th * zb1 + z2 * zb2 + 0.5 * gamma * zb2**2
    got = driver_g(m, v, np.array([z1, z2]), np.array([zb1, zb2]))
    assert got == pytest.approx(expected, abs=1e-9 * (1 + zb2**2 + z2**2))


def test_coarse_instance_matches_dense_reference(mixed_model):
    grid = Grid1D(-2.0, 2.0, 11)
    erg = quiet_ergodic(mixed_model, grid)
    payoff = PayoffSpec("put_like", K1=1.0)
    T, n = 0.8, 8
    surf = solve_risk_bsde(mixed_model, erg, payoff, T, time_steps=n)
    k1, k2 = mixed_model.kappa
    g = mixed_model.gamma
    vi = grid.nodes[1:-1]
    th = np.maximum(3.0 - np.abs(vi), 0.0)
    z2 = erg.z[1:-1, 1]

    def N(p):
        return -th * k1 * p + z2 * k2 * p + 0.5 * g * k2**2 * p**2

    ref = backward_reference(grid.nodes, mixed_model.diffusion, -0.4 * grid.nodes, N,
                             payoff(grid.nodes), T, n)
    np.testing.assert_allclose(surf.levels, ref, atol=1e-10, rtol=0)


@pytest.mark.parametrize("v0", [-3.0, 0.0, 2.0])
def test_gaussian_case_matches_oracle(v0):
    m = ModelSpec(gamma=1.0, kappa=(0.6, 0.8), eta=OUDrift(0.5), theta=ConstantTheta(0.5))
    grid = Grid1D(-20.0, 20.0, 801)
    erg = quiet_ergodic(m, grid)
    surf = solve_risk_bsde(m, erg, PayoffSpec("linear"), 3.0, dt=0.02)
    ref = gaussian_entropic(0.5, (0.6, 0.8), 1.0, 0.5, v0, 3.0)
    assert forward_entropic_risk(surf, v0, 0.0) == pytest.approx(ref, abs=1e-3)


@pytest.mark.parametrize("c", [0.0, 2.0, -1.5])
def test_constant_payoff_is_reproduced(mixed_model, mixed_ergodic_small, c):
    surf = solve_risk_bsde(mixed_model, mixed_ergodic_small, PayoffSpec("constant", c=c), 2.0, dt=0.05)
    np.testing.assert_allclose(surf.levels, c, atol=1e-12, rtol=0)
    assert forward_entropic_risk(surf, 1.3, 0.7) == pytest.approx(c, abs=1e-12)
    np.testing.assert_allclose(hedging_strategy(mixed_model, mixed_ergodic_small, surf,
                                                np.array([-1.0, 0.0, 4.0]), 1.0), 0.0, atol=1e-12)


def test_terminal_slice_is_exact(mixed_model, mixed_ergodic_small, small_grid):
    payoff = figure_payoff()
    surf = solve_risk_bsde(mixed_model, mixed_ergodic_small, payoff, 1.0, dt=0.05)
    np.testing.assert_array_equal(surf.slice_at(1.0), payoff(small_grid.nodes))
    with pytest.raises(ValueError):
        surf.value(0.0, 1.5)
    with pytest.raises(ValueError):
        surf.value(12.0, 0.5)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_anti_positivity(mixed_model, mixed_ergodic_small, sign):
    payoff = sign * figure_payoff()(mixed_ergodic_small.grid.nodes)
    u = solve_risk_bsde(mixed_model, mixed_ergodic_small, payoff, 3.0, dt=0.05).slice_at(0.0)
    assert np.all(sign * u >= -1e-12)


@pytest.mark.parametrize("w", [0.25, 0.5, 0.75])
def test_convexity(mixed_model, mixed_ergodic_small, w):
    v = mixed_ergodic_small.grid.nodes
    g1 = np.maximum(3.0 - np.abs(v), 0.0)
    g2 = 0.5 * np.tanh(v) - 1.0
    solve = lambda g: solve_risk_bsde(mixed_model, mixed_ergodic_small, g, 2.0, dt=0.05).slice_at(0.0)  # noqa: E731
    mix = solve(w * g1 + (1 - w) * g2)
    assert np.all(mix <= w * solve(g1) + (1 - w) * solve(g2) + 1e-9)


def test_cash_translativity(mixed_model, mixed_ergodic_small):
    v = mixed_ergodic_small.grid.nodes
    g = np.maximum(3.0 - np.abs(v), 0.0)
    a = solve_risk_bsde(mixed_model, mixed_ergodic_small, g, 2.0, dt=0.05).slice_at(0.0)
    b = solve_risk_bsde(mixed_model, mixed_ergodic_small, g + 1.25, 2.0, dt=0.05).slice_at(0.0)
    np.testing.assert_allclose(b - a, 1.25, atol=1e-10)


def test_time_consistency_put(figure_ergodic):
    m = figure_model(2)
    h, dt = figure_ergodic[2].grid.h, 0.01
    gap = time_consistency_check(m, figure_ergodic[2], figure_payoff(), 10.0, 5.0, dt=dt)
    assert gap < 5 * h**2 + 5 * dt**2


def test_time_consistency_trivial(mixed_model, mixed_ergodic_small):
    assert time_consistency_check(mixed_model, mixed_ergodic_small, PayoffSpec("constant", c=2.0),
                                  2.0, 1.0, dt=0.05) == 0.0
    assert time_consistency_check(mixed_model, mixed_ergodic_small, figure_payoff(), 2.0, 2.0,
                                  dt=0.05) == 0.0
    with pytest.raises(ValueError):
        time_consistency_check(mixed_model, mixed_ergodic_small, figure_payoff(), 2.0, 0.0)


@settings(max_examples=80, deadline=None)
@given(st.floats(-5, 5), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
       st.sampled_from(["first_coordinate_line", "full_space"]))
def test_hedging_projection_properties(v, z1, z2, zb1, zb2, constraint):
    m = ModelSpec(gamma=1.5, kappa=(0.6, 0.8), theta=CappedLinearTheta(3.0), constraint=constraint)
    zbar = np.array([zb1, zb2])
    a = hedging_from_fields(m, v, np.array([z1, z2]), zbar)
    assert np.linalg.norm(a) <= np.linalg.norm(zbar) + 1e-12
    if constraint == "first_coordinate_line":
        assert a[1] == 0.0
    np.testing.assert_allclose(hedging_from_fields(m, v, np.array([z1, z2]), np.zeros(2)), 0.0)


def test_hedging_on_line_is_first_coordinate(mixed_model, mixed_ergodic_small):
    surf = solve_risk_bsde(mixed_model, mixed_ergodic_small, figure_payoff(), 2.0, dt=0.05)
    v = np.linspace(-5, 5, 11)
    a = hedging_strategy(mixed_model, mixed_ergodic_small, surf, v, 0.5)
    assert a.shape == (11, 2)
    np.testing.assert_array_equal(a[:, 1], 0.0)
    # on the line the projection keeps the first coordinate, so alpha1 = kappa1 u_v
    grad = np.interp(v, mixed_ergodic_small.grid.nodes, surf.gradient_at(0.5))
    np.testing.assert_allclose(a[:, 0], 0.6 * grad, atol=1e-12)


def test_bounds_hold_on_dissipative_preset():
    cfg = parse_config((files("ergorisk.configs") / "bounds.cfg").read_text())
    m = estimate_lipschitz_constants(cfg.model, cfg.grid)
    assert m.c_eta > m.c_v
    erg = quiet_ergodic(m, cfg.grid)
    surf = solve_risk_bsde(m, erg, cfg.payoff, 5.0, dt=0.02)
    checks = risk_bound_checks(m, erg, surf, cfg.payoff)
    assert all(c.applicable and c.ok for c in checks)
    assert q_constant(m, 1.0) == checks[0].bound


def test_bounds_not_applicable_on_figure_preset(figure_ergodic):
    m = figure_model(3)
    surf = solve_risk_bsde(m, figure_ergodic[3], figure_payoff(), 1.0, dt=0.05)
    checks = risk_bound_checks(m, figure_ergodic[3], surf, figure_payoff())
    assert all(not c.applicable and c.ok for c in checks)


def test_supermartingale_certificate(mixed_model, mixed_ergodic_small):
    surf = solve_risk_bsde(mixed_model, mixed_ergodic_small, PayoffSpec("put_like", K1=3.0), 1.0,
                           dt=0.01)
    cfg = McConfig(20000, 100, seed=23)
    flat = auxiliary_process_means(mixed_model, mixed_ergodic_small, surf, 0.5, cfg)
    assert flat.max_drift_in_stderr() < 4.0

    def perturbed(v, t):
        return optimal_position_with_risk(mixed_model, mixed_ergodic_small, surf, v, t) + [0.4, 0.0]

    bumped = auxiliary_process_means(mixed_model, mixed_ergodic_small, surf, 0.5, cfg, strategy=perturbed)
    steps = np.diff(bumped.mean)
    se = np.sqrt(bumped.stderr[1:] ** 2 + bumped.stderr[:-1] ** 2)
    assert np.all(steps <= 3 * se)
    assert bumped.mean[-1] < bumped.mean[0]


def test_scheme_convergence_order():
    m = figure_model(2)
    us = []
    for n, dt in [(601, 0.04), (1201, 0.02), (2401, 0.01)]:
        g = Grid1D(-30.0, 30.0, n)
        us.append(solve_risk_bsde(m, quiet_ergodic(m, g), figure_payoff(), 5.0, dt=dt).slice_at(0.0))
    d1 = np.abs(us[1][::2] - us[0]).max()
    d2 = np.abs(us[2][::2] - us[1]).max()
    assert d1 / d2 == pytest.approx(4.0, rel=0.15)


def test_validation(mixed_model, mixed_ergodic_small):
    with pytest.raises(ValueError):
        solve_risk_bsde(mixed_model, mixed_ergodic_small, figure_payoff(), 0.0)
    with pytest.raises(ValueError):
        solve_risk_bsde(mixed_model, mixed_ergodic_small, figure_payoff(), 1.0, grid=Grid1D(-5, 5, 101))


def test_restrict_matches_direct_solve(mixed_model, mixed_ergodic_small):
    long = solve_risk_bsde(mixed_model, mixed_ergodic_small, figure_payoff(), 3.0, dt=0.05)
    short = solve_risk_bsde(mixed_model, mixed_ergodic_small, figure_payoff(), 1.0, dt=0.05)
    np.testing.assert_allclose(long.restrict(1.0).slice_at(0.0), short.slice_at(0.0), atol=1e-13)
    with pytest.raises(ValueError):
        long.restrict(1.03)
