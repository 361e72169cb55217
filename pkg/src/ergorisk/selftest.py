"""Exact identities that every build must reproduce.

Each check is cheap (small grids, short horizons) and either returns
quietly or raises ``AssertionError``.  :func:`run_selftest` runs them all.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .classical import classical_risk_surfaces, parity_check, solve_classical
from .dual import g_star, optimal_density
from .ergodic import driver_f, forward_performance, solve_ergodic, strategy_from_z
from .example import classical_closed_form, forward_closed_form, measure_gap_field
from .grid import Grid1D, d1, d2, solve_tridiag
from .longrun import fit_decay, hedging_decay, maturity_sweep, synthetic_sweep
from .model import (CappedLinearTheta, ConfigError, ConstantTheta, ModelSpec, OUDrift, PayoffSpec,
                    dist2_pi, estimate_lipschitz_constants, parse_config, project_pi)
from .risk import driver_g, hedging_from_fields, solve_risk_bsde, time_consistency_check
from .sde import McConfig, contraction_diagnostic, simulate_factor

SMALL = Grid1D(-10.0, 10.0, 201)
DT = 0.05


def _const_model(constraint="first_coordinate_line", kappa=(0.6, 0.8)):
    return ModelSpec(gamma=1.0, kappa=kappa, eta=OUDrift(0.5), theta=ConstantTheta(0.5),
                     constraint=constraint)


def _close(a, b, tol=1e-12):
    assert np.all(np.abs(np.asarray(a) - np.asarray(b)) <= tol), f"{a} != {b}"


def check_theta():
    _close(ConstantTheta(0.5)(3.0), 0.5)
    _close(CappedLinearTheta(10.0)(12.0), 0.0)


def check_projection():
    line = _const_model()
    full = _const_model("full_space")
    w = np.array([1.2, -0.3])
    _close(project_pi(line, w), [1.2, 0.0])
    _close(dist2_pi(line, w), 0.09)
    _close(project_pi(full, w), w)
    _close(dist2_pi(full, w), 0.0)
    _close(project_pi(line, np.zeros(2)), [0.0, 0.0])


def check_constant_theta_cv():
    m = estimate_lipschitz_constants(_const_model(), SMALL)
    _close(m.c_v, 0.0)


def check_paths_reproducible():
    cfg = McConfig(64, 20, seed=11)
    a = simulate_factor(_const_model(), 1.0, 1.0, cfg).terminal
    b = simulate_factor(_const_model(), 1.0, 1.0, cfg).terminal
    assert np.array_equal(a, b)


def check_ou_contraction():
    m = ModelSpec(eta=OUDrift(0.1))
    cfg = McConfig(32, 100, seed=3)
    assert contraction_diagnostic(m, 5.0, 15.0, 5.0, cfg) <= 1 + 1e-9
    assert contraction_diagnostic(m, 5.0 + 1e-8, 5.0, 5.0, cfg) <= 1 + 1e-9


def check_finite_differences():
    v = SMALL.nodes
    _close(d1(v, SMALL.h)[1:-1], 1.0, 1e-10)
    _close(d2(v**2, SMALL.h)[1:-1], 2.0, 1e-8)
    rhs = np.arange(5.0)
    _close(solve_tridiag(np.zeros(5), np.ones(5), np.zeros(5), rhs), rhs)


def check_driver_f():
    full = ModelSpec(theta=ConstantTheta(1.0), constraint="full_space")
    _close(driver_f(full, 0.3, np.zeros(2)), -0.5)
    zero = ModelSpec(theta=ConstantTheta(0.0))
    _close(driver_f(zero, 0.3, np.zeros(2)), 0.0)


def check_constant_ergodic():
    sol = solve_ergodic(_const_model(), SMALL, warn=False)
    _close(sol.lam, -0.125, 1e-9)
    _close(sol.y.values, 0.0, 1e-9)
    _close(sol.z, 0.0, 1e-9)
    _close(forward_performance(sol, 0.0, 0.0, 0.0), -1.0)


def check_strategy():
    line = ModelSpec(gamma=2.0, theta=ConstantTheta(1.0))
    _close(strategy_from_z(line, 0.0, np.array([0.2, -0.1])), [0.6, 0.0])
    full = ModelSpec(theta=ConstantTheta(1.0), constraint="full_space")
    _close(strategy_from_z(full, 0.0, np.zeros(2)), [1.0, 0.0])


def check_driver_g():
    m = _const_model()
    _close(driver_g(m, 0.1, np.array([0.3, -0.7]), np.zeros(2)), 0.0)
    full = ModelSpec(theta=ConstantTheta(1.0), constraint="full_space")
    _close(driver_g(full, 0.1, np.array([0.3, 0.4]), np.array([2.0, 3.0])), -2.0)


def _const_ergodic():
    return solve_ergodic(_const_model(), SMALL, warn=False)


def check_constant_payoff_surface():
    m = _const_model()
    erg = _const_ergodic()
    s = solve_risk_bsde(m, erg, PayoffSpec("constant", c=2.0), 1.0, dt=DT)
    _close(s.u, 2.0, 1e-10)
    z = solve_risk_bsde(m, erg, PayoffSpec("constant", c=0.0), 1.0, dt=DT)
    _close(z.u, 0.0)
    a = hedging_from_fields(m, SMALL.nodes, erg.z, z.zbar_at(0.0))
    _close(a, 0.0)


def check_hedging_projection():
    m = _const_model()
    rng = np.random.default_rng(0)
    v = rng.uniform(-5, 5, 200)
    z = rng.normal(size=(200, 2))
    zbar = rng.normal(size=(200, 2))
    a = hedging_from_fields(m, v, z, zbar)
    _close(a[:, 1], 0.0)
    assert np.all(np.linalg.norm(a, axis=1) <= np.linalg.norm(zbar, axis=1) + 1e-12)


def check_time_consistency_trivial():
    m = _const_model()
    erg = _const_ergodic()
    _close(time_consistency_check(m, erg, PayoffSpec("constant", c=1.5), 1.0, 0.5, dt=DT), 0.0, 1e-10)
    _close(time_consistency_check(m, erg, PayoffSpec(), 1.0, 1.0, dt=DT), 0.0)


def check_conjugate():
    m = ModelSpec(gamma=1.0, theta=ConstantTheta(0.3))
    _close(g_star(m, 0.0, np.array([1.0, 0.0]), np.array([-0.3, 2.0])), 2.0)
    q0 = ModelSpec(gamma=1.0, theta=ConstantTheta(0.0))
    z, zbar = np.zeros(2), np.array([0.0, 1.0])
    q = optimal_density(q0, 0.0, z, zbar)
    _close(q, [0.0, 1.0])
    _close(driver_g(q0, 0.0, z, zbar), 0.5)
    _close(g_star(q0, 0.0, z, q), 0.5)
    _close(zbar @ q, 1.0)


def check_classical_constant():
    m = _const_model()
    T = 1.0
    P = solve_classical(m, lambda v: np.full_like(v, 3.0), T, SMALL, dt=DT)
    expect = 3.0 - 0.5 * 0.25 * (T - P.times) / m.gamma
    _close(P.u, expect[:, None], 1e-10)
    r = classical_risk_surfaces(m, PayoffSpec("constant", c=2.0), T, SMALL, dt=DT)
    _close(r.slice_at(0.0), 2.0, 1e-10)
    r0 = classical_risk_surfaces(m, PayoffSpec("constant", c=0.0), T, SMALL, dt=DT)
    _close(r0.slice_at(0.0), 0.0)


def check_parity_zero():
    m = _const_model()
    _close(parity_check(m, _const_ergodic(), PayoffSpec("constant", c=0.0), 1.0, dt=DT), 0.0)


def check_closed_form_constant():
    m = _const_model()
    erg = _const_ergodic()
    g = PayoffSpec("constant", c=1.25)
    cfg = McConfig(64, 10, seed=1)
    assert forward_closed_form(m, erg, g, 1.0, 0.0, cfg).mean == 1.25
    P0 = solve_classical(m, np.zeros(SMALL.n_nodes), 1.0, SMALL, dt=DT)
    assert classical_closed_form(m, P0, g, 1.0, 0.0, cfg).mean == 1.25
    _close(measure_gap_field(m, erg, P0, 0.0), 0.0, 1e-10)


def check_longrun_trivial():
    T = np.arange(1.0, 31.0)
    fit = fit_decay(synthetic_sweep(T, 1.0 + 3.0 * np.exp(-0.2 * T), L=1.0))
    assert abs(fit.rate - 0.2) < 1e-6, fit
    assert fit_decay(synthetic_sweep(T, np.full(len(T), 0.7))).degenerate
    m = _const_model()
    erg = _const_ergodic()
    g = PayoffSpec("constant", c=0.4)
    sw = maturity_sweep(m, erg, g, (1.0, 2.0), (1.0, 2.0, 3.0), SMALL, dt=DT)
    _close(sw.forward, 0.4, 1e-10)
    assert sw.fit.degenerate
    h = hedging_decay(m, erg, g, 1.0, 0.5, (1.0, 2.0), McConfig(16, 10, seed=2), dt=DT)
    assert np.all(h.estimates == 0.0)


def check_config_errors():
    try:
        parse_config("gamma = 1\nbogus = 3\n")
    except ConfigError as exc:
        assert exc.line == 2
    else:
        raise AssertionError("unknown key accepted")
    try:
        parse_config("gamma 1\n")
    except ConfigError as exc:
        assert exc.line == 1
    else:
        raise AssertionError("malformed line accepted")


CHECKS: dict[str, Callable[[], None]] = {
    name[len("check_"):]: fn for name, fn in sorted(globals().items()) if name.startswith("check_")
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def run_selftest() -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fn()
            out.append(CheckResult(name, True))
        except Exception as exc:  # report, keep going
            out.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return out
