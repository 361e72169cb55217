"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""
import json
import time
from dataclasses import replace
from importlib.resources import files

import numpy as np
import pytest
from oracles import gaussian_entropic

from ergorisk.classical import classical_risk_surfaces, parity_report, solve_classical
from ergorisk.cli import main as cli_main
from ergorisk.dual import (dual_gap_mc, duality_defect, g_bounds, g_star, g_star_lower_bound,
                           optimal_density)
from ergorisk.ergodic import gradient_bound_check, solve_ergodic
from ergorisk.example import classical_closed_form, forward_closed_form, gaussian_oracle
from ergorisk.grid import Grid1D
from ergorisk.longrun import run_figures
from ergorisk.model import (ConstantTheta, PayoffSpec, estimate_lipschitz_constants, parse_config)
from ergorisk.risk import driver_g, risk_bound_checks, solve_risk_bsde, time_consistency_check
from ergorisk.sde import McConfig

SEED = 2026
PRESETS = ("default", "gaussian", "bounds")


def preset(name):
    return parse_config((files("ergorisk.configs") / f"{name}.cfg").read_text())


def scheme_tolerance(grid, dt):
    return 5 * grid.h**2 + 5 * dt**2


# ---------------------------------------------------------------------------


def test_ac1_ergodic_constant_theta(acceptance):
    cfg = preset("default")
    model = replace(cfg.model, theta=ConstantTheta(0.5))
    t0 = time.perf_counter()
    sol = solve_ergodic(model, cfg.grid, warn=False)
    secs = time.perf_counter() - t0
    err = abs(sol.lam + 0.125)
    ysup = np.abs(sol.y.values).max()
    zsup = np.abs(sol.z).max()
    ok = err <= 1e-6 and ysup <= 1e-6 and zsup <= 1e-6 and secs < 5
    acceptance("AC1", ok, f"|lambda + 0.125| = {err:.1e}, |y| = {ysup:.1e}, |z| = {zsup:.1e}, {secs:.2f}s")
    assert ok


def test_ac2_gaussian_oracle(acceptance):
    cfg = preset("gaussian")
    m = cfg.model
    T, v0 = 5.0, 1.0
    t0 = time.perf_counter()
    erg = solve_ergodic(m, cfg.grid, warn=False)
    surf = solve_risk_bsde(m, erg, cfg.payoff, T, dt=cfg.dt)
    starts = np.array([-5.0, 0.0, 1.0, 5.0])
    closed = np.array([gaussian_oracle(m, x, T) for x in starts])
    pde_err = np.abs(surf.value(starts, 0.0) - closed).max()
    ref = gaussian_entropic(m.eta.alpha, m.kappa, m.gamma, m.theta.theta0, v0, T)
    mc = forward_closed_form(m, erg, cfg.payoff, T, v0,
                             McConfig.for_horizon(T, 0.02, n_paths=100_000, seed=SEED))
    secs = time.perf_counter() - t0
    z = mc.z_score(gaussian_oracle(m, v0, T))
    ok = pde_err <= 1e-3 and abs(z) <= 3 and secs < 30
    acceptance("AC2", ok, f"PDE vs closed form {pde_err:.1e}; MC z-score {z:+.2f} at 1e5 paths; "
                          f"closed form vs moment ODE {abs(ref - closed[2]):.1e}; {secs:.1f}s")
    assert ok


def test_ac3_cross_route(acceptance):
    cfg = preset("default")
    m = cfg.model
    assert m.kappa == (0.0, 1.0)
    v0s = (5.0, 7.5, 10.0, 12.5, 15.0)
    Ts = (5.0, 10.0, 20.0)
    t0 = time.perf_counter()
    erg = solve_ergodic(m, cfg.grid, warn=False)
    fwd = solve_risk_bsde(m, erg, cfg.payoff, max(Ts), dt=cfg.dt)
    cls = classical_risk_surfaces(m, cfg.payoff, max(Ts), cfg.grid, dt=cfg.dt)
    worst_f = worst_c = 0.0
    for v0 in v0s:
        ests = forward_closed_form(m, erg, cfg.payoff, max(Ts), v0,
                                   McConfig.for_horizon(max(Ts), 0.01, n_paths=50_000, seed=SEED),
                                   record_T=Ts)
        for T in Ts:
            worst_f = max(worst_f, abs(ests[T].z_score(fwd.restrict(T).value(v0, 0.0))))
            c = classical_closed_form(m, cls.zero, cfg.payoff, T, v0,
                                      McConfig.for_horizon(T, 0.01, n_paths=50_000, seed=SEED))
            worst_c = max(worst_c, abs(c.z_score(cls.restrict(T).value(v0, 0.0))))
    secs = time.perf_counter() - t0
    ok = worst_f <= 3 and worst_c <= 3 and secs < 300
    acceptance("AC3", ok, f"max |z| forward {worst_f:.2f}, classical {worst_c:.2f} "
                          f"over 15 (v0, T) cells; {secs:.0f}s")
    assert ok


def test_ac4_parity(acceptance):
    cfg = preset("default")
    m = cfg.model
    res = []
    for grid, dt in ((cfg.grid, cfg.dt), (cfg.grid.refined(), cfg.dt / 2)):
        erg = solve_ergodic(m, grid, warn=False)
        res.append(parity_report(m, erg, cfg.payoff, 10.0, dt=dt).max_residual)
    ratio = res[0] / res[1] if res[1] > 0 else np.inf
    ok_level = res[0] <= 1e-3
    ok_ratio = ratio >= 3
    acceptance("AC4", ok_level and ok_ratio,
               f"residual {res[0]:.3e} at default resolution (<= 1e-3: {ok_level}); "
               f"{res[1]:.3e} with h, dt halved, ratio {ratio:.2f} (>= 3: {ok_ratio})")
    assert ok_level
    assert ok_ratio


def test_ac5_duality(acceptance, rng):
    worst = 0.0
    for name in PRESETS:
        m = preset(name).model
        v = rng.uniform(-30, 30, 10_000)
        z = rng.normal(size=(10_000, 2))
        zbar = rng.normal(size=(10_000, 2))
        worst = max(worst, float(np.abs(duality_defect(m, v, z, zbar)).max()))
    cfg = preset("default")
    m = cfg.model
    erg = solve_ergodic(m, cfg.grid, warn=False)
    surf = solve_risk_bsde(m, erg, cfg.payoff, 5.0, dt=cfg.dt)
    rep = dual_gap_mc(m, erg, surf, 10.0, McConfig.for_horizon(5.0, 0.02, n_paths=20_000, seed=SEED),
                      cfg.payoff)
    z = rep.dual_value.z_score(rep.rho_pde)
    minimal = [r.minimal_ok for r in rep.rows]
    ok = worst <= 1e-12 and abs(z) <= 3 and len(minimal) == 5 and all(minimal)
    gaps = ", ".join(f"{r.gap / r.gap_stderr:+.1f}" if r.gap_stderr > 0 else f"{r.gap:+.1e}"
                     for r in rep.rows)
    acceptance("AC5", ok, f"max identity defect {worst:.1e}; dual MC z-score {z:+.2f}; "
                          f"perturbation gaps in stderr [{gaps}]")
    assert ok


def test_ac6_bounds(acceptance, rng):
    n = 100_000
    details, violations = [], 0
    for name in PRESETS:
        cfg = preset(name)
        m = estimate_lipschitz_constants(cfg.model, cfg.grid)
        v = rng.uniform(cfg.grid.v_min, cfg.grid.v_max, n)
        z = rng.normal(scale=3.0, size=(n, 2))
        zbar = rng.normal(scale=3.0, size=(n, 2))
        lo, hi = g_bounds(m, v, z, zbar)
        G = driver_g(m, v, z, zbar)
        viol = int(np.sum(G < lo) + np.sum(G > hi))
        # the conjugate on its effective domain
        q = optimal_density(m, v, z, zbar)
        q[:, 1] += rng.normal(scale=5.0, size=n) if m.constraint != "full_space" else 0.0
        gs = g_star(m, v, z, q)
        viol += int(np.sum(gs < 0) + np.sum(gs < g_star_lower_bound(m, v, z, q)))
        erg = solve_ergodic(m, cfg.grid, warn=False)
        surf = solve_risk_bsde(m, erg, cfg.payoff, 5.0, dt=cfg.dt)
        checks = [gradient_bound_check(erg, m)] + risk_bound_checks(m, erg, surf, cfg.payoff)
        viol += sum(c.violations for c in checks)
        violations += viol
        states = ", ".join(f"{c.name}: {'ok' if c.applicable else 'n/a'}" for c in checks)
        details.append(f"{name} [{viol} violations; {states}]")
    ok = violations == 0
    acceptance("AC6", ok, "; ".join(details))
    assert ok


def test_ac7_long_maturity(acceptance):
    cfg = preset("default")
    t0 = time.perf_counter()
    results = run_figures((1, 2, 3), include_normalized=True, grid=cfg.grid, dt=cfg.dt,
                          hedging_cfg=McConfig(4096, 100, seed=SEED), base=cfg.model,
                          payoff=cfg.payoff)
    secs = time.perf_counter() - t0
    parts, ok = [], secs < 900
    for r in results:
        sw, h = r.sweep, r.hedging
        spread_ok = sw.spread[-1] <= 1e-2
        fit_ok = sw.fit.certified and sw.fit.r2 > 0.95
        hedge_ok = h.strictly_decreasing() and h.slope < 0
        tag = f"sc{r.scenario}{'n' if r.normalized else ''}"
        parts.append(f"{tag}: spread {sw.spread[-1]:.1e}, rate {sw.fit.rate:.3f}, R2 {sw.fit.r2:.4f}, "
                     f"hedging {'decreasing' if hedge_ok else 'NOT decreasing'} (slope {h.slope:.2f})")
        if not r.normalized:
            ok = ok and spread_ok and fit_ok and hedge_ok
    acceptance("AC7", ok, "; ".join(parts) + f"; {secs:.0f}s")
    assert ok


def _axiom_report(cfg, T=5.0):
    """Worst defects of the four axioms for both measures on the shipped payoffs."""
    m, grid, dt = cfg.model, cfg.grid, cfg.dt
    erg = solve_ergodic(m, grid, warn=False)
    v = grid.nodes
    payoffs = {"put_like": PayoffSpec("put_like", K1=10.0)(v), "linear": v.copy(),
               "constant": np.full_like(v, 2.0)}
    P0 = solve_classical(m, np.zeros_like(v), T, grid, dt=dt).slice_at(0.0)

    def fwd(g):
        return solve_risk_bsde(m, erg, g, T, dt=dt).slice_at(0.0)

    def cls(g):
        return solve_classical(m, g, T, grid, dt=dt).slice_at(0.0) - P0

    out = {}
    for kind, rho in (("forward", fwd), ("classical", cls)):
        r = {k: rho(g) for k, g in payoffs.items()}
        # anti-positivity on the sign-definite payoffs
        anti = max(-rho(payoffs["put_like"]).min(), rho(-payoffs["put_like"]).max(),
                   -r["constant"].min(), rho(-payoffs["constant"]).max(), 0.0)
        conv = 0.0
        names = list(payoffs)
        for i in range(3):
            for j in range(i + 1, 3):
                a, b = names[i], names[j]
                for w in (0.25, 0.5, 0.75):
                    mix = rho(w * payoffs[a] + (1 - w) * payoffs[b])
                    conv = max(conv, float((mix - w * r[a] - (1 - w) * r[b]).max()))
        cash = max(float(np.abs(rho(g + 1.5) - r[k] - 1.5).max()) for k, g in payoffs.items())
        out[kind] = dict(anti=anti, conv=conv, cash=cash, r=r)
    # time consistency at T = 10, s = 5
    tc_f = max(time_consistency_check(m, erg, g, 10.0, 5.0, dt=dt) for g in payoffs.values())
    tc_c = 0.0
    for g in payoffs.values():
        direct = solve_classical(m, g, 10.0, grid, dt=dt).slice_at(0.0)
        first = solve_classical(m, g, 5.0, grid, dt=dt).slice_at(0.0)
        composed = solve_classical(m, first, 5.0, grid, dt=dt).slice_at(0.0)
        tc_c = max(tc_c, float(np.abs(composed - direct).max()))
    out["forward"]["tc"], out["classical"]["tc"] = tc_f, tc_c
    return out


def test_ac8_axioms(acceptance):
    cfg = preset("default")
    tol = scheme_tolerance(cfg.grid, cfg.dt)
    rep = _axiom_report(cfg)
    ok = True
    parts = []
    for kind in ("forward", "classical"):
        d = rep[kind]
        good = d["anti"] <= 1e-12 and d["conv"] <= tol and d["cash"] <= 1e-9 and d["tc"] <= tol
        ok = ok and good
        parts.append(f"{kind}: anti-positivity {d['anti']:.1e}, convexity excess {d['conv']:.1e}, "
                     f"cash {d['cash']:.1e}, time consistency {d['tc']:.1e}")
    acceptance("AC8", ok, "; ".join(parts) + f" (scheme tolerance {tol:.1e})")
    assert ok


SMALL_CFG = """\
gamma = 1.0
kappa1 = 0.6
kappa2 = 0.8
eta.alpha = 0.5
theta.kind = capped_linear
theta.K2 = 3.0
payoff.kind = put_like
payoff.K1 = 3.0
v_min = -20.0
v_max = 20.0
n_nodes = 201
dt = 0.05
"""

COMMANDS = (
    ["ergodic"],
    ["risk", "--T", "2", "--v0", "0", "1", "--surface"],
    ["parity", "--T", "1", "2", "--v0", "0", "5"],
    ["dual-check", "--T", "1", "--v0", "0", "--paths", "3000", "--mc-dt", "0.01"],
    ["example", "--T", "1", "--v0", "0", "--paths", "3000", "--mc-dt", "0.02"],
    ["figures", "--scenario", "2", "--T-max", "4", "--hedging-paths", "256", "--hedging-steps", "10",
     "--gnuplot"],
    ["selftest"],
)


def test_ac9_determinism(acceptance, tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL_CFG)
    mismatches = []
    for cmd in COMMANDS:
        name = cmd[0]
        base = tmp_path / name / "orig"
        assert cli_main(cmd + ["--config", str(cfg), "--out", str(base)]) in (0, 1)
        manifest = base / f"{name}.manifest.json"
        outputs = json.loads(manifest.read_text())["outputs"]
        assert outputs
        ref = {f: (base / f).read_bytes() for f in outputs}
        for threads in (1, 2, 8):
            out = tmp_path / name / f"t{threads}"
            cli_main(["--replay", str(manifest), "--out", str(out), "--threads", str(threads)])
            got = {f: (out / f).read_bytes() for f in outputs}
            if got != ref:
                mismatches.append(f"{name}@{threads}")
    ok = not mismatches
    acceptance("AC9", ok, f"{len(COMMANDS)} subcommands replayed at 1/2/8 threads; "
                          f"mismatches: {mismatches or 'none'}")
    assert ok
