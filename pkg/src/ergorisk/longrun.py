"""Long-maturity behaviour of both risk measures.

A sweep over maturities reads every ``rho(T)`` off a single backward solve
to the largest maturity (the equations are autonomous), estimates the
limit ``L^g``, fits an exponential convergence rate and measures how fast
the hedging strategy dies out.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classical import classical_risk_surfaces
from .ergodic import ErgodicSolution, solve_ergodic
from .grid import Grid1D, d1, interp_values, write_columns
from .model import FIGURE_KAPPAS, ModelSpec, PayoffSpec, figure_model, figure_payoff
from .risk import RiskSurface, hedging_from_fields, solve_risk_bsde
from .sde import McConfig, simulate_factor

DEFAULT_V0 = (5.0, 7.5, 10.0, 12.5, 15.0)
DEFAULT_T = tuple(float(t) for t in range(1, 51))
BURN_IN = 0.2
FLOOR = 1e-8
# |alpha|^2 is built from squared gradients of the risk surface, so its
# resolution floor is the square of the one on |rho - L|
HEDGING_FLOOR = FLOOR**2


class InsufficientDataError(ValueError):
    """Too few maturities beyond burn-in sit above the numerical floor."""


@dataclass
class DecayFit:
    C: float
    rate: float
    r2: float
    n_points: int
    degenerate: bool = False

    @property
    def certified(self) -> bool:
        return (not self.degenerate) and self.rate > 0


@dataclass
class SweepResult:
    """Rows ``(kappa1, kappa2, v0, T, rho_forward, rho_classical)`` on the full product grid."""

    kappa: tuple[float, float]
    v0_list: tuple[float, ...]
    T_list: tuple[float, ...]
    forward: np.ndarray          # shape (n_T, n_v0)
    classical: np.ndarray
    L_forward: float = math.nan
    L_classical: float = math.nan
    fit: DecayFit | None = None
    fit_classical: DecayFit | None = None

    @property
    def rows(self) -> list[tuple]:
        k1, k2 = self.kappa
        return [(k1, k2, v0, T, self.forward[i, j], self.classical[i, j])
                for i, T in enumerate(self.T_list) for j, v0 in enumerate(self.v0_list)]

    @property
    def spread(self) -> np.ndarray:
        """Max minus min over ``v0`` of the forward measure, per maturity."""
        return self.forward.max(axis=1) - self.forward.min(axis=1)

    @property
    def spread_classical(self) -> np.ndarray:
        return self.classical.max(axis=1) - self.classical.min(axis=1)

    def burn_in_mask(self) -> np.ndarray:
        n = len(self.T_list)
        mask = np.zeros(n, dtype=bool)
        mask[int(math.ceil(BURN_IN * n)):] = True
        return mask


def maturity_sweep(model: ModelSpec, ergodic: ErgodicSolution, payoff, v0_list=DEFAULT_V0,
                   T_list=DEFAULT_T, grid: Grid1D | None = None, dt: float | None = None,
                   surfaces: tuple | None = None) -> SweepResult:
    """Forward and classical ``rho_0`` over the ``(v0, T)`` product grid.

    One solve to ``max(T_list)`` per measure; ``T_list`` must be increasing
    and every maturity must sit on the time grid.
    """
    T_list = tuple(float(t) for t in T_list)
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ValueError("T_list must be increasing")
    grid = grid or ergodic.grid
    T_max = T_list[-1]
    if surfaces is None:
        fwd = solve_risk_bsde(model, ergodic, payoff, T_max, dt=dt)
        cls = classical_risk_surfaces(model, payoff, T_max, grid, dt=dt)
    else:
        fwd, cls = surfaces
    v0 = np.asarray(v0_list, dtype=float)
    F = np.array([fwd.restrict(T).value(v0, 0.0) for T in T_list])
    C = np.array([cls.restrict(T).value(v0, 0.0) for T in T_list])
    res = SweepResult(model.kappa, tuple(v0_list), T_list, F, C,
                      L_forward=float(F[-1].mean()), L_classical=float(C[-1].mean()))
    for measure in ("forward", "classical"):
        try:
            fit = fit_decay(res, measure)
        except InsufficientDataError:
            fit = DecayFit(math.nan, math.nan, math.nan, 0, degenerate=True)
        setattr(res, "fit" if measure == "forward" else "fit_classical", fit)
    return res


def fit_decay(sweep: SweepResult, measure: str = "forward") -> DecayFit:
    """Least-squares fit of ``ln max_v0 |rho(T) - L|`` against ``T`` beyond burn-in.

    Points below the numerical floor are dropped.  Data that never leave
    the floor (a constant measure) give a degenerate fit; otherwise fewer
    than four usable points raise :class:`InsufficientDataError`.
    """
    vals = sweep.forward if measure == "forward" else sweep.classical
    L = sweep.L_forward if measure == "forward" else sweep.L_classical
    T = np.asarray(sweep.T_list)
    env = np.max(np.abs(np.atleast_2d(vals.T).T - L), axis=1)
    use = sweep.burn_in_mask() & (env > FLOOR)
    if not np.any(env[sweep.burn_in_mask()] > FLOOR):
        return DecayFit(math.nan, math.nan, math.nan, 0, degenerate=True)
    if use.sum() < 4:
        raise InsufficientDataError(f"{int(use.sum())} usable maturities beyond burn-in, need 4")
    x, y = T[use], np.log(env[use])
    slope, icpt = np.polyfit(x, y, 1)
    pred = icpt + slope * x
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - pred) ** 2) / ss_tot if ss_tot > 0 else math.nan
    return DecayFit(float(math.exp(icpt)), float(-slope), float(r2), int(use.sum()))


def synthetic_sweep(T_list, values, L: float | None = None, v0_list=(0.0,)) -> SweepResult:
    """Sweep wrapper around given forward values.

    ``L`` defaults to the last value averaged over ``v0``, as in a real sweep.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    L = float(vals[-1].mean()) if L is None else float(L)
    return SweepResult((0.0, 0.0), tuple(v0_list), tuple(float(t) for t in T_list), vals,
                       vals.copy(), L_forward=L, L_classical=L)


# ---------------------------------------------------------------------------
# hedging decay


@dataclass
class HedgingDecay:
    T_list: tuple[float, ...]
    estimates: np.ndarray
    stderr: np.ndarray
    slope: float = math.nan
    degenerate: bool = False

    def resolved(self) -> np.ndarray:
        """Maturities beyond burn-in whose estimate sits above the floor."""
        n = len(self.T_list)
        mask = np.zeros(n, dtype=bool)
        mask[int(math.ceil(BURN_IN * n)):] = True
        return mask & (self.estimates > HEDGING_FLOOR)

    def strictly_decreasing(self) -> bool:
        e = self.estimates[self.resolved()]
        return len(e) >= 2 and bool(np.all(np.diff(e) < 0))


def hedging_decay(model: ModelSpec, ergodic: ErgodicSolution, payoff, v0: float, s: float,
                  T_list, cfg: McConfig, surface: RiskSurface | None = None,
                  dt: float | None = None) -> HedgingDecay:
    """``E int_0^s |alpha_{t,T}|^2 dt`` under the physical measure, per maturity.

    ``cfg.n_steps`` discretizes ``[0, s]``; the same factor paths are used for
    every maturity.  The log-linear slope is fitted over the estimates
    beyond burn-in that sit above ``HEDGING_FLOOR``; with fewer than two
    such points the result is flagged degenerate.
    """
    T_list = tuple(float(t) for t in T_list)
    if not s < min(T_list):
        raise ValueError("s must be below the smallest maturity")
    if surface is None:
        surface = solve_risk_bsde(model, ergodic, payoff, max(T_list), dt=dt)
    step = s / cfg.n_steps
    times = step * np.arange(cfg.n_steps + 1)
    ens = simulate_factor(model, v0, s, cfg, record_times=times)
    V = ens.records[:-1]                 # left endpoints
    Z = ergodic.z_at(V)
    grid = surface.grid
    est, se = [], []
    for T in T_list:
        sq = np.zeros(V.shape[1])
        for k, t in enumerate(times[:-1]):
            tau_level = (T - t) / surface.dt
            i = int(round(tau_level))
            if abs(i - tau_level) > 1e-6:
                raise ValueError("integration times must fall on the surface's time grid")
            p = interp_values(grid, d1(surface.levels[i], grid.h), V[k], clamp=True)
            a = hedging_from_fields(model, V[k], Z[k], p[:, None] * model.kappa_vec)
            sq += np.sum(a**2, axis=-1) * step
        est.append(sq.mean())
        se.append(sq.std(ddof=1) / math.sqrt(len(sq)))
    est = np.array(est)
    res = HedgingDecay(T_list, est, np.array(se))
    use = res.resolved()
    if use.sum() >= 2:
        res.slope = float(np.polyfit(np.asarray(T_list)[use], np.log(est[use]), 1)[0])
    else:
        res.degenerate = True
    return res


# ---------------------------------------------------------------------------
# figure scenarios


@dataclass
class ScenarioResult:
    scenario: int
    normalized: bool
    model: ModelSpec
    ergodic: ErgodicSolution
    sweep: SweepResult
    hedging: HedgingDecay | None = None
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def run_scenario(scenario: int, normalized: bool = False, grid: Grid1D | None = None,
                 v0_list=DEFAULT_V0, T_list=DEFAULT_T, dt: float | None = None,
                 hedging_cfg: McConfig | None = None, hedging_v0: float = 10.0,
                 hedging_s: float = 1.0, base: ModelSpec | None = None,
                 payoff: PayoffSpec | None = None) -> ScenarioResult:
    """One figure scenario: ergodic solve, maturity sweep and optional hedging decay.

    ``base`` supplies every model parameter except ``kappa`` (default: the
    figure preset); ``payoff`` defaults to the figure payoff.
    """
    t0 = time.perf_counter()
    grid = grid or Grid1D()
    if base is None:
        model = figure_model(scenario, normalized)
    else:
        model = replace(base, kappa=FIGURE_KAPPAS[scenario], c_v=None, c_z=None)
        model = model.normalized() if normalized else model
    payoff = payoff or figure_payoff()
    erg = solve_ergodic(model, grid, warn=False)
    fwd = solve_risk_bsde(model, erg, payoff, max(T_list), dt=dt)
    cls = classical_risk_surfaces(model, payoff, max(T_list), grid, dt=dt)
    sweep = maturity_sweep(model, erg, payoff, v0_list, T_list, grid, dt, surfaces=(fwd, cls))
    hed = None
    if hedging_cfg is not None:
        T_hedge = [T for T in T_list if T > hedging_s]
        hed = hedging_decay(model, erg, payoff, hedging_v0, hedging_s, T_hedge, hedging_cfg, surface=fwd)
    return ScenarioResult(scenario, normalized, model, erg, sweep, hed, time.perf_counter() - t0)


def run_figures(scenarios=(1, 2, 3), include_normalized: bool = True, threads: int = 1,
                **kw) -> list[ScenarioResult]:
    """All requested scenarios, verbatim and (where different) normalized.

    Cells run in parallel when ``threads > 1``; results keep the input order.
    """
    cells = []
    for sc in scenarios:
        cells.append((sc, False))
        k = FIGURE_KAPPAS[sc]
        if include_normalized and not math.isclose(k[0] ** 2 + k[1] ** 2, 1.0):
            cells.append((sc, True))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda c: run_scenario(c[0], c[1], **kw), cells))
    return [run_scenario(sc, nz, **kw) for sc, nz in cells]


def figures_csv(path, results: list[ScenarioResult]) -> None:
    """Schema ``scenario, kappa1, kappa2, measure_kind, v0, T, rho``."""
    cols = [[] for _ in range(7)]
    for r in results:
        k1, k2 = r.model.kappa
        for kind, vals in (("forward", r.sweep.forward), ("classical", r.sweep.classical)):
            for i, T in enumerate(r.sweep.T_list):
                for j, v0 in enumerate(r.sweep.v0_list):
                    for c, x in zip(cols, (r.scenario, k1, k2, kind, v0, T, vals[i, j])):
                        c.append(x)
    write_columns(path, ("scenario", "kappa1", "kappa2", "measure_kind", "v0", "T", "rho"), cols)


def gnuplot_blocks(results: list[ScenarioResult]) -> str:
    """Data blocks (one per scenario, measure and v0) separated by two blank lines."""
    out = []
    for r in results:
        k1, k2 = r.model.kappa
        for kind, vals in (("forward", r.sweep.forward), ("classical", r.sweep.classical)):
            for j, v0 in enumerate(r.sweep.v0_list):
                out.append(f"# scenario {r.scenario} kappa=({k1!r},{k2!r}) {kind} v0={v0!r}")
                out.extend(f"{T!r} {vals[i, j]!r}" for i, T in enumerate(r.sweep.T_list))
                out.append("\n")
    return "\n".join(out)
