"""Forward entropic risk measure from its finite-horizon BSDE.

For a position ``xi_T = -g(V_T)`` the measure is ``rho_t = u(V_t, t)`` where

    u_t + 1/2|kappa|^2 u_vv + eta u_v + G(v, z(v), kappa u_v) = 0,   u(., T) = g,

``z`` is the ergodic gradient field and ``G(v,z,zbar) = (F(v, z + gamma zbar)
- F(v, z)) / gamma``.  Since the equation does not depend on calendar time,
the solution for maturity ``T`` at time ``t`` only depends on ``T - t``; one
solve up to the largest maturity therefore serves every shorter one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._parabolic import solve_backward, time_grid
from .ergodic import BoundCheck, ErgodicSolution, _not_applicable_reason, driver_f
from .grid import Grid1D, GridFn, d1, interp_values, write_columns
from .model import ModelSpec, PayoffSpec, estimate_lipschitz_constants, project_pi

DEFAULT_DT = 0.01


def driver_g(model: ModelSpec, v, z, zbar):
    """``G(v, z, zbar) = (F(v, z + gamma zbar) - F(v, z)) / gamma``."""
    z = np.asarray(z, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    g = model.gamma
    return (driver_f(model, v, z + g * zbar) - driver_f(model, v, z)) / g


@dataclass
class Surface:
    """Solution levels of a backward equation, indexed by time to maturity.

    ``levels[k]`` holds node values at ``tau = k * dt``, i.e. at calendar time
    ``t = T - k * dt``.
    """

    model: ModelSpec
    grid: Grid1D
    T: float
    dt: float
    levels: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.levels.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        """Calendar time grid ``0 = t_0 < ... < t_M = T``."""
        return self.T - self.dt * np.arange(self.n_steps, -1, -1)

    @property
    def u(self) -> np.ndarray:
        """Values with rows in increasing calendar time."""
        return self.levels[::-1]

    def slice_at(self, t: float) -> np.ndarray:
        """Node values at calendar time ``t`` (linear between time levels)."""
        tau = self.T - t
        if tau < -1e-12 or tau > self.T + 1e-12:
            raise ValueError(f"t = {t} outside [0, {self.T}]")
        k = min(max(tau / self.dt, 0.0), float(self.n_steps))
        i = min(int(math.floor(k)), self.n_steps - 1) if self.n_steps else 0
        w = k - i
        if self.n_steps == 0:
            return self.levels[0].copy()
        return (1 - w) * self.levels[i] + w * self.levels[i + 1]

    def gradient_at(self, t: float) -> np.ndarray:
        return d1(self.slice_at(t), self.grid.h)

    def value(self, v, t: float, clamp: bool = False):
        out = interp_values(self.grid, self.slice_at(t), v, clamp=clamp)
        return float(out) if np.ndim(out) == 0 else out

    def restrict(self, T: float) -> "Surface":
        """Surface for the shorter maturity ``T`` (shares the levels)."""
        k = int(round(T / self.dt))
        if abs(k * self.dt - T) > 1e-9 * max(1.0, T) or not 0 <= k <= self.n_steps:
            raise ValueError(f"maturity {T} is not on this surface's time grid")
        return type(self)(self.model, self.grid, T, self.dt, self.levels[: k + 1])


class FieldInterpolator:
    """Bilinear lookup of ``u_v`` (or ``u``) from a surface at calendar time ``t``."""

    def __init__(self, surface: Surface, derivative: bool = True):
        self.grid = surface.grid
        self.T = surface.T
        self.dt = surface.dt
        self.grad = d1(surface.levels, surface.grid.h) if derivative else surface.levels

    def __call__(self, v, t: float):
        k = (self.T - t) / self.dt
        n = self.grad.shape[0] - 1
        k = min(max(k, 0.0), float(n))
        i = min(int(math.floor(k)), max(n - 1, 0))
        w = k - i
        lo = interp_values(self.grid, self.grad[i], v, clamp=True)
        if w == 0.0 or n == 0:
            return lo
        hi = interp_values(self.grid, self.grad[i + 1], v, clamp=True)
        return (1 - w) * lo + w * hi


class RiskSurface(Surface):
    """``u = y^{T,g}`` and ``zbar = kappa u_v`` on the space-time grid."""

    def zbar_at(self, t: float) -> np.ndarray:
        return self.gradient_at(t)[:, None] * self.model.kappa_vec

    @property
    def zbar(self) -> np.ndarray:
        """All time levels, shape ``(M + 1, n_nodes, 2)`` in calendar order."""
        return d1(self.u, self.grid.h)[..., None] * self.model.kappa_vec

    def to_csv(self, path) -> None:
        t = self.times
        n = self.grid.n_nodes
        zb = self.zbar
        write_columns(path, ("t", "v", "u", "zbar1", "zbar2"),
                      [np.repeat(t, n), np.tile(self.grid.nodes, len(t)), self.u.ravel(),
                       zb[..., 0].ravel(), zb[..., 1].ravel()])


def _steps(T: float, time_steps, dt):
    if time_steps is not None:
        return T / int(time_steps)
    return DEFAULT_DT if dt is None else dt


def solve_risk_bsde(model: ModelSpec, ergodic: ErgodicSolution, payoff, T: float,
                    grid: Grid1D | None = None, time_steps: int | None = None,
                    dt: float | None = None, **solver_kw) -> RiskSurface:
    """Backward Crank-Nicolson solve of the risk-measure equation.

    Parameters
    ----------
    payoff : PayoffSpec or ndarray
        ``g``, or its node values directly.
    time_steps, dt : optional
        Either the number of steps or the step size (default 0.01).
    """
    grid = grid or ergodic.grid
    if grid != ergodic.grid:
        raise ValueError("ergodic solution lives on a different grid")
    if not T > 0:
        raise ValueError("maturity must be positive")
    dt = _steps(T, time_steps, dt)
    v = grid.nodes
    terminal = payoff(v) if callable(payoff) else np.asarray(payoff, dtype=float)
    vi = v[1:-1]
    zi = ergodic.z[1:-1]
    kap = model.kappa_vec

    def N(p):
        return driver_g(model, vi, zi, p[:, None] * kap)

    sol = solve_backward(grid, model.diffusion, model.eta(v), N, terminal, T, dt, **solver_kw)
    return RiskSurface(model, grid, T, time_grid(T, dt)[1], sol.U)


def forward_entropic_risk(surface: RiskSurface, v, t: float):
    """``rho_t(xi_T)`` for ``xi_T = -g(V_T)`` at factor level ``v``."""
    return surface.value(v, t)


def hedging_from_fields(model: ModelSpec, v, z, zbar) -> np.ndarray:
    """``Proj(zbar + (z + theta e1)/gamma) - Proj((z + theta e1)/gamma)``."""
    z = np.asarray(z, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    w = z.copy()
    w[..., 0] += model.theta(v)
    w = w / model.gamma
    return project_pi(model, zbar + w) - project_pi(model, w)


def hedging_strategy(model: ModelSpec, ergodic: ErgodicSolution, surface: RiskSurface, v, t: float):
    v = np.asarray(v, dtype=float)
    z = ergodic.z_at(v, clamp=False)
    zbar = interp_values(surface.grid, surface.gradient_at(t), v)[..., None] * model.kappa_vec
    return hedging_from_fields(model, v, z, zbar)


def time_consistency_check(model: ModelSpec, ergodic: ErgodicSolution, payoff, T: float,
                           s: float, dt: float | None = None, **solver_kw) -> float:
    """Compose the solve on ``[s, T]`` with a solve on ``[0, s]``; compare to ``[0, T]``.

    Returns the sup over nodes of ``|composed u(., 0) - direct u(., 0)|``.
    """
    if not 0 < s <= T:
        raise ValueError("need 0 < s <= T")
    dt = DEFAULT_DT if dt is None else dt
    direct = solve_risk_bsde(model, ergodic, payoff, T, dt=dt, **solver_kw).slice_at(0.0)
    if math.isclose(s, T):
        return 0.0
    first = solve_risk_bsde(model, ergodic, payoff, T - s, dt=dt, **solver_kw).slice_at(0.0)
    composed = solve_risk_bsde(model, ergodic, first, s, dt=dt, **solver_kw).slice_at(0.0)
    return float(np.max(np.abs(composed - direct)))


# ---------------------------------------------------------------------------
# a priori bounds


def q_constant(model: ModelSpec, c_g: float) -> float:
    """Uniform bound on ``|zbar + z/gamma|`` (requires ``c_eta > c_v``)."""
    g, ce, cv = model.gamma, model.c_eta, model.c_v
    return (g * ce * c_g + cv) / (g * (ce - cv)) + ce * cv / (g * (ce - cv) ** 2)


def risk_bound_checks(model: ModelSpec, ergodic: ErgodicSolution, surface: RiskSurface,
                      payoff: PayoffSpec, tol: float = 1e-9) -> list[BoundCheck]:
    """Gradient bound on ``zbar + z/gamma`` at every level and the Lipschitz bound of ``u(., 0)``."""
    if model.c_v is None:
        model = estimate_lipschitz_constants(model, surface.grid)
    zn = np.linalg.norm(surface.zbar + ergodic.z[None] / model.gamma, axis=-1)
    u0 = surface.slice_at(0.0)
    slopes = np.abs(np.diff(u0)) / surface.grid.h
    why = _not_applicable_reason(model)
    if why:
        return [BoundCheck("q-bound", False, math.nan, float(zn.max()), 0, why),
                BoundCheck("Lipschitz of u(.,0)", False, math.nan, float(slopes.max()), 0, why)]
    q = q_constant(model, payoff.c_g)
    L = q + model.c_v / (model.gamma * (model.c_eta - model.c_v))
    return [BoundCheck("q-bound", True, q, float(zn.max()), int(np.sum(zn > q + tol))),
            BoundCheck("Lipschitz of u(.,0)", True, L, float(slopes.max()),
                       int(np.sum(slopes > L + tol)))]


# ---------------------------------------------------------------------------
# supermartingale certificate


def auxiliary_process_means(model: ModelSpec, ergodic: ErgodicSolution, surface: RiskSurface,
                            v0: float, cfg, strategy=None, n_checkpoints: int = 5):
    """Sample means and stderrs of ``R^pi_s = -exp(-gamma X_s + y(V_s) - lambda s + gamma u(V_s, s))``.

    ``strategy(v, t)`` defaults to ``Proj(zbar + (z + theta e1)/gamma)``,
    under which the means are flat; other strategies make them
    non-increasing.
    """
    from .ergodic import MartingaleReport
    from .sde import simulate_wealth

    T = surface.T
    if strategy is None:
        strategy = lambda v, t: optimal_position_with_risk(model, ergodic, surface, v, t)  # noqa: E731
    record = np.linspace(0.0, T, n_checkpoints + 1)
    ens = simulate_wealth(model, v0, 0.0, T, cfg, strategy, record_times=record)
    expo = np.empty_like(ens.x_records)
    for j, t in enumerate(record):
        v = ens.v_records[j]
        expo[j] = (-model.gamma * ens.x_records[j] + ergodic.y_at(v) - ergodic.lam * t
                   + model.gamma * interp_values(surface.grid, surface.slice_at(t), v, clamp=True))
    R = -np.exp(expo)
    n = R.shape[1]
    return MartingaleReport(record, R.mean(axis=1), R.std(axis=1, ddof=1) / math.sqrt(n))


def optimal_position_with_risk(model, ergodic, surface, v, t):
    z = ergodic.z_at(v)
    zbar = interp_values(surface.grid, surface.gradient_at(t), v, clamp=True)[..., None] * model.kappa_vec
    w = z.copy()
    w[..., 0] += model.theta(v)
    return project_pi(model, zbar + w / model.gamma)


def payoff_values(payoff, grid: Grid1D) -> np.ndarray:
    return payoff(grid.nodes) if callable(payoff) else np.asarray(payoff, dtype=float)


def grid_fn(surface: Surface, t: float) -> GridFn:
    return GridFn(surface.grid, surface.slice_at(t))
