"""Classical (fixed-horizon) entropic risk measure and the forward/classical parity.

The value function ``P`` of the exponential-utility problem with terminal
payout ``H(V_T)`` solves

    P_t + 1/2|kappa|^2 P_vv + eta P_v + F(v, gamma kappa P_v) / gamma = 0,   P(., T) = H,

and ``rho_{t,T}(xi_T) = P^{-xi}(V_t, t) - P^0(V_t, t)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parabolic import solve_backward, time_grid
from .ergodic import ErgodicSolution, driver_f
from .grid import Grid1D, GridFn, d1, write_columns
from .model import ModelSpec
from .risk import DEFAULT_DT, Surface, _steps, payoff_values, solve_risk_bsde


class ClassicalSurface(Surface):
    """``P`` on the space-time grid; ``Q = kappa P_v``."""

    def Q_at(self, t: float) -> np.ndarray:
        return self.gradient_at(t)[:, None] * self.model.kappa_vec

    @property
    def P(self) -> np.ndarray:
        return self.u

    @property
    def Q(self) -> np.ndarray:
        return d1(self.u, self.grid.h)[..., None] * self.model.kappa_vec

    def to_csv(self, path) -> None:
        t = self.times
        n = self.grid.n_nodes
        Q = self.Q
        write_columns(path, ("t", "v", "P", "Q1", "Q2"),
                      [np.repeat(t, n), np.tile(self.grid.nodes, len(t)), self.u.ravel(),
                       Q[..., 0].ravel(), Q[..., 1].ravel()])


def solve_classical(model: ModelSpec, terminal, T: float, grid: Grid1D,
                    time_steps: int | None = None, dt: float | None = None,
                    **solver_kw) -> ClassicalSurface:
    """Backward solve of the fixed-horizon quadratic equation.

    ``terminal`` is a callable ``H(v)``, a :class:`GridFn`, or node values.
    """
    if not T > 0:
        raise ValueError("maturity must be positive")
    dt = _steps(T, time_steps, dt)
    v = grid.nodes
    if isinstance(terminal, GridFn):
        if terminal.grid != grid:
            raise ValueError("terminal slice lives on a different grid")
        H = terminal.values
    else:
        H = payoff_values(terminal, grid)
    vi = v[1:-1]
    g = model.gamma
    kap = model.kappa_vec

    def N(p):
        return driver_f(model, vi, (g * p)[:, None] * kap) / g

    sol = solve_backward(grid, model.diffusion, model.eta(v), N, H, T, dt, **solver_kw)
    return ClassicalSurface(model, grid, T, time_grid(T, dt)[1], sol.U)


@dataclass
class ClassicalRisk:
    """``rho_{t,T} = P^g - P^0`` kept as the two surfaces."""

    with_position: ClassicalSurface
    zero: ClassicalSurface

    def value(self, v, t: float, clamp: bool = False):
        return self.with_position.value(v, t, clamp) - self.zero.value(v, t, clamp)

    def slice_at(self, t: float) -> np.ndarray:
        return self.with_position.slice_at(t) - self.zero.slice_at(t)

    def restrict(self, T: float) -> "ClassicalRisk":
        return ClassicalRisk(self.with_position.restrict(T), self.zero.restrict(T))


def classical_risk_surfaces(model: ModelSpec, payoff, T: float, grid: Grid1D,
                            dt: float | None = None, **solver_kw) -> ClassicalRisk:
    Pg = solve_classical(model, payoff, T, grid, dt=dt, **solver_kw)
    P0 = solve_classical(model, np.zeros(grid.n_nodes), T, grid, dt=dt, **solver_kw)
    return ClassicalRisk(Pg, P0)


def classical_entropic_risk(model: ModelSpec, payoff, T: float, grid: Grid1D,
                            dt: float | None = None, **solver_kw) -> GridFn:
    """``rho_{0,T}(xi_T)`` at every node for ``xi_T = -g(V_T)``."""
    risk = classical_risk_surfaces(model, payoff, T, grid, dt=dt, **solver_kw)
    return GridFn(grid, risk.slice_at(0.0))


@dataclass
class ParityReport:
    max_residual: float
    forward: np.ndarray
    decomposition: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.forward - self.decomposition


def parity_report(model: ModelSpec, ergodic: ErgodicSolution, payoff, T: float,
                  dt: float | None = None, **solver_kw) -> ParityReport:
    """Compare the forward measure with its classical decomposition.

    The classical terms use terminal slices ``g + (y - lambda T)/gamma`` and
    ``(y - lambda T)/gamma`` built from the ergodic node values directly.
    The residual is taken over interior nodes and every time level.
    """
    grid = ergodic.grid
    dt = DEFAULT_DT if dt is None else dt
    g = payoff_values(payoff, grid)
    shift = (ergodic.y.values - ergodic.lam * T) / model.gamma
    fwd = solve_risk_bsde(model, ergodic, g, T, dt=dt, **solver_kw).u
    A = solve_classical(model, g + shift, T, grid, dt=dt, **solver_kw).u
    B = solve_classical(model, shift, T, grid, dt=dt, **solver_kw).u
    dec = A - B
    res = np.abs(fwd - dec)[:, 1:-1]
    return ParityReport(float(res.max()), fwd, dec)


def parity_check(model: ModelSpec, ergodic: ErgodicSolution, payoff, T: float,
                 dt: float | None = None, **solver_kw) -> float:
    """Max node discrepancy of the forward/classical parity identity."""
    return parity_report(model, ergodic, payoff, T, dt=dt, **solver_kw).max_residual
