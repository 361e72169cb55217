"""Markovian solution of the ergodic BSDE behind the exponential forward criterion.

The pair ``(y, lambda)`` solves the ergodic elliptic equation

    1/2 |kappa|^2 y'' + eta y' + F(v, kappa y') = lambda,    y(0) = 0,

with ``z = kappa y'``.  It is constructed by vanishing discount: for each
``rho`` the discounted equation ``rho y = 1/2|kappa|^2 y'' + eta y' + F`` is
solved, ``lambda_rho = rho y_rho(0)``, and ``lambda`` is extrapolated to
``rho = 0``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ._parabolic import ConvergenceError, quadratic_slope
from .grid import Grid1D, GridFn, d1, d2, interp_values
from .model import AssumptionWarning, ModelSpec, dist2_pi, estimate_lipschitz_constants, project_pi

DEFAULT_RHO_SCHEDULE = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)


def _theta_e1(model: ModelSpec, v, shape):
    th = model.theta(v)
    out = np.zeros(shape)
    out[..., 0] = th
    return out


def driver_f(model: ModelSpec, v, z):
    """Generator ``F(v, z)`` of the ergodic BSDE.

    ``F = 1/2 gamma^2 dist^2(Pi, (z + theta e1)/gamma) - 1/2 |z + theta e1|^2
    + 1/2 |z|^2``.  ``v`` and ``z[..., :]`` broadcast against each other.
    """
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast_shapes(v.shape, z.shape[:-1]) + (2,)
    z = np.broadcast_to(z, shape)
    w = z + _theta_e1(model, np.broadcast_to(v, shape[:-1]), shape)
    g = model.gamma
    return (0.5 * g**2 * dist2_pi(model, w / g) - 0.5 * np.sum(w**2, axis=-1)
            + 0.5 * np.sum(z**2, axis=-1))


def line_driver(model: ModelSpec, v, p):
    """``F(v, kappa p)`` for a scalar gradient ``p`` (the PDE nonlinearity)."""
    p = np.asarray(p, dtype=float)
    return driver_f(model, v, p[..., None] * model.kappa_vec)


@dataclass
class ErgodicSolution:
    """Ergodic constant ``lam`` and the normalized potential ``y`` on a grid.

    ``z[i] = kappa * y'(v_i)``.  ``lambda_rho`` holds the discounted
    approximations behind the extrapolated ``lam``.
    """

    model: ModelSpec
    lam: float
    y: GridFn
    z: np.ndarray
    rho_used: list[float]
    lambda_rho: list[float]
    residual: float
    iterations: list[int] = field(default_factory=list)

    @property
    def grid(self) -> Grid1D:
        return self.y.grid

    def __post_init__(self):
        self._yp = d1(self.y.values, self.grid.h)

    @property
    def y_prime(self) -> np.ndarray:
        return self._yp

    def z_at(self, v, clamp: bool = True) -> np.ndarray:
        """Interpolated ``z(v)``, shape ``v.shape + (2,)``."""
        p = interp_values(self.grid, self.y_prime, v, clamp=clamp)
        return np.asarray(p)[..., None] * self.model.kappa_vec

    def y_at(self, v, clamp: bool = True):
        return interp_values(self.grid, self.y.values, v, clamp=clamp)

    def renormalized(self, v_ref: float) -> "ErgodicSolution":
        """Shift ``y`` so that it vanishes at the node ``v_ref``."""
        i = self.grid.index_of(v_ref)
        y = GridFn(self.grid, self.y.values - self.y.values[i])
        res = ergodic_residual(self.model, y, self.lam)
        return ErgodicSolution(self.model, self.lam, y, self.z.copy(), list(self.rho_used),
                               list(self.lambda_rho), res, list(self.iterations))

    def to_csv(self, path) -> None:
        from .grid import write_columns
        write_columns(path, ("v", "y", "z1", "z2"),
                      [self.grid.nodes, self.y.values, self.z[:, 0], self.z[:, 1]])


def ergodic_residual(model: ModelSpec, y: GridFn, lam: float) -> float:
    """Sup over interior nodes of ``1/2|kappa|^2 y'' + eta y' + F(v, kappa y') - lam``."""
    g = y.grid
    v = g.nodes
    yp = d1(y.values, g.h)
    r = model.diffusion * d2(y.values, g.h) + model.eta(v) * yp + line_driver(model, v, yp) - lam
    return float(np.max(np.abs(r[1:-1])))


def _bordered_matrix(n, i0, h, D, rho, b):
    """Sparse matrix of the discounted problem with ``w(v_i0)`` replaced by ``lambda_rho``.

    Rows ``1..n-2``: ``rho w_i + lam - D w''_i - b_i w'_i``; rows 0 and n-1:
    ``w0 - 2 w1 + w2`` and its mirror.
    """
    i = np.arange(1, n - 1)
    cl = -(D / h**2 - b / (2 * h))
    cc = np.full(n - 2, rho + 2 * D / h**2)
    cu = -(D / h**2 + b / (2 * h))
    rows = np.concatenate([i, i, i, [0, 0, 0, n - 1, n - 1, n - 1]])
    cols = np.concatenate([i - 1, i, i + 1, [0, 1, 2, n - 1, n - 2, n - 3]])
    vals = np.concatenate([cl, cc, cu, [1.0, -2.0, 1.0, 1.0, -2.0, 1.0]])
    # column i0 multiplies w(v_i0) = 0; reuse it for lambda_rho
    keep = cols != i0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    rows = np.concatenate([rows, i])
    cols = np.concatenate([cols, np.full(n - 2, i0)])
    vals = np.concatenate([vals, np.ones(n - 2)])
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


def solve_ergodic(model: ModelSpec, grid: Grid1D, rho_schedule=DEFAULT_RHO_SCHEDULE,
                  max_iters: int = 400, tol: float = 1e-10, damping: float = 0.5,
                  polish_tol: float = 1e-11, warn: bool = True) -> ErgodicSolution:
    """Vanishing-discount solve of the ergodic equation.

    Parameters
    ----------
    rho_schedule : sequence of float
        Strictly decreasing positive discount rates; solved in order with
        warm starts.
    tol : float
        Sup-norm tolerance on successive frozen-gradient iterates.
    damping : float
        Weight of the new iterate in the damped update.
    max_iters : int
        Damped frozen-gradient iterations allowed per rate before switching
        to Newton with a residual-based stop.
    polish_tol : float
        Residual target of the final Newton solve at zero discount, started
        from the extrapolated constant; if it fails the extrapolated pair is kept.

    Raises
    ------
    ConvergenceError
        If neither iteration reaches the tolerance.
    """
    rhos = [float(r) for r in rho_schedule]
    if not rhos or any(r <= 0 for r in rhos) or any(a <= b for a, b in zip(rhos, rhos[1:])):
        raise ValueError("rho_schedule must be nonempty, positive and strictly decreasing")
    if warn:
        _warn_assumptions(model, grid)

    n, h, i0 = grid.n_nodes, grid.h, grid.zero_index
    v = grid.nodes
    vi = v[1:-1]
    D = model.diffusion
    eta = model.eta(vi)
    N = lambda p: line_driver(model, vi, p)  # noqa: E731
    N0, slope = quadratic_slope(N, n - 2)
    rhs = np.zeros(n)
    rhs[1:-1] = N0

    w = np.zeros(n)
    lam_rho = 0.0
    lambda_rho, iters = [], []
    for rho in rhos:
        done = False
        for it in range(max_iters):
            p = (w[2:] - w[:-2]) / (2 * h)
            b = eta + slope(p)
            x = spsolve(_bordered_matrix(n, i0, h, D, rho, b), rhs)
            w_new, lam_new = x.copy(), x[i0]
            w_new[i0] = 0.0
            change = max(np.max(np.abs(w_new - w)), abs(lam_new - lam_rho))
            if change <= tol * (1.0 + np.max(np.abs(w_new))):
                w, lam_rho, done = w_new, lam_new, True
                break
            w = (1 - damping) * w + damping * w_new
            lam_rho = (1 - damping) * lam_rho + damping * lam_new
        if not done:
            # The linearization has a near-null mode whose size grows like
            # 1/rho when the factor dynamics have several wells; frozen-gradient
            # iterates then stall and Newton on the same equations takes over.
            w, lam_rho, k = _newton(w, lam_rho, rho, n, i0, h, D, eta, N, tol)
            it += k
        lambda_rho.append(float(lam_rho))
        iters.append(it + 1)

    lam = richardson_zero(rhos, lambda_rho)
    # the extrapolated pair is a close start for Newton on the undiscounted equations
    try:
        w, lam, _ = _newton(w, lam, 0.0, n, i0, h, D, eta, N, polish_tol)
    except (ConvergenceError, RuntimeError):
        pass
    y = GridFn(grid, w)
    yp = d1(w, h)
    z = yp[:, None] * model.kappa_vec
    return ErgodicSolution(model, lam, y, z, rhos, lambda_rho,
                           ergodic_residual(model, y, lam), iters)


def _newton(w, lam, rho, n, i0, h, D, eta, N, tol, max_steps=50):
    """Newton on the bordered discounted equations, stopped on the residual."""
    def full_residual(w, lam):
        p = (w[2:] - w[:-2]) / (2 * h)
        R = np.empty(n)
        R[1:-1] = rho * w[1:-1] + lam - D * (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2 - eta * p - N(p)
        R[0] = w[0] - 2 * w[1] + w[2]
        R[-1] = w[-1] - 2 * w[-2] + w[-3]
        return R, p

    for k in range(max_steps):
        R, p = full_residual(w, lam)
        if np.max(np.abs(R)) <= tol:
            return w, lam, k
        step = 1e-6
        dN = (N(p + step) - N(p - step)) / (2 * step)
        dx = spsolve(_bordered_matrix(n, i0, h, D, rho, eta + dN), -R)
        lam += dx[i0]
        dx[i0] = 0.0
        w = w + dx
    r = float(np.max(np.abs(full_residual(w, lam)[0])))
    if r <= tol:
        return w, lam, max_steps
    raise ConvergenceError(f"ergodic iteration did not converge at rho = {rho:g} (residual {r:.3e})")


def richardson_zero(rhos, values, order: int = 2) -> float:
    """Polynomial extrapolation to ``rho = 0`` through the smallest rates."""
    k = min(order + 1, len(rhos))
    r = np.asarray(rhos[-k:])
    f = np.asarray(values[-k:])
    if k == 1:
        return float(f[0])
    # Lagrange evaluation at 0 is better conditioned than polyfit here
    total = 0.0
    for j in range(k):
        wj = 1.0
        for m in range(k):
            if m != j:
                wj *= r[m] / (r[m] - r[j])
        total += wj * f[j]
    return float(total)


def _warn_assumptions(model: ModelSpec, grid: Grid1D) -> None:
    m = model if model.c_v is not None else estimate_lipschitz_constants(model, grid)
    for note in m.assumption_notes():
        warnings.warn(note, AssumptionWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# forward criterion


def forward_performance(sol: ErgodicSolution, x, t, v):
    """``U(x, t) = -exp(-gamma x + y(v) - lambda t)``."""
    y = sol.y_at(v, clamp=False)
    return -np.exp(-sol.model.gamma * np.asarray(x, dtype=float) + y - sol.lam * np.asarray(t))


def optimal_strategy(sol: ErgodicSolution, model: ModelSpec, v) -> np.ndarray:
    """``pi* = Proj_Pi((theta(v) e1 + z(v)) / gamma)``."""
    z = sol.z_at(v, clamp=False)
    return strategy_from_z(model, v, z)


def strategy_from_z(model: ModelSpec, v, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    w = z + _theta_e1(model, np.broadcast_to(np.asarray(v, dtype=float), z.shape[:-1]), z.shape)
    return project_pi(model, w / model.gamma)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class BoundCheck:
    name: str
    applicable: bool
    bound: float
    observed: float
    violations: int
    note: str = ""

    @property
    def ok(self) -> bool:
        return (not self.applicable) or self.violations == 0

    def describe(self) -> str:
        if not self.applicable:
            return f"{self.name}: not applicable ({self.note})"
        status = "ok" if self.ok else f"{self.violations} violations"
        return f"{self.name}: max {self.observed:.6g} vs bound {self.bound:.6g} ({status})"


def gradient_bound_check(sol: ErgodicSolution, model: ModelSpec | None = None) -> BoundCheck:
    """Linear-growth bound ``|z(v)| <= c_v / (c_eta - c_v)`` at every node."""
    model = model or sol.model
    if model.c_v is None:
        model = estimate_lipschitz_constants(model, sol.grid)
    zn = np.linalg.norm(sol.z, axis=1)
    why = _not_applicable_reason(model)
    if why:
        return BoundCheck("gradient of y", False, math.nan, float(zn.max()), 0, why)
    bound = model.c_v / (model.c_eta - model.c_v)
    # finite-difference noise at the 1e-10 level is not a violation
    viol = int(np.sum(zn > bound + 1e-9))
    return BoundCheck("gradient of y", True, bound, float(zn.max()), viol)


def _not_applicable_reason(model: ModelSpec) -> str:
    if not model.is_normalized:
        return "|kappa| != 1"
    if not model.c_eta > model.c_v:
        return f"c_eta = {model.c_eta:.4g} <= c_v = {model.c_v:.4g}"
    return ""


@dataclass
class MartingaleReport:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray

    def max_drift_in_stderr(self) -> float:
        """Largest ``|mean_t - mean_0|`` in units of the combined stderr."""
        d = np.abs(self.mean - self.mean[0])
        s = np.sqrt(self.stderr**2 + self.stderr[0] ** 2)
        s = np.where(s > 0, s, np.inf)
        return float(np.max(d / s))


def martingale_check(sol: ErgodicSolution, model: ModelSpec, v0: float, x0: float, horizon: float,
                     cfg, n_checkpoints: int = 5, strategy=None) -> MartingaleReport:
    """Sample means of ``U(X_t, t)`` along wealth driven by a feedback strategy.

    ``strategy(v, t)`` returns the 2-vector position; defaults to ``pi*``.
    Under ``pi*`` the means are flat in ``t``; under any other admissible
    strategy they are non-increasing.
    """
    from .sde import simulate_wealth

    if strategy is None:
        strategy = lambda v, t: optimal_strategy(sol, model, v)  # noqa: E731
    record = np.linspace(0.0, horizon, n_checkpoints + 1)
    ens = simulate_wealth(model, v0, x0, horizon, cfg, strategy, record_times=record)
    U = -np.exp(-model.gamma * ens.x_records + sol.y_at(ens.v_records) - sol.lam * record[:, None])
    n = U.shape[1]
    return MartingaleReport(record, U.mean(axis=1), U.std(axis=1, ddof=1) / math.sqrt(n))
