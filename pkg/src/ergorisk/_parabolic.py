"""Backward semilinear parabolic solver shared by the risk and classical modules.

Solves, in time-to-maturity ``tau = T - t``,

    u_tau = D u_vv + eta(v) u_v + N(v, u_v),    u(v, 0) = terminal(v),

on a uniform grid with zero second derivative at both ends.  Time stepping
is the theta-scheme (Crank-Nicolson) with ``n_rannacher`` implicit-Euler
start steps.  The nonlinearity is written as ``N(v,p) = N(v,0) + a(v,p) p``
with the secant slope ``a``; each implicit step freezes ``a`` at the current
iterate and repeats the linear solve until the iterates stop moving.  The
fixed point is the exact solution of the nonlinear discrete equations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid1D, solve_tridiag


class ConvergenceError(RuntimeError):
    """Inner fixed-point iteration did not settle."""


def secant_slope(N: Callable, p: np.ndarray, N0: np.ndarray, eps: float = 1e-7) -> np.ndarray:
    """``(N(p) - N(0)) / p``, with a centered derivative where ``|p|`` is tiny."""
    p = np.asarray(p, dtype=float)
    small = np.abs(p) < eps
    safe = np.where(small, 1.0, p)
    a = (N(p) - N0) / safe
    if np.any(small):
        step = 1e-6
        da = (N(np.full_like(p, step)) - N(np.full_like(p, -step))) / (2 * step)
        a = np.where(small, da, a)
    return a


def quadratic_slope(N: Callable, m: int):
    """Return ``(N0, slope)`` with exact secant slopes when ``N`` is quadratic in ``p``.

    The drivers of the shipped constraint sets are quadratic forms along any
    line, so three probes determine them.  Other nonlinearities fall back to
    :func:`secant_slope`.
    """
    one = np.ones(m)
    c0, cp, cm = N(np.zeros(m)), N(one), N(-one)
    c1 = 0.5 * (cp - cm)
    c2 = 0.5 * (cp + cm) - c0
    probe = np.linspace(-3.0, 3.0, m)
    exact = N(probe)
    if np.allclose(c0 + (c1 + c2 * probe) * probe, exact, rtol=1e-12, atol=1e-12):
        return c0, lambda p: c1 + c2 * p
    return c0, lambda p: secant_slope(N, p, c0)


@dataclass
class BackwardSolution:
    """Node values ``U[k]`` at ``tau = tau[k]``; ``iterations`` per step."""

    tau: np.ndarray
    U: np.ndarray
    iterations: np.ndarray


def time_grid(T: float, dt: float) -> tuple[int, float]:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt = {dt} does not divide T = {T}")
    return n, T / n


def solve_backward(grid: Grid1D, diffusion: float, drift: np.ndarray, N: Callable,
                   terminal: np.ndarray, T: float, dt: float, theta: float = 0.5,
                   n_rannacher: int = 2, tol: float = 1e-12, max_iter: int = 200,
                   keep: bool = True) -> BackwardSolution:
    """Run the backward scheme from ``tau = 0`` to ``tau = T``.

    Parameters
    ----------
    diffusion : float
        Coefficient ``D`` of ``u_vv``.
    drift : ndarray
        ``eta`` at the grid nodes.
    N : callable
        ``N(p)`` evaluated node-wise for an array ``p`` of first derivatives.
    keep : bool
        Store every time level (needed by surfaces); otherwise only the last.
    """
    n_steps, dt = time_grid(T, dt)
    h = grid.h
    n = grid.n_nodes
    u = np.array(terminal, dtype=float)
    if u.shape != (n,):
        raise ValueError("terminal slice has the wrong length")

    drift_i = np.asarray(drift, dtype=float)[1:-1]
    N0, slope = quadratic_slope(N, n - 2)
    cd = diffusion / h**2

    levels = [u.copy()] if keep else None
    iters = np.zeros(n_steps, dtype=int)

    def operator(uv, b):
        """Interior values of ``D u_vv + b u_v``."""
        return cd * (uv[2:] - 2 * uv[1:-1] + uv[:-2]) + b * (uv[2:] - uv[:-2]) / (2 * h)

    for k in range(n_steps):
        th = 1.0 if k < n_rannacher else theta
        explicit = dt * N0
        if th < 1.0:
            p_old = (u[2:] - u[:-2]) / (2 * h)
            explicit = explicit + (1 - th) * dt * operator(u, drift_i + slope(p_old))
        # end values consistent with the zero-curvature condition
        base = u.copy()
        base[0] = 2 * u[1] - u[2]
        base[-1] = 2 * u[-2] - u[-3]

        u_new = base
        for it in range(max_iter):
            p = (u_new[2:] - u_new[:-2]) / (2 * h)
            b = drift_i + slope(p)
            lo = -th * dt * (cd - b / (2 * h))
            di = np.full(n - 2, 1.0 + 2 * th * dt * cd)
            up = -th * dt * (cd + b / (2 * h))
            # fold u0 = 2 u1 - u2 and u_{n-1} = 2 u_{n-2} - u_{n-3} into the end rows
            di[0] += 2 * lo[0]
            up[0] -= lo[0]
            di[-1] += 2 * up[-1]
            lo[-1] -= up[-1]
            # increment form: a level that the step leaves unchanged gives a zero right side
            inner = base[1:-1] + solve_tridiag(lo, di, up, explicit + th * dt * operator(base, b))
            cand = np.empty(n)
            cand[1:-1] = inner
            cand[0] = 2 * inner[0] - inner[1]
            cand[-1] = 2 * inner[-1] - inner[-2]
            change = np.max(np.abs(cand - u_new))
            u_new = cand
            scale = 1.0 + np.max(np.abs(u_new))
            if change <= tol * scale:
                break
        else:
            raise ConvergenceError(
                f"fixed point did not converge at step {k + 1}/{n_steps} "
                f"(last change {change:.3e}); try a smaller dt"
            )
        iters[k] = it + 1
        u = u_new
        if keep:
            levels.append(u.copy())

    tau = dt * np.arange(n_steps + 1)
    U = np.array(levels) if keep else u[None, :]
    return BackwardSolution(tau if keep else tau[-1:], U, iters)
