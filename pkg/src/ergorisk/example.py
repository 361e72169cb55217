"""Closed-form representations of both risk measures for ``Pi = R x {0}``.

With ``c = gamma kappa2^2 / |kappa|^2`` the map ``v -> exp(c u(v, t))`` is
harmonic for the factor under a drift-adjusted measure, so

    rho = (1/c) ln E_Q[exp(c g(V_T))].

The forward measure uses ``Q`` with drift ``eta - kappa1 theta + kappa2 z2(v)``;
the classical one uses ``Q^T`` with drift ``eta - kappa1 theta + gamma kappa2 Q2^0(v, t)``
where ``Q^0 = kappa P^0_v`` comes from the zero-payout classical problem.
For ``|kappa| = 1`` the constant ``c`` reduces to ``gamma kappa2^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classical import ClassicalSurface, classical_risk_surfaces, solve_classical
from .ergodic import ErgodicSolution
from .grid import Grid1D
from .model import ConstantTheta, ModelSpec, OUDrift, PayoffSpec
from .risk import FieldInterpolator, solve_risk_bsde
from .sde import McConfig, McEstimate, simulate_factor


def gaussian_oracle(model: ModelSpec, v0: float, T: float) -> float:
    """Forward risk of ``xi = -V_T`` for an OU factor with constant ``theta``.

    Under ``Q`` the factor is Gaussian with mean
    ``v0 e^{-aT} - kappa1 theta0 (1 - e^{-aT}) / a`` and variance
    ``|kappa|^2 (1 - e^{-2aT}) / (2a)``; the entropic transform adds
    ``c/2`` times the variance.
    """
    if not isinstance(model.eta, OUDrift) or not isinstance(model.theta, ConstantTheta):
        raise ValueError("Gaussian oracle needs the OU drift and a constant theta")
    a = model.eta.alpha
    th = model.theta.theta0
    k1, k2 = model.kappa
    mean = v0 * math.exp(-a * T) - k1 * th * (1 - math.exp(-a * T)) / a
    if model.constraint == "full_space":
        return mean
    return mean + model.gamma * k2**2 * (1 - math.exp(-2 * a * T)) / (4 * a)


def entropic_constant(model: ModelSpec) -> float:
    if model.constraint != "first_coordinate_line":
        raise ValueError("closed-form estimator is derived for Pi = R x {0}")
    k2 = model.kappa[1]
    if k2 == 0.0:
        raise ValueError("kappa2 = 0 makes the exponential transform degenerate")
    return model.gamma * k2**2 / model.kappa_norm2


def log_mean_exp_estimate(g_T: np.ndarray, c: float, seed: int,
                          antithetic: bool = False) -> McEstimate:
    """``(1/c) ln mean(exp(c g))`` with jackknife bias correction.

    The standard error comes from the delta method.  Samples are shifted by
    their maximum before exponentiation, which also makes a deterministic
    ``g`` return its value exactly.
    """
    g_T = np.asarray(g_T, dtype=float)
    if antithetic:
        # pair partners share the noise; work with pair averages of exp
        shift = g_T.max()
        Y = np.exp(c * (g_T - shift))
        Y = 0.5 * (Y[0::2] + Y[1::2])
    else:
        shift = g_T.max()
        Y = np.exp(c * (g_T - shift))
    n = len(Y)
    S = Y.sum()
    mean = S / n
    full = shift + math.log(mean) / c
    loo = shift + np.log((S - Y) / (n - 1)) / c
    est = n * full - (n - 1) * loo.mean()
    if np.all(Y == Y[0]):
        est = full
    se = Y.std(ddof=1) / (math.sqrt(n) * mean * abs(c))
    return McEstimate(float(est), float(se), int(len(g_T)), int(seed))


def forward_closed_form(model: ModelSpec, ergodic: ErgodicSolution, payoff, T: float, v0: float,
                        cfg: McConfig, record_T=None) -> McEstimate | dict:
    """Monte Carlo of the forward closed form at ``(v0, T)``.

    ``record_T`` may list several maturities ``<= T``; the same paths then
    serve all of them (the ``Q`` drift does not depend on time) and a dict
    ``{T_i: McEstimate}`` is returned.
    """
    c = entropic_constant(model)
    k1, k2 = model.kappa

    def drift(v, t):
        return -k1 * model.theta(v) + k2 * ergodic.z_at(v)[..., 1]

    times = [T] if record_T is None else list(record_T)
    ens = simulate_factor(model, v0, T, cfg, drift_adjust=drift, record_times=times)
    out = {Ti: log_mean_exp_estimate(payoff(ens.records[j]), c, cfg.seed, cfg.antithetic)
           for j, Ti in enumerate(times)}
    return out[T] if record_T is None else out


def classical_closed_form(model: ModelSpec, P0: ClassicalSurface, payoff, T: float, v0: float,
                          cfg: McConfig) -> McEstimate:
    """Monte Carlo of the classical closed form; ``P0`` solves the zero-payout problem."""
    c = entropic_constant(model)
    if not math.isclose(P0.T, T):
        P0 = P0.restrict(T)
    k1, k2 = model.kappa
    g = model.gamma
    P0v = FieldInterpolator(P0)

    def drift(v, t):
        # gamma kappa2 Q2^0 with Q2^0 = kappa2 P^0_v
        return -k1 * model.theta(v) + g * k2 * (k2 * P0v(v, t))

    ens = simulate_factor(model, v0, T, cfg, drift_adjust=drift)
    return log_mean_exp_estimate(payoff(ens.terminal), c, cfg.seed, cfg.antithetic)


def measure_gap_field(model: ModelSpec, ergodic: ErgodicSolution, P0: ClassicalSurface, t: float) -> np.ndarray:
    """``|kappa2 (gamma Q2^0(v, t) - z2(v))|`` at every node."""
    k2 = model.kappa[1]
    Q2 = k2 * P0.gradient_at(t)
    return np.abs(k2 * (model.gamma * Q2 - ergodic.z[:, 1]))


def measure_comparison(model: ModelSpec, ergodic: ErgodicSolution, P0: ClassicalSurface,
                       horizon: float, cfg: McConfig, v0: float = 0.0) -> float:
    """Largest ``|kappa2 (gamma Q2^0 - z2)|`` met along factor paths on ``[0, horizon]``.

    The exponent of the density between the classical and forward dual
    measures is driven by this difference.
    """
    if horizon > P0.T + 1e-12:
        raise ValueError("horizon exceeds the classical surface")
    k2 = model.kappa[1]
    g = model.gamma
    P0v = FieldInterpolator(P0)
    worst = 0.0

    def running(v, t):
        nonlocal worst
        z2 = ergodic.z_at(v)[..., 1]
        d = np.abs(k2 * (g * k2 * P0v(v, t) - z2))
        worst = max(worst, float(d.max()))
        return d

    run = McConfig(cfg.n_paths, cfg.n_steps, cfg.seed, cfg.antithetic, threads=1)
    simulate_factor(model, v0, horizon, run, running=running)
    return worst


@dataclass
class ClosedFormReport:
    rho_forward_mc: McEstimate
    rho_classical_mc: McEstimate
    rho_forward_pde: float
    rho_classical_pde: float
    gaussian_oracle: float | None = None

    @property
    def forward_ok(self) -> bool:
        return self.rho_forward_mc.within(self.rho_forward_pde)

    @property
    def classical_ok(self) -> bool:
        return self.rho_classical_mc.within(self.rho_classical_pde)

    def row(self) -> dict:
        return {
            "rho_forward_mc": self.rho_forward_mc.mean,
            "rho_forward_stderr": self.rho_forward_mc.stderr,
            "rho_forward_pde": self.rho_forward_pde,
            "rho_classical_mc": self.rho_classical_mc.mean,
            "rho_classical_stderr": self.rho_classical_mc.stderr,
            "rho_classical_pde": self.rho_classical_pde,
            "gaussian_oracle": "" if self.gaussian_oracle is None else self.gaussian_oracle,
            "n_paths": self.rho_forward_mc.n_paths,
            "seed": self.rho_forward_mc.seed,
        }


def closed_form_report(model: ModelSpec, ergodic: ErgodicSolution, payoff: PayoffSpec, T: float,
                       v0: float, cfg: McConfig, dt: float | None = None) -> ClosedFormReport:
    grid: Grid1D = ergodic.grid
    fwd = solve_risk_bsde(model, ergodic, payoff, T, dt=dt)
    cls = classical_risk_surfaces(model, payoff, T, grid, dt=dt)
    oracle = None
    if (payoff.kind == "linear" and isinstance(model.theta, ConstantTheta)
            and isinstance(model.eta, OUDrift)):
        oracle = gaussian_oracle(model, v0, T)
    return ClosedFormReport(
        forward_closed_form(model, ergodic, payoff, T, v0, cfg),
        classical_closed_form(model, cls.zero, payoff, T, v0, cfg),
        fwd.value(v0, 0.0),
        cls.value(v0, 0.0),
        oracle,
    )


def zero_payout_surface(model: ModelSpec, T: float, grid: Grid1D, dt: float | None = None) -> ClassicalSurface:
    return solve_classical(model, np.zeros(grid.n_nodes), T, grid, dt=dt)
