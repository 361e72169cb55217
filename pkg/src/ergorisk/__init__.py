"""Forward and classical entropic risk measures in a one-factor market.

The forward criterion comes from an ergodic quadratic BSDE, solved here as
an ergodic ODE on a grid; the risk measures solve semilinear parabolic
equations; Monte Carlo routines cross-check both through closed-form and
dual representations.
"""
from .classical import classical_entropic_risk, classical_risk_surfaces, parity_check, solve_classical
from .dual import DualPenalty, dual_gap_mc, g_star
from .ergodic import ErgodicSolution, driver_f, solve_ergodic
from .example import classical_closed_form, forward_closed_form, gaussian_oracle
from .grid import Grid1D, GridFn
from .longrun import SweepResult, fit_decay, hedging_decay, maturity_sweep
from .model import (AssumptionWarning, CappedLinearTheta, ConfigError, ConstantTheta, ModelSpec,
                    OUDrift, PayoffSpec, RunConfig, parse_config)
from .risk import RiskSurface, driver_g, hedging_strategy, solve_risk_bsde
from .sde import McConfig, McEstimate, simulate_factor

__all__ = [
    "AssumptionWarning", "CappedLinearTheta", "ConfigError", "ConstantTheta", "DualPenalty",
    "ErgodicSolution", "Grid1D", "GridFn", "McConfig", "McEstimate", "ModelSpec", "OUDrift",
    "PayoffSpec", "RiskSurface", "RunConfig", "SweepResult", "classical_closed_form",
    "classical_entropic_risk", "classical_risk_surfaces", "driver_f", "driver_g", "dual_gap_mc",
    "fit_decay", "forward_closed_form", "g_star", "gaussian_oracle", "hedging_decay",
    "hedging_strategy", "maturity_sweep", "parity_check", "parse_config", "simulate_factor",
    "solve_classical", "solve_ergodic", "solve_risk_bsde",
]
