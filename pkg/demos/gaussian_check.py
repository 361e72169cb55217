"""Gaussian sanity check: PDE, closed form and Monte Carlo agree.

With a constant market price of risk the forward entropic risk of a linear
payoff is Gaussian and known in closed form. This script solves the ergodic
equation and the backward PDE on the shipped Gaussian preset and prints the
three estimates side by side.

    python3 demos/gaussian_check.py
"""
from importlib.resources import files

from ergorisk.ergodic import solve_ergodic
from ergorisk.example import forward_closed_form, gaussian_oracle
from ergorisk.model import parse_config
from ergorisk.risk import solve_risk_bsde
from ergorisk.sde import McConfig

cfg = parse_config((files("ergorisk.configs") / "gaussian.cfg").read_text())
m, T = cfg.model, 5.0

erg = solve_ergodic(m, cfg.grid)
print(f"ergodic constant lambda = {erg.lam:.8f}")

surface = solve_risk_bsde(m, erg, cfg.payoff, T, dt=cfg.dt)
print(f"{'v0':>6} {'closed form':>12} {'PDE':>12} {'MC':>12} {'stderr':>9}")
for v0 in (-5.0, 0.0, 5.0):
    mc = forward_closed_form(m, erg, cfg.payoff, T, v0,
                             McConfig.for_horizon(T, 0.02, n_paths=20_000, seed=2026))
    print(f"{v0:6.1f} {gaussian_oracle(m, v0, T):12.6f} {surface.value(v0, 0.0):12.6f} "
          f"{mc.mean:12.6f} {mc.stderr:9.2e}")
