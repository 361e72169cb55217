"""Long-maturity behaviour of the forward and classical risk measures.

For each loading scenario the forward risk of the put-like payoff is
computed for maturities 1..30 and several start levels. The spread across
start levels shrinks exponentially, and the fitted rate is printed together
with the limit. A coarse grid keeps the run to a few seconds.

    python3 demos/long_maturity.py
"""
from ergorisk.grid import Grid1D
from ergorisk.longrun import run_scenario

T_list = tuple(float(t) for t in range(1, 31))
grid = Grid1D(-30.0, 30.0, 601)

print(f"{'scenario':>8} {'limit':>10} {'rate':>7} {'R2':>7} {'spread(T=1)':>12} {'spread(T=30)':>12}")
for sc in (1, 2, 3):
    res = run_scenario(sc, grid=grid, T_list=T_list, dt=0.05)
    sw = res.sweep
    print(f"{sc:8d} {sw.L_forward:10.5f} {sw.fit.rate:7.3f} {sw.fit.r2:7.4f} "
          f"{sw.spread[0]:12.3e} {sw.spread[-1]:12.3e}")
