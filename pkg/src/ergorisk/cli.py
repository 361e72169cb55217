"""Command-line front end.

Every subcommand reads a plain-text model config, writes CSV files into
``--out`` and pairs them with a JSON manifest that records the config text,
the options and a SHA-256 of each output.  ``--replay MANIFEST`` reruns the
recorded command; outputs are byte-identical for any ``--threads``.

Exit codes: 0 success, 1 failed run or failed check, 2 bad config or usage.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import classical, dual, example, longrun
from .ergodic import solve_ergodic
from .grid import write_columns
from .model import ConfigError, RunConfig, parse_config
from .risk import hedging_strategy, solve_risk_bsde
from .sde import McConfig

DEFAULT_SEED = 2026
FIGURE_V0 = longrun.DEFAULT_V0


def default_config_text() -> str:
    return resources.files("ergorisk").joinpath("configs/default.cfg").read_text()


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    subcommand: str
    config: str
    seed: int
    options: dict
    version: str
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


class Run:
    """Output bookkeeping shared by the subcommands."""

    def __init__(self, out: Path, name: str):
        self.out = out
        self.name = name
        self.files: list[str] = []

    def path(self, filename: str) -> Path:
        self.files.append(filename)
        return self.out / filename

    def digests(self) -> dict:
        return {f: hashlib.sha256((self.out / f).read_bytes()).hexdigest() for f in self.files}


# ---------------------------------------------------------------------------
# subcommands


def cmd_ergodic(cfg: RunConfig, args, run: Run) -> int:
    sol = solve_ergodic(cfg.model, cfg.grid)
    sol.to_csv(run.path("ergodic.csv"))
    write_columns(run.path("ergodic_summary.csv"), ("lambda", "residual", "rho_min"),
                  [[sol.lam], [sol.residual], [min(sol.rho_used)]])
    print(f"lambda = {sol.lam!r}")
    print(f"residual = {sol.residual:.3e}")
    return 0


def cmd_risk(cfg: RunConfig, args, run: Run) -> int:
    model = cfg.model
    erg = solve_ergodic(model, cfg.grid)
    surf = solve_risk_bsde(model, erg, cfg.payoff, args.T, dt=cfg.dt)
    v0 = np.asarray(args.v0, dtype=float)
    rho = np.atleast_1d(surf.value(v0, args.t))
    alpha = hedging_strategy(model, erg, surf, v0, args.t)
    n = len(v0)
    write_columns(run.path("risk.csv"), ("v0", "T", "t", "rho", "alpha1", "alpha2"),
                  [v0, [args.T] * n, [args.t] * n, rho, alpha[:, 0], alpha[:, 1]])
    if args.surface:
        surf.to_csv(run.path("risk_surface.csv"))
    for x, r, a in zip(v0, rho, alpha):
        print(f"v0 = {x!r}: rho = {r!r}, alpha = ({a[0]!r}, {a[1]!r})")
    return 0


def cmd_parity(cfg: RunConfig, args, run: Run) -> int:
    model = cfg.model
    grid = cfg.grid
    erg = solve_ergodic(model, grid)
    v0 = np.asarray(args.v0, dtype=float)
    cols = [[] for _ in range(5)]
    for T in args.T:
        rep = classical.parity_report(model, erg, cfg.payoff, T, dt=cfg.dt)
        cls = classical.classical_risk_surfaces(model, cfg.payoff, T, grid, dt=cfg.dt)
        fwd0 = np.interp(v0, grid.nodes, rep.forward[0])
        dec0 = np.interp(v0, grid.nodes, rep.decomposition[0])
        for x, f, c, d in zip(v0, fwd0, np.atleast_1d(cls.value(v0, 0.0)), dec0):
            for col, val in zip(cols, (x, T, f, c, abs(f - d))):
                col.append(val)
        print(f"T = {T!r}: max parity residual over interior nodes = {rep.max_residual:.3e}")
    write_columns(run.path("parity.csv"),
                  ("v0", "T", "rho_forward", "rho_classical", "parity_residual"), cols)
    return 0


def cmd_dual_check(cfg: RunConfig, args, run: Run) -> int:
    model = cfg.model
    erg = solve_ergodic(model, cfg.grid)
    surf = solve_risk_bsde(model, erg, cfg.payoff, args.T, dt=cfg.dt)
    mc = McConfig.for_horizon(args.T, args.mc_dt, n_paths=args.paths, seed=args.seed,
                              threads=args.threads)
    rep = dual.dual_gap_mc(model, erg, surf, args.v0, mc, cfg.payoff, epsilon=args.epsilon)
    rep.to_csv(run.path("dual.csv"))
    d = rep.dual_value
    write_columns(run.path("dual_summary.csv"),
                  ("v0", "T", "rho_pde", "dual_value", "stderr", "n_paths", "seed"),
                  [[args.v0], [args.T], [rep.rho_pde], [d.mean], [d.stderr], [d.n_paths], [d.seed]])
    print(f"rho (PDE) = {rep.rho_pde!r}; dual value = {d.mean!r} +/- {d.stderr:.2e}")
    for r in rep.rows:
        flag = "ok" if r.minimal_ok else "BELOW OPTIMUM"
        print(f"perturbation {r.perturbation_id}: gap = {r.gap:.4e} +/- {r.gap_stderr:.1e} ({flag})")
    ok = rep.value_ok and all(r.minimal_ok for r in rep.rows)
    return 0 if ok else 1


def cmd_example(cfg: RunConfig, args, run: Run) -> int:
    mc = McConfig.for_horizon(args.T, args.mc_dt, n_paths=args.paths, seed=args.seed,
                              threads=args.threads)
    erg = solve_ergodic(cfg.model, cfg.grid)
    rep = example.closed_form_report(cfg.model, erg, cfg.payoff, args.T, args.v0, mc, dt=cfg.dt)
    row = {"v0": args.v0, "T": args.T, **rep.row()}
    write_columns(run.path("example.csv"), tuple(row), [[x] for x in row.values()])
    for k, x in row.items():
        print(f"{k} = {x!r}")
    return 0


def cmd_figures(cfg: RunConfig, args, run: Run) -> int:
    scenarios = tuple(sorted(set(args.scenario or (1, 2, 3))))
    T_list = tuple(float(t) for t in range(1, int(args.T_max) + 1))
    hed = None
    if args.hedging_paths > 0:
        hed = McConfig(args.hedging_paths, args.hedging_steps, seed=args.seed, threads=1)
    results = longrun.run_figures(scenarios, include_normalized=args.normalized,
                                  threads=args.threads, grid=cfg.grid, T_list=T_list, dt=cfg.dt,
                                  hedging_cfg=hed, base=cfg.model, payoff=cfg.payoff)
    longrun.figures_csv(run.path("figures.csv"), results)
    cols = [[] for _ in range(9)]
    for r in results:
        k1, k2 = r.model.kappa
        sw = r.sweep
        for kind, fit, L, spread in (("forward", sw.fit, sw.L_forward, sw.spread[-1]),
                                     ("classical", sw.fit_classical, sw.L_classical,
                                      sw.spread_classical[-1])):
            for col, x in zip(cols, (r.scenario, k1, k2, kind, L, fit.rate, fit.r2, spread,
                                     int(fit.degenerate))):
                col.append(x)
        print(f"scenario {r.scenario} kappa=({k1:.4g}, {k2:.4g}): L = {sw.L_forward:.6f}, "
              f"rate = {sw.fit.rate:.4f}, R^2 = {sw.fit.r2:.4f}, spread(T_max) = {sw.spread[-1]:.2e}")
    write_columns(run.path("figures_fit.csv"),
                  ("scenario", "kappa1", "kappa2", "measure_kind", "L", "rate", "r2",
                   "spread_T_max", "degenerate"), cols)
    if hed is not None:
        hc = [[] for _ in range(6)]
        for r in results:
            k1, k2 = r.model.kappa
            h = r.hedging
            for T, e, s in zip(h.T_list, h.estimates, h.stderr):
                for col, x in zip(hc, (r.scenario, k1, k2, T, e, s)):
                    col.append(x)
        write_columns(run.path("hedging.csv"),
                      ("scenario", "kappa1", "kappa2", "T", "estimate", "stderr"), hc)
    if args.gnuplot:
        run.path("figures.dat").write_text(longrun.gnuplot_blocks(results))
    return 0


def cmd_selftest(cfg: RunConfig, args, run: Run) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}" + (f": {r.detail}" if r.detail else ""))
    write_columns(run.path("selftest.csv"), ("check", "passed", "detail"),
                  [[r.name for r in results], [int(r.passed) for r in results],
                   [r.detail for r in results]])
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


COMMANDS = {
    "ergodic": cmd_ergodic,
    "risk": cmd_risk,
    "parity": cmd_parity,
    "dual-check": cmd_dual_check,
    "example": cmd_example,
    "figures": cmd_figures,
    "selftest": cmd_selftest,
}

# options that change speed but never output; left out of the replayed options
_RUNTIME_ONLY = {"threads", "out", "config", "replay", "command"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="model config file (default: the shipped default.cfg)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"Monte Carlo seed (default {DEFAULT_SEED})")
    common.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory (default ./out)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; never changes the output (default 1)")

    p = argparse.ArgumentParser(prog="ergorisk", parents=[common],
                                description="Forward and classical entropic risk measures "
                                            "in a stochastic factor model.")
    p.add_argument("--replay", type=Path, default=None,
                   help="rerun the command recorded in a manifest")
    sub = p.add_subparsers(dest="command")

    sub.add_parser("ergodic", parents=[common], help="solve the ergodic equation")

    r = sub.add_parser("risk", parents=[common], help="forward risk measure and hedging strategy")
    r.add_argument("--T", type=float, default=10.0, help="maturity (default 10)")
    r.add_argument("--v0", type=float, nargs="+", default=[10.0], help="factor levels (default 10)")
    r.add_argument("--t", type=float, default=0.0, help="evaluation time (default 0)")
    r.add_argument("--surface", action="store_true", help="also write the full (t, v) surface")

    pa = sub.add_parser("parity", parents=[common], help="forward/classical parity table")
    pa.add_argument("--T", type=float, nargs="+", default=[10.0], help="maturities (default 10)")
    pa.add_argument("--v0", type=float, nargs="+", default=list(FIGURE_V0),
                    help="factor levels (default 5 7.5 10 12.5 15)")

    d = sub.add_parser("dual-check", parents=[common], help="Monte Carlo check of the dual representation")
    d.add_argument("--T", type=float, default=5.0, help="maturity (default 5)")
    d.add_argument("--v0", type=float, default=10.0, help="initial factor level (default 10)")
    d.add_argument("--paths", type=int, default=20000, help="Monte Carlo paths (default 20000)")
    d.add_argument("--mc-dt", type=float, default=0.02, help="Euler step (default 0.02)")
    d.add_argument("--epsilon", type=float, default=0.2, help="perturbation size (default 0.2)")

    e = sub.add_parser("example", parents=[common], help="closed-form Monte Carlo cross-check")
    e.add_argument("--T", type=float, default=5.0, help="maturity (default 5)")
    e.add_argument("--v0", type=float, default=10.0, help="initial factor level (default 10)")
    e.add_argument("--paths", type=int, default=50000, help="Monte Carlo paths (default 50000)")
    e.add_argument("--mc-dt", type=float, default=0.01, help="Euler step (default 0.01)")

    f = sub.add_parser("figures", parents=[common], help="long-maturity sweeps")
    f.add_argument("--scenario", type=int, choices=(1, 2, 3), action="append",
                   help="kappa scenario, repeatable (default: all three)")
    f.add_argument("--T-max", type=float, default=50.0, help="largest maturity (default 50)")
    f.add_argument("--normalized", action=argparse.BooleanOptionalAction, default=True,
                   help="also run the |kappa| = 1 rescaling of each scenario (default on)")
    f.add_argument("--hedging-paths", type=int, default=0,
                   help="paths for the hedging-decay estimate; 0 skips it (default 0)")
    f.add_argument("--hedging-steps", type=int, default=100,
                   help="Euler steps on [0, 1] for the hedging integral (default 100)")
    f.add_argument("--gnuplot", action="store_true", help="also write gnuplot data blocks")

    sub.add_parser("selftest", parents=[common], help="run the exact-identity checks")
    return p


def _options(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k in _RUNTIME_ONLY or k == "seed":
            continue
        out[k] = v
    return out


def _load_config(args) -> tuple[str, RunConfig]:
    text = args.config.read_text() if args.config is not None else default_config_text()
    return text, parse_config(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.replay is not None:
        man = RunManifest.read(args.replay)
        args.command = man.subcommand
        for k, v in man.options.items():
            setattr(args, k, v)
        args.seed = man.seed
        text = man.config
        try:
            cfg = parse_config(text)
        except ConfigError as exc:
            print(f"config error in manifest: {exc}", file=sys.stderr)
            return 2
    else:
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        try:
            text, cfg = _load_config(args)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(out, args.command)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = COMMANDS[args.command](cfg, args, run)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = 1
    seen = set()
    for w in caught:
        msg = f"warning: {w.message}"
        if msg not in seen:
            seen.add(msg)
            print(msg, file=sys.stderr)

    man = RunManifest(args.command, text, args.seed, _options(args), _version(),
                      round(time.perf_counter() - t0, 3), run.digests())
    man.write(out / f"{args.command}.manifest.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
