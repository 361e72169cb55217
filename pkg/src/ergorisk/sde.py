"""Euler-Maruyama simulation of the factor and wealth processes.

Random numbers come from counter-based Philox streams: the normals of a
path at a given step depend only on ``(seed, path index, step index)``.
Paths are processed in fixed-size chunks, so serial and threaded runs
produce identical ensembles, and results are always concatenated in path
order before any statistic is taken.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import write_columns
from .model import ModelSpec

CHUNK = 4096  # paths per stream block; fixed so results never depend on threading
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo controls.  ``threads`` affects speed only, never output."""

    n_paths: int
    n_steps: int
    seed: int = 0
    antithetic: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.n_paths < 2 or self.n_steps < 1:
            raise ValueError("need n_paths >= 2 and n_steps >= 1")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even path count")
        if self.threads < 1:
            raise ValueError("threads must be positive")

    def dt(self, horizon: float) -> float:
        return horizon / self.n_steps

    @classmethod
    def for_horizon(cls, horizon: float, dt: float, **kw) -> "McConfig":
        n = int(round(horizon / dt))
        if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
            raise ValueError(f"dt = {dt} does not divide the horizon {horizon}")
        return cls(n_steps=n, **kw)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int

    @classmethod
    def from_samples(cls, x, seed: int, antithetic: bool = False) -> "McEstimate":
        x = np.asarray(x, dtype=float)
        if antithetic:
            # antithetic partners are dependent; the pair averages are not
            pairs = 0.5 * (x[0::2] + x[1::2])
            se = pairs.std(ddof=1) / math.sqrt(len(pairs))
        else:
            se = x.std(ddof=1) / math.sqrt(len(x))
        return cls(float(x.mean()), float(se), int(len(x)), int(seed))

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr

    def z_score(self, value: float) -> float:
        return (self.mean - value) / self.stderr if self.stderr > 0 else (
            0.0 if self.mean == value else math.inf)


# ---------------------------------------------------------------------------
# random streams and the chunk driver


def chunk_normals(cfg: McConfig, chunk: int, step: int, m: int) -> np.ndarray:
    """Standard normals of shape ``(2, m)`` for the first ``m`` paths of a chunk.

    A full chunk is always drawn, so the noise of path ``chunk * CHUNK + j``
    depends on ``(seed, path index, step)`` only and not on ``n_paths``.
    """
    bitgen = np.random.Philox(key=[cfg.seed & _MASK64, 0], counter=[0, step, chunk, 0])
    rng = np.random.Generator(bitgen)
    if not cfg.antithetic:
        return rng.standard_normal((2, CHUNK))[:, :m]
    base = rng.standard_normal((2, CHUNK // 2))
    out = np.empty((2, CHUNK))
    out[:, 0::2] = base
    out[:, 1::2] = -base
    return out[:, :m]


def _chunk_sizes(n_paths: int) -> list[int]:
    full, rest = divmod(n_paths, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def map_chunks(cfg: McConfig, work: Callable[[int, int], dict]) -> dict:
    """Run ``work(chunk, m)`` on every chunk and join the outputs in path order.

    ``work`` returns a dict of arrays whose last axis runs over the chunk's
    paths.
    """
    sizes = _chunk_sizes(cfg.n_paths)
    jobs = list(enumerate(sizes))
    if cfg.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(lambda a: work(*a), jobs))
    else:
        parts = [work(c, m) for c, m in jobs]
    return {k: np.concatenate([p[k] for p in parts], axis=-1) for k in parts[0]}


def _record_steps(record_times, horizon: float, n_steps: int) -> np.ndarray:
    if record_times is None:
        return np.array([n_steps])
    dt = horizon / n_steps
    steps = []
    for t in record_times:
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9 * max(1.0, horizon) or not 0 <= k <= n_steps:
            raise ValueError(f"record time {t} is not on the time grid")
        steps.append(k)
    return np.array(steps)


def _checked(a, what: str):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite {what}; the adjusted dynamics are ill-posed")
    return a


# ---------------------------------------------------------------------------
# factor paths


@dataclass
class PathEnsemble:
    """Factor values at ``times`` (rows) for every path (columns).

    ``integral`` holds the left-point Riemann sum of the running functional,
    if one was supplied.
    """

    times: np.ndarray
    records: np.ndarray
    integral: np.ndarray | None
    seed: int

    @property
    def terminal(self) -> np.ndarray:
        return self.records[-1]

    def to_csv(self, path) -> None:
        n_t, n_p = self.records.shape
        pid = np.repeat(np.arange(n_p), n_t)
        t = np.tile(self.times, n_p)
        write_columns(path, ("path_id", "t", "v"), [pid, t, self.records.T.ravel()])


def simulate_factor(model: ModelSpec, v0, horizon: float, cfg: McConfig,
                    drift_adjust: Callable | None = None, running: Callable | None = None,
                    record_times=None) -> PathEnsemble:
    """Simulate ``dV = (eta(V) + drift_adjust(V,t)) dt + kappa1 dW1 + kappa2 dW2``.

    Parameters
    ----------
    v0 : float or ndarray
        Start value, or one start value per path.
    drift_adjust, running : callable, optional
        Vectorized ``f(v, t)``.  ``running`` is integrated along each path.
    record_times : sequence of float, optional
        Grid times to store; defaults to the horizon only.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    dt = cfg.dt(horizon)
    sq = math.sqrt(dt)
    k1, k2 = model.kappa
    steps = _record_steps(record_times, horizon, cfg.n_steps)
    v0 = np.broadcast_to(np.asarray(v0, dtype=float), (cfg.n_paths,))

    def work(chunk, m):
        start = chunk * CHUNK
        v = v0[start:start + m].copy()
        acc = np.zeros(m) if running is not None else None
        rec = np.empty((len(steps), m))
        rec[steps == 0] = v
        for k in range(cfg.n_steps):
            t = k * dt
            xi = chunk_normals(cfg, chunk, k, m)
            drift = model.eta(v)
            if drift_adjust is not None:
                drift = drift + _checked(drift_adjust(v, t), "drift adjustment")
            if acc is not None:
                acc += _checked(running(v, t), "running functional") * dt
            v = v + drift * dt + sq * (k1 * xi[0] + k2 * xi[1])
            hit = steps == k + 1
            if hit.any():
                rec[hit] = v
        out = {"rec": rec}
        if acc is not None:
            out["acc"] = acc
        return out

    res = map_chunks(cfg, work)
    return PathEnsemble(steps * dt, res["rec"], res.get("acc"), cfg.seed)


@dataclass
class WealthEnsemble:
    times: np.ndarray
    v_records: np.ndarray
    x_records: np.ndarray


def simulate_wealth(model: ModelSpec, v0: float, x0: float, horizon: float, cfg: McConfig,
                    strategy: Callable, record_times=None) -> WealthEnsemble:
    """Factor and wealth ``dX = pi^T (theta(V) e1 dt + dW)`` on common noise.

    ``strategy(v, t)`` returns positions of shape ``(m, 2)``.
    """
    dt = cfg.dt(horizon)
    sq = math.sqrt(dt)
    k1, k2 = model.kappa
    steps = _record_steps(record_times, horizon, cfg.n_steps)

    def work(chunk, m):
        v = np.full(m, float(v0))
        x = np.full(m, float(x0))
        rv = np.empty((len(steps), m))
        rx = np.empty((len(steps), m))
        rv[steps == 0] = v
        rx[steps == 0] = x
        for k in range(cfg.n_steps):
            t = k * dt
            xi = chunk_normals(cfg, chunk, k, m)
            pi = _checked(strategy(v, t), "strategy")
            th = model.theta(v)
            x = x + pi[:, 0] * (th * dt + sq * xi[0]) + pi[:, 1] * sq * xi[1]
            v = v + model.eta(v) * dt + sq * (k1 * xi[0] + k2 * xi[1])
            hit = steps == k + 1
            if hit.any():
                rv[hit] = v
                rx[hit] = x
        return {"v": rv, "x": rx}

    res = map_chunks(cfg, work)
    return WealthEnsemble(steps * dt, res["v"], res["x"])


# ---------------------------------------------------------------------------
# diagnostics for the factor process


def contraction_diagnostic(model: ModelSpec, v: float, vbar: float, horizon: float,
                           cfg: McConfig, drift_adjust: Callable | None = None) -> float:
    """Worst normalized gap ``|V^v_t - V^vbar_t|^2 e^{2 c_eta t} / |v - vbar|^2``.

    Both starting points are driven by the same noise.  Values at most 1
    (up to rounding) certify exponential contraction at rate ``c_eta``.
    """
    if v == vbar:
        raise ValueError("starting points must differ")
    dt = cfg.dt(horizon)
    sq = math.sqrt(dt)
    k1, k2 = model.kappa
    c = model.c_eta
    d0 = (v - vbar) ** 2

    def work(chunk, m):
        a = np.full(m, float(v))
        b = np.full(m, float(vbar))
        worst = np.ones(m)
        for k in range(cfg.n_steps):
            t = k * dt
            xi = chunk_normals(cfg, chunk, k, m)
            noise = sq * (k1 * xi[0] + k2 * xi[1])
            da, db = model.eta(a), model.eta(b)
            if drift_adjust is not None:
                da = da + drift_adjust(a, t)
                db = db + drift_adjust(b, t)
            a = a + da * dt + noise
            b = b + db * dt + noise
            worst = np.maximum(worst, (a - b) ** 2 * math.exp(2 * c * (t + dt)) / d0)
        return {"w": worst}

    return float(map_chunks(cfg, work)["w"].max())


def moment_diagnostic(model: ModelSpec, v0: float, horizon: float, cfg: McConfig, p: float,
                      drift_adjust: Callable | None = None) -> McEstimate:
    """Monte Carlo estimate of ``E|V_horizon|^p``."""
    if p < 1:
        raise ValueError("moment order must be >= 1")
    ens = simulate_factor(model, v0, horizon, cfg, drift_adjust)
    return McEstimate.from_samples(np.abs(ens.terminal) ** p, cfg.seed, cfg.antithetic)


def moment_constant(model: ModelSpec, v0_list, horizon: float, cfg: McConfig, p: float,
                    drift_adjust: Callable | None = None) -> float:
    """Smallest ``C`` with ``E|V_horizon|^p <= C (1 + |v0|^p)`` over ``v0_list``."""
    ratios = [moment_diagnostic(model, v0, horizon, cfg, p, drift_adjust).mean / (1 + abs(v0) ** p)
              for v0 in v0_list]
    return float(max(ratios))


def ou_mean(model: ModelSpec, v0: float, t: float) -> float:
    return v0 * math.exp(-model.c_eta * t)


def ou_variance(model: ModelSpec, t: float) -> float:
    a = model.c_eta
    return model.kappa_norm2 * (1 - math.exp(-2 * a * t)) / (2 * a)
