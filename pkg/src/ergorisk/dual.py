"""Convex dual of the risk driver and Monte Carlo check of the dual representation.

``G*(v, z, q) = sup_zbar (zbar . q - G(v, z, zbar))``.  For the shipped
constraint sets ``G`` is quadratic in ``zbar`` and the conjugate is explicit:

* ``Pi = R x {0}``: ``|q2 - z2|^2 / (2 gamma)`` on ``q1 = -theta(v)``, else ``+inf``;
* ``Pi = R^2``: ``0`` at ``q = (-theta(v), 0)``, else ``+inf``.

The minimizing density in the dual representation is the gradient of ``G``
in ``zbar``, so the dual measure always has ``q1 = -theta(V)``: it is an
equivalent martingale measure for the traded asset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .ergodic import ErgodicSolution
from .grid import write_columns
from .model import ModelSpec, project_pi
from .risk import FieldInterpolator, RiskSurface, driver_g
from .sde import McConfig, McEstimate, simulate_factor


def _on_slice(q1, theta, tol=1e-12):
    return np.abs(q1 + theta) <= tol * (1.0 + np.abs(theta))


def g_star(model: ModelSpec, v, z, q):
    """Closed-form conjugate; ``+inf`` off the effective domain."""
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    q = np.asarray(q, dtype=float)
    th = model.theta(v)
    if model.constraint == "full_space":
        ok = _on_slice(q[..., 0], th) & (np.abs(q[..., 1]) <= 1e-12)
        out = np.where(ok, 0.0, np.inf)
    else:
        ok = _on_slice(q[..., 0], th)
        out = np.where(ok, (q[..., 1] - z[..., 1]) ** 2 / (2 * model.gamma), np.inf)
    return float(out) if out.ndim == 0 else out


def g_star_numeric(model: ModelSpec, v: float, z, q, box: float = 50.0, n: int = 41) -> float:
    """Supremum of ``zbar . q - G`` over the square ``|zbar_i| <= box``.

    Coarse lattice search refined by bounded L-BFGS.  Off the effective
    domain the value grows with ``box`` instead of being infinite.
    """
    z = np.asarray(z, dtype=float)
    q = np.asarray(q, dtype=float)
    s = np.linspace(-box, box, n)
    Zb = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = Zb @ q - driver_g(model, v, z, Zb)
    x0 = Zb[int(np.argmax(vals))]
    res = minimize(lambda zb: -(zb @ q - driver_g(model, v, z, zb)), x0,
                   method="L-BFGS-B", bounds=[(-box, box)] * 2)
    return float(max(-res.fun, vals.max()))


@dataclass(frozen=True)
class DualPenalty:
    """``G*`` evaluator; ``closed_form=False`` switches to numeric conjugation."""

    model: ModelSpec
    closed_form: bool = True
    box: float = 50.0

    def __call__(self, v, z, q):
        if self.closed_form:
            return g_star(self.model, v, z, q)
        v = np.atleast_1d(np.asarray(v, dtype=float))
        z = np.asarray(z, dtype=float).reshape(-1, 2)
        q = np.asarray(q, dtype=float).reshape(-1, 2)
        n = max(len(v), len(z), len(q))
        v, z, q = (np.broadcast_to(a, (n,) + a.shape[1:]) for a in (v, z, q))
        out = np.array([g_star_numeric(self.model, v[i], z[i], q[i], self.box) for i in range(n)])
        return float(out[0]) if n == 1 else out


def optimal_density(model: ModelSpec, v, z, zbar) -> np.ndarray:
    """Gradient of ``zbar -> G(v, z, zbar)``.

    Equals ``z' - gamma Proj((z' + theta e1)/gamma)`` with ``z' = z + gamma zbar``;
    for ``Pi = R x {0}`` this is ``(-theta(v), z2 + gamma zbar2)``.
    """
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    g = model.gamma
    zp = z + g * zbar
    w = zp.copy()
    w[..., 0] += model.theta(v)
    q = zp - g * project_pi(model, w / g)
    # q1 is -theta by construction; set it exactly so the penalty is finite
    q[..., 0] = -model.theta(v)
    return q


def duality_defect(model: ModelSpec, v, z, zbar):
    """``G - zbar . q* + G*(q*)``; zero when ``q*`` attains the conjugate."""
    q = optimal_density(model, v, z, zbar)
    return driver_g(model, v, z, zbar) - np.sum(np.asarray(zbar) * q, axis=-1) + g_star(model, v, z, q)


def effective_domain_samples(model: ModelSpec, v: float, z, q_box, n: int) -> np.ndarray:
    """Points of the effective domain of ``G*(v, z, .)`` inside ``q_box``.

    ``q_box = ((q1_lo, q1_hi), (q2_lo, q2_hi))``; the second axis is sampled
    with ``n`` points.
    """
    th = float(model.theta(v))
    (a1, b1), (a2, b2) = q_box
    if not a1 <= -th <= b1:
        return np.empty((0, 2))
    if model.constraint == "full_space":
        return np.array([[-th, 0.0]]) if a2 <= 0.0 <= b2 else np.empty((0, 2))
    q2 = np.linspace(a2, b2, n)
    return np.column_stack([np.full(n, -th), q2])


def fenchel_moreau_check(model: ModelSpec, v: float, z, zbar, q_box, n: int = 2001) -> float:
    """``G(v,z,zbar) - max_q (zbar . q - G*(v,z,q))`` over sampled ``q``.

    Nonnegative; for ``Pi = R x {0}`` it is at most ``spacing^2 / (8 gamma)``.
    """
    Q = effective_domain_samples(model, v, z, q_box, n)
    if len(Q) == 0:
        raise ValueError("q_box misses the effective domain of the conjugate")
    z = np.asarray(z, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    vals = Q @ zbar - g_star(model, np.full(len(Q), v), np.broadcast_to(z, Q.shape), Q)
    return float(driver_g(model, v, z, zbar) - vals.max())


# ---------------------------------------------------------------------------
# pointwise bounds


def g_bounds(model: ModelSpec, v, z, zbar):
    """Quadratic envelope ``-B <= G <= B`` with ``B = gamma|zbar|^2 + (2/gamma)(|z|^2 + theta^2)``."""
    g = model.gamma
    th = model.theta(v)
    zz = np.sum(np.asarray(z) ** 2, axis=-1)
    B = g * np.sum(np.asarray(zbar) ** 2, axis=-1) + (2 / g) * (zz + th**2)
    return -B, B


def g_star_lower_bound(model: ModelSpec, v, z, q):
    """``max(0, |q|^2/(4 gamma) - (2/gamma)(|z|^2 + theta^2))``."""
    g = model.gamma
    th = model.theta(v)
    zz = np.sum(np.asarray(z) ** 2, axis=-1)
    qq = np.sum(np.asarray(q) ** 2, axis=-1)
    return np.maximum(0.0, qq / (4 * g) - (2 / g) * (zz + th**2))


# ---------------------------------------------------------------------------
# Monte Carlo verification of the dual representation


@dataclass
class DualRow:
    perturbation_id: int
    epsilon: float
    objective: float
    stderr: float
    optimum: float
    gap: float
    gap_stderr: float

    @property
    def minimal_ok(self) -> bool:
        """Objective at least the optimum, up to three standard errors."""
        return self.gap >= -3 * self.gap_stderr


@dataclass
class DualReport:
    rho_pde: float
    dual_value: McEstimate
    rows: list[DualRow] = field(default_factory=list)

    @property
    def value_ok(self) -> bool:
        return self.dual_value.within(self.rho_pde)

    def to_csv(self, path) -> None:
        cols = list(zip(*[(r.perturbation_id, r.epsilon, r.objective, r.stderr, r.optimum, r.gap)
                          for r in self.rows])) or [[]] * 6
        write_columns(path, ("perturbation_id", "epsilon", "objective", "stderr", "optimum", "gap"), cols)


DEFAULT_PERTURBATIONS: tuple[Callable, ...] = (
    lambda v: np.ones_like(v),
    lambda v: -np.ones_like(v),
    np.sin,
    lambda v: np.tanh(v / 5.0),
    lambda v: np.cos(v / 3.0),
)


def dual_gap_mc(model: ModelSpec, ergodic: ErgodicSolution, surface: RiskSurface, v0: float,
                cfg: McConfig, payoff, perturbations: Sequence[Callable] = DEFAULT_PERTURBATIONS,
                epsilon: float = 0.2) -> DualReport:
    """Monte Carlo evaluation of ``J(q) = E_{Q^q}[xi_T + int_0^T G*(V, z, q) ds]``.

    ``xi_T = -g(V_T)``.  Under ``Q^q`` the factor drift is ``eta + kappa . q``.
    At ``q*`` the value ``-J(q*)`` reproduces the PDE risk ``rho_0``; each
    perturbation ``q* + epsilon * b(V)`` must not lower ``J``.  A
    perturbation ``b`` may return scalars (second coordinate only) or
    2-vectors; a nonzero first coordinate leaves the finite-penalty region
    and is rejected.  All runs share the random numbers of ``cfg``.
    """
    if model.constraint != "first_coordinate_line":
        raise ValueError("Monte Carlo dual check is implemented for Pi = R x {0}")
    T = surface.T
    grad = FieldInterpolator(surface)
    k1, k2 = model.kappa
    g = model.gamma
    probe = np.linspace(surface.grid.v_min, surface.grid.v_max, 257)
    fields = []
    for b in perturbations:
        out = np.asarray(b(probe), dtype=float)
        if out.ndim == 2:
            if np.any(out[:, 0] != 0.0):
                raise ValueError("perturbation moves q1 off -theta: infinite penalty")
            fields.append(lambda v, b=b: np.asarray(b(v), dtype=float)[:, 1])
        else:
            fields.append(b)
        if not np.all(np.isfinite(out)):
            raise ValueError("perturbation field must be bounded")

    def run(delta):
        def shift(v, t):
            # q2 - z2 along the path
            s = g * k2 * grad(v, t)
            return s if delta is None else s + epsilon * delta(v)

        def drift(v, t):
            return -k1 * model.theta(v) + k2 * (ergodic.z_at(v)[..., 1] + shift(v, t))

        def penalty(v, t):
            return shift(v, t) ** 2 / (2 * g)

        ens = simulate_factor(model, v0, T, cfg, drift_adjust=drift, running=penalty)
        return -payoff(ens.terminal) + ens.integral

    base = run(None)
    opt = McEstimate.from_samples(base, cfg.seed, cfg.antithetic)
    dual_value = McEstimate(-opt.mean, opt.stderr, opt.n_paths, opt.seed)
    rho_pde = surface.value(v0, 0.0)
    rows = []
    for i, b in enumerate(fields):
        x = run(b)
        est = McEstimate.from_samples(x, cfg.seed, cfg.antithetic)
        diff = McEstimate.from_samples(x - base, cfg.seed, cfg.antithetic)
        rows.append(DualRow(i, epsilon, est.mean, est.stderr, opt.mean, diff.mean, diff.stderr))
    return DualReport(rho_pde, dual_value, rows)
