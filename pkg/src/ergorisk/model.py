"""Market model, payoff and constraint presets.

The factor follows ``dV = eta(V) dt + kappa1 dW1 + kappa2 dW2`` and a single
stock loads on ``W1`` with market price of risk ``theta(V)``.  Trading is
restricted to a closed convex set ``Pi`` which is either the whole plane or
the first coordinate axis.

Coefficients are closed presets so that the boundedness and Lipschitz
assumptions can be checked and the configuration round-trips through the
plain-text config format.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .grid import Grid1D

CONSTRAINTS = ("full_space", "first_coordinate_line")


class AssumptionWarning(UserWarning):
    """A modelling assumption (normalization, dissipativity) is not met."""


class ConfigError(ValueError):
    """Malformed configuration text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


# ---------------------------------------------------------------------------
# coefficient presets


@dataclass(frozen=True)
class OUDrift:
    """Mean-reverting drift ``eta(v) = -alpha * v``."""

    alpha: float = 0.1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("OU drift needs alpha > 0")

    def __call__(self, v):
        return -self.alpha * np.asarray(v, dtype=float)

    @property
    def dissipativity(self) -> float:
        # (eta(v) - eta(w))(v - w) = -alpha (v - w)^2 exactly
        return self.alpha


@dataclass(frozen=True)
class ConstantTheta:
    theta0: float = 0.5

    def __call__(self, v):
        return np.full(np.shape(v), float(self.theta0))

    @property
    def bound(self) -> float:
        return abs(self.theta0)

    @property
    def lipschitz(self) -> float:
        return 0.0


@dataclass(frozen=True)
class CappedLinearTheta:
    """``theta(v) = (K2 - |v|)_+``."""

    K2: float = 10.0

    def __post_init__(self):
        if not self.K2 > 0:
            raise ValueError("capped_linear theta needs K2 > 0")

    def __call__(self, v):
        return np.maximum(self.K2 - np.abs(np.asarray(v, dtype=float)), 0.0)

    @property
    def bound(self) -> float:
        return self.K2

    @property
    def lipschitz(self) -> float:
        return 1.0


# ---------------------------------------------------------------------------
# model and payoff


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of the one-factor, two-noise market.

    ``c_v`` and ``c_z`` are the driver Lipschitz constants; they start out
    unknown and are filled in by :func:`estimate_lipschitz_constants`.
    """

    gamma: float = 1.0
    kappa: tuple[float, float] = (0.0, 1.0)
    eta: OUDrift = field(default_factory=OUDrift)
    theta: ConstantTheta | CappedLinearTheta = field(default_factory=CappedLinearTheta)
    constraint: str = "first_coordinate_line"
    c_v: float | None = None
    c_z: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("risk aversion gamma must be positive")
        if len(self.kappa) != 2:
            raise ValueError("kappa must have two components")
        object.__setattr__(self, "kappa", (float(self.kappa[0]), float(self.kappa[1])))
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"unknown constraint {self.constraint!r}; expected one of {CONSTRAINTS}")
        if self.kappa_norm2 == 0:
            raise ValueError("kappa must be nonzero")

    @property
    def c_eta(self) -> float:
        return self.eta.dissipativity

    @property
    def kappa_vec(self) -> np.ndarray:
        return np.array(self.kappa)

    @property
    def kappa_norm2(self) -> float:
        return self.kappa[0] ** 2 + self.kappa[1] ** 2

    @property
    def diffusion(self) -> float:
        """Coefficient of the second derivative in the factor generator."""
        return 0.5 * self.kappa_norm2

    @property
    def is_normalized(self) -> bool:
        return math.isclose(self.kappa_norm2, 1.0, rel_tol=0, abs_tol=1e-12)

    def normalized(self) -> "ModelSpec":
        s = math.sqrt(self.kappa_norm2)
        return dataclasses.replace(self, kappa=(self.kappa[0] / s, self.kappa[1] / s), c_v=None, c_z=None)

    def with_constants(self, c_v: float, c_z: float) -> "ModelSpec":
        return dataclasses.replace(self, c_v=float(c_v), c_z=float(c_z))

    @property
    def dissipative_enough(self) -> bool | None:
        """``c_eta > c_v``, or None when ``c_v`` has not been estimated."""
        if self.c_v is None:
            return None
        return self.c_eta > self.c_v

    def assumption_notes(self) -> list[str]:
        notes = []
        if not self.is_normalized:
            notes.append(
                f"|kappa|^2 = {self.kappa_norm2:.6g} != 1; diffusion uses |kappa|^2/2 as given"
            )
        if self.dissipative_enough is False:
            notes.append(
                f"c_eta = {self.c_eta:.6g} <= c_v = {self.c_v:.6g}; gradient bounds not applicable"
            )
        return notes


@dataclass(frozen=True)
class PayoffSpec:
    """Terminal function ``g`` of the position ``xi_T = -g(V_T)``."""

    kind: str = "put_like"
    c: float = 0.0
    K1: float = 10.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "put_like"):
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.kind == "put_like" and not self.K1 > 0:
            raise ValueError("put_like payoff needs K1 > 0")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "constant":
            return np.full(v.shape, float(self.c))
        if self.kind == "linear":
            return v.copy()
        return np.maximum(self.K1 - np.abs(v), 0.0)

    @property
    def c_g(self) -> float:
        return 0.0 if self.kind == "constant" else 1.0

    @property
    def bounded(self) -> bool:
        # linear g is an oracle-only relaxation of the boundedness requirement
        return self.kind != "linear"


def theta_at(model: ModelSpec, v):
    """Market price of risk of the traded asset at factor level ``v``."""
    return model.theta(v)


def project_pi(model: ModelSpec, w):
    """Euclidean projection of ``w`` (shape ``(..., 2)``) onto ``Pi``."""
    w = np.asarray(w, dtype=float)
    if model.constraint == "full_space":
        return w.copy()
    out = w.copy()
    out[..., 1] = 0.0
    return out


def dist2_pi(model: ModelSpec, w):
    w = np.asarray(w, dtype=float)
    if model.constraint == "full_space":
        return np.zeros(w.shape[:-1])
    return w[..., 1] ** 2


# ---------------------------------------------------------------------------
# Lipschitz constants of the driver


def estimate_lipschitz_constants(model: ModelSpec, grid: "Grid1D", z_max: float = 2.0,
                                 n_z: int = 21, v_stride: int = 20) -> ModelSpec:
    """Sample the two driver inequalities and return a model carrying ``c_v, c_z``.

    ``c_v`` is the smallest constant with
    ``|F(v1,z) - F(v2,z)| <= c_v (1 + |z|) |v1 - v2|`` over grid nodes and a
    square z-box of half-width ``z_max``.  Adjacent node pairs suffice: on a
    uniform grid the difference quotient of any pair is an average of the
    adjacent ones.  ``c_z`` is the analogous constant for
    ``|F(v,z1) - F(v,z2)| <= c_z (1 + |z1| + |z2|) |z1 - z2|`` over all pairs
    of the z-box lattice, at every ``v_stride``-th node.
    """
    from .ergodic import driver_f

    v = grid.nodes
    zs = np.linspace(-z_max, z_max, n_z)
    Z = np.stack(np.meshgrid(zs, zs, indexing="ij"), axis=-1).reshape(-1, 2)
    znorm = np.linalg.norm(Z, axis=1)

    # c_v: F on (node, z) lattice, adjacent differences in v
    Fv = driver_f(model, v[:, None], Z[None, :, :])
    ratio_v = np.abs(np.diff(Fv, axis=0)) / (grid.h * (1.0 + znorm[None, :]))
    c_v = float(ratio_v.max())

    # c_z: all z pairs on a subsample of nodes
    dz = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
    weight = (1.0 + znorm[:, None] + znorm[None, :]) * dz
    off = dz > 0
    c_z = 0.0
    for vi in v[::v_stride]:
        Fz = driver_f(model, np.full(len(Z), vi), Z)
        r = np.abs(Fz[:, None] - Fz[None, :])[off] / weight[off]
        c_z = max(c_z, float(r.max()))

    if not (math.isfinite(c_v) and math.isfinite(c_z)):
        raise ArithmeticError("driver difference quotients diverge; preset is not Lipschitz")
    return model.with_constants(c_v, c_z)


# ---------------------------------------------------------------------------
# presets used throughout the package

FIGURE_KAPPAS = {1: (0.9, 0.1), 2: (0.5, 0.5), 3: (0.0, 1.0)}


def figure_model(scenario: int, normalized: bool = False) -> ModelSpec:
    """Long-maturity experiment: gamma=1, alpha=0.1, K2=10, Pi = R x {0}."""
    m = ModelSpec(gamma=1.0, kappa=FIGURE_KAPPAS[scenario], eta=OUDrift(0.1),
                  theta=CappedLinearTheta(10.0), constraint="first_coordinate_line")
    return m.normalized() if normalized else m


def figure_payoff() -> PayoffSpec:
    return PayoffSpec("put_like", K1=10.0)


# ---------------------------------------------------------------------------
# plain-text config

CONFIG_KEYS = (
    "gamma", "kappa1", "kappa2", "eta.alpha", "theta.kind", "theta.theta0", "theta.K2",
    "payoff.kind", "payoff.c", "payoff.K1", "constraint", "v_min", "v_max",
    "n_nodes", "dt",
)
_STRING_KEYS = {"theta.kind", "payoff.kind", "constraint"}


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    payoff: PayoffSpec
    v_min: float = -30.0
    v_max: float = 30.0
    n_nodes: int = 1201
    dt: float = 0.01

    @property
    def grid(self) -> "Grid1D":
        from .grid import Grid1D
        return Grid1D(self.v_min, self.v_max, self.n_nodes)


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Raises :class:`ConfigError` carrying the offending line number.
    """
    raw: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if not value:
            raise ConfigError(f"missing value for {key!r}", lineno)
        if key in _STRING_KEYS:
            raw[key] = value
        else:
            try:
                raw[key] = int(value) if key == "n_nodes" else float(value)
            except ValueError:
                raise ConfigError(f"not a number: {value!r}", lineno) from None

    theta_kind = raw.get("theta.kind", "capped_linear")
    if theta_kind == "constant":
        theta = ConstantTheta(raw.get("theta.theta0", 0.5))
    elif theta_kind == "capped_linear":
        theta = CappedLinearTheta(raw.get("theta.K2", 10.0))
    else:
        raise ConfigError(f"unknown theta.kind {theta_kind!r}")
    try:
        model = ModelSpec(
            gamma=raw.get("gamma", 1.0),
            kappa=(raw.get("kappa1", 0.0), raw.get("kappa2", 1.0)),
            eta=OUDrift(raw.get("eta.alpha", 0.1)),
            theta=theta,
            constraint=raw.get("constraint", "first_coordinate_line"),
        )
        payoff = PayoffSpec(raw.get("payoff.kind", "put_like"), c=raw.get("payoff.c", 0.0),
                            K1=raw.get("payoff.K1", 10.0))
        cfg = RunConfig(model, payoff, v_min=raw.get("v_min", -30.0), v_max=raw.get("v_max", 30.0),
                        n_nodes=raw.get("n_nodes", 1201), dt=raw.get("dt", 0.01))
        cfg.grid  # validates the node layout
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config`."""
    m, p = cfg.model, cfg.payoff
    lines = [
        f"gamma = {m.gamma!r}",
        f"kappa1 = {m.kappa[0]!r}",
        f"kappa2 = {m.kappa[1]!r}",
        f"eta.alpha = {m.eta.alpha!r}",
    ]
    if isinstance(m.theta, ConstantTheta):
        lines += ["theta.kind = constant", f"theta.theta0 = {m.theta.theta0!r}"]
    else:
        lines += ["theta.kind = capped_linear", f"theta.K2 = {m.theta.K2!r}"]
    lines += [
        f"payoff.kind = {p.kind}",
        f"payoff.c = {p.c!r}",
        f"payoff.K1 = {p.K1!r}",
        f"constraint = {m.constraint}",
        f"v_min = {cfg.v_min!r}",
        f"v_max = {cfg.v_max!r}",
        f"n_nodes = {cfg.n_nodes}",
        f"dt = {cfg.dt!r}",
    ]
    return "\n".join(lines) + "\n"
