"""Built-in scenarios and configuration parsing.

``spring_pendulum``: planar spring pendulum with the S¹ rotation symmetry.
``elroy_beanie``: a body on the plane carrying a rotor; SE(2) acts on the
body frame, K = ℝ² translations for the staged reduction.
``heisenberg_body``: a left-invariant Lagrangian on the Heisenberg group,
reduced first by its center and then by ℝ².
"""

from __future__ import annotations

import dataclasses
import importlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable

import jax
import jax.numpy as jnp
import numpy as np
import tomli

from .errors import ConfigurationError
from .lie import SE2, Circle, GroupAction, Heisenberg, RealN
from .magnetic import BundleChart, MagneticLagrangianSystem
from .reduction import (PrincipalConnection, QuotientChartData, SymmetrySetup,
                        _momentum_flat, group_config_reduce, routh_reduce)
from .stages import StagesPlan, compatible_rho, first_stage, second_stage

Array = jax.Array

SCENARIOS = ("spring_pendulum", "elroy_beanie", "heisenberg_body", "custom")


@dataclass
class ScenarioConfig:
    scenario: str = "spring_pendulum"
    # physical parameters
    m: float = 1.0
    k: float = 1.0
    I1: float = 1.0
    I2: float = 0.5
    V_amp: float = 1.0
    A: float = 2.0
    B: float = 0.5
    C: float = 1.0
    Gamma: float = 1.0
    # momentum values (None: scenario default)
    mu: tuple[float, ...] | None = None
    nu_bar: tuple[float, ...] | None = None
    rho: tuple[float, ...] | None = None
    # full-system initial state (q..., v...)
    ic: tuple[float, ...] | None = None
    # integration and output
    h: float = 1e-3
    t_end: float = 10.0
    seed: int = 0
    samples: int = 100
    out: str | None = None
    custom_factory: str | None = None

    def validate(self) -> "ScenarioConfig":
        bad = []
        if self.scenario not in SCENARIOS:
            bad.append(f"unknown scenario {self.scenario!r} (choose from {', '.join(SCENARIOS)})")
        for name in ("m", "k", "I1", "I2", "h", "t_end"):
            if not getattr(self, name) > 0:
                bad.append(f"{name} must be positive")
        if not (self.A > 0 and self.A * self.C - self.B ** 2 > 0):
            bad.append("mass matrix [[A, B], [B, C]] must be positive definite")
        if self.samples < 1:
            bad.append("samples must be at least 1")
        if self.scenario == "custom" and not self.custom_factory:
            bad.append("custom scenarios need custom_factory = 'module:function'")
        if bad:
            raise ConfigurationError("invalid configuration: " + "; ".join(bad), bad)
        return self

    @property
    def mass_matrix(self) -> np.ndarray:
        return np.array([[self.A, self.B], [self.B, self.C]])


# dotted config keys → ScenarioConfig fields
_KEYMAP = {
    "scenario": "scenario", "scenario.id": "scenario", "scenario.name": "scenario",
    "scenario.factory": "custom_factory", "custom.factory": "custom_factory",
    "physics.m": "m", "physics.k": "k", "physics.I1": "I1", "physics.I2": "I2",
    "physics.V_amp": "V_amp", "physics.Gamma": "Gamma",
    "physics.M.A": "A", "physics.M.B": "B", "physics.M.C": "C",
    "momentum.mu": "mu", "momentum.nu_bar": "nu_bar", "momentum.rho": "rho",
    "initial.state": "ic", "integrator.h": "h", "integrator.t_end": "t_end",
    "sampling.seed": "seed", "sampling.count": "samples", "output.path": "out",
}


def _flatten(d: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for key, val in d.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, name + "."))
        else:
            out[name] = val
    return out


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse flat ``dotted.key = value`` text (TOML syntax) into a config."""
    try:
        raw = _flatten(tomli.loads(text))
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse configuration: {exc}") from exc
    fields = {f.name for f in dataclasses.fields(ScenarioConfig)}
    updates, unknown = {}, []
    for key, val in raw.items():
        name = _KEYMAP.get(key, key if key in fields else None)
        if name is None:
            unknown.append(key)
            continue
        updates[name] = tuple(float(v) for v in val) if isinstance(val, list) else val
    if unknown:
        raise ConfigurationError("unknown configuration keys: " + ", ".join(sorted(unknown)), unknown)
    return dataclasses.replace(base or ScenarioConfig(), **updates).validate()


def load_config(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


@dataclass
class Scenario:
    """A built scenario: symmetry data, charts, stage plan and oracles."""

    name: str
    config: ScenarioConfig
    setup: SymmetrySetup
    mu: np.ndarray
    charts: QuotientChartData | None
    initial_state: np.ndarray
    oracles: dict[str, Callable] = field(default_factory=dict)
    plan: StagesPlan | None = None
    direct_builder: Callable[[], Any] | None = None
    F_map: Callable[[Array], Array] | None = None
    tau: Callable[[Array], Array] | None = None
    direct_point: Callable[[Array], Array] | None = None
    staged_point: Callable[[Array], Array] | None = None
    momentum_name: str = "J"

    @property
    def system(self) -> MagneticLagrangianSystem:
        return self.setup.system

    def momentum(self, x) -> Array:
        return _momentum_flat(self.setup, x)

    @cached_property
    def direct(self):
        """Reduction by the full group at ``mu`` (package or coadjoint flow)."""
        if self.direct_builder is not None:
            return self.direct_builder()
        return routh_reduce(self.setup, self.mu, self.charts, seed=self.config.seed, name=f"{self.name} reduced")

    @cached_property
    def staged(self):
        """``(pkg1, induced setup, ρ, second-stage result)``."""
        if self.plan is None:
            raise ConfigurationError(f"scenario {self.name} has no stages plan")
        pkg1, induced = first_stage(self.plan)
        rho = compatible_rho(self.plan)
        if self.config.rho is not None:
            given = np.asarray(self.config.rho, float)
            if given.shape != rho.shape or np.max(np.abs(given - rho), initial=0.0) > 1e-12:
                raise ConfigurationError(f"configured ρ {given} is incompatible; expected {rho}")
        return pkg1, induced, rho, second_stage(self.plan, pkg1, induced, rho)


def _vec(cfg_val, default, n, label):
    v = np.asarray(default if cfg_val is None else cfg_val, float)
    if v.shape != (n,):
        raise ConfigurationError(f"{label} must have {n} components", [label])
    return v


# -- spring pendulum ----------------------------------------------------------------------------


def spring_pendulum(cfg: ScenarioConfig) -> Scenario:
    m, k = cfg.m, cfg.k
    chart = BundleChart(("r", "theta"), domain=lambda y: y[0] > 0,
                        bounds=((0.5, 2.0), (-np.pi, np.pi)))

    def L(q, v, p):
        return 0.5 * m * (v[0] ** 2 + q[0] ** 2 * v[1] ** 2) - 0.5 * k * q[0] ** 2

    sys = MagneticLagrangianSystem(chart, L, name="spring_pendulum")
    S1 = Circle()
    rot = GroupAction(S1, lambda g, q: q + jnp.array([0.0, 1.0]) * g[0], "right")
    setup = SymmetrySetup(sys, S1, rot, rot, PrincipalConnection(lambda q: jnp.array([[0.0, 1.0]])))
    ic = _vec(cfg.ic, (1.0, 0.0, 0.0, 1.0), 4, "ic")
    mu = _vec(cfg.mu, (m * ic[0] ** 2 * ic[3],), 1, "mu")
    charts = QuotientChartData(
        project_Q=lambda q: q[:1], section_Q=lambda qb: jnp.array([qb[0], 0.0]),
        project_P=lambda y: y[:1], section_P=lambda yb: jnp.array([yb[0], 0.0]),
        q_names=("r",), bounds=((0.5, 2.0),), domain=lambda y: y[0] > 0)
    mu0 = float(mu[0])
    oracles = {
        "routhian": lambda r, rd: 0.5 * m * rd ** 2 - 0.5 * k * r ** 2 - mu0 ** 2 / (2 * m * r ** 2),
        "reduced_accel": lambda r: (-k * r + mu0 ** 2 / (m * r ** 3)) / m,
        "reduced_B": lambda r: np.zeros((1, 1)),
        "momentum": lambda q, v: m * q[0] ** 2 * v[1],
    }
    return Scenario("spring_pendulum", cfg, setup, mu, charts, ic, oracles)


# -- Elroy's beanie --------------------------------------------------------------------------------


def elroy_beanie(cfg: ScenarioConfig) -> Scenario:
    m, I1, I2, a = cfg.m, cfg.I1, cfg.I2, cfg.V_amp
    S = I1 + I2
    V = lambda psi: a * (1.0 - jnp.cos(psi))
    dV = lambda psi: a * np.sin(psi)
    chart = BundleChart(("x", "y", "theta", "psi"),
                        bounds=((-2.0, 2.0), (-2.0, 2.0), (-np.pi, np.pi), (-np.pi, np.pi)))

    def L(q, v, p):
        return (0.5 * m * (v[0] ** 2 + v[1] ** 2) + 0.5 * I1 * v[2] ** 2
                + 0.5 * I2 * (v[2] + v[3]) ** 2 - V(q[3]))

    sys = MagneticLagrangianSystem(chart, L, name="elroy_beanie")
    G = SE2()
    act = GroupAction(G, lambda g, q: jnp.concatenate([G.compose(g, q[:3]), q[3:]]), "left")

    def A0(q):
        x, y = q[0], q[1]
        return jnp.array([[1.0, 0.0, y, 0.0], [0.0, 1.0, -x, 0.0], [0.0, 0.0, 1.0, 0.0]])

    setup = SymmetrySetup(sys, G, act, act, PrincipalConnection(A0))
    mu = _vec(cfg.mu, (1.0, 0.3, 0.7), 3, "mu")
    mu2, mu3 = float(mu[1]), float(mu[2])
    if mu[0] != 1.0:
        raise ConfigurationError("the beanie quotient charts use the normalisation μ₁ = 1", ["mu"])
    charts = QuotientChartData(
        project_Q=lambda q: q[3:4],
        section_Q=lambda qb: jnp.array([0.0, 0.0, 0.0, qb[0]]),
        project_P=lambda q: jnp.array([q[3], q[1] - mu2 * q[0], q[2]]),
        section_P=lambda yb: jnp.array([0.0, yb[1], yb[2], yb[0]]),
        q_names=("psi",), p_names=("yp", "theta"),
        bounds=((-np.pi, np.pi), (-2.0, 2.0), (-np.pi, np.pi)))
    ic = _vec(cfg.ic, (0.2, -0.1, 0.3, 0.4, 1.0 / m, 0.3 / m, 0.2, -0.5), 8, "ic")

    def L0(psi, psid, yp, theta):
        return (0.5 * (I1 * I2 / S) * psid ** 2 + I2 * (mu3 + yp) / S * psid
                - (V(psi) + 0.5 * (mu3 + yp) ** 2 / S))

    def L1(theta, psi, thetad, psid):
        return 0.5 * I1 * thetad ** 2 + 0.5 * I2 * (thetad + psid) ** 2 - V(psi)

    def reduced_rhs(psi, psid, yp, theta, ypdot=0.0):
        return {"ypdot": 0.0, "thetadot": (yp + mu3 - I2 * psid) / S,
                "psiddot": -(S / (I1 * I2)) * dV(psi) - ypdot / I1}

    def full_rhs(q, v):
        return np.array([0.0, 0.0, dV(q[3]) / I1, -(S / (I1 * I2)) * dV(q[3])])

    def J_full(q, v):
        x, y = q[0], q[1]
        return np.array([m * v[0], m * v[1], m * (x * v[1] - y * v[0]) + I1 * v[2] + I2 * (v[2] + v[3])])

    oracles = {"L0": L0, "L1": L1, "reduced_rhs": reduced_rhs, "full_rhs": full_rhs,
               "momentum": J_full, "B0": lambda *_: np.array([[0, 0, 0], [0, 0, 1.0], [0, -1.0, 0]]),
               "B1": lambda *_: np.zeros((2, 2))}

    K = RealN(2)
    plan = StagesPlan(
        setup=setup, subgroup=K, inclusion=np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        embed=lambda kk: jnp.array([kk[0], kk[1], 0.0]), mu=mu,
        connection_K=PrincipalConnection(lambda q: jnp.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])),
        charts_K=QuotientChartData(
            project_Q=lambda q: q[2:4], section_Q=lambda qb: jnp.array([0.0, 0.0, qb[0], qb[1]]),
            project_P=lambda q: q[2:4], section_P=lambda qb: jnp.array([0.0, 0.0, qb[0], qb[1]]),
            q_names=("theta", "psi"), bounds=((-np.pi, np.pi), (-np.pi, np.pi))),
        residual_group=RealN(0), residual_lift=lambda gb: jnp.zeros(3),
        nu_bar=None if cfg.nu_bar is None else np.asarray(cfg.nu_bar, float), seed=cfg.seed)

    def F_map(xd):
        psi, psid, yp, theta = xd[0], xd[1], xd[2], xd[3]
        return jnp.array([theta, psi, (mu3 + yp - I2 * psid) / S, psid])

    return Scenario("elroy_beanie", cfg, setup, mu, charts, ic, oracles, plan=plan, F_map=F_map,
                    tau=lambda y: jnp.array([y[2], y[0]]),
                    direct_point=lambda xd: jnp.array([xd[0], xd[2], xd[3]]),
                    staged_point=lambda xs: xs[:2])


# -- Heisenberg rigid body ----------------------------------------------------------------------------


def heisenberg_body(cfg: ScenarioConfig) -> Scenario:
    Mm = jnp.asarray(cfg.mass_matrix)
    H = Heisenberg()
    mu = _vec(cfg.mu, (0.3, -0.2, cfg.Gamma), 3, "mu")
    if mu[2] != cfg.Gamma:
        raise ConfigurationError("the third momentum component must equal Gamma", ["mu", "Gamma"])
    Gamma = float(mu[2])
    chart = BundleChart(("x", "y", "s"), bounds=((-2.0, 2.0),) * 3)

    def L(q, v, p):
        w = v[2] - 0.5 * (q[0] * v[1] - q[1] * v[0])
        return 0.5 * v[:2] @ Mm @ v[:2] + 0.5 * w ** 2

    sys = MagneticLagrangianSystem(chart, L, name="heisenberg_body")
    act = GroupAction(H, H.compose, "left")

    def A_full(q):
        x, y = q[0], q[1]
        return jnp.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.5 * y, 0.5 * x, 1.0]])

    setup = SymmetrySetup(sys, H, act, act, PrincipalConnection(A_full))
    q0 = (0.3, -0.2, 0.1)
    v0 = (0.5, -0.4)
    sdot = Gamma + 0.5 * (q0[0] * v0[1] - q0[1] * v0[0])
    ic = _vec(cfg.ic, (*q0, *v0, sdot), 6, "ic")

    def ell(xi):
        return L(jnp.zeros(3), xi, jnp.zeros(0))

    def direct_builder():
        return group_config_reduce(H, ell, mu, "left", names=("px", "py", "p"))

    Minv_J = np.linalg.solve(np.asarray(Mm), np.array([[0.0, -1.0], [1.0, 0.0]]))

    def closed_form_velocity(t, v_init):
        import scipy.linalg

        return np.stack([scipy.linalg.expm(ti * Gamma * Minv_J) @ np.asarray(v_init) for ti in np.atleast_1d(t)])

    oracles = {
        "L1": lambda x, y, xd, yd: 0.5 * np.array([xd, yd]) @ np.asarray(Mm) @ np.array([xd, yd]),
        "B1": lambda *_: np.array([[0.0, -Gamma], [Gamma, 0.0]]),
        "delta1": lambda x, y: Gamma * np.array([-y, x]),
        "circulation": lambda v: Gamma * np.array([-v[1], v[0]]),
        "velocity": closed_form_velocity,
        "momentum_center": lambda q, v: v[2] - 0.5 * (q[0] * v[1] - q[1] * v[0]),
    }

    plan = StagesPlan(
        setup=setup, subgroup=RealN(1), inclusion=np.array([[0.0], [0.0], [1.0]]),
        embed=lambda c: jnp.array([0.0, 0.0, c[0]]), mu=mu,
        connection_K=PrincipalConnection(lambda q: jnp.array([[0.5 * q[1], -0.5 * q[0], 1.0]])),
        charts_K=QuotientChartData(
            project_Q=lambda q: q[:2], section_Q=lambda qb: jnp.array([qb[0], qb[1], 0.0]),
            project_P=lambda q: q[:2], section_P=lambda qb: jnp.array([qb[0], qb[1], 0.0]),
            q_names=("x", "y"), bounds=((-2.0, 2.0), (-2.0, 2.0))),
        residual_group=RealN(2), residual_lift=lambda gb: jnp.array([gb[0], gb[1], 0.0]),
        nu_bar=None if cfg.nu_bar is None else np.asarray(cfg.nu_bar, float), seed=cfg.seed)

    return Scenario("heisenberg_body", cfg, setup, mu, None, ic, oracles, plan=plan,
                    direct_builder=direct_builder, F_map=lambda nu: nu[:2])


_BUILDERS = {"spring_pendulum": spring_pendulum, "elroy_beanie": elroy_beanie,
             "heisenberg_body": heisenberg_body}


def build_scenario(cfg: ScenarioConfig | str) -> Scenario:
    if isinstance(cfg, str):
        cfg = ScenarioConfig(scenario=cfg)
    cfg.validate()
    if cfg.scenario == "custom":
        mod, _, fn = cfg.custom_factory.partition(":")
        try:
            factory = getattr(importlib.import_module(mod), fn)
        except (ImportError, AttributeError) as exc:
            raise ConfigurationError(f"cannot load custom factory {cfg.custom_factory!r}: {exc}") from exc
        return factory(cfg)
    return _BUILDERS[cfg.scenario](cfg)
