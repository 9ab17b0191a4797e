"""Routh reduction in two stages: a normal subgroup K, then ``Ḡ_ν = G_ν/K_ν``.

Algebra data is kept in the fixed basis of 𝔤. ``inclusion`` has columns
spanning 𝔎 inside 𝔤, ``ν = inclusionᵀ μ``. The residual algebra is
represented by a complement ``C`` of 𝔎_ν in 𝔤_ν (columns in 𝔤), read off as
the differential of the scenario's lift ``Ḡ_ν → G_ν``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .errors import ConfigurationError, ConsistencyError
from .lie import GroupAction, LieGroupModel, null_space, sigma_matrix
from .reduction import (PrincipalConnection, QuotientChartData, ReducedSystemPackage, SymmetrySetup,
                        _momentum_flat, _shift_traced, group_config_reduce, integrate_flow,
                        routh_reduce)

Array = jax.Array


@dataclass
class StagesPlan:
    """Everything needed for the two reductions.

    ``setup`` must describe an ordinary Lagrangian system (``k = 0``,
    ``B = 0``). ``embed`` maps K coordinates to G coordinates and
    ``residual_lift`` maps Ḡ_ν coordinates to G_ν coordinates; the latter is
    only required to be a homomorphism modulo K_ν.
    """

    setup: SymmetrySetup
    subgroup: LieGroupModel
    inclusion: np.ndarray
    embed: Callable[[Array], Array]
    mu: np.ndarray
    connection_K: PrincipalConnection
    charts_K: QuotientChartData
    residual_group: LieGroupModel
    residual_lift: Callable[[Array], Array]
    nu_bar: np.ndarray | None = None
    connection_2: PrincipalConnection | None = None
    charts_2: QuotientChartData | None = None
    base_point_2: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        self.inclusion = np.atleast_2d(np.asarray(self.inclusion, float))
        self.mu = np.asarray(self.mu, float)
        G, K = self.setup.group, self.subgroup
        if self.inclusion.shape != (G.dim, K.dim):
            raise ConfigurationError(f"inclusion must have shape ({G.dim}, {K.dim})")
        if self.mu.shape != (G.dim,):
            raise ConfigurationError("μ has the wrong dimension")
        sys = self.setup.system
        if sys.k != 0:
            raise ConfigurationError("reduction by stages starts from an ordinary Lagrangian system (k = 0)")
        if sys._magnetic is not None or self.setup.delta is not None:
            raise ConfigurationError("reduction by stages starts from a system with B = 0")
        # ν is the restriction of μ to 𝔎, by construction
        self.nu = self.inclusion.T @ self.mu
        self.g_nu = self._g_nu()
        self.k_nu = self._k_nu()
        self.complement = self._complement()
        if self.nu_bar is None:
            self.nu_bar = self._default_nu_bar()
        self.nu_bar = np.asarray(self.nu_bar, float)
        err = self.nu_bar_residual()
        if err > 1e-12:
            raise ConfigurationError(f"ν̄ does not restrict to ν on 𝔎_ν (residual {err:.3e})")

    # -- algebra bookkeeping

    def _g_nu(self) -> np.ndarray:
        """Basis of ``𝔤_ν = {ξ : ⟨ν, [ξ, κ]⟩ = 0 for κ ∈ 𝔎}`` (columns in 𝔤)."""
        G = self.setup.group
        to_k = np.linalg.pinv(self.inclusion)      # 𝔎 ⊂ 𝔤 back to K coordinates
        rows = [[float(self.nu @ to_k @ np.asarray(G.bracket(e, kap))) for e in np.eye(G.dim)]
                for kap in self.inclusion.T]
        return null_space(np.array(rows), 1e-10)

    def _k_nu(self) -> np.ndarray:
        """Basis of ``𝔎_ν = 𝔎 ∩ 𝔤_ν`` (columns in 𝔤)."""
        Kc, Gn = self.inclusion, self.g_nu
        if Gn.shape[1] == 0:
            return np.zeros((Kc.shape[0], 0))
        coeffs = null_space(np.hstack([Kc, -Gn]), 1e-10)
        basis = Kc @ coeffs[:Kc.shape[1]]
        if basis.shape[1] == 0:
            return basis
        u, s, _ = np.linalg.svd(basis, full_matrices=False)
        return u[:, s > 1e-10]

    def _complement(self) -> np.ndarray:
        Gb = self.residual_group
        lift = lambda a: self.residual_lift(Gb.exp(a))
        C = np.asarray(jax.jacfwd(lift)(jnp.zeros(Gb.dim))).reshape(self.setup.group.dim, Gb.dim)
        expected = self.g_nu.shape[1] - self.k_nu.shape[1]
        if Gb.dim != expected:
            raise ConfigurationError(f"residual group has dimension {Gb.dim}, "
                                     f"but dim 𝔤_ν − dim 𝔎_ν = {expected}")
        if Gb.dim:
            W = np.hstack([self.k_nu, C])
            off = C - self.g_nu @ (self.g_nu.T @ C)      # g_nu has orthonormal columns
            if np.linalg.matrix_rank(W, 1e-10) != W.shape[1] or np.max(np.abs(off)) > 1e-10:
                raise ConfigurationError("residual_lift does not span a complement of 𝔎_ν in 𝔤_ν")
        return C

    def _default_nu_bar(self) -> np.ndarray:
        """Extension of ``ν|_{𝔎_ν}`` vanishing on the complement ``C``."""
        W = np.hstack([self.k_nu, self.complement])
        if W.shape[1] == 0:
            return np.zeros(self.setup.group.dim)
        target = np.concatenate([self.k_nu.T @ self.mu, np.zeros(self.complement.shape[1])])
        return np.linalg.lstsq(W.T, target, rcond=None)[0]

    def nu_bar_residual(self) -> float:
        if self.k_nu.shape[1] == 0:
            return 0.0
        return float(np.max(np.abs(self.k_nu.T @ (self.nu_bar - self.mu))))

    @property
    def group_config_second_stage(self) -> bool:
        n1 = self.charts_K.n
        return (self.residual_group.dim > 0 and self.charts_K.k == 0
                and n1 == self.residual_group.dim and self.charts_2 is None)


@dataclass
class StagesReport:
    residuals: dict[str, float] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add(self, name, value, tol):
        self.residuals[name] = float(value)
        self.tolerances[name] = float(tol)

    @property
    def failures(self):
        return [k for k, v in self.residuals.items() if not v <= self.tolerances[k]]

    @property
    def passed(self):
        return not self.failures

    def text(self) -> str:
        lines = ["stages report"]
        for k, v in self.residuals.items():
            tol = self.tolerances[k]
            lines.append(f"  {k:<34s} {v:.3e}  (tol {tol:g})  {'pass' if v <= tol else 'FAIL'}")
        lines += [f"  note: {n}" for n in self.notes]
        lines.append(f"  result: {'pass' if self.passed else 'fail'}")
        return "\n".join(lines)


# -- first stage --------------------------------------------------------------------------


def subgroup_setup(plan: StagesPlan) -> SymmetrySetup:
    s = plan.setup
    K = plan.subgroup
    aQ = GroupAction(K, lambda k, q: s.action_Q.act(plan.embed(k), q), s.side)
    aP = GroupAction(K, lambda k, y: s.action_P.act(plan.embed(k), y), s.side)
    return SymmetrySetup(s.system, K, aQ, aP, plan.connection_K, None, s.mechanical)


def check_normality(plan: StagesPlan, samples: int = 20) -> float:
    """Max distance of ``Ad_g 𝔎`` from 𝔎 over random ``g``."""
    rng = np.random.default_rng(plan.seed)
    G = plan.setup.group
    P = np.eye(G.dim) - plan.inclusion @ np.linalg.pinv(plan.inclusion)
    worst = 0.0
    for _ in range(samples):
        Ad = np.asarray(G.Ad(G.random(rng)))
        worst = max(worst, float(np.max(np.abs(P @ Ad @ plan.inclusion), initial=0.0)))
    return worst


def check_connection_equivariance(plan: StagesPlan, samples: int = 20) -> float:
    """``𝒜¹(g·v) = Ad_g|_𝔎 𝒜¹(v)`` (left) or ``Ad_{g⁻¹}|_𝔎`` (right) for ``g ∈ G``."""
    rng = np.random.default_rng(plan.seed + 1)
    s = plan.setup
    G = s.group
    pinv = np.linalg.pinv(plan.inclusion)
    A = plan.connection_K.matrix
    worst = 0.0
    for _ in range(samples):
        g = G.random(rng)
        q = jnp.asarray(s.system.chart.sample_point(rng))
        D = jax.jacfwd(lambda z: s.action_Q.act(g, z))(q)
        Adg = G.Ad(g) if s.side == "left" else G.Ad(G.inverse(g))
        AdK = pinv @ np.asarray(Adg) @ plan.inclusion
        lhs = np.asarray(A(s.action_Q.act(g, q)) @ D)
        worst = max(worst, float(np.max(np.abs(lhs - AdK @ np.asarray(A(q))))))
    return worst


def induced_setup(plan: StagesPlan, pkg1: ReducedSystemPackage) -> SymmetrySetup:
    """Ḡ_ν acting on the first-stage system, with the potential δ₁."""
    s = plan.setup
    ch = plan.charts_K
    Gb = plan.residual_group
    C = jnp.asarray(plan.complement)
    nu = jnp.asarray(plan.nu)
    nu_bar = jnp.asarray(plan.nu_bar)

    def act_Q1(gb, qb):
        return ch.project_Q(s.action_Q.act(plan.residual_lift(gb), ch.section_Q(qb)))

    def act_P1(gb, yb):
        return ch.project_P(s.action_P.act(plan.residual_lift(gb), ch.section_P(yb)))

    def delta1_at_q(q):
        Xi = s.action_Q.generators(q) @ C                     # (C ξ̄)_Q
        A1 = plan.connection_K.matrix(q)
        return -(nu @ (A1 @ Xi)) + C.T @ nu_bar

    def delta1(yb):
        return delta1_at_q(ch.section_P(yb))

    sys1 = pkg1.reduced
    connection = plan.connection_2
    aQ1 = GroupAction(Gb, act_Q1, s.side)
    if connection is None and Gb.dim == 0:
        connection = PrincipalConnection(lambda q: jnp.zeros((0, sys1.n)))
    if connection is None and sys1.n == Gb.dim:
        connection = PrincipalConnection.from_transitive(aQ1)
    if connection is None:
        raise ConfigurationError("a connection for the residual group is required")
    setup1 = SymmetrySetup(sys1, Gb, aQ1, GroupAction(Gb, act_P1, s.side), connection,
                           delta1, s.mechanical)
    object.__setattr__(setup1, "_delta1_at_q", delta1_at_q)
    return setup1


def first_stage(plan: StagesPlan, check: bool = True) -> tuple[ReducedSystemPackage, SymmetrySetup]:
    if check:
        err = check_normality(plan)
        if err > 1e-10:
            raise ConfigurationError(f"K is not normal in G (Ad_g 𝔎 leaves 𝔎 by {err:.3e})")
        err = check_connection_equivariance(plan)
        if err > 1e-8:
            raise ConfigurationError(
                f"the K-connection is not G-equivariant (residual {err:.3e}); "
                "reduction by stages assumes an equivariant first-stage connection")
    pkg1 = routh_reduce(subgroup_setup(plan), plan.nu, plan.charts_K, check=check,
                        seed=plan.seed, name="first stage")
    return pkg1, induced_setup(plan, pkg1)


def compatible_rho(plan: StagesPlan) -> np.ndarray:
    """ρ on the residual algebra with ``ρ(ξ̄) = ⟨μ − ν̄, C ξ̄⟩``.

    Requires ``μ − ν̄`` to vanish on 𝔎_ν, otherwise no ρ exists.
    """
    diff = plan.mu - plan.nu_bar
    if plan.k_nu.shape[1]:
        err = float(np.max(np.abs(plan.k_nu.T @ diff)))
        if err > 1e-12:
            raise ConfigurationError(f"μ − ν̄ does not vanish on 𝔎_ν (residual {err:.3e}); no ρ exists")
    return plan.complement.T @ diff


def second_stage(plan: StagesPlan, pkg1: ReducedSystemPackage, induced: SymmetrySetup, rho,
                 check: bool = True):
    """Reduce the first-stage system by Ḡ_ν at ρ.

    Trivial residual group: ``pkg1`` itself. Group-configuration case
    (first-stage base equal to Ḡ_ν, no fiber): a :class:`CoadjointFlow`.
    Otherwise a second :func:`routh_reduce`.
    """
    Gb = plan.residual_group
    rho = np.asarray(rho, float)
    if Gb.dim == 0:
        return pkg1
    if plan.group_config_second_stage:
        sys1 = induced.system
        q0 = jnp.zeros(sys1.n) if plan.base_point_2 is None else jnp.asarray(plan.base_point_2, float)
        Xi0 = induced.action_Q.generators(q0)
        empty = jnp.zeros(0)
        ell = lambda xi: sys1.lagrangian(q0, Xi0 @ xi, empty)
        Sigma = sigma_matrix(induced.action_P, induced.delta_at, q0)
        rng = np.random.default_rng(plan.seed)
        for _ in range(2):
            q1 = jnp.asarray(sys1.chart.sample_point(rng))
            if float(jnp.max(jnp.abs(sigma_matrix(induced.action_P, induced.delta_at, q1) - Sigma))) > 1e-8:
                raise ConsistencyError("Σ of δ₁ depends on the base point")
        return group_config_reduce(Gb, ell, rho, induced.side, Sigma=Sigma,
                                   names=[f"rho{i + 1}" for i in range(Gb.dim)])
    if plan.charts_2 is None:
        raise ConfigurationError("second-stage quotient charts are required")
    return routh_reduce(induced, rho, plan.charts_2, check=check, seed=plan.seed, name="second stage")


# -- certification ----------------------------------------------------------------------------


def delta1_invariance(plan: StagesPlan, induced: SymmetrySetup, samples: int = 20) -> float:
    """δ₁ evaluated before and after moving ``q`` along K_ν orbits."""
    rng = np.random.default_rng(plan.seed + 2)
    s = plan.setup
    f = induced._delta1_at_q
    Kn = jnp.asarray(np.linalg.pinv(plan.inclusion) @ plan.k_nu)   # 𝔎_ν basis in K coordinates
    Q = np.stack([s.system.chart.sample_point(rng) for _ in range(samples)])
    C = rng.uniform(-1, 1, (samples, Kn.shape[1]))

    def one(q, c):
        moved = s.action_Q.act(plan.embed(plan.subgroup.exp(Kn @ c)), q)
        return jnp.max(jnp.abs(f(moved) - f(q)), initial=0.0)

    return float(np.max(np.asarray(jax.jit(jax.vmap(one))(jnp.asarray(Q), jnp.asarray(C)))))


def induced_momentum_residual(plan: StagesPlan, pkg1: ReducedSystemPackage, induced: SymmetrySetup,
                              samples: int = 20) -> float:
    """``J₁(π(v)) − Cᵀ(J_G(v) − ν̄)`` and ``K_νᵀ(J_G(v) − ν̄)`` on ``J_K⁻¹(ν)``."""
    rng = np.random.default_rng(plan.seed + 3)
    s = plan.setup
    Ksetup = pkg1.setup
    sys = s.system
    n = sys.n
    X = np.stack([sys.sample_state(rng).flat() for _ in range(samples)])
    nu = jnp.asarray(plan.nu)
    Cm, Kn, nb = jnp.asarray(plan.complement), jnp.asarray(plan.k_nu), jnp.asarray(plan.nu_bar)

    def one(x):
        q, v = x[:n], x[n:2 * n]
        xi = _shift_traced(Ksetup, q, v, jnp.zeros(0), nu)
        xs = jnp.concatenate([q, v + Ksetup.generators_Q(q) @ xi])
        JG = _momentum_flat(s, xs)
        J1 = _momentum_flat(induced, pkg1.project_flat(xs))
        r = jnp.concatenate([J1 - Cm.T @ (JG - nb), Kn.T @ (JG - nb)])
        return jnp.max(jnp.abs(r), initial=0.0)

    return float(np.max(np.asarray(jax.jit(jax.vmap(one))(jnp.asarray(X)))))


def _flow_energy(flow, X):
    if isinstance(flow, ReducedSystemPackage):
        flow = flow.reduced
    return np.asarray(jax.jit(jax.vmap(flow.energy_flat))(jnp.asarray(X)))


def _as_flow(obj):
    return obj.reduced if isinstance(obj, ReducedSystemPackage) else obj


def stages_equivalence_check(plan: StagesPlan | None, direct, staged,
                             F_map: Callable[[Array], Array], ics: Sequence, t_span, h,
                             tau: Callable[[Array], Array] | None = None,
                             direct_point: Callable[[Array], Array] | None = None,
                             staged_point: Callable[[Array], Array] | None = None,
                             tol: float = 1e-6, pkg1=None, induced=None) -> StagesReport:
    """Certify that ``F`` intertwines the direct and the two-stage flows.

    ``ics`` are flat initial states of the direct reduced flow. ``tau`` with
    ``direct_point``/``staged_point`` (maps from flat states to their base
    points in ``P``) enables the fibration check.
    """
    rep = StagesReport()
    fd, fs = _as_flow(direct), _as_flow(staged)
    Fv = jax.jit(jax.vmap(F_map))
    worst_traj, spread = 0.0, 0.0
    for x0 in ics:
        x0 = jnp.asarray(x0, float)
        td = integrate_flow(fd, x0, t_span, h)
        ts = integrate_flow(fs, F_map(x0), t_span, h)
        mapped = np.asarray(Fv(jnp.asarray(td.states)))
        worst_traj = max(worst_traj, float(np.max(np.abs(mapped - ts.states))))
        e = _flow_energy(fs, mapped) - _flow_energy(fd, td.states)
        spread = max(spread, float(np.max(e) - np.min(e)))
        rep.notes.append(f"energy offset E_staged∘F − E_direct = {float(np.mean(e)):.12g}")
    rep.add("F-relatedness of flows (sup)", worst_traj, tol)
    rep.add("energy match mod constant", spread, tol)
    if tau is not None and direct_point is not None and staged_point is not None:
        err = 0.0
        for x0 in ics:
            x0 = jnp.asarray(x0, float)
            err = max(err, float(jnp.max(jnp.abs(staged_point(F_map(x0)) - tau(direct_point(x0))))))
        rep.add("F fibred over tau", err, 1e-12)
    if plan is not None and pkg1 is not None and induced is not None:
        rep.add("nu_bar restriction", plan.nu_bar_residual(), 1e-12)
        compatible_rho(plan)
        rep.add("delta1 K_nu-invariance", delta1_invariance(plan, induced), 1e-8)
        rep.add("induced momentum identity", induced_momentum_residual(plan, pkg1, induced), 1e-8)
    return rep
