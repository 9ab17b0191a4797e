"""Symmetry data, momentum maps and single-stage Routh reduction.

The reduced Lagrangian at a reduced state ``(q̄, v̄, p̄)`` is evaluated by
lifting the point through ``section_P``, lifting the velocity horizontally
with the connection, shifting it onto ``J⁻¹(μ)`` and evaluating
``L − ⟨μ + δ, 𝒜(v)⟩``. The reduced 2-form is the pull-back of
``B + d⟨μ + δ, 𝒜⟩`` by the section.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .errors import (ConfigurationError, ConsistencyError, ConvergenceError, NumericError,
                     RegularityError, SingularMatrixError)
from .lie import GroupAction, LieGroupModel, sigma_matrix
from .magnetic import BundleChart, MagneticLagrangianSystem, State, _flat, add_audits, split
from .numerics import (Trajectory, d_one_form_matrix, lu_solve, newton_fixed, newton_solve,
                       rk4_integrate)

Array = jax.Array
TOL = 1e-8


@dataclass(frozen=True)
class PrincipalConnection:
    """𝔤-valued 1-form on ``Q``; ``matrix(q)`` has shape ``(dim 𝔤, n)``."""

    matrix: Callable[[Array], Array]

    def __call__(self, q, v) -> Array:
        return self.matrix(jnp.asarray(q, float)) @ jnp.asarray(v, float)

    @classmethod
    def from_transitive(cls, action: GroupAction) -> "PrincipalConnection":
        """Connection of a free transitive action: inverse of the generator matrix."""
        return cls(lambda q: jnp.linalg.inv(action.generators(q)))


@dataclass(frozen=True)
class SymmetrySetup:
    """A system with a compatible pair of actions, a connection and a potential.

    ``delta`` maps a flat ``P``-point ``(q, p)`` to 𝔤*. ``None`` means the zero
    potential (valid when ``B = 0``). ``mechanical`` enables the affine
    momentum shift; otherwise a Newton loop is used.
    """

    system: MagneticLagrangianSystem
    group: LieGroupModel
    action_Q: GroupAction
    action_P: GroupAction
    connection: PrincipalConnection
    delta: Callable[[Array], Array] | None = None
    mechanical: bool = True
    newton_iterations: int = 8

    @property
    def side(self) -> str:
        return self.action_Q.side

    def delta_at(self, y) -> Array:
        if self.delta is None:
            return jnp.zeros(self.group.dim)
        return self.delta(y)

    def generators_Q(self, q) -> Array:
        return self.action_Q.generators(q)


# -- momentum map --------------------------------------------------------------------


def _momentum_flat(setup: SymmetrySetup, x) -> Array:
    sys = setup.system
    n, k = sys.n, sys.k
    q, _, p = split(x, n, k)
    alpha = jax.jacfwd(sys.L_flat)(x)[n:2 * n]
    return setup.generators_Q(q).T @ alpha - setup.delta_at(jnp.concatenate([q, p]))


def momentum_map(setup: SymmetrySetup, s) -> np.ndarray:
    """``⟨J(s), ξ⟩ = ⟨𝔽L(s), ξ_Q⟩ − δ_ξ`` on the algebra basis."""
    return np.asarray(_momentum_flat(setup, _flat(setup.system, s)))


def _inertia(setup, q, v, p) -> Array:
    sys = setup.system
    Hvv = jax.jacfwd(jax.jacfwd(lambda w: sys.lagrangian(q, w, p)))(v)
    Xi = setup.generators_Q(q)
    return Xi.T @ Hvv @ Xi


def inertia_tensor(setup: SymmetrySetup, q, p=None, v=None) -> np.ndarray:
    """``𝕀(ξ, η) = ξ_Qᵀ (∂²L/∂v∂v) η_Q``; warns when not positive definite."""
    sys = setup.system
    q = jnp.asarray(q, float)
    p = jnp.zeros(sys.k) if p is None else jnp.asarray(p, float)
    v = jnp.zeros(sys.n) if v is None else jnp.asarray(v, float)
    I = np.asarray(_inertia(setup, q, v, p))
    I = 0.5 * (I + I.T)
    if I.size and np.min(np.linalg.eigvalsh(I)) <= 0:
        warnings.warn("inertia tensor is not positive definite: the system may not be G-regular",
                      RuntimeWarning, stacklevel=2)
    return I


def _shift_traced(setup: SymmetrySetup, q, v, p, mu) -> Array:
    Xi = setup.generators_Q(q)

    def residual(xi):
        x = jnp.concatenate([q, v + Xi @ xi, p])
        return _momentum_flat(setup, x) - mu

    if setup.mechanical:
        I = _inertia(setup, q, v, p)
        return jnp.linalg.solve(I, -residual(jnp.zeros(setup.group.dim)))
    return newton_fixed(residual, jnp.zeros(setup.group.dim), setup.newton_iterations)


def momentum_shift_solve(setup: SymmetrySetup, s: State, mu, tol: float = 1e-10) -> np.ndarray:
    """The ``ξ`` with ``J(v + ξ_Q, p) = μ``.

    Mechanical setups take one affine step through the inertia tensor. If the
    residual is still above ``tol`` (kinetic term not quadratic), Newton takes
    over. Failure raises :class:`RegularityError`.
    """
    sys = setup.system
    x = _flat(sys, s)
    q, v, p = split(x, sys.n, sys.k)
    mu = jnp.asarray(mu, float)
    Xi = setup.generators_Q(q)

    def residual(xi):
        return _momentum_flat(setup, jnp.concatenate([q, v + Xi @ xi, p])) - mu

    xi0 = jnp.zeros(setup.group.dim)
    try:
        if setup.mechanical:
            I = _inertia(setup, q, v, p)
            xi = lu_solve(I, -residual(xi0), name="inertia tensor")
            if float(jnp.max(jnp.abs(residual(xi)), initial=0.0)) <= tol:
                return np.asarray(xi)
            xi0 = xi
        return np.asarray(newton_solve(residual, xi0, tol=tol))
    except (ConvergenceError, SingularMatrixError) as exc:
        raise RegularityError(f"momentum shift failed: {exc}", point=np.asarray(x)) from exc


def shift_residual_flat(setup: SymmetrySetup, x, mu) -> Array:
    """``|J(v + ξ_Q) − μ|`` after the traced shift; NaN-safe via ``where``."""
    sys = setup.system
    q, v, p = split(x, sys.n, sys.k)
    xi = _shift_traced(setup, q, v, p, mu)
    J = _momentum_flat(setup, jnp.concatenate([q, v + setup.generators_Q(q) @ xi, p]))
    err = jnp.max(jnp.abs(J - mu), initial=0.0)
    return jnp.where(jnp.isfinite(err), err, jnp.inf)


def _probe_shift(setup, mu, X):
    return jax.jit(jax.vmap(lambda x: shift_residual_flat(setup, x, mu)))(jnp.asarray(X))


# -- charts and packages ----------------------------------------------------------------


@dataclass(frozen=True)
class QuotientChartData:
    """Explicit coordinates on the quotients.

    ``project_P``/``section_P`` map between ``P``-chart points ``(q, p)`` and
    ``(q̄, p̄)`` on ``P/G_μ``. ``project_Q``/``section_Q`` do the same for
    ``Q → Q/G``. The first ``len(q_names)`` outputs of ``project_P`` must
    equal ``project_Q`` of the base point.
    """

    project_Q: Callable[[Array], Array]
    section_Q: Callable[[Array], Array]
    project_P: Callable[[Array], Array]
    section_P: Callable[[Array], Array]
    q_names: tuple[str, ...]
    p_names: tuple[str, ...] = ()
    bounds: tuple[tuple[float, float], ...] | None = None
    domain: Callable[[np.ndarray], bool] | None = None

    @property
    def n(self):
        return len(self.q_names)

    @property
    def k(self):
        return len(self.p_names)

    def chart(self) -> BundleChart:
        return BundleChart(self.q_names, self.p_names, domain=self.domain, bounds=self.bounds)


def _check_charts(setup: SymmetrySetup, charts: QuotientChartData, rng, count=20):
    sys = setup.system
    problems = []
    for _ in range(count):
        y = jnp.asarray(sys.chart.sample_point(rng))
        ybar = charts.project_P(y)
        if ybar.shape != (charts.n + charts.k,):
            raise ConfigurationError(f"project_P returns shape {ybar.shape}, expected "
                                     f"({charts.n + charts.k},)")
        e1 = float(jnp.max(jnp.abs(charts.project_P(charts.section_P(ybar)) - ybar)))
        qb = charts.project_Q(y[:sys.n])
        e2 = float(jnp.max(jnp.abs(charts.project_Q(charts.section_Q(qb)) - qb), initial=0.0))
        e3 = float(jnp.max(jnp.abs(ybar[:charts.n] - qb), initial=0.0))
        for label, e in (("project_P∘section_P", e1), ("project_Q∘section_Q", e2),
                         ("project_P/project_Q base", e3)):
            if e > 1e-10:
                problems.append(f"{label} deviates by {e:.3e}")
    if problems:
        raise ConfigurationError("quotient charts are inconsistent", sorted(set(problems)))


class ReducedSystemPackage:
    """The reduced system together with state projection and lift."""

    def __init__(self, setup: SymmetrySetup, mu, charts: QuotientChartData, name="reduced"):
        self.setup = setup
        self.mu = jnp.asarray(mu, float)
        self.charts = charts
        sys = setup.system
        self._n, self._k = sys.n, sys.k
        self.reduced = MagneticLagrangianSystem(charts.chart(), jax.jit(self._routhian), jax.jit(self._form),
                                                name=name)

    # lift a reduced state to a full one on J⁻¹(μ)
    def _lift(self, qb, vb, pb):
        n = self._n
        setup, ch = self.setup, self.charts
        y = ch.section_P(jnp.concatenate([qb, pb]))
        q, p = y[:n], y[n:]
        Dpi = jax.jacfwd(ch.project_Q)(q).reshape(ch.n, n)
        A = setup.connection.matrix(q)
        v_h = jnp.linalg.solve(jnp.concatenate([Dpi, A]), jnp.concatenate([vb, jnp.zeros(A.shape[0])]))
        xi = _shift_traced(setup, q, v_h, p, self.mu)
        return q, v_h + setup.generators_Q(q) @ xi, p

    def _routhian(self, qb, vb, pb):
        setup = self.setup
        q, v, p = self._lift(qb, vb, pb)
        shift = self.mu + setup.delta_at(jnp.concatenate([q, p]))
        return setup.system.lagrangian(q, v, p) - shift @ (setup.connection.matrix(q) @ v)

    def _beta(self, y):
        n, k = self._n, self._k
        q = y[:n]
        coeff = (self.mu + self.setup.delta_at(y)) @ self.setup.connection.matrix(q)
        return jnp.concatenate([coeff, jnp.zeros(k)])

    def _form(self, qb, pb):
        yb = jnp.concatenate([qb, pb])
        y = self.charts.section_P(yb)
        S = jax.jacfwd(self.charts.section_P)(yb)
        M = self.setup.system.B_point(y) + d_one_form_matrix(self._beta, y)
        return S.T @ M @ S

    def lift_flat(self, xb) -> Array:
        qb, vb, pb = split(xb, self.charts.n, self.charts.k)
        return jnp.concatenate(self._lift(qb, vb, pb))

    def project_flat(self, x) -> Array:
        n, k = self._n, self._k
        q, v, p = split(x, n, k)
        yb = self.charts.project_P(jnp.concatenate([q, p]))
        vb = jax.jvp(self.charts.project_Q, (q,), (v,))[1]
        return jnp.concatenate([yb[:self.charts.n], jnp.atleast_1d(vb), yb[self.charts.n:]])

    @cached_property
    def _jit_lift(self):
        return jax.jit(jax.vmap(self.lift_flat))

    @cached_property
    def _jit_project(self):
        return jax.jit(jax.vmap(self.project_flat))

    def lift_batch(self, Xb) -> np.ndarray:
        return np.asarray(self._jit_lift(jnp.atleast_2d(jnp.asarray(Xb, float))))

    def project_batch(self, X) -> np.ndarray:
        return np.asarray(self._jit_project(jnp.atleast_2d(jnp.asarray(X, float))))

    def lift_state(self, sb: State) -> State:
        x = self.lift_batch(sb.flat())[0]
        return State.from_flat(x, self._n, self._k)

    def project_state(self, s: State) -> State:
        xb = self.project_batch(s.flat())[0]
        return State.from_flat(xb, self.charts.n, self.charts.k)


def routh_reduce(setup: SymmetrySetup, mu, charts: QuotientChartData, check: bool = True,
                 probes: int = 20, seed: int = 0, name: str = "reduced") -> ReducedSystemPackage:
    """Routh reduction of ``setup`` at momentum ``mu``.

    With ``check`` the charts are validated and the momentum shift must
    converge at ``probes`` random states (the regular-value heuristic).
    """
    mu = jnp.asarray(mu, float)
    if mu.shape != (setup.group.dim,):
        raise ConfigurationError(f"momentum has shape {mu.shape}, group dimension is {setup.group.dim}")
    if charts.n < 1:
        raise ConfigurationError("the reduced base Q/G must have positive dimension; "
                                 "use group_config_reduce for Q = G")
    if check:
        rng = np.random.default_rng(seed)
        _check_charts(setup, charts, rng, probes)
        sys = setup.system
        X = np.stack([sys.sample_state(rng).flat() for _ in range(probes)])
        res = np.asarray(_probe_shift(setup, mu, X))
        for x, r in zip(X, res):
            if not r <= 1e-10:
                # the eager solver reports the precise failure
                momentum_shift_solve(setup, State.from_flat(x, sys.n, sys.k), mu)
    return ReducedSystemPackage(setup, mu, charts, name=name)


# -- invariance -------------------------------------------------------------------------


@dataclass
class InvarianceReport:
    residuals: dict[str, float]
    tol: float = TOL
    samples: int = 0
    seed: int = 0

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.residuals.items() if not v <= self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures

    def text(self) -> str:
        lines = [f"invariance check: {self.samples} samples, seed {self.seed}, tol {self.tol:g}"]
        for k, v in self.residuals.items():
            lines.append(f"  {k:<26s} {v:.3e}  {'ok' if v <= self.tol else 'FAIL'}")
        lines.append(f"  result: {'pass' if self.passed else 'fail (' + ', '.join(self.failures) + ')'}")
        return "\n".join(lines)


def _invariance_sample(setup: SymmetrySetup, x, g):
    sys = setup.system
    n, k = sys.n, sys.k
    G = setup.group
    q, v, p = split(x, n, k)
    y = jnp.concatenate([q, p])
    aQ = lambda z: setup.action_Q.act(g, z)
    aP = lambda z: setup.action_P.act(g, z)
    gy = aP(y)
    gq, gv = jax.jvp(aQ, (q,), (v,))
    res = {}
    res["action law"] = jnp.maximum(setup.action_Q.law_residual(g, G.inverse(g), q),
                                    setup.action_P.law_residual(g, G.inverse(g), y))
    res["compatibility"] = jnp.max(jnp.abs(gy[:n] - gq))
    res["L invariance"] = jnp.abs(sys.lagrangian(gq, gv, gy[n:]) - sys.lagrangian(q, v, p))
    D = jax.jacfwd(aP)(y)
    res["B invariance"] = jnp.max(jnp.abs(D.T @ sys.B_point(gy) @ D - sys.B_point(y)))
    DQ = jax.jacfwd(aQ)(q)
    A = setup.connection.matrix
    Adg = G.Ad(g) if setup.side == "left" else G.Ad(G.inverse(g))
    res["connection equivariance"] = jnp.max(jnp.abs(A(gq) @ DQ - Adg @ A(q)))
    Xi = setup.generators_Q(q)
    res["connection reproduces"] = jnp.max(jnp.abs(A(q) @ Xi - jnp.eye(G.dim)), initial=0.0)
    XiP = setup.action_P.generators(y)
    Dd = jax.jacfwd(setup.delta_at)(y)
    res["potential property"] = jnp.max(jnp.abs(XiP.T @ sys.B_point(y) - Dd), initial=0.0)
    return res


def invariance_check(setup: SymmetrySetup, sample_count: int = 100, seed: int = 0,
                     tol: float = TOL, group_scale: float = 1.0) -> InvarianceReport:
    rng = np.random.default_rng(seed)
    sys = setup.system
    X = np.stack([sys.sample_state(rng).flat() for _ in range(sample_count)])
    Gs = np.stack([np.asarray(setup.group.random(rng, group_scale)) for _ in range(sample_count)])
    out = jax.jit(jax.vmap(lambda x, g: _invariance_sample(setup, x, g)))(jnp.asarray(X), jnp.asarray(Gs))
    res = {k: float(np.max(np.asarray(v))) for k, v in out.items()}
    return InvarianceReport(res, tol, sample_count, seed)


def equivariance_residual(setup: SymmetrySetup, s: State, g) -> float:
    """``J(g·s) − (Ad*_{g⁻¹} J(s) − σ(g))`` for left actions, ``J(s·g) − (Ad*_g J(s) − σ(g⁻¹))`` for right."""
    from .lie import sigma_cocycle

    sys = setup.system
    n, k = sys.n, sys.k
    G = setup.group
    x = _flat(sys, s)
    q, v, p = split(x, n, k)
    g = jnp.asarray(g, float)
    gq, gv = jax.jvp(lambda z: setup.action_Q.act(g, z), (q,), (v,))
    gy = setup.action_P.act(g, jnp.concatenate([q, p]))
    J0 = _momentum_flat(setup, x)
    J1 = _momentum_flat(setup, jnp.concatenate([gq, gv, gy[n:]]))
    y = jnp.concatenate([q, p])
    if setup.side == "left":
        expected = G.coadjoint(G.inverse(g), J0) - sigma_cocycle(setup.action_P, setup.delta_at, g, y)
    else:
        expected = G.coadjoint(g, J0) - sigma_cocycle(setup.action_P, setup.delta_at, G.inverse(g), y)
    return float(jnp.max(jnp.abs(J1 - expected)))


# -- reduction on Lie groups -------------------------------------------------------------


class CoadjointFlow:
    """Reduced dynamics on 𝔤* for a Lagrangian ``ℓ`` on 𝔤.

    Right: ``ν̇ = −ad*_χ ν + i_χ Σ``. Left: ``ν̇ = ad*_χ ν − i_χ Σ``, with
    ``𝔽ℓ(χ(ν)) = ν``. The Routhian is ``L̃(ν) = ℓ(χ) − ⟨ν, χ⟩`` and its
    energy ``−L̃``.
    """

    def __init__(self, group: LieGroupModel, ell: Callable[[Array], Array], mu, side: str,
                 Sigma=None, newton_iterations: int = 6, names: Sequence[str] | None = None):
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        self.group = group
        self.ell = ell
        self.mu = jnp.asarray(mu, float)
        self.side = side
        self.Sigma = jnp.zeros((group.dim, group.dim)) if Sigma is None else jnp.asarray(Sigma, float)
        self.newton_iterations = newton_iterations
        self.state_names = tuple(names or (f"nu{i + 1}" for i in range(group.dim)))
        self._sign = 1.0 if side == "left" else -1.0
        self._dell = jax.jacfwd(ell)

    @property
    def dim(self):
        return self.group.dim

    def chi(self, nu) -> Array:
        return newton_fixed(lambda xi: self._dell(xi) - nu, jnp.zeros(self.dim), self.newton_iterations)

    def chi_checked(self, nu) -> np.ndarray:
        nu = jnp.asarray(nu, float)
        try:
            return np.asarray(newton_solve(lambda xi: self._dell(xi) - nu, jnp.zeros(self.dim)))
        except (ConvergenceError, SingularMatrixError) as exc:
            raise RegularityError(f"Legendre map of the reduced Lagrangian is not invertible: {exc}") from exc

    def _K(self, nu) -> Array:
        """Matrix of ``η ↦ ±(ad*_η ν − i_η Σ)``, the orbit tangent map."""
        G = self.group
        cols = [G.ad(e).T @ nu for e in jnp.eye(self.dim)]
        return self._sign * (jnp.stack(cols, axis=1) - self.Sigma.T)

    def vector_field(self, nu) -> Array:
        return self._K(nu) @ self.chi(nu)

    def routhian(self, nu) -> Array:
        chi = self.chi(nu)
        return self.ell(chi) - nu @ chi

    def energy_flat(self, nu) -> Array:
        return -self.routhian(nu)

    def reduced_form(self, nu, a, b) -> Array:
        """KKS-type 2-form ``B̃(ν)(a, b) = ⟨a, η⟩`` where ``b = K(ν)η``."""
        eta = jnp.linalg.lstsq(self._K(nu), b)[0]
        return a @ eta

    def form_residual(self, nu) -> Array:
        """``max_j |B̃(ν)(ν̇, b_j) − dL̃(b_j)|`` over orbit tangents ``b_j = K e_j``."""
        nu = jnp.asarray(nu, float)
        nudot = self.vector_field(nu)
        dL = jax.jacfwd(self.routhian)(nu)
        K = self._K(nu)
        res = [self.reduced_form(nu, nudot, K[:, j]) - dL @ K[:, j] for j in range(self.dim)]
        return jnp.max(jnp.abs(jnp.stack(res)), initial=0.0)

    def chain_rule_residual(self, nu, nudot_prime) -> Array:
        """``⟨dL̃(ν), ν̇'⟩ + ⟨ν̇', χ(ν)⟩``, zero by the chain rule."""
        nu = jnp.asarray(nu, float)
        return jax.jacfwd(self.routhian)(nu) @ nudot_prime + nudot_prime @ self.chi(nu)


def group_config_reduce(group: LieGroupModel, ell, mu, side: str = "left",
                        delta: Callable[[Array], Array] | None = None,
                        action: GroupAction | None = None, base_point=None, Sigma=None,
                        names=None, check_points: int = 3, seed: int = 0) -> CoadjointFlow:
    """Reduced flow on 𝔤* for ``Q = G``.

    ``Σ`` is taken from ``Sigma`` when given, otherwise computed from
    ``delta`` (a field on the chart of ``action``, by default left or right
    multiplication) and checked for base-point independence.
    """
    if Sigma is None and delta is not None:
        if action is None:
            if side == "left":
                action = GroupAction(group, group.compose, "left")
            else:
                action = GroupAction(group, lambda g, h: group.compose(h, g), "right")
        m0 = jnp.zeros(group.dim) if base_point is None else jnp.asarray(base_point, float)
        Sigma = sigma_matrix(action, delta, m0)
        rng = np.random.default_rng(seed)
        for _ in range(check_points - 1):
            other = sigma_matrix(action, delta, m0 + rng.uniform(-1, 1, m0.shape))
            if float(jnp.max(jnp.abs(other - Sigma))) > 1e-8:
                raise ConsistencyError("Σ depends on the base point; delta is not a valid potential")
    flow = CoadjointFlow(group, ell, mu, side, Sigma, names=names)
    flow.chi_checked(flow.mu if flow.mu.shape == (group.dim,) else jnp.zeros(group.dim))
    return flow


def integrate_flow(flow, x0, t_span, h, audits=None) -> Trajectory:
    """RK4 trajectory of any object with ``vector_field``/``energy_flat``."""
    if isinstance(flow, MagneticLagrangianSystem):
        from .magnetic import integrate

        return integrate(flow, jnp.asarray(x0, float), t_span, h, audits)
    x0 = jnp.asarray(x0, float)
    if not np.all(np.isfinite(np.asarray(flow.vector_field(x0)))):
        raise NumericError("reduced vector field is not finite at the initial state", point=np.asarray(x0))
    traj = rk4_integrate(flow.vector_field, x0, t_span, h, names=flow.state_names)
    return add_audits(traj, flow.energy_flat, audits)
