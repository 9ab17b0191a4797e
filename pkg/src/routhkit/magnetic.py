"""Magnetic Lagrangian systems in a single adapted chart.

A system is ``(ε: P → Q, L, B)`` with chart ``(q¹..qⁿ, p¹..pᵏ)`` on ``P`` and
``ε(q, p) = q``. ``L(q, v, p)`` is a scalar field and ``B`` an antisymmetric
``(n+k)×(n+k)`` coefficient matrix on ``P``,

    B(X, Y) = Xᵀ M Y,   M = [[B_qq, B_qp], [−B_qpᵀ, B_pp]].

States are stored flat as ``x = (q, v, p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .errors import DomainError, HyperregularityError
from .numerics import (PIVOT_RTOL, Trajectory, closedness_residual, d_one_form_matrix,
                       matrix_rank, pivot_ratio, rk4_integrate)

Array = jax.Array


@dataclass(frozen=True)
class BundleChart:
    """Coordinate names for ``Q`` and the fiber of ``ε``.

    ``domain`` is an optional predicate on the flat ``P``-point ``(q, p)``;
    ``bounds`` gives per-coordinate sampling boxes for random tests.
    """

    q_names: tuple[str, ...]
    p_names: tuple[str, ...] = ()
    domain: Callable[[np.ndarray], bool] | None = None
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "q_names", tuple(self.q_names))
        object.__setattr__(self, "p_names", tuple(self.p_names))

    @property
    def n(self) -> int:
        return len(self.q_names)

    @property
    def k(self) -> int:
        return len(self.p_names)

    @property
    def v_names(self) -> tuple[str, ...]:
        return tuple(f"{c}dot" for c in self.q_names)

    @property
    def state_names(self) -> tuple[str, ...]:
        return self.q_names + self.v_names + self.p_names

    def check_domain(self, q, p=()) -> None:
        if self.domain is None:
            return
        point = np.concatenate([np.atleast_1d(np.asarray(q, float)), np.asarray(p, float).ravel()])
        if not bool(self.domain(point)):
            raise DomainError(f"point {point} lies outside the chart domain")

    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        """Random ``(q, p)`` inside ``bounds`` (default box [-1, 1])."""
        dim = self.n + self.k
        bounds = self.bounds or ((-1.0, 1.0),) * dim
        for _ in range(1000):
            x = np.array([rng.uniform(a, b) for a, b in bounds])
            if self.domain is None or self.domain(x):
                return x
        raise DomainError("could not sample a point inside the chart domain")


@dataclass(frozen=True)
class State:
    q: np.ndarray
    v: np.ndarray
    p: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("q", "v", "p"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.q, self.v, self.p])

    @classmethod
    def from_flat(cls, x, n: int, k: int = 0) -> "State":
        x = np.asarray(x, float)
        return cls(x[:n], x[n:2 * n], x[2 * n:2 * n + k])


@dataclass(frozen=True)
class CotangentState:
    q: np.ndarray
    alpha: np.ndarray
    p: np.ndarray


def split(x, n: int, k: int):
    return x[:n], x[n:2 * n], x[2 * n:2 * n + k]


class MagneticLagrangianSystem:
    """``(ε: P → Q, L, B)`` with ``L(q, v, p)`` and ``B(q, p)`` as callables.

    ``magnetic`` returns the full antisymmetric matrix ``M`` on ``P``; omit it
    for ``B = 0``. All callables must be written with ``jax.numpy`` so they can
    be differentiated and traced.
    """

    def __init__(self, chart: BundleChart,
                 lagrangian: Callable[[Array, Array, Array], Array],
                 magnetic: Callable[[Array, Array], Array] | None = None,
                 name: str = "system"):
        if chart.n < 1:
            raise ValueError("a magnetic Lagrangian system needs n >= 1")
        self.chart = chart
        self.lagrangian = lagrangian
        self._magnetic = magnetic
        self.name = name

    @property
    def n(self):
        return self.chart.n

    @property
    def k(self):
        return self.chart.k

    @property
    def dim(self):
        return 2 * self.n + self.k

    @property
    def state_names(self):
        return self.chart.state_names

    def L(self, q, v, p=None) -> Array:
        p = jnp.zeros(0) if p is None else p
        return self.lagrangian(jnp.asarray(q, float), jnp.asarray(v, float), jnp.asarray(p, float))

    def L_flat(self, x) -> Array:
        return self.lagrangian(*split(x, self.n, self.k))

    def B(self, q, p=None) -> Array:
        d = self.n + self.k
        if self._magnetic is None:
            return jnp.zeros((d, d))
        p = jnp.zeros(0) if p is None else p
        return jnp.asarray(self._magnetic(jnp.asarray(q, float), jnp.asarray(p, float)))

    def B_point(self, y) -> Array:
        return self.B(y[:self.n], y[self.n:])

    # -- dynamics (traceable core) ---------------------------------------

    def _blocks(self, x):
        n = self.n

        def g(z):
            gz = jax.jacfwd(self.L_flat)(z)
            return gz[n:2 * n], gz

        H, grad = jax.jacfwd(g, has_aux=True)(x)   # H rows are ∂/∂v
        return grad, H

    def _solve(self, x):
        """Return ``(v̇, ṗ, pivot ratio of B_pp, pivot ratio of H_vv)``."""
        n, k = self.n, self.k
        q, v, p = split(x, n, k)
        grad, H = self._blocks(x)
        L_q, L_p = grad[:n], grad[2 * n:]
        H_vq, H_vv, H_vp = H[:, :n], H[:, n:2 * n], H[:, 2 * n:]
        M = self.B(q, p)
        B_qq, B_qp, B_pp = M[:n, :n], M[:n, n:], M[n:, n:]
        if k:
            r_p = pivot_ratio(B_pp)
            pdot = jnp.linalg.solve(B_pp, B_qp.T @ v - L_p)
        else:
            r_p = jnp.asarray(1.0)
            pdot = jnp.zeros(0)
        r_v = pivot_ratio(H_vv)
        rhs = L_q - H_vq @ v - H_vp @ pdot + B_qq @ v + B_qp @ pdot
        vdot = jnp.linalg.solve(H_vv, rhs)
        return vdot, pdot, r_p, r_v

    def vector_field(self, x) -> Array:
        """``(q̇, v̇, ṗ)``; NaN where a block is singular."""
        n = self.n
        vdot, pdot, r_p, r_v = self._jit_solve(x)
        out = jnp.concatenate([x[n:2 * n], vdot, pdot])
        ok = (r_p >= PIVOT_RTOL) & (r_v >= PIVOT_RTOL)
        return jnp.where(ok, out, jnp.nan)

    def energy_flat(self, x) -> Array:
        return self._jit_energy_one(x)

    def _energy(self, x) -> Array:
        n = self.n
        v = x[n:2 * n]
        alpha = jax.jacfwd(self.L_flat)(x)[n:2 * n]
        return alpha @ v - self.L_flat(x)

    @cached_property
    def _jit_solve(self):
        return jax.jit(self._solve)

    @cached_property
    def _jit_energy_one(self):
        return jax.jit(self._energy)

    @cached_property
    def _jit_field(self):
        return jax.jit(jax.vmap(self.vector_field))

    @cached_property
    def _jit_energy(self):
        return jax.jit(jax.vmap(self.energy_flat))

    def field_batch(self, X) -> np.ndarray:
        return np.asarray(self._jit_field(jnp.asarray(X, float)))

    def energy_batch(self, X) -> np.ndarray:
        return np.asarray(self._jit_energy(jnp.asarray(X, float)))

    def sample_state(self, rng, vscale: float = 1.0) -> State:
        y = self.chart.sample_point(rng)
        return State(y[:self.n], rng.uniform(-vscale, vscale, self.n), y[self.n:])

    def closedness(self, y) -> float:
        return float(closedness_residual(self.B_point, jnp.asarray(y, float)))

    def __repr__(self):
        return f"MagneticLagrangianSystem({self.name}, n={self.n}, k={self.k})"


def _flat(sys, s) -> Array:
    if isinstance(s, State):
        sys.chart.check_domain(s.q, s.p)
        return jnp.asarray(s.flat())
    return jnp.asarray(s, float)


def el_dynamics(sys: MagneticLagrangianSystem, s: State) -> tuple[np.ndarray, np.ndarray]:
    """Solve the Euler-Lagrange equations for ``(v̇, ṗ)``.

    ``ṗ`` comes first from ``B_pp ṗ = B_qpᵀ v − ∂L/∂p``, then ``v̇`` from the
    Hessian block. A singular block raises :class:`HyperregularityError`
    naming it.
    """
    x = _flat(sys, s)
    vdot, pdot, r_p, r_v = sys._jit_solve(x)
    if not float(r_p) >= PIVOT_RTOL:
        raise HyperregularityError("fiber block B_pp of the magnetic form is singular",
                                   block="B_pp", point=np.asarray(x))
    if not float(r_v) >= PIVOT_RTOL:
        raise HyperregularityError("velocity Hessian of L is singular", block="H_vv",
                                   point=np.asarray(x))
    return np.asarray(vdot), np.asarray(pdot)


def el_residual(sys: MagneticLagrangianSystem, s: State, vdot, pdot) -> float:
    """Max residual of the two Euler-Lagrange equation groups."""
    n, k = sys.n, sys.k
    x = _flat(sys, s)
    q, v, p = split(x, n, k)
    xdot = jnp.concatenate([v, jnp.asarray(vdot, float), jnp.asarray(pdot, float)])
    Lv = lambda z: jax.jacfwd(sys.L_flat)(z)[n:2 * n]
    ddt_Lv = jax.jvp(Lv, (x,), (xdot,))[1]
    grad = jax.jacfwd(sys.L_flat)(x)
    M = sys.B(q, p)
    B_qq, B_qp, B_pp = M[:n, :n], M[:n, n:], M[n:, n:]
    pd = jnp.asarray(pdot, float)
    r1 = ddt_Lv - grad[:n] - B_qq @ v - B_qp @ pd
    r2 = -grad[2 * n:] + B_qp.T @ v - B_pp @ pd
    return float(jnp.max(jnp.abs(jnp.concatenate([r1, r2])), initial=0.0))


def legendre(sys: MagneticLagrangianSystem, s: State) -> CotangentState:
    x = _flat(sys, s)
    n = sys.n
    alpha = jax.jacfwd(sys.L_flat)(x)[n:2 * n]
    return CotangentState(np.asarray(x[:n]), np.asarray(alpha), np.asarray(x[2 * n:]))


def energy(sys: MagneticLagrangianSystem, s: State) -> float:
    return float(sys.energy_flat(_flat(sys, s)))


def presymplectic_matrix(sys: MagneticLagrangianSystem, s: State) -> np.ndarray:
    """Matrix of ``Ω = d(∂L/∂vⁱ) ∧ dqⁱ + B`` on ``(δq, δv, δp)``."""
    x = _flat(sys, s)
    n, k = sys.n, sys.k
    D_alpha = jax.jacfwd(lambda z: jax.jacfwd(sys.L_flat)(z)[n:2 * n])(x)
    Eq = jnp.zeros((n, sys.dim)).at[:, :n].set(jnp.eye(n))
    EP = jnp.zeros((n + k, sys.dim)).at[:n, :n].set(jnp.eye(n)).at[n:, 2 * n:].set(jnp.eye(k))
    M = sys.B(x[:n], x[2 * n:])
    return np.asarray(D_alpha.T @ Eq - Eq.T @ D_alpha + EP.T @ M @ EP)


def presymplectic_form(sys, s: State, U, W) -> float:
    return float(np.asarray(U) @ presymplectic_matrix(sys, s) @ np.asarray(W))


def presymplectic_rank(sys, s: State) -> int:
    return matrix_rank(presymplectic_matrix(sys, s))


def presymplectic_residual(sys, s: State) -> float:
    """``max |i_γ̇ Ω + dE|`` at ``s`` with ``γ̇`` from the dynamics."""
    x = _flat(sys, s)
    n = sys.n
    vdot, pdot = el_dynamics(sys, s)
    gdot = np.concatenate([np.asarray(x[n:2 * n]), vdot, pdot])
    Om = presymplectic_matrix(sys, s)
    dE = np.asarray(jax.jacfwd(sys.energy_flat)(x))
    return float(np.max(np.abs(gdot @ Om + dE)))


def gauge_transform(sys: MagneticLagrangianSystem,
                    alpha: Callable[[Array, Array], Array]) -> MagneticLagrangianSystem:
    """``L' = L − α(q,p)·v`` and ``B' = B + d(ε*α)``."""
    n = sys.n

    def lag(q, v, p):
        return sys.lagrangian(q, v, p) - alpha(q, p) @ v

    def beta(y):
        return jnp.concatenate([alpha(y[:n], y[n:]), jnp.zeros(sys.k)])

    def mag(q, p):
        y = jnp.concatenate([q, p])
        return sys.B(q, p) + d_one_form_matrix(beta, y)

    return MagneticLagrangianSystem(sys.chart, lag, mag, name=f"{sys.name}[gauge]")


def integrate(sys, s0, t_span, h, audits: dict[str, Callable[[Array], Array]] | None = None
              ) -> Trajectory:
    """RK4 trajectory of the Euler-Lagrange flow with an energy audit column.

    ``audits`` maps names to extra traceable functions of the flat state
    (vector-valued functions give one column per component).
    """
    x0 = _flat(sys, s0) if isinstance(s0, State) else jnp.asarray(s0, float)
    el_dynamics(sys, State.from_flat(np.asarray(x0), sys.n, sys.k))
    traj = rk4_integrate(sys.vector_field, x0, t_span, h, names=sys.state_names)
    return add_audits(traj, sys.energy_flat, audits, domain=sys.chart)


def add_audits(traj: Trajectory, energy_fn, audits=None, domain: BundleChart | None = None):
    X = jnp.asarray(traj.states)
    traj.audits["energy"] = np.asarray(jax.jit(jax.vmap(energy_fn))(X))
    for name, fn in (audits or {}).items():
        vals = np.asarray(jax.jit(jax.vmap(fn))(X))
        if vals.ndim == 1 or vals.shape[1] == 1:
            traj.audits[name] = vals.reshape(-1)
        else:
            for j in range(vals.shape[1]):
                traj.audits[f"{name}{j + 1}"] = vals[:, j]
    if domain is not None and domain.domain is not None:
        n, k = domain.n, domain.k
        for row in traj.states[:: max(1, len(traj) // 200)]:
            domain.check_domain(row[:n], row[2 * n:2 * n + k])
    return traj
