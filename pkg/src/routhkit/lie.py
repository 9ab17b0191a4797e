"""Lie groups in coordinates, group actions and cocycles of potentials.

Brackets follow the matrix-commutator (left-invariant field) convention, so
``Ad`` is a homomorphism and ``ad_ξ = d/dε Ad_{exp εξ}``. Coadjoint maps are
transposes in the fixed basis: ``Ad*_g = Ad_gᵀ``, ``ad*_ξ = ad_ξᵀ``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .errors import ConsistencyError, StructureError

Array = jax.Array

_J2 = jnp.array([[0.0, -1.0], [1.0, 0.0]])


def _as(x):
    return jnp.asarray(x, dtype=jnp.float64)


class LieGroupModel:
    """Common interface of the built-in groups."""

    name: str = "group"
    dim: int = 0

    # subclasses implement: compose, inverse, exp, Ad, bracket, angular

    def identity(self) -> Array:
        return jnp.zeros(self.dim)

    def _check(self, *xs):
        for x in xs:
            if jnp.shape(x) != (self.dim,):
                raise StructureError(f"{self.name}: expected a vector of length {self.dim}, "
                                     f"got shape {jnp.shape(x)}")

    def ad(self, xi) -> Array:
        """Matrix of ``η ↦ [ξ, η]``."""
        return jax.jacfwd(lambda eta: self.bracket(xi, eta))(jnp.zeros(self.dim))

    def coadjoint(self, g, mu) -> Array:
        """``Ad*_g μ``, defined by ``⟨Ad*_g μ, ξ⟩ = ⟨μ, Ad_g ξ⟩``."""
        self._check(g, mu)
        return self.Ad(g).T @ _as(mu)

    def coad_inf(self, xi, mu) -> Array:
        """``ad*_ξ μ``, defined by ``⟨ad*_ξ μ, η⟩ = ⟨μ, [ξ, η]⟩``."""
        self._check(xi, mu)
        return self.ad(_as(xi)).T @ _as(mu)

    @property
    def angular(self) -> tuple[bool, ...]:
        return (False,) * self.dim

    def distance(self, g, h) -> Array:
        d = _as(g) - _as(h)
        ang = jnp.array(self.angular, dtype=bool)
        wrapped = jnp.mod(d + jnp.pi, 2 * jnp.pi) - jnp.pi
        return jnp.max(jnp.abs(jnp.where(ang, wrapped, d)), initial=0.0)

    def random(self, rng: np.random.Generator, scale: float = 1.0) -> Array:
        return _as(rng.uniform(-scale, scale, self.dim))

    def __eq__(self, other):
        return type(self) is type(other) and self.__dict__ == other.__dict__

    def __hash__(self):
        return hash((type(self).__name__, self.dim))

    def __repr__(self):
        return self.name


class RealN(LieGroupModel):
    """Additive group ℝⁿ (n = 0 gives the trivial group)."""

    def __init__(self, n: int):
        if n < 0:
            raise ValueError("dimension must be non-negative")
        self.dim = n
        self.name = f"RealN({n})"

    def compose(self, g, h):
        self._check(g, h)
        return _as(g) + _as(h)

    def inverse(self, g):
        return -_as(g)

    def exp(self, xi):
        return _as(xi)

    def Ad(self, g):
        return jnp.eye(self.dim)

    def bracket(self, xi, eta):
        return jnp.zeros(self.dim)


class Circle(LieGroupModel):
    """S¹ with angle coordinate; composition is addition (not reduced mod 2π)."""

    dim = 1
    name = "Circle"

    def compose(self, g, h):
        self._check(g, h)
        return _as(g) + _as(h)

    def inverse(self, g):
        return -_as(g)

    def exp(self, xi):
        return _as(xi)

    def Ad(self, g):
        return jnp.eye(1)

    def bracket(self, xi, eta):
        return jnp.zeros(1)

    @property
    def angular(self):
        return (True,)


def _sinc(x):
    return jnp.sinc(x / jnp.pi)


class SE2(LieGroupModel):
    """Planar rigid motions ``(x, y, θ)``.

    Law ``(x₁,y₁,θ₁)(x₂,y₂,θ₂) = (R(θ₁)(x₂,y₂) + (x₁,y₁), θ₁+θ₂)``. Algebra basis
    ``e₁, e₂`` (translations) and ``e₃`` (rotation) with ``[e₁,e₃] = −e₂``,
    ``[e₂,e₃] = e₁`` (commutator convention).
    """

    dim = 3
    name = "SE2"

    def compose(self, g, h):
        self._check(g, h)
        g, h = _as(g), _as(h)
        c, s = jnp.cos(g[2]), jnp.sin(g[2])
        return jnp.array([c * h[0] - s * h[1] + g[0], s * h[0] + c * h[1] + g[1], g[2] + h[2]])

    def inverse(self, g):
        self._check(g)
        g = _as(g)
        c, s = jnp.cos(g[2]), jnp.sin(g[2])
        return jnp.array([-c * g[0] - s * g[1], s * g[0] - c * g[1], -g[2]])

    def exp(self, xi):
        self._check(xi)
        xi = _as(xi)
        w = xi[2]
        a = _sinc(w)                                   # sin w / w
        b = jnp.sin(w / 2) * _sinc(w / 2)              # (1 - cos w) / w
        return jnp.array([a * xi[0] - b * xi[1], b * xi[0] + a * xi[1], w])

    def Ad(self, g):
        self._check(g)
        g = _as(g)
        c, s = jnp.cos(g[2]), jnp.sin(g[2])
        return jnp.array([[c, -s, g[1]], [s, c, -g[0]], [0.0, 0.0, 1.0]])

    def bracket(self, xi, eta):
        self._check(xi, eta)
        xi, eta = _as(xi), _as(eta)
        v = xi[2] * (_J2 @ eta[:2]) - eta[2] * (_J2 @ xi[:2])
        return jnp.array([v[0], v[1], 0.0])

    @property
    def angular(self):
        return (False, False, True)


class Heisenberg(LieGroupModel):
    """Heisenberg group on ℝ³ with ``(x,y,s)(x',y',s') = (x+x', y+y', s+s'+½(xy'−yx'))``."""

    dim = 3
    name = "Heisenberg"

    def compose(self, g, h):
        self._check(g, h)
        g, h = _as(g), _as(h)
        return jnp.array([g[0] + h[0], g[1] + h[1], g[2] + h[2] + 0.5 * (g[0] * h[1] - g[1] * h[0])])

    def inverse(self, g):
        return -_as(g)

    def exp(self, xi):
        return _as(xi)

    def Ad(self, g):
        self._check(g)
        g = _as(g)
        return jnp.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-g[1], g[0], 1.0]])

    def bracket(self, xi, eta):
        self._check(xi, eta)
        xi, eta = _as(xi), _as(eta)
        return jnp.array([0.0, 0.0, xi[0] * eta[1] - xi[1] * eta[0]])


class Product(LieGroupModel):
    """Direct product; coordinates are concatenated."""

    def __init__(self, factors: Sequence[LieGroupModel]):
        self.factors = tuple(factors)
        self.dim = sum(f.dim for f in self.factors)
        self.name = "Product(" + ", ".join(f.name for f in self.factors) + ")"
        self._cuts = np.cumsum([0] + [f.dim for f in self.factors])

    def _split(self, x):
        return [x[a:b] for a, b in zip(self._cuts[:-1], self._cuts[1:])]

    def _map(self, method, *xs):
        self._check(*xs)
        parts = [self._split(_as(x)) for x in xs]
        return jnp.concatenate([getattr(f, method)(*args) for f, *args in zip(self.factors, *parts)])

    def compose(self, g, h):
        return self._map("compose", g, h)

    def inverse(self, g):
        return self._map("inverse", g)

    def exp(self, xi):
        return self._map("exp", xi)

    def bracket(self, xi, eta):
        return self._map("bracket", xi, eta)

    def Ad(self, g):
        self._check(g)
        return jax.scipy.linalg.block_diag(*[f.Ad(p) for f, p in zip(self.factors, self._split(_as(g)))])

    @property
    def angular(self):
        return sum((f.angular for f in self.factors), ())

    def __hash__(self):
        return hash(self.name)


def pair(mu, xi) -> Array:
    return jnp.dot(_as(mu), _as(xi))


# -- actions --------------------------------------------------------------------


@dataclass(frozen=True)
class GroupAction:
    """Action of ``group`` on a chart manifold.

    ``act(g, m)``: for ``side="right"`` the law is
    ``act(g, act(h, m)) = act(h∘g, m)``; for ``side="left"`` it is
    ``act(g, act(h, m)) = act(g∘h, m)``.
    """

    group: LieGroupModel
    act: Callable[[Array, Array], Array]
    side: str = "left"

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")

    def __call__(self, g, m):
        return self.act(_as(g), _as(m))

    def fundamental(self, m, xi) -> Array:
        """``ξ_M(m) = d/dε act(exp(εξ), m)`` at ε = 0."""
        m, xi = _as(m), _as(xi)
        f = lambda eps: self.act(self.group.exp(eps * xi), m)
        return jax.jvp(f, (jnp.asarray(0.0),), (jnp.asarray(1.0),))[1]

    def generators(self, m) -> Array:
        """Matrix whose columns are ``e_a`` fundamental fields at ``m``."""
        m = _as(m)
        G = self.group
        f = lambda xi: self.act(G.exp(xi), m)
        return jax.jacfwd(f)(jnp.zeros(G.dim))

    def law_residual(self, g, h, m) -> Array:
        G = self.group
        lhs = self(g, self(h, m))
        gh = G.compose(h, g) if self.side == "right" else G.compose(g, h)
        return jnp.max(jnp.abs(lhs - self(gh, m)), initial=0.0)


def vector_field_bracket(X: Callable[[Array], Array], Y: Callable[[Array], Array], m) -> Array:
    """``[X, Y] = DY·X − DX·Y`` in coordinates."""
    m = _as(m)
    return jax.jvp(Y, (m,), (X(m),))[1] - jax.jvp(X, (m,), (Y(m),))[1]


# -- cocycles ---------------------------------------------------------------------


def _sigma_at(action: GroupAction, delta, g, m):
    G = action.group
    g_inv = G.inverse(g)
    moved = action(g_inv if action.side == "right" else g, m)
    return delta(moved) - G.coadjoint(g_inv, delta(m))


def sigma_cocycle(action: GroupAction, delta: Callable[[Array], Array], g, m,
                  points: Sequence | None = None, tol: float = 1e-8) -> Array:
    """Group cocycle of a potential.

    Right actions: ``σ(g) = δ(m·g⁻¹) − Ad*_{g⁻¹} δ(m)``. Left actions:
    ``σ(g) = δ(g·m) − Ad*_{g⁻¹} δ(m)``. Either way
    ``σ(gh) = σ(g) + Ad*_{g⁻¹} σ(h)``. Extra ``points`` are used to confirm
    that the value does not depend on the base point.
    """
    g = _as(g)
    val = _sigma_at(action, delta, g, _as(m))
    for p in points or ():
        other = _sigma_at(action, delta, g, _as(p))
        err = float(jnp.max(jnp.abs(other - val), initial=0.0))
        if err > tol * max(1.0, float(jnp.max(jnp.abs(val), initial=0.0))):
            raise ConsistencyError(f"sigma depends on the base point (deviation {err:.3e}); "
                                   "delta is not a potential of an invariant 2-form")
    return val


def sigma_matrix(action: GroupAction, delta: Callable[[Array], Array], m) -> Array:
    """Matrix of the algebra cocycle ``Σ(ξ, η) = Σ[a, b] ξ^a η^b``.

    Right: ``Σ(ξ,η) = ξ_P(δ_η) − δ_[ξ,η]``. For left actions the generators
    are anti-homomorphic and the same object reads
    ``Σ(ξ,η) = −ξ_P(δ_η) − δ_[ξ,η]``. In both cases
    ``Σ(ξ, η) = −d/dε ⟨σ(exp εξ), η⟩``.
    """
    m = _as(m)
    G = action.group
    Dd = jax.jacfwd(delta)(m)            # Dd[b, i] = ∂_i δ_b
    Xi = action.generators(m)            # Xi[i, a] = (e_a)_P^i
    first = (Dd @ Xi).T                  # first[a, b] = (e_a)_P(δ_b)
    if action.side == "left":
        first = -first
    dm = delta(m)
    brk = jnp.stack([G.ad(e).T @ dm for e in jnp.eye(G.dim)]) if G.dim else jnp.zeros((0, 0))
    return first - brk


def sigma_inf(action: GroupAction, delta, xi, eta, m) -> Array:
    return _as(xi) @ sigma_matrix(action, delta, m) @ _as(eta)


def isotropy_algebra(group: LieGroupModel, mu, Sigma=None, tol: float = 1e-10) -> np.ndarray:
    """Basis (columns) of ``{ξ : ad*_ξ μ = i_ξ Σ}``, the affine isotropy algebra."""
    mu = _as(mu)
    E = np.eye(group.dim)
    cols = [np.asarray(group.coad_inf(e, mu)) for e in E]
    A = np.stack(cols, axis=1) if cols else np.zeros((0, 0))
    if Sigma is not None:
        A = A - np.asarray(Sigma).T
    return null_space(A, tol)


def null_space(A, tol: float = 1e-10) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.size == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A)
    scale = max(1.0, s[0] if s.size else 0.0)
    r = int(np.sum(s > tol * scale))
    return vt[r:].T.copy()
