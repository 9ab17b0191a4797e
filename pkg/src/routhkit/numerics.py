"""Differentiation, linear/nonlinear solves, RK4 integration and sampled forms.

Derivatives come from JAX forward mode. ``jax.jvp`` propagates a dual number
(value, tangent) through the function, and nesting two forward passes gives
exact second derivatives (dual-over-dual). Central differences live here too,
but only as a test oracle.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np
from jax.scipy.linalg import lu_factor, lu_solve as _lu_solve

from .errors import ConvergenceError, NumericError, SingularMatrixError

Array = jax.Array
ScalarField = Callable[[Array], Array]

PIVOT_RTOL = 1e-12


def _is_traced(x) -> bool:
    return isinstance(x, jax.core.Tracer)


def _check_finite(value, x, what):
    if _is_traced(value):
        return
    if not np.all(np.isfinite(np.asarray(value))):
        raise NumericError(f"non-finite {what} at point {np.asarray(x)!r}", point=np.asarray(x))


# -- differentiation ----------------------------------------------------------


def grad_fn(f: ScalarField) -> Callable[[Array], Array]:
    """Forward-mode gradient of a scalar field (traceable)."""
    return jax.jacfwd(f)


def hess_fn(f: ScalarField) -> Callable[[Array], Array]:
    """Forward-over-forward Hessian of a scalar field (traceable)."""
    return jax.jacfwd(jax.jacfwd(f))


def gradient(f: ScalarField, x) -> Array:
    x = jnp.asarray(x, dtype=jnp.float64)
    val = f(x)
    _check_finite(val, x, "value")
    g = grad_fn(f)(x)
    _check_finite(g, x, "gradient")
    return g


def hessian(f: ScalarField, x) -> Array:
    x = jnp.asarray(x, dtype=jnp.float64)
    H = hess_fn(f)(x)
    _check_finite(H, x, "hessian")
    return 0.5 * (H + H.T)


def jacobian(F: Callable[[Array], Array], x) -> Array:
    x = jnp.asarray(x, dtype=jnp.float64)
    Jm = jax.jacfwd(F)(x)
    _check_finite(Jm, x, "jacobian")
    return Jm


def fd_gradient(f: ScalarField, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient. Test oracle only."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (float(f(jnp.asarray(x + e))) - float(f(jnp.asarray(x - e)))) / (2 * step)
    return g


# -- linear algebra ------------------------------------------------------------


def pivot_ratio(A: Array) -> Array:
    """Smallest LU pivot relative to the largest matrix entry."""
    if A.shape[0] == 0:
        return jnp.asarray(1.0)
    lu, _ = lu_factor(A)
    scale = jnp.max(jnp.abs(A))
    return jnp.where(scale > 0, jnp.min(jnp.abs(jnp.diag(lu))) / scale, 0.0)


def lu_solve(A, b, name: str = "matrix") -> Array:
    """Solve ``A x = b`` by LU with partial pivoting.

    Eagerly a pivot below ``PIVOT_RTOL * max|A|`` raises
    :class:`SingularMatrixError`. Under tracing the result is NaN instead, so
    the integrator can stop at the first bad state.
    """
    A = jnp.asarray(A, dtype=jnp.float64)
    b = jnp.asarray(b, dtype=jnp.float64)
    if A.shape[0] == 0:
        return jnp.zeros(b.shape, dtype=jnp.float64)
    lu, piv = lu_factor(A)
    scale = jnp.max(jnp.abs(A))
    ratio = jnp.where(scale > 0, jnp.min(jnp.abs(jnp.diag(lu))) / scale, 0.0)
    if not _is_traced(ratio):
        if not float(ratio) >= PIVOT_RTOL:
            raise SingularMatrixError(f"{name} is singular (pivot ratio {float(ratio):.3e})")
        return _lu_solve((lu, piv), b)
    x = _lu_solve((lu, piv), b)
    return jnp.where(ratio >= PIVOT_RTOL, x, jnp.nan)


def matrix_rank(A, rtol: float = 1e-9) -> int:
    s = np.linalg.svd(np.asarray(A), compute_uv=False)
    if s.size == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


# -- Newton ---------------------------------------------------------------------


def newton_solve(residual: Callable[[Array], Array], x0, tol: float = 1e-12,
                 max_iter: int = 50) -> Array:
    """Newton iteration with a forward-mode Jacobian.

    Raises :class:`ConvergenceError` when ``max_iter`` is exhausted and
    :class:`SingularMatrixError` when the Jacobian loses rank.
    """
    x = jnp.atleast_1d(jnp.asarray(x0, dtype=jnp.float64))
    jac = jax.jacfwd(residual)
    r = residual(x)
    _check_finite(r, x, "residual")
    for _ in range(max_iter):
        if float(jnp.max(jnp.abs(r), initial=0.0)) <= tol:
            return x
        x = x - lu_solve(jac(x), r, name="Newton Jacobian")
        r = residual(x)
        _check_finite(r, x, "residual")
    err = float(jnp.max(jnp.abs(r), initial=0.0))
    if err <= tol:
        return x
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations "
                           f"(residual {err:.3e})", residual=np.asarray(r), point=np.asarray(x))


def newton_fixed(residual: Callable[[Array], Array], x0, iterations: int) -> Array:
    """Traceable Newton with a fixed number of steps (no convergence test)."""
    jac = jax.jacfwd(residual)
    x = jnp.asarray(x0, dtype=jnp.float64)
    for _ in range(iterations):
        x = x - jnp.linalg.solve(jac(x), residual(x))
    return x


# -- integration ------------------------------------------------------------------


@dataclass
class Trajectory:
    """Time samples, states and named audit columns."""

    times: np.ndarray
    states: np.ndarray
    names: tuple[str, ...] = ()
    audits: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1 or self.states.shape[0] != self.times.size:
            raise ValueError("times and states disagree in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not self.names:
            self.names = tuple(f"x{i}" for i in range(self.states.shape[1]))

    def __len__(self):
        return self.times.size

    def column(self, name: str) -> np.ndarray:
        if name in self.audits:
            return self.audits[name]
        return self.states[:, self.names.index(name)]

    def drift(self, name: str) -> float:
        c = np.atleast_2d(self.column(name).T).T
        return float(np.max(np.abs(c - c[0])))

    def to_csv(self, path) -> None:
        header = ["t", *self.names, *self.audits]
        cols = [self.times[:, None], self.states]
        cols += [np.asarray(a, dtype=float).reshape(len(self), -1) for a in self.audits.values()]
        table = np.hstack(cols)
        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in table:
                w.writerow(["%.17g" % v for v in row])

        if hasattr(path, "write"):
            write(path)
        else:
            with open(path, "w", newline="") as fh:
                write(fh)


_RK4_A = (0.0, 0.5, 0.5, 1.0)
_RK4_B = (1.0 / 6, 2.0 / 6, 2.0 / 6, 1.0 / 6)


def _rk4_step(f, x, h):
    # stages run in an inner scan so ``f`` is traced (and compiled) once
    def stage(carry, ab):
        acc, k = carry
        a, b = ab
        k = f(x + (a * h) * k)
        return (acc + b * k, k), None

    zero = jnp.zeros_like(x)
    (acc, _), _ = jax.lax.scan(stage, (zero, zero), (jnp.array(_RK4_A), jnp.array(_RK4_B)))
    return x + h * acc


def rk4_integrate(field_fn: Callable[[Array], Array], x0, t_span: tuple[float, float], h: float,
                  names: Sequence[str] = ()) -> Trajectory:
    """Classical fixed-step RK4 for an autonomous field.

    The last step is shortened so the final sample sits exactly at ``t_end``.
    A non-finite state aborts with :class:`NumericError` carrying the last
    finite state and its time.
    """
    t0, t1 = map(float, t_span)
    if not h > 0:
        raise ValueError("step must be positive")
    if not t1 > t0:
        raise ValueError("empty time span")
    x0 = jnp.asarray(x0, dtype=jnp.float64)
    n_full = int(np.floor((t1 - t0) / h + 1e-9))
    rest = (t1 - t0) - n_full * h
    if rest <= 1e-12 * max(1.0, abs(t1)):
        rest = 0.0
    xs = np.asarray(_rk4_scan(field_fn, x0, float(h), n_full, rest))
    times = t0 + h * np.arange(n_full + 1)
    if rest:
        times = np.append(times, t1)
    bad = ~np.all(np.isfinite(xs), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        if i == 0:
            raise NumericError("non-finite initial state", point=xs[0], time=times[0])
        raise NumericError(f"non-finite state at t={times[i]:.6g}; last good t={times[i-1]:.6g}",
                           point=xs[i - 1], time=times[i - 1])
    return Trajectory(times, xs, tuple(names))


def _rk4_scan(f, x0, h, n_full, rest):
    return _rk4_runner(f, h, n_full, rest)(x0)


@functools.lru_cache(maxsize=64)
def _rk4_runner(f, h, n_full, rest):
    @jax.jit
    def run(x0):
        def body(x, _):
            xn = _rk4_step(f, x, h)
            return xn, xn

        xl, xs = jax.lax.scan(body, x0, None, length=n_full)
        out = jnp.concatenate([x0[None], xs], axis=0)
        if rest:
            out = jnp.concatenate([out, _rk4_step(f, xl, rest)[None]], axis=0)
        return out

    return run


# -- sampled exterior calculus ------------------------------------------------------


@dataclass(frozen=True)
class SampledForm:
    """A 1- or 2-form given by its coefficient map in chart coordinates.

    Degree 1: ``components(x)`` is a covector. Degree 2: an antisymmetric
    matrix ``M`` with ``form(u, w) = u @ M @ w``.
    """

    degree: int
    components: Callable[[Array], Array]

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("only degrees 1 and 2 are supported")

    def __call__(self, x, *vectors):
        c = self.components(jnp.asarray(x, dtype=jnp.float64))
        if self.degree == 1:
            return c @ vectors[0]
        M = 0.5 * (c - c.T)
        return vectors[0] @ M @ vectors[1]


def _directional(fn, x, u):
    return jax.jvp(fn, (x,), (u,))[1]


def exterior_derivative(form: SampledForm, point, *vectors) -> Array:
    """``dα(u, v)`` or ``dβ(u, v, w)`` for constant coordinate vectors."""
    x = jnp.asarray(point, dtype=jnp.float64)
    vs = [jnp.asarray(v, dtype=jnp.float64) for v in vectors]
    if form.degree == 1:
        u, v = vs
        return (_directional(lambda y: form(y, v), x, u)
                - _directional(lambda y: form(y, u), x, v))
    u, v, w = vs
    return (_directional(lambda y: form(y, v, w), x, u)
            - _directional(lambda y: form(y, u, w), x, v)
            + _directional(lambda y: form(y, u, v), x, w))


def d_one_form_matrix(beta: Callable[[Array], Array], x) -> Array:
    """Coefficient matrix of ``dβ`` for a covector field β."""
    Jm = jax.jacfwd(beta)(x)
    return Jm.T - Jm


def closedness_residual(form2: Callable[[Array], Array], x) -> Array:
    """Max |dβ(e_i, e_j, e_k)| over coordinate triples, via one Jacobian."""
    D = jax.jacfwd(form2)(x)  # D[i, j, k] = ∂_k M_ij
    cyc = D + jnp.transpose(D, (1, 2, 0)) + jnp.transpose(D, (2, 0, 1))
    return jnp.max(jnp.abs(cyc), initial=0.0)
