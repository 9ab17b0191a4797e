import io

import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from routhkit.errors import ConvergenceError, NumericError, SingularMatrixError
from routhkit.numerics import (SampledForm, Trajectory, closedness_residual, d_one_form_matrix,
                               exterior_derivative, fd_gradient, gradient, hessian, lu_solve,
                               newton_solve, rk4_integrate)


# -- derivatives -------------------------------------------------------------------


def test_quadratic_gradient_and_hessian():
    f = lambda x: 0.5 * x[0] ** 2
    assert float(gradient(f, [3.0])[0]) == 3.0
    assert float(hessian(f, [3.0])[0, 0]) == 1.0


def test_spring_pendulum_angular_momentum_derivative():
    m, k = 1.0, 1.0
    L = lambda z: 0.5 * m * (z[2] ** 2 + z[0] ** 2 * z[3] ** 2) - 0.5 * k * z[0] ** 2
    g = gradient(L, [1.0, 0.0, 0.0, 1.0])
    assert float(g[3]) == 1.0  # m r² θ̇


def test_constant_field_has_zero_gradient():
    assert np.all(np.asarray(gradient(lambda x: jnp.asarray(4.2), [1.0, -2.0, 3.0])) == 0)


def _f(x):
    return jnp.sin(x[0]) * jnp.exp(0.3 * x[1]) + x[0] ** 3 * x[1] - jnp.cos(x[0] * x[1])


@given(st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2))
def test_dual_vs_finite_difference(x):
    dual = np.asarray(gradient(_f, x))
    fd = fd_gradient(_f, x)
    assert np.linalg.norm(dual - fd) <= 1e-6 * max(1.0, np.linalg.norm(dual))


def test_hessian_symmetric():
    H = np.asarray(hessian(_f, [0.3, -0.7]))
    assert np.allclose(H, H.T, atol=0)


# -- linear algebra and Newton -------------------------------------------------------------


def test_lu_solve_and_singular():
    A = jnp.array([[2.0, 1.0], [1.0, 3.0]])
    assert np.allclose(A @ lu_solve(A, jnp.array([1.0, 2.0])), [1.0, 2.0], atol=1e-14)
    with pytest.raises(SingularMatrixError):
        lu_solve(jnp.array([[1.0, 2.0], [2.0, 4.0]]), jnp.array([1.0, 0.0]))


def test_newton_linear_one_step():
    x = newton_solve(lambda x: x - 5.0, 0.0, max_iter=1)
    assert float(x[0]) == 5.0


def test_newton_sqrt2():
    x = newton_solve(lambda x: x ** 2 - 2.0, 1.0)
    assert abs(float(x[0]) - np.sqrt(2.0)) <= 1e-10


def test_newton_affine_exact_in_one_iteration():
    A = jnp.array([[3.0, 1.0], [-1.0, 2.0]])
    b = jnp.array([0.5, -4.0])
    x = newton_solve(lambda x: A @ x - b, jnp.zeros(2), max_iter=1)
    assert np.allclose(A @ x, b, atol=1e-14)


def test_newton_failures():
    with pytest.raises(ConvergenceError):
        newton_solve(lambda x: x ** 2 - 2.0, 1.0, max_iter=1)
    with pytest.raises(SingularMatrixError):
        newton_solve(lambda x: x ** 2 + 1.0, 0.0)


# -- RK4 ---------------------------------------------------------------------------------


def test_rk4_constant():
    tr = rk4_integrate(lambda x: jnp.zeros(1), jnp.array([7.0]), (0.0, 1.0), 1e-3)
    assert np.all(tr.states == 7.0)


def test_rk4_exponential():
    tr = rk4_integrate(lambda x: x, jnp.array([1.0]), (0.0, 1.0), 1e-3)
    assert tr.times[-1] == 1.0
    assert abs(tr.states[-1, 0] - np.e) <= 1e-9


def test_rk4_final_partial_step():
    tr = rk4_integrate(lambda x: x, jnp.array([1.0]), (0.0, 1.05), 0.1)
    assert tr.times[-1] == 1.05 and np.all(np.diff(tr.times) > 0)
    assert abs(tr.states[-1, 0] - np.exp(1.05)) < 1e-5


def test_rk4_order():
    err = {h: abs(rk4_integrate(lambda x: x, jnp.array([1.0]), (0.0, 1.0), h).states[-1, 0] - np.e)
           for h in (0.1, 0.05)}
    assert err[0.1] / err[0.05] >= 12


def test_rk4_harmonic_energy():
    tr = rk4_integrate(lambda x: jnp.array([x[1], -x[0]]), jnp.array([1.0, 0.0]), (0.0, 10.0), 1e-3)
    E = 0.5 * (tr.states[:, 0] ** 2 + tr.states[:, 1] ** 2)
    assert np.max(np.abs(E - 0.5)) / 0.5 <= 1e-9
    assert np.max(np.abs(tr.states[:, 0] - np.cos(tr.times))) <= 1e-9


def test_rk4_blowup_reports_last_good_state():
    with pytest.raises(NumericError) as info:
        rk4_integrate(lambda x: x ** 2, jnp.array([1.0]), (0.0, 2.0), 1e-2)
    assert 0.9 < info.value.time < 2.0 and np.all(np.isfinite(info.value.point))


def test_trajectory_csv_format():
    tr = Trajectory(np.array([0.0, 0.1]), np.array([[1.0, 2.0], [1 / 3, 2.5]]), ("r", "rdot"),
                    {"energy": np.array([0.5, 0.25])})
    buf = io.StringIO()
    tr.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,r,rdot,energy"
    assert lines[2].split(",")[1] == "%.17g" % (1 / 3)
    assert float(lines[2].split(",")[1]) == 1 / 3


# -- exterior calculus ---------------------------------------------------------------------


def test_d_of_x_dy():
    alpha = SampledForm(1, lambda p: jnp.array([0.0, p[0]]))
    for p in ([0.0, 0.0], [1.3, -2.0]):
        assert float(exterior_derivative(alpha, p, [1.0, 0.0], [0.0, 1.0])) == 1.0


def test_heisenberg_connection_curvature():
    A = SampledForm(1, lambda q: jnp.array([0.5 * q[1], -0.5 * q[0], 1.0]))
    ex, ey = [1.0, 0, 0], [0, 1.0, 0]
    rng = np.random.default_rng(0)
    for _ in range(10):
        q = rng.normal(size=3)
        assert abs(float(exterior_derivative(A, q, ex, ey)) + 1.0) < 1e-14
        assert np.allclose(d_one_form_matrix(lambda z: A.components(z), jnp.asarray(q)),
                           [[0, -1, 0], [1, 0, 0], [0, 0, 0]], atol=1e-14)


def _alpha(x):
    return jnp.array([jnp.sin(x[1] * x[2]), x[0] ** 2 * x[2], jnp.exp(0.2 * x[0]) * x[1]])


@given(st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_dd_vanishes(x):
    beta = SampledForm(2, lambda y: d_one_form_matrix(_alpha, y))
    e = np.eye(3)
    assert abs(float(exterior_derivative(beta, x, e[0], e[1], e[2]))) <= 1e-7
    assert float(closedness_residual(beta.components, jnp.asarray(x))) <= 1e-7


def test_non_closed_form_detected():
    M = lambda y: jnp.array([[0.0, y[2], 0.0], [-y[2], 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert float(closedness_residual(M, jnp.zeros(3))) > 0.5
