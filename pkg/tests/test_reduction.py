import dataclasses

import jax.numpy as jnp
import numpy as np
import pytest

from routhkit.errors import ConfigurationError, ConsistencyError
from routhkit.lie import Heisenberg, RealN
from routhkit.magnetic import MagneticLagrangianSystem, State, el_dynamics
from routhkit.reduction import (CoadjointFlow, equivariance_residual,
                                group_config_reduce, inertia_tensor, integrate_flow, invariance_check,
                                momentum_map, momentum_shift_solve, routh_reduce)
from routhkit.stages import subgroup_setup

from conftest import scenario


# -- momentum map and inertia -------------------------------------------------------------


def test_spring_momentum():
    sc = scenario("spring_pendulum")
    assert abs(momentum_map(sc.setup, State([2.0, 0.0], [0.0, 0.25]))[0] - 1.0) < 1e-15


def test_beanie_momentum_matches_closed_form():
    sc = scenario("elroy_beanie")
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = sc.system.sample_state(rng)
        assert np.allclose(momentum_map(sc.setup, s), sc.oracles["momentum"](s.q, s.v), atol=1e-13)


def test_heisenberg_center_momentum():
    sc = scenario("heisenberg_body")
    setup_K = subgroup_setup(sc.plan)
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = sc.system.sample_state(rng)
        assert abs(momentum_map(setup_K, s)[0] - sc.oracles["momentum_center"](s.q, s.v)) < 1e-13


def test_inertia_tensors():
    sp = scenario("spring_pendulum")
    assert np.allclose(inertia_tensor(sp.setup, [1.7, 0.3]), [[1.7 ** 2]], atol=1e-14)
    be = scenario("elroy_beanie")
    q = np.array([0.4, -0.9, 0.2, 1.0])
    I = inertia_tensor(be.setup, q)
    assert abs(I[2, 2] - (q[0] ** 2 + q[1] ** 2 + 1.0 + 0.5)) < 1e-13
    setup_K = subgroup_setup(be.plan)
    assert np.allclose(inertia_tensor(setup_K, q), np.eye(2), atol=0)
    assert np.allclose(inertia_tensor(setup_K, -q), np.eye(2), atol=0)


def test_momentum_shift():
    sp = scenario("spring_pendulum")
    assert abs(momentum_shift_solve(sp.setup, State([1.0, 0.0], [0.0, 0.0]), [1.0])[0] - 1.0) < 1e-14
    assert abs(momentum_shift_solve(sp.setup, State([1.0, 0.0], [0.0, 1.0]), [1.0])[0]) < 1e-14
    be = scenario("elroy_beanie")
    rng = np.random.default_rng(2)
    for _ in range(10):
        s = be.system.sample_state(rng)
        xi = momentum_shift_solve(be.setup, s, be.mu)
        v = s.v + np.asarray(be.setup.generators_Q(jnp.asarray(s.q))) @ xi
        assert np.max(np.abs(momentum_map(be.setup, State(s.q, v)) - be.mu)) <= 1e-10


# -- Routhians ----------------------------------------------------------------------------


def _mod_const(values, oracle):
    d = np.asarray(values) - np.asarray(oracle)
    return np.max(np.abs(d - d[0]))


def test_spring_routhian_and_dynamics():
    sc = scenario("spring_pendulum")
    red = sc.direct.reduced
    rng = np.random.default_rng(3)
    S = [red.sample_state(rng) for _ in range(50)]
    got = [float(red.L(s.q, s.v)) for s in S]
    want = [sc.oracles["routhian"](s.q[0], s.v[0]) for s in S]
    assert _mod_const(got, want) <= 1e-9
    for s in S[:10]:
        assert abs(el_dynamics(red, s)[0][0] - sc.oracles["reduced_accel"](s.q[0])) <= 1e-10
        assert np.all(np.asarray(red.B(s.q)) == 0)


def test_beanie_routhian_and_form():
    sc = scenario("elroy_beanie")
    red = sc.direct.reduced
    rng = np.random.default_rng(4)
    S = [red.sample_state(rng) for _ in range(50)]
    got = [float(red.L(s.q, s.v, s.p)) for s in S]
    want = [sc.oracles["L0"](s.q[0], s.v[0], s.p[0], s.p[1]) for s in S]
    assert _mod_const(got, want) <= 1e-9
    for s in S[:10]:
        assert np.max(np.abs(np.asarray(red.B(s.q, s.p)) - sc.oracles["B0"]())) <= 1e-10


def test_heisenberg_first_stage():
    sc = scenario("heisenberg_body")
    pkg1, induced, rho, _ = sc.staged
    red = pkg1.reduced
    rng = np.random.default_rng(5)
    S = [red.sample_state(rng) for _ in range(50)]
    got = [float(red.L(s.q, s.v)) for s in S]
    want = [sc.oracles["L1"](*s.q, *s.v) for s in S]
    assert _mod_const(got, want) <= 1e-9
    for s in S[:10]:
        assert np.max(np.abs(np.asarray(red.B(s.q)) - sc.oracles["B1"]())) <= 1e-10
        assert np.allclose(induced.delta_at(jnp.asarray(s.q)), sc.oracles["delta1"](*s.q), atol=1e-12)


def test_routh_reduce_rejects_bad_input():
    sc = scenario("spring_pendulum")
    with pytest.raises(ConfigurationError):
        routh_reduce(sc.setup, [1.0, 2.0], sc.charts)
    broken = dataclasses.replace(sc.charts, section_Q=lambda qb: jnp.array([2 * qb[0], 0.0]))
    with pytest.raises(ConfigurationError):
        routh_reduce(sc.setup, [1.0], broken)


# -- invariance ----------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["spring_pendulum", "elroy_beanie", "heisenberg_body"])
def test_builtin_setups_invariant(name):
    rep = invariance_check(scenario(name).setup, 100, seed=0)
    assert rep.passed, rep.text()


def test_symmetry_breaking_detected():
    sc = scenario("elroy_beanie")
    L = sc.system.lagrangian
    broken = MagneticLagrangianSystem(sc.system.chart, lambda q, v, p: L(q, v, p) + 0.1 * q[0])
    rep = invariance_check(dataclasses.replace(sc.setup, system=broken), 50, seed=0)
    assert rep.failures == ["L invariance"]


# -- equivariance with a non-trivial cocycle ------------------------------------------------


def test_induced_momentum_equivariance():
    sc = scenario("heisenberg_body")
    pkg1, induced, _, _ = sc.staged
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        s = induced.system.sample_state(rng)
        g = induced.group.random(rng)
        worst = max(worst, equivariance_residual(induced, s, g))
        Mv = sc.config.mass_matrix @ s.v
        assert np.allclose(momentum_map(induced, s), Mv - sc.oracles["delta1"](*s.q), atol=1e-12)
    assert worst <= 1e-8


@pytest.mark.parametrize("name", ["spring_pendulum", "elroy_beanie", "heisenberg_body"])
def test_equivariance_zero_potential(name):
    sc = scenario(name)
    rng = np.random.default_rng(7)
    for _ in range(20):
        assert equivariance_residual(sc.setup, sc.system.sample_state(rng), sc.setup.group.random(rng)) <= 1e-8


# -- coadjoint flows ----------------------------------------------------------------------


def test_abelian_flow_is_stationary():
    flow = CoadjointFlow(RealN(2), lambda xi: 0.5 * xi @ xi, jnp.zeros(2), "left")
    assert np.all(np.asarray(flow.vector_field(jnp.array([0.3, -0.5]))) == 0)


def _circulation_flow(Gamma=1.0):
    Mm = jnp.array([[2.0, 0.5], [0.5, 1.0]])
    delta = lambda y: Gamma * jnp.array([-y[1], y[0]])
    return group_config_reduce(RealN(2), lambda xi: 0.5 * xi @ Mm @ xi, jnp.zeros(2), "left",
                               delta=delta), Mm


def test_circulation_equations():
    flow, Mm = _circulation_flow(1.0)
    assert np.allclose(flow.Sigma, [[0.0, -1.0], [1.0, 0.0]], atol=1e-14)
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = jnp.asarray(rng.normal(size=2))
        v = np.linalg.solve(Mm, p)
        assert np.max(np.abs(np.asarray(flow.vector_field(p)) - np.array([-v[1], v[0]]))) <= 1e-12


def test_chain_rule_and_form_residual():
    flow, _ = _circulation_flow(0.7)
    H = group_config_reduce(Heisenberg(), lambda xi: 0.5 * xi @ xi + 0.1 * xi[0] * xi[2], jnp.zeros(3))
    rng = np.random.default_rng(9)
    for f in (flow, H):
        for _ in range(10):
            nu = jnp.asarray(rng.normal(size=f.dim))
            assert abs(float(f.chain_rule_residual(nu, jnp.asarray(rng.normal(size=f.dim))))) <= 1e-10
            assert float(f.form_residual(nu)) <= 1e-8


def test_flow_conserves_energy():
    flow, _ = _circulation_flow(1.0)
    tr = integrate_flow(flow, jnp.array([0.4, -0.2]), (0.0, 10.0), 1e-3)
    assert tr.drift("energy") <= 1e-6


def test_invalid_potential_rejected():
    with pytest.raises(ConsistencyError):
        group_config_reduce(RealN(2), lambda xi: 0.5 * xi @ xi, jnp.zeros(2),
                            delta=lambda y: jnp.array([y[0] ** 2, y[1] ** 3]))
