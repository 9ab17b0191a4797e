import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from routhkit.errors import ConsistencyError, StructureError
from routhkit.lie import (SE2, Circle, GroupAction, Heisenberg, Product, RealN, isotropy_algebra, pair,
                          sigma_cocycle, sigma_matrix, vector_field_bracket)

GROUPS = [RealN(2), Circle(), SE2(), Heisenberg(), Product((SE2(), Circle()))]
coord = st.floats(-2.0, 2.0, allow_nan=False)


def vec(n):
    return st.lists(coord, min_size=n, max_size=n).map(lambda v: jnp.asarray(v, float))


def close(a, b, tol=1e-10):
    return float(jnp.max(jnp.abs(jnp.asarray(a) - jnp.asarray(b)), initial=0.0)) <= tol


# -- composition laws ---------------------------------------------------------


def test_se2_compose_examples():
    G = SE2()
    assert close(G.compose(jnp.array([1.0, 0, 0]), jnp.array([0.0, 1, 0])), [1, 1, 0])
    assert close(G.compose(jnp.array([0.0, 0, np.pi / 2]), jnp.array([1.0, 0, 0])), [0, 1, np.pi / 2])


def test_heisenberg_compose_example():
    H = Heisenberg()
    assert close(H.compose(jnp.array([1.0, 0, 0]), jnp.array([0.0, 1, 0])), [1, 1, 0.5])


def test_malformed_element_raises():
    with pytest.raises(StructureError):
        SE2().compose(jnp.zeros(2), jnp.zeros(3))


@pytest.mark.parametrize("G", GROUPS, ids=lambda G: G.name)
def test_group_axioms(G):
    rng = np.random.default_rng(0)
    for _ in range(30):
        g, h, k = (G.random(rng) for _ in range(3))
        assert close(G.compose(g, G.identity()), g)
        assert close(G.compose(G.identity(), g), g)
        assert float(G.distance(G.compose(g, G.inverse(g)), G.identity())) < 1e-10
        assert float(G.distance(G.compose(G.compose(g, h), k), G.compose(g, G.compose(h, k)))) < 1e-10


# -- brackets ---------------------------------------------------------------------------


def test_se2_bracket_is_matrix_commutator():
    G = SE2()
    e1, e2, e3 = jnp.eye(3)
    # algebra bracket of the matrix Lie algebra
    assert close(G.bracket(e1, e3), -e2)
    assert close(G.bracket(e2, e3), e1)


def test_se2_fundamental_fields_bracket():
    """The left-action fundamental fields satisfy [ẽ₁, ẽ₃] = ẽ₂ (anti-homomorphism)."""
    G = SE2()
    act = GroupAction(G, G.compose, "left")
    e = jnp.eye(3)
    X = lambda i: (lambda m: act.fundamental(m, e[i]))
    for m in (jnp.array([0.3, -0.7, 1.1]), jnp.array([-1.0, 0.5, -2.0])):
        assert close(vector_field_bracket(X(0), X(2), m), X(1)(m), 1e-12)
        for a in range(3):
            for b in range(3):
                lhs = vector_field_bracket(X(a), X(b), m)
                rhs = -act.fundamental(m, G.bracket(e[a], e[b]))
                assert close(lhs, rhs, 1e-12)


def test_heisenberg_bracket_example():
    assert close(Heisenberg().bracket(jnp.array([1.0, 0, 0]), jnp.array([0.0, 1, 0])), [0, 0, 1])


@pytest.mark.parametrize("G", GROUPS, ids=lambda G: G.name)
@given(data=st.data())
def test_bracket_antisymmetric_and_jacobi(G, data):
    a, b, c = (data.draw(vec(G.dim)) for _ in range(3))
    br = G.bracket
    assert close(br(a, a), jnp.zeros(G.dim), 1e-12)
    assert close(br(a, b), -br(b, a), 1e-12)
    jac = br(a, br(b, c)) + br(b, br(c, a)) + br(c, br(a, b))
    assert close(jac, jnp.zeros(G.dim), 1e-10)


# -- adjoint and coadjoint ---------------------------------------------------------------


@pytest.mark.parametrize("G", GROUPS, ids=lambda G: G.name)
def test_Ad_homomorphism_and_pairing(G):
    rng = np.random.default_rng(1)
    for _ in range(100):
        g, h = G.random(rng), G.random(rng)
        mu, xi = jnp.asarray(rng.normal(size=G.dim)), jnp.asarray(rng.normal(size=G.dim))
        assert close(G.Ad(G.compose(g, h)), G.Ad(g) @ G.Ad(h), 1e-10)
        assert abs(float(pair(G.coadjoint(g, mu), xi) - pair(mu, G.Ad(g) @ xi))) < 1e-10


@pytest.mark.parametrize("G", [SE2(), Heisenberg()], ids=lambda G: G.name)
def test_Ad_of_exp_derivative_is_ad(G):
    import jax

    rng = np.random.default_rng(2)
    xi, eta = jnp.asarray(rng.normal(size=3)), jnp.asarray(rng.normal(size=3))
    d = jax.jvp(lambda t: G.Ad(G.exp(t * xi)) @ eta, (0.0,), (1.0,))[1]
    assert close(d, G.bracket(xi, eta), 1e-12)


def test_abelian_coadjoint_is_identity():
    G = RealN(3)
    mu = jnp.array([0.3, -1.0, 2.0])
    assert close(G.coadjoint(jnp.array([1.0, 2.0, 3.0]), mu), mu, 0)


def test_heisenberg_coad_inf_matches_bracket_pairing():
    """Brute-force oracle ⟨ad*_ξ μ, η⟩ = ⟨μ, [ξ, η]⟩."""
    H = Heisenberg()
    rng = np.random.default_rng(3)
    for _ in range(20):
        xi, mu = jnp.asarray(rng.normal(size=3)), jnp.asarray(rng.normal(size=3))
        brute = jnp.array([pair(mu, H.bracket(xi, e)) for e in jnp.eye(3)])
        assert close(H.coad_inf(xi, mu), brute, 1e-12)
        vx, vy, p = float(xi[0]), float(xi[1]), float(mu[2])
        assert close(H.coad_inf(xi, mu), [-p * vy, p * vx, 0.0], 1e-12)


# -- actions ------------------------------------------------------------------------------


def beanie_action():
    G = SE2()
    return GroupAction(G, lambda g, q: jnp.concatenate([G.compose(g, q[:3]), q[3:]]), "left")


def test_fundamental_field_e3_on_beanie_configuration():
    act = beanie_action()
    q = jnp.array([0.4, -1.2, 0.9, 0.3])
    assert close(act.fundamental(q, jnp.array([0.0, 0, 1])), [1.2, 0.4, 1.0, 0.0], 1e-12)
    assert close(act.fundamental(q, jnp.zeros(3)), jnp.zeros(4), 0)


def test_translation_generator():
    K = RealN(2)
    act = GroupAction(K, lambda k, q: q + jnp.concatenate([k, jnp.zeros(2)]), "left")
    assert close(act.fundamental(jnp.array([0.1, 0.2, 0.3, 0.4]), jnp.array([1.0, 0])), [1, 0, 0, 0], 0)


def test_action_law():
    act = beanie_action()
    rng = np.random.default_rng(4)
    for _ in range(20):
        g, h = act.group.random(rng), act.group.random(rng)
        assert float(act.law_residual(g, h, jnp.asarray(rng.normal(size=4)))) < 1e-12


# -- cocycles ------------------------------------------------------------------------------


def heis_plane_action():
    return GroupAction(RealN(2), lambda g, q: q + g, "left")


def test_heisenberg_second_stage_sigma():
    Gamma = 1.7
    delta = lambda y: Gamma * jnp.array([-y[1], y[0]])
    S = sigma_matrix(heis_plane_action(), delta, jnp.array([0.3, -0.4]))
    assert close(S, [[0.0, -Gamma], [Gamma, 0.0]], 1e-12)


def test_constant_delta_on_abelian_group_has_zero_cocycle():
    c = jnp.array([0.7, -0.2])
    s = sigma_cocycle(heis_plane_action(), lambda y: c, jnp.array([1.0, 2.0]), jnp.zeros(2))
    assert close(s, jnp.zeros(2), 0)


def test_constant_delta_cocycle_se2():
    G = SE2()
    act = GroupAction(G, G.compose, "left")
    c = jnp.array([0.5, -1.0, 0.25])
    g = jnp.array([0.3, 0.8, 1.1])
    s = sigma_cocycle(act, lambda y: c, g, jnp.zeros(3))
    assert close(s, c - G.coadjoint(G.inverse(g), c), 1e-12)


def _nontrivial_fixtures():
    Gamma = 0.8
    plane = (heis_plane_action(), lambda y: Gamma * jnp.array([-y[1], y[0]]), 2)
    G = SE2()
    # δ(g) = c − Ad*_{g⁻¹} c on SE(2): a coboundary with a non-trivial cocycle
    c = jnp.array([0.4, -0.3, 0.9])
    se2 = (GroupAction(G, G.compose, "left"), lambda g: c - G.coadjoint(G.inverse(g), c), 3)
    return [plane, se2]


@pytest.mark.parametrize("fixture", _nontrivial_fixtures(), ids=["plane", "se2"])
def test_cocycle_identity(fixture):
    act, delta, d = fixture
    G = act.group
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        g, h = G.random(rng), G.random(rng)
        m = jnp.asarray(rng.normal(size=d))
        lhs = sigma_cocycle(act, delta, G.compose(g, h), m)
        rhs = sigma_cocycle(act, delta, g, m) + G.coadjoint(G.inverse(g), sigma_cocycle(act, delta, h, m))
        worst = max(worst, float(jnp.max(jnp.abs(lhs - rhs))))
    assert worst <= 1e-9


@pytest.mark.parametrize("fixture", _nontrivial_fixtures(), ids=["plane", "se2"])
def test_sigma_matrix_is_derivative_of_group_cocycle(fixture):
    import jax

    act, delta, d = fixture
    G = act.group
    m = jnp.asarray(np.random.default_rng(6).normal(size=d))
    S = sigma_matrix(act, delta, m)
    for a, xi in enumerate(jnp.eye(G.dim)):
        ds = jax.jvp(lambda t: sigma_cocycle(act, delta, G.exp(t * xi), m), (0.0,), (1.0,))[1]
        assert close(S[a], -ds, 1e-10)
    assert close(S, -S.T, 1e-10)


def test_sigma_base_point_dependence_is_detected():
    delta = lambda y: jnp.array([y[0] ** 2, 0.0])
    with pytest.raises(ConsistencyError):
        sigma_cocycle(heis_plane_action(), delta, jnp.array([1.0, 0.0]), jnp.zeros(2),
                      points=[jnp.array([0.5, 0.5])])


def test_se2_isotropy():
    basis = isotropy_algebra(SE2(), jnp.array([1.0, 0.3, 0.7]))
    assert basis.shape == (3, 1)
    v = basis[:, 0] / basis[0, 0]
    assert close(v, [1.0, 0.3, 0.0], 1e-12)


def test_heisenberg_isotropy_is_center_for_nonzero_p():
    basis = isotropy_algebra(Heisenberg(), jnp.array([0.3, -0.2, 1.0]))
    assert basis.shape == (3, 1) and close(np.abs(basis[:, 0]), [0, 0, 1], 1e-12)
