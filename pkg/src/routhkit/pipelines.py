"""End-to-end checks shared by the CLI, the scripts and the acceptance tests."""

from __future__ import annotations

import io

import jax
import jax.numpy as jnp
import numpy as np

from .lie import isotropy_algebra
from .magnetic import State, integrate
from .reduction import CoadjointFlow, ReducedSystemPackage, invariance_check, momentum_shift_solve
from .scenarios import Scenario
from .stages import StagesReport, stages_equivalence_check, subgroup_setup

TRAJ_TOL = 1e-6


def full_initial_state(sc: Scenario, setup=None, mu=None) -> np.ndarray:
    """Configured initial state shifted onto the momentum level set."""
    setup = setup or sc.setup
    mu = sc.mu if mu is None else mu
    sys = setup.system
    s = State.from_flat(sc.initial_state, sys.n, sys.k)
    xi = momentum_shift_solve(setup, s, mu)
    v = s.v + np.asarray(setup.generators_Q(jnp.asarray(s.q))) @ xi
    return np.concatenate([s.q, v, s.p])


def full_trajectory(sc: Scenario, x0=None, h=None, t_end=None):
    cfg = sc.config
    x0 = full_initial_state(sc) if x0 is None else x0
    return integrate(sc.system, x0, (0.0, t_end or cfg.t_end), h or cfg.h,
                     audits={sc.momentum_name: sc.momentum})


def correspondence(sc: Scenario, pkg: ReducedSystemPackage, x0, h, t_end) -> dict[str, float]:
    """Project a full trajectory and compare with the reduced one."""
    tf = integrate(sc.system, x0, (0.0, t_end), h, audits={"J": lambda x: _mom(pkg, x)})
    P = pkg.project_batch(tf.states)
    tr = integrate(pkg.reduced, P[0], (0.0, t_end), h)
    J = np.atleast_2d(np.column_stack([tf.audits[k] for k in tf.audits if k.startswith("J")]))
    return {
        "projected full vs reduced (sup)": float(np.max(np.abs(P - tr.states))),
        "momentum conservation": float(np.max(np.abs(J - np.asarray(pkg.mu)))),
        "full energy drift": tf.drift("energy"),
        "reduced energy drift": tr.drift("energy"),
    }


def _mom(pkg, x):
    from .reduction import _momentum_flat

    return _momentum_flat(pkg.setup, x)


def verify_scenario(sc: Scenario) -> StagesReport:
    """Invariance, correspondence and conservation checks for one scenario."""
    cfg = sc.config
    rep = StagesReport()
    inv = invariance_check(sc.setup, cfg.samples, cfg.seed)
    for k, v in inv.residuals.items():
        rep.add(f"invariance: {k}", v, inv.tol)
    if sc.name == "heisenberg_body":
        pkg1 = sc.staged[0]
        x0 = full_initial_state(sc, pkg1.setup, pkg1.mu)
    else:
        pkg1 = sc.direct
        x0 = full_initial_state(sc)
    res = correspondence(sc, pkg1, x0, cfg.h, cfg.t_end)
    tols = {"momentum conservation": 1e-8}
    for k, v in res.items():
        rep.add(k, v, tols.get(k, TRAJ_TOL))
    rep.notes.append(f"seed {cfg.seed}, h {cfg.h:g}, t_end {cfg.t_end:g}")
    return rep


def stages_report(sc: Scenario, ics=None) -> StagesReport:
    cfg = sc.config
    pkg1, induced, rho, staged = sc.staged
    direct = sc.direct
    if ics is None:
        ics = default_reduced_ics(sc)
    rep = stages_equivalence_check(sc.plan, direct, staged, sc.F_map, ics, (0.0, cfg.t_end), cfg.h,
                                   tau=sc.tau, direct_point=sc.direct_point,
                                   staged_point=sc.staged_point, pkg1=pkg1, induced=induced)
    rep.notes.append(f"mu = {np.array2string(np.asarray(sc.mu))}, nu = {np.array2string(sc.plan.nu)}, "
                     f"nu_bar = {np.array2string(sc.plan.nu_bar)}, rho = {np.array2string(rho)}")
    return rep


def default_reduced_ics(sc: Scenario) -> list[np.ndarray]:
    """Reduced initial states: projection of the full initial state."""
    direct = sc.direct
    if isinstance(direct, CoadjointFlow):
        # Q = G: the reduced state is 𝔽ℓ of the body velocity g⁻¹ġ
        x0 = full_initial_state(sc, subgroup_setup(sc.plan), sc.plan.nu)
        G, n = sc.setup.group, sc.system.n
        g, gdot = jnp.asarray(x0[:n]), jnp.asarray(x0[n:2 * n])
        xi = jax.jvp(lambda h: G.compose(G.inverse(g), h), (g,), (gdot,))[1]
        return [np.asarray(jax.jacfwd(direct.ell)(xi))]
    return [direct.project_batch(full_initial_state(sc))[0]]


def _fmt(a) -> str:
    return np.array2string(np.asarray(a, float), precision=12, separator=", ",
                           max_line_width=200, floatmode="maxprec")


def reduce_report(sc: Scenario, group: str = "full") -> str:
    """Structured text describing a reduction: μ, isotropy, residuals, samples."""
    cfg = sc.config
    out = io.StringIO()
    w = lambda line="": out.write(line + "\n")
    if group == "full":
        setup, mu, obj = sc.setup, sc.mu, sc.direct
    elif group in ("subgroup", "translations", "center"):
        if sc.plan is None:
            raise ValueError(f"scenario {sc.name} has no subgroup reduction")
        obj = sc.staged[0]
        setup, mu = obj.setup, obj.mu
    else:
        raise ValueError(f"unknown group selection {group!r}")
    w(f"scenario: {sc.name}")
    w(f"group: {setup.group.name} ({group}), action side {setup.side}")
    w(f"mu: {_fmt(mu)}")
    w(f"isotropy algebra basis (columns): {_fmt(isotropy_algebra(setup.group, mu))}")
    w(f"seed: {cfg.seed}")
    w(invariance_check(setup, cfg.samples, cfg.seed).text())
    rng = np.random.default_rng(cfg.seed)
    if isinstance(obj, CoadjointFlow):
        w("reduced system: flow on the dual algebra")
        w(f"Sigma: {_fmt(obj.Sigma)}")
        for _ in range(3):
            nu = rng.uniform(-1, 1, setup.group.dim)
            w(f"  nu = {_fmt(nu)}: Routhian = {float(obj.routhian(jnp.asarray(nu))):.17g}")
        return out.getvalue()
    red = obj.reduced
    w(f"reduced chart: q = ({', '.join(red.chart.q_names)}), p = ({', '.join(red.chart.p_names)})")
    y = red.chart.sample_point(rng)
    w(f"reduced magnetic form at (q, p) = {_fmt(y)}:")
    for row in np.asarray(red.B_point(jnp.asarray(y))):
        w("  " + _fmt(row))
    w("reference-state Routhian values (q, v, p):")
    for _ in range(3):
        s = red.sample_state(rng)
        w(f"  {_fmt(s.flat())}: {float(red.L(s.q, s.v, s.p)):.17g}")
    return out.getvalue()
