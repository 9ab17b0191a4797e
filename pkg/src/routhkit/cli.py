"""Command-line entry point: ``routhkit <subcommand> [flags]``.

Exit codes: 0 pass, 1 verification failure, 2 configuration error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import ConfigurationError, ConsistencyError, DomainError, NumericError, StructureError
from .scenarios import SCENARIOS, ScenarioConfig, build_scenario, load_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_DESCRIPTIONS = {
    "spring_pendulum": "planar spring pendulum, S¹ rotation symmetry, μ = m r² θ̇",
    "elroy_beanie": "SE(2) body with rotor; staged via the ℝ² translations",
    "heisenberg_body": "left-invariant Lagrangian on the Heisenberg group; staged via the center",
    "custom": "user factory given as custom_factory = 'module:function'",
}


def _config(args) -> ScenarioConfig:
    cfg = ScenarioConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    updates = {}
    if args.scenario:
        updates["scenario"] = args.scenario
    for flag, name in (("h", "h"), ("tmax", "t_end"), ("seed", "seed"), ("out", "out")):
        val = getattr(args, flag)
        if val is not None:
            updates[name] = val
    return dataclasses.replace(cfg, **updates).validate()


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    from . import pipelines as pl
    from .reduction import CoadjointFlow, integrate_flow

    sc = build_scenario(_config(args))
    cfg = sc.config
    if args.system == "full":
        traj = pl.full_trajectory(sc)
    elif args.group == "full":
        obj = sc.direct
        target = obj if isinstance(obj, CoadjointFlow) else obj.reduced
        traj = integrate_flow(target, pl.default_reduced_ics(sc)[0], (0.0, cfg.t_end), cfg.h)
    else:
        if sc.plan is None:
            raise ConfigurationError(f"scenario {sc.name} has no subgroup reduction")
        pkg = sc.staged[0]
        x0 = pkg.project_batch(pl.full_initial_state(sc, pkg.setup, pkg.mu))[0]
        traj = integrate_flow(pkg.reduced, x0, (0.0, cfg.t_end), cfg.h)
    traj.to_csv(cfg.out or sys.stdout)
    return EXIT_OK


def cmd_reduce(args) -> int:
    from . import pipelines as pl

    sc = build_scenario(_config(args))
    _emit(pl.reduce_report(sc, args.group), sc.config.out)
    return EXIT_OK


def cmd_stages(args) -> int:
    from . import pipelines as pl

    sc = build_scenario(_config(args))
    if sc.plan is None:
        raise ConfigurationError(f"scenario {sc.name} has no stages plan")
    rep = pl.stages_report(sc)
    _emit(rep.text() + "\n", sc.config.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    from . import pipelines as pl

    sc = build_scenario(_config(args))
    rep = pl.verify_scenario(sc)
    text = rep.text() + "\n"
    ok = rep.passed
    if args.stages:
        if sc.plan is None:
            raise ConfigurationError(f"scenario {sc.name} has no stages plan")
        srep = pl.stages_report(sc)
        text += srep.text() + "\n"
        ok = ok and srep.passed
    _emit(text, sc.config.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_list(args) -> int:
    for name in SCENARIOS:
        print(f"{name:16s} {_DESCRIPTIONS[name]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="routhkit", description="Routh reduction of magnetic Lagrangian systems")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", choices=SCENARIOS)
        sp.add_argument("--config", help="dotted key = value configuration file")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--h", type=float, help="RK4 step size")
        sp.add_argument("--tmax", type=float, help="integration end time")
        sp.add_argument("--seed", type=int, help="sampling seed")
        return sp

    s = common(sub.add_parser("simulate", help="integrate a scenario and write a CSV trajectory"))
    s.add_argument("--system", choices=("full", "reduced"), default="full")
    s.add_argument("--group", choices=("full", "subgroup"), default="full")
    s.set_defaults(func=cmd_simulate)
    r = common(sub.add_parser("reduce", help="write a reduction report"))
    r.add_argument("--group", choices=("full", "subgroup", "translations", "center"), default="full")
    r.set_defaults(func=cmd_reduce)
    common(sub.add_parser("stages", help="compare direct and staged reduction")).set_defaults(func=cmd_stages)
    v = common(sub.add_parser("verify", help="run invariance and correspondence checks"))
    v.add_argument("--stages", action="store_true", help="also run the stages equivalence check")
    v.set_defaults(func=cmd_verify)
    sub.add_parser("list-scenarios", help="list built-in scenarios").set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, StructureError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        for v in getattr(exc, "violations", None) or []:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConsistencyError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except BrokenPipeError:
        sys.stdout = None
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
