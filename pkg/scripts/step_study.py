"""Step-size study: reduced-vs-full correspondence error and energy drift against h.

    python3 scripts/step_study.py --scenario elroy_beanie --t-end 5
"""

import argparse
import csv
import dataclasses
import sys
from dataclasses import dataclass, field

from routhkit import pipelines as pl
from routhkit.scenarios import ScenarioConfig, build_scenario


@dataclass
class StudyConfig:
    scenario: str = "spring_pendulum"
    t_end: float = 5.0
    steps: tuple[float, ...] = field(default=(0.1, 0.05, 0.025, 0.0125))
    out: str = "-"


def main(cfg: StudyConfig) -> None:
    sc = build_scenario(ScenarioConfig(scenario=cfg.scenario, t_end=cfg.t_end))
    pkg = sc.staged[0] if sc.plan is not None and sc.charts is None else sc.direct
    # kick the first velocity off any relative equilibrium, then return to the level set
    ic = sc.initial_state.copy()
    ic[sc.system.n] += 0.3
    x0 = pl.full_initial_state(dataclasses.replace(sc, initial_state=ic), pkg.setup, pkg.mu)
    rows = []
    for h in cfg.steps:
        res = pl.correspondence(sc, pkg, x0, h, cfg.t_end)
        rows.append({"h": h, **res})
    fh = sys.stdout if cfg.out == "-" else open(cfg.out, "w", newline="")
    w = csv.DictWriter(fh, fieldnames=list(rows[0]))
    w.writeheader()
    for r in rows:
        w.writerow({k: "%.6g" % v for k, v in r.items()})


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--scenario", default=StudyConfig.scenario)
    p.add_argument("--t-end", type=float, default=StudyConfig.t_end)
    p.add_argument("--steps", type=float, nargs="+", default=list(StudyConfig().steps))
    p.add_argument("--out", default="-")
    a = p.parse_args()
    main(StudyConfig(a.scenario, a.t_end, tuple(a.steps), a.out))
