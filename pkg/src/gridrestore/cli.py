"""Command-line entry point.

Subcommands: ``plan`` (solve the restoration ordering MILP), ``simulate``
(replay a plan through the per-period AC OPF), ``sweep`` (the full
two-placement, three-assumed by three-actual study) and ``report``
(summarize a sweep directory). Every flag can also be supplied through an
environment variable named ``GRIDRESTORE_<FLAG>`` (for example
``GRIDRESTORE_CASE``); explicit flags win. Outputs are deterministic:
repeated runs produce byte-identical files except for the ``meta`` block
in JSON outputs, which carries the timestamp.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import datasets
from .errors import GridRestoreError
from .metrics import energy_not_served, reconnection_times
from .model import Network, TimeGrid, apply_damage, load_case, time_grid_for
from .replay import simulate_plan
from .rop import RestorationPlan, build_rop, rop_ens_mwh, solve_rop
from .scenarios import DerMode, DerPlacement, apply_der_mode, load_scenario

ENV_PREFIX = "GRIDRESTORE_"
ALL_MODES = (DerMode.BASE, DerMode.HOME_MICROGRID, DerMode.COMMUNITY_MICROGRID)


@dataclass
class RunConfig:
    case_path: str | None = None
    scenario_paths: tuple[str, ...] = ()
    damage_path: str | None = None
    horizon: int | None = None
    out_dir: str = "out"
    gap: float = 1e-6
    tol: float = 1e-6
    jobs: int = 1
    backend: str = "auto"
    node_budget: int = 1_000_000
    penalty: float = 1.0
    seed: int = 0  # reserved; runs are deterministic

    def load_network(self) -> Network:
        net = (
            load_case(self.case_path) if self.case_path else datasets.bundled_case()
        )
        ids = (
            datasets.load_damage_file(Path(self.damage_path))
            if self.damage_path
            else datasets.bundled_damage_ids()
        )
        return apply_damage(net, ids)

    def placements(self) -> list[DerPlacement]:
        if not self.scenario_paths:
            return [
                datasets.bundled_placement("uniform"),
                datasets.bundled_placement("clustered"),
            ]
        out = []
        for p in self.scenario_paths:
            if p in ("uniform", "clustered"):  # bundled shorthand
                out.append(datasets.bundled_placement(p))
            else:
                out.append(load_scenario(p)[0])
        return out

    def time_grid(self, network: Network) -> TimeGrid:
        if self.horizon is not None:
            return TimeGrid(self.horizon)
        return time_grid_for(network)


def _env_default(name: str, fallback=None, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return fallback
    return cast(raw)


def _meta() -> dict:
    return {
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "tool": "gridrestore",
    }


def _write_json(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["meta"] = _meta()
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gridrestore",
        description="Restoration planning for radial feeders with DERs",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_multiple=False):
        sp.add_argument("--case", default=_env_default("case"), help="case JSON (default: bundled feeder)")
        if scenario_multiple:
            sp.add_argument(
                "--scenario",
                action="append",
                default=None,
                help="scenario JSON; repeat for several (default: bundled uniform + clustered)",
            )
        else:
            sp.add_argument("--scenario", default=_env_default("scenario"), help="scenario JSON (default: bundled uniform)")
        sp.add_argument("--damage", default=_env_default("damage"), help="damage JSON (default: bundled storm set)")
        sp.add_argument("--horizon", type=int, default=_env_default("horizon", cast=int), help="periods (default: 1 + damaged count)")
        sp.add_argument("--out", default=_env_default("out", "out"), help="output directory")
        sp.add_argument("--gap", type=float, default=_env_default("gap", 1e-6, float), help="MILP relative gap")
        sp.add_argument("--tol", type=float, default=_env_default("tol", 1e-6, float), help="AC residual tolerance")
        sp.add_argument("--jobs", type=int, default=_env_default("jobs", 1, int), help="parallel workers for sweep cells")
        sp.add_argument("--backend", default=_env_default("backend", "auto"), choices=["auto", "highs", "builtin"], help="MILP backend")
        sp.add_argument("--node-budget", type=int, default=_env_default("node_budget", 1_000_000, int))
        sp.add_argument("--penalty", type=float, default=_env_default("penalty", 1.0, float), help="voltage violation weight")

    sp = sub.add_parser("plan", help="solve the restoration ordering problem")
    common(sp)
    sp.add_argument("--mode", default="base", help="assumed DER mode: base|home|community")
    sp = sub.add_parser("simulate", help="replay a plan through per-period AC OPF")
    common(sp)
    sp.add_argument("--plan", required=True, help="plan.json produced by `plan`")
    sp.add_argument("--actual-mode", default="base", help="actual DER mode during implementation")
    sp = sub.add_parser("sweep", help="full two-placement, 3x3 assumed/actual study")
    common(sp, scenario_multiple=True)
    sp = sub.add_parser("report", help="print a summary of a sweep output directory")
    sp.add_argument("--out", default=_env_default("out", "out"), help="sweep output directory")
    return p


def _config_from_args(args) -> RunConfig:
    scenarios: tuple[str, ...] = ()
    if getattr(args, "scenario", None):
        raw = args.scenario
        scenarios = tuple(raw) if isinstance(raw, list) else (raw,)
    return RunConfig(
        case_path=args.case,
        scenario_paths=scenarios,
        damage_path=args.damage,
        horizon=args.horizon,
        out_dir=args.out,
        gap=args.gap,
        tol=args.tol,
        jobs=args.jobs,
        backend=args.backend,
        node_budget=args.node_budget,
        penalty=args.penalty,
    )


def cmd_plan(config: RunConfig, mode_text: str) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    network = config.load_network()
    placement = config.placements()[0]
    mode = DerMode.parse(mode_text)
    case = apply_der_mode(network, placement, mode)
    grid = config.time_grid(network)
    instance = build_rop(case, grid)
    plan = solve_rop(
        instance,
        rel_gap=config.gap,
        node_budget=config.node_budget,
        backend=config.backend,
    )
    plan.save(out / "plan.json")
    ens = rop_ens_mwh(plan, instance)
    _write_json(
        out / "rop_ens.json",
        {
            "placement": placement.name,
            "mode": mode.value,
            "objective_mwh": plan.objective_mwh,
            "ens_mwh": ens,
            "total_demand_energy_mwh": instance.total_demand_energy_mwh(),
            "optimal": plan.optimal,
            "gap": plan.gap,
        },
    )
    print(f"plan: {placement.name}/{mode.value} ENS {ens:.3f} MWh "
          f"({'optimal' if plan.optimal else f'gap {plan.gap:.2e}'})")
    return 0 if plan.optimal else 2


def cmd_simulate(config: RunConfig, plan_path: str, actual_mode_text: str) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    network = config.load_network()
    placement = config.placements()[0]
    mode = DerMode.parse(actual_mode_text)
    case = apply_der_mode(network, placement, mode)
    plan = RestorationPlan.load(plan_path)
    result = simulate_plan(
        case, plan, tol=config.tol, penalty_weight=config.penalty
    )
    result.save(out / "rip_result.json")
    result.write_served_csv(out / "served.csv")
    _write_json(
        out / "rip_summary.json",
        {
            "placement": placement.name,
            "actual_mode": mode.value,
            "served_mwh": result.served_mwh,
            "ens_mwh": result.ens_mwh,
            "converged": result.converged,
            "max_residual": max(s.max_residual for s in result.states),
            "periods_not_converged": [
                t for t, s in enumerate(result.states) if not s.converged
            ],
        },
    )
    print(f"simulate: {placement.name}/{mode.value} RIP ENS {result.ens_mwh:.3f} MWh "
          f"(converged={result.converged})")
    return 0 if result.converged else 3


def _sweep_cell(payload):
    """One replay cell; module level so worker processes can unpickle it."""
    (placement, actual_mode, plan, network, tol, penalty) = payload
    case = apply_der_mode(network, placement, actual_mode)
    result = simulate_plan(case, plan, tol=tol, penalty_weight=penalty)
    return result


def cmd_sweep(config: RunConfig) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    network = config.load_network()
    grid = config.time_grid(network)
    placements = config.placements()

    plans: dict[tuple[str, DerMode], RestorationPlan] = {}
    rop_rows = []
    failures = []
    for placement in placements:
        for mode in ALL_MODES:
            case = apply_der_mode(network, placement, mode)
            instance = build_rop(case, grid)
            plan = solve_rop(
                instance,
                rel_gap=config.gap,
                node_budget=config.node_budget,
                backend=config.backend,
            )
            plans[(placement.name, mode)] = plan
            ens = rop_ens_mwh(plan, instance)
            rop_rows.append((placement.name, mode.value, ens, plan))
            plan.save(out / f"plan_{placement.name}_{mode.value}.json")
            print(f"rop: {placement.name}/{mode.value} ENS {ens:.3f} MWh", flush=True)

    cells = [
        (placement, assumed, actual)
        for placement in placements
        for assumed in ALL_MODES
        for actual in ALL_MODES
    ]
    payloads = [
        (p, actual, plans[(p.name, assumed)], network, config.tol, config.penalty)
        for (p, assumed, actual) in cells
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_sweep_cell, payloads))
    else:
        results = [_sweep_cell(pl) for pl in payloads]

    sens_rows = []
    matched: dict[tuple[str, DerMode], float] = {}
    for (placement, assumed, actual), result in zip(cells, results):
        sens_rows.append(
            (placement.name, assumed.value, actual.value, result.ens_mwh, result.converged)
        )
        if not result.converged:
            failures.append((placement.name, assumed.value, actual.value))
        if assumed is actual:
            matched[(placement.name, actual)] = result.ens_mwh
        print(
            f"rip: {placement.name} assumed={assumed.value} actual={actual.value} "
            f"ENS {result.ens_mwh:.3f} MWh",
            flush=True,
        )

    with open(out / "ens_summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["placement", "mode", "rop_ens_mwh", "rip_ens_mwh"])
        for name, mode_value, ens, plan in rop_rows:
            w.writerow(
                [name, mode_value, f"{ens:.6f}",
                 f"{matched[(name, DerMode.parse(mode_value))]:.6f}"]
            )

    recon_rows = []
    group_rows = []
    for placement in placements:
        for mode in ALL_MODES:
            case = apply_der_mode(network, placement, mode)
            plan = plans[(placement.name, mode)]
            recon = reconnection_times(plan, case, grid.step_hours)
            for d in case.network.demands:
                recon_rows.append(
                    (placement.name, mode.value, d.id, d.bus,
                     int(d.id in case.der_demand_ids), recon.hours(d.id))
                )
            ens_rep = energy_not_served(
                plan.served_fraction, case.network.demands, grid.step_hours,
                der_demand_ids=case.der_demand_ids, base_mva=case.network.base_mva,
            )
            group_rows.append(
                (placement.name, mode.value, recon.der_avg_hours,
                 recon.non_der_avg_hours, ens_rep.der_group_mwh,
                 ens_rep.non_der_group_mwh)
            )

    with open(out / "reconnection.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["placement", "mode", "demand", "bus", "has_der", "t_d_hours"])
        for row in recon_rows:
            w.writerow([*row[:5], f"{row[5]:.3f}"])

    with open(out / "sensitivity.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["placement", "assumed", "actual", "ens_mwh", "converged"])
        for name, assumed, actual, ens, ok in sens_rows:
            w.writerow([name, assumed, actual, f"{ens:.6f}", int(ok)])

    _write_json(
        out / "fig2_ens.json",
        {
            "description": "ENS per case: schedule-stage (DC) vs replay-stage (AC)",
            "cases": [
                {
                    "placement": name,
                    "mode": mode_value,
                    "rop_ens_mwh": ens,
                    "rip_ens_mwh": matched[(name, DerMode.parse(mode_value))],
                }
                for name, mode_value, ens, _ in rop_rows
            ],
        },
    )
    _write_json(
        out / "fig4_reconnection.json",
        {
            "description": "average reconnection hours for DER / non-DER groups",
            "rows": [
                {
                    "placement": r[0],
                    "mode": r[1],
                    "der_avg_hours": r[2],
                    "non_der_avg_hours": r[3],
                }
                for r in group_rows
            ],
        },
    )
    _write_json(
        out / "fig5_group_ens.json",
        {
            "description": "ENS split by DER / non-DER customer group",
            "rows": [
                {
                    "placement": r[0],
                    "mode": r[1],
                    "der_group_mwh": r[4],
                    "non_der_group_mwh": r[5],
                }
                for r in group_rows
            ],
        },
    )
    _write_json(
        out / "fig6_sensitivity.json",
        {
            "description": "replay ENS under mismatched DER assumptions",
            "rows": [
                {
                    "placement": name,
                    "assumed": assumed,
                    "actual": actual,
                    "ens_mwh": ens,
                }
                for name, assumed, actual, ens, _ in sens_rows
            ],
        },
    )
    if failures:
        print(f"sweep finished with non-converged cells: {failures}", file=sys.stderr)
        return 1
    print(f"sweep complete: outputs in {out}")
    return 0


def cmd_report(out_dir: str) -> int:
    out = Path(out_dir)
    summary = out / "ens_summary.csv"
    if not summary.exists():
        print(f"no sweep outputs found in {out}", file=sys.stderr)
        return 1
    print(f"results in {out}:")
    with open(summary) as f:
        rows = list(csv.DictReader(f))
    print("\nENS by case (MWh):")
    print(f"  {'placement':<10} {'mode':<22} {'schedule (DC)':>13} {'replay (AC)':>12}")
    for r in rows:
        print(
            f"  {r['placement']:<10} {r['mode']:<22} "
            f"{float(r['rop_ens_mwh']):>13.3f} {float(r['rip_ens_mwh']):>12.3f}"
        )
    sens = out / "sensitivity.csv"
    if sens.exists():
        with open(sens) as f:
            srows = list(csv.DictReader(f))
        print("\nreplay ENS under mismatched assumptions (MWh):")
        print(f"  {'placement':<10} {'assumed':<22} {'actual':<22} {'ens':>8}")
        for r in srows:
            print(
                f"  {r['placement']:<10} {r['assumed']:<22} {r['actual']:<22} "
                f"{float(r['ens_mwh']):>8.3f}"
            )
    fig4 = out / "fig4_reconnection.json"
    if fig4.exists():
        rows4 = json.loads(fig4.read_text())["rows"]
        print("\naverage reconnection time (hours):")
        print(f"  {'placement':<10} {'mode':<22} {'DER group':>10} {'non-DER':>10}")
        for r in rows4:
            print(
                f"  {r['placement']:<10} {r['mode']:<22} "
                f"{r['der_avg_hours']:>10.2f} {r['non_der_avg_hours']:>10.2f}"
            )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plan":
            return cmd_plan(_config_from_args(args), args.mode)
        if args.command == "simulate":
            return cmd_simulate(_config_from_args(args), args.plan, args.actual_mode)
        if args.command == "sweep":
            return cmd_sweep(_config_from_args(args))
        if args.command == "report":
            return cmd_report(args.out)
    except GridRestoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
