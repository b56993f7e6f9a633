"""Command-line entry point.

Exit codes: 0 ok, 2 input error, 3 empty or degenerate result, 4 guard
refusal, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .attack import STRATEGIES, AttackPlan, plan_attack
from .network import EmptyNetworkError, ExtractError, RoadNetwork, build_network
from .oracle import (DisruptionInstance, GuardError, brute_force_max_disruption,
                     brute_force_min_targets, summarize)
from .report import write_report
from .rides import (CsvSchemaError, load_intensity, load_sensors, save_residuals, save_rides,
                    synthesize_rides)
from .scenario import EmptyResultError, ScenarioError, load_scenario, run_scenario, write_manifest
from .sim import TrafficLog

log = logging.getLogger("trafficattack")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_EMPTY, EXIT_GUARD = 0, 1, 2, 3, 4


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input not found: {p}")
    return p


def _load_graph(path) -> RoadNetwork:
    return RoadNetwork.load(_need(path))


def _parse_region(text):
    if text is None:
        return None
    p = Path(text)
    if p.exists():
        return json.loads(p.read_text())
    # inline "lat,lon;lat,lon;..."
    try:
        return [[float(x) for x in pt.split(",")] for pt in text.split(";") if pt.strip()]
    except ValueError as exc:
        raise ValueError(f"bad region {text!r}: expected a JSON file or 'lat,lon;lat,lon;...'") from exc


# ---------------------------------------------------------------- commands

def cmd_build_network(args) -> int:
    src = _need(args.extract)
    try:
        g, report = build_network(str(src), args.merge_radius)
    except EmptyNetworkError as exc:
        log.error("build-network/extract: %s", exc)
        return EXIT_EMPTY
    except ExtractError as exc:
        log.error("build-network/extract: %s", exc)
        return EXIT_INPUT
    out = _out_dir(args)
    g.save(out / "network.graph")
    g.save_geojson(out / "network.geojson")
    (out / "build_report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    for stage, n, m in report.stages:
        log.info("%-9s nodes %6d edges %6d", stage, n, m)
    return EXIT_OK


def cmd_gen_rides(args) -> int:
    g = _load_graph(args.network)
    data = load_sensors(_need(args.sensors))
    intensity = load_intensity(_need(args.intensity))
    res = synthesize_rides(g, data, intensity, args.seed, args.p_load, args.mu, args.sigma)
    out = _out_dir(args)
    save_rides(res.rides, out / "rides.csv")
    save_residuals(res, out / "residuals.csv")
    log.info("%d rides; pool exhausted: %s", len(res.rides), res.pool_exhausted)
    if not res.rides:
        log.error("gen-rides: no rides generated")
        return EXIT_EMPTY
    return EXIT_OK


def cmd_plan_attack(args) -> int:
    g = _load_graph(args.network)
    plan = plan_attack(g, args.strategy, args.budget, _parse_region(args.region), args.seed)
    out = _out_dir(args)
    plan.save(out / args.name)
    log.info("%d targets from %d candidates", len(plan.targets), len(plan.candidates or []))
    if args.budget > 0 and not plan.targets:
        log.error("plan-attack: no targets selected (empty candidate set?)")
        return EXIT_EMPTY
    return EXIT_OK


def cmd_run(args) -> int:
    scn = load_scenario(_need(args.scenario), seed=args.seed_given)
    manifest = run_scenario(scn, _out_dir(args), jobs=args.jobs)
    if manifest["failures"]:
        for f in manifest["failures"]:
            log.error("replica %s failed: %s", f["task"], f["error"])
        return EXIT_INTERNAL
    log.info("wrote %d files; targets %s", len(manifest["files"]),
             {s: len(t) for s, t in manifest["targets"].items()})
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = DisruptionInstance.load(_need(args.instance))
    if args.flavor == "max-disruption":
        targets, value = brute_force_max_disruption(inst)
        print(json.dumps(summarize(targets, value)))
        return EXIT_OK
    targets = brute_force_min_targets(inst)
    print(json.dumps(summarize(targets)))
    return EXIT_OK if targets is not None else EXIT_EMPTY


def cmd_report(args) -> int:
    g = _load_graph(args.network)
    h = g.content_hash()
    baseline = TrafficLog.load(_need(args.baseline), network_hash=h)
    attacked = [TrafficLog.load(_need(d), network_hash=h) for d in args.attacked]
    if baseline.edges != g.edge_list():
        raise ValueError("baseline log does not match the network's edges")
    plan = AttackPlan.load(_need(args.plan))
    out = _out_dir(args)
    summary = write_report(out, g, baseline, attacked, plan.targets, args.bin_width, args.delay_bin,
                           distance_mode=args.distance_mode)
    write_manifest(out, {"inputs": {"network": h, "plan": plan.to_json()}})
    log.info("fraction delayed %.4f, sped up %.4f", summary["fraction_delayed"], summary["fraction_sped_up"])
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base RNG seed (default 0)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes (default 1)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default .)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="trafficattack", parents=[common],
                                description="Traffic disinformation attack simulation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-network", parents=[common], help="map extract -> simulation graph")
    s.add_argument("extract")
    s.add_argument("--merge-radius", type=float, default=20.0, help="meters (default 20)")
    s.set_defaults(func=cmd_build_network)

    s = sub.add_parser("gen-rides", parents=[common], help="synthesize rides from sensor counts")
    s.add_argument("--network", required=True)
    s.add_argument("--sensors", required=True, help="CSV lat,lon,daily_count")
    s.add_argument("--intensity", required=True, help="CSV hour,weight (24 rows)")
    s.add_argument("--p-load", type=float, default=1 / 1000)
    s.add_argument("--mu", type=float, default=8000.0)
    s.add_argument("--sigma", type=float, default=1000.0)
    s.set_defaults(func=cmd_gen_rides)

    s = sub.add_parser("plan-attack", parents=[common], help="choose target edges")
    s.add_argument("--network", required=True)
    s.add_argument("--strategy", choices=STRATEGIES, default="greedy")
    s.add_argument("--budget", type=int, required=True)
    s.add_argument("--region", help="polygon as JSON file or 'lat,lon;lat,lon;...'")
    s.add_argument("--name", default="attack.json", help="output file name inside --out-dir")
    s.set_defaults(func=cmd_plan_attack)

    s = sub.add_parser("run", parents=[common], help="run a scenario file")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("oracle", parents=[common], help="exact brute force on a small instance")
    s.add_argument("instance")
    s.add_argument("--flavor", choices=["max-disruption", "min-targets"], default="max-disruption")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("report", parents=[common], help="report from saved traffic logs")
    s.add_argument("--network", required=True)
    s.add_argument("--baseline", required=True, help="directory with rides.csv and edges.csv")
    s.add_argument("--attacked", required=True, nargs="+", help="one directory per attacked run")
    s.add_argument("--plan", required=True, help="attack plan JSON")
    s.add_argument("--bin-width", type=float, default=50.0, help="distance bin in meters")
    s.add_argument("--delay-bin", type=int, default=60, help="delay histogram bin in steps")
    s.add_argument("--distance-mode", choices=["midpoint", "endpoint"], default="midpoint")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = getattr(args, "seed", None)
    args.seed = args.seed_given if args.seed_given is not None else 0
    args.jobs = max(1, getattr(args, "jobs", 1))
    args.out_dir = getattr(args, "out_dir", ".")
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.seed < 0:
        log.error("--seed must be non-negative")
        return EXIT_INPUT
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        msg = str(exc)
        log.error("%s: %s", args.command, msg if msg.startswith("input not found") else f"input not found: {msg}")
        return EXIT_INPUT
    except GuardError as exc:
        log.error("%s: refused: %s", args.command, exc)
        return EXIT_GUARD
    except (EmptyResultError, EmptyNetworkError) as exc:
        log.error("%s: %s", args.command, exc)
        return EXIT_EMPTY
    except (CsvSchemaError, ScenarioError, ExtractError, ValueError, KeyError,
            json.JSONDecodeError, yaml.YAMLError) as exc:
        log.error("%s: input error: %s", args.command, exc)
        return EXIT_INPUT
    except Exception:  # anything else is a bug
        log.exception("%s: internal error", args.command)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

