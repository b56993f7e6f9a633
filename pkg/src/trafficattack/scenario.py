"""Declarative scenario files, the seed schedule and the replica runner."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .attack import STRATEGIES, AttackPlan, plan_attack, reroute
from .network import RoadNetwork, build_network
from .report import write_report
from .rides import (load_intensity, load_rides, load_sensors, save_residuals, save_rides,
                    synthesize_rides)
from .routing import GraphArrays, all_pairs_paths
from .sim import SimParams, TrafficLog, compute_routes, default_engine, run

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """Invalid scenario file."""


class EmptyResultError(RuntimeError):
    """A stage produced nothing to work with."""


SCHEMA = {
    "network": None,            # path: graph file, or .osm/.xml extract built on load
    "rides": {
        "file": None,
        "sensors": None, "intensity": None, "p_load": None, "mu": None, "sigma": None,
    },
    "sim": {"d_vehicle": None, "v_max": None, "p_slow": None, "t_max": None, "max_steps": None},
    "attack": {"strategies": None, "budget": None, "region": None, "follow_rates": None, "plan": None},
    "replicas": None,
    "seed": None,
    "report": {"bin_width_m": None, "delay_bin_steps": None, "thresholds": None, "distance_mode": None},
}


def _check_keys(d, schema, where="scenario"):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - set(schema))
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {unknown}")
    for k, sub in schema.items():
        if isinstance(sub, dict) and k in d and d[k] is not None:
            _check_keys(d[k], sub, f"{where}.{k}")


@dataclass
class Scenario:
    network: Path
    rides_file: Path | None = None
    sensors: Path | None = None
    intensity: Path | None = None
    p_load: float = 1 / 1000
    mu: float = 8000.0
    sigma: float = 1000.0
    sim: dict = field(default_factory=dict)
    strategies: list[str] = field(default_factory=lambda: ["greedy"])
    budget: int = 10
    region: list | None = None
    follow_rates: list[float] = field(default_factory=lambda: [0.5])
    plan: Path | None = None
    replicas: int = 1
    seed: int = 0
    bin_width_m: float = 50.0
    delay_bin_steps: int = 60
    thresholds: list[int] = field(default_factory=lambda: [60, 300, 600])
    distance_mode: str = "midpoint"
    raw: dict = field(default_factory=dict, repr=False)

    def params(self, seed: int) -> SimParams:
        return SimParams(seed=seed, **self.sim)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def validate(self) -> "Scenario":
        if self.seed < 0:
            raise ScenarioError("seed must be non-negative")
        if self.replicas < 1:
            raise ScenarioError("replicas must be at least 1")
        if self.budget < 0:
            raise ScenarioError("attack.budget must be non-negative")
        for r in self.follow_rates:
            if not 0.0 <= r <= 1.0:
                raise ScenarioError(f"follow rate {r} outside [0, 1]")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ScenarioError(f"unknown strategy {s!r}")
        if self.rides_file is None and (self.sensors is None or self.intensity is None):
            raise ScenarioError("rides need either 'file' or both 'sensors' and 'intensity'")
        for p in (self.network, self.rides_file, self.sensors, self.intensity, self.plan):
            if p is not None and not p.exists():
                raise FileNotFoundError(f"input not found: {p}")
        try:
            self.params(self.seed)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"sim: {exc}") from exc
        return self


def load_scenario(path, seed: int | None = None) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    _check_keys(raw, SCHEMA)
    if "network" not in raw:
        raise ScenarioError("scenario: 'network' is required")
    if seed is not None:
        raw["seed"] = seed
    base = path.parent

    def rel(p):
        return None if p is None else (base / p).resolve()

    rides = raw.get("rides") or {}
    attack = raw.get("attack") or {}
    rep = raw.get("report") or {}
    scn = Scenario(network=rel(raw["network"]), sim=dict(raw.get("sim") or {}), raw=raw)
    scn.rides_file = rel(rides.get("file"))
    scn.sensors, scn.intensity = rel(rides.get("sensors")), rel(rides.get("intensity"))
    for k in ("p_load", "mu", "sigma"):
        if rides.get(k) is not None:
            setattr(scn, k, float(rides[k]))
    if attack.get("strategies") is not None:
        strategies = attack["strategies"]
        scn.strategies = [strategies] if isinstance(strategies, str) else list(strategies)
    if attack.get("budget") is not None:
        scn.budget = int(attack["budget"])
    scn.region = attack.get("region")
    if attack.get("follow_rates") is not None:
        scn.follow_rates = [float(r) for r in attack["follow_rates"]]
    scn.plan = rel(attack.get("plan"))
    scn.replicas = int(raw.get("replicas", 1))
    scn.seed = int(raw.get("seed", 0))
    for k in ("bin_width_m", "delay_bin_steps", "thresholds", "distance_mode"):
        if rep.get(k) is not None:
            setattr(scn, k, rep[k])
    return scn.validate()


# ---------------------------------------------------------------- seeds

def seed_schedule(base: int, strategy: str, rate: float, replica: int) -> dict:
    """Seeds for one attacked run; a pure function of its arguments.

    The simulation seed is ``base + replica`` so replica 0 shares the
    baseline's stream. Followers are drawn from a generator keyed by
    (base, replica, strategy) and not by rate, which nests follower sets
    across rates within a replica.
    """
    return {"sim": base + replica,
            "followers": [base, replica, STRATEGIES.index(strategy)],
            "rate": rate}


def follower_rng(schedule: dict):
    return np.random.default_rng(np.random.SeedSequence(schedule["followers"]))


# ---------------------------------------------------------------- inputs

def load_network(path) -> tuple[RoadNetwork, dict | None]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    if path.suffix.lower() in (".osm", ".xml"):
        g, report = build_network(str(path))
        return g, report.to_dict()
    return RoadNetwork.load(path), None


def scenario_rides(scn: Scenario, g: RoadNetwork):
    if scn.rides_file is not None:
        return load_rides(scn.rides_file), None
    res = synthesize_rides(g, load_sensors(scn.sensors), load_intensity(scn.intensity), scn.seed,
                           scn.p_load, scn.mu, scn.sigma)
    return res.rides, res


# ---------------------------------------------------------------- replicas

_W: dict = {}


def _init_worker(state):
    _W.clear()
    _W.update(state)


def _replica(task):
    strategy, rate, k = task
    sched = seed_schedule(_W["seed"], strategy, rate, k)
    g, rides = _W["g"], _W["rides"]
    plan = reroute(g, rides, _W["targets"][strategy], rate, follower_rng(sched),
                   baseline_routes=_W["routes"], ga=_W["ga"])
    lg = run(g, rides, _W["params"](sched["sim"]), routes=plan.routes, engine=_W["engine"])
    lg.meta.update(strategy=strategy, rate=rate, replica=k, followers=len(plan.followers),
                   unreachable_followers=int(len(plan.unreachable)))
    return task, lg


def _rate_tag(rate: float) -> str:
    return f"rate_{rate:.3f}".rstrip("0").rstrip(".")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, meta: dict) -> dict:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out).as_posix()] = sha256_file(p)
    manifest = {**meta, "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def verify_manifest(out) -> list[str]:
    """Files whose hash no longer matches the manifest (missing files included)."""
    out = Path(out)
    manifest = json.loads((out / "manifest.json").read_text())
    bad = []
    for rel, digest in manifest["files"].items():
        p = out / rel
        if not p.exists() or sha256_file(p) != digest:
            bad.append(rel)
    return bad


def versions() -> dict:
    import scipy
    return {"trafficattack": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "engine": default_engine()}


def run_scenario(scn: Scenario, out_dir, jobs: int = 1) -> dict:
    """Baseline plus every (strategy, rate, replica) attacked run; writes all outputs and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g, build = load_network(scn.network)
    g.save(out / "network.graph")
    if build is not None:
        (out / "build_report.json").write_text(json.dumps(build, indent=1) + "\n")
    rides, gen = scenario_rides(scn, g)
    if not rides:
        raise EmptyResultError("ride set is empty")
    save_rides(rides, out / "rides.csv")
    if gen is not None:
        save_residuals(gen, out / "residuals.csv")

    ga = GraphArrays.from_network(g)
    routes = compute_routes(g, rides, ga=ga)
    baseline = run(g, rides, scn.params(scn.seed), routes=routes)
    baseline.save(out / "baseline")

    targets: dict[str, list] = {}
    pool = None
    for strategy in scn.strategies:
        if scn.plan is not None:
            plan = AttackPlan.load(scn.plan)
            plan.validate_against(g)
        else:
            if strategy == "greedy" and pool is None:
                pool = all_pairs_paths(ga)
            plan = plan_attack(g, strategy, scn.budget, scn.region, scn.seed, pool)
        plan.save(out / f"attack_{strategy}.json")
        targets[strategy] = plan.targets

    tasks = [(s, r, k) for s in scn.strategies for r in scn.follow_rates for k in range(scn.replicas)]
    state = {"g": g, "rides": rides, "routes": routes, "ga": ga, "targets": targets,
             "seed": scn.seed, "params": scn.params, "engine": default_engine()}
    results: dict[tuple, TrafficLog] = {}
    failures = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(state,)) as ex:
            futs = {t: ex.submit(_replica, t) for t in tasks}
            for t, fut in futs.items():
                try:
                    results[t] = fut.result()[1]
                except Exception as exc:  # recorded, reported through the exit status
                    failures.append({"task": list(t), "error": repr(exc)})
    else:
        _init_worker(state)
        for t in tasks:
            try:
                results[t] = _replica(t)[1]
            except Exception as exc:
                failures.append({"task": list(t), "error": repr(exc)})

    seeds = []
    for s in scn.strategies:
        for r in scn.follow_rates:
            logs = []
            for k in range(scn.replicas):
                if (s, r, k) not in results:
                    continue
                lg = results[(s, r, k)]
                lg.save(out / "runs" / s / _rate_tag(r) / f"replica_{k:03d}")
                logs.append(lg)
                seeds.append({"strategy": s, "rate": r, "replica": k, **seed_schedule(scn.seed, s, r, k)})
            if logs:
                write_report(out / "reports" / s / _rate_tag(r), g, baseline, logs, targets[s],
                             scn.bin_width_m, int(scn.delay_bin_steps), scn.thresholds, scn.distance_mode,
                             extra_summary={"strategy": s, "follow_rate": r})
    meta = {
        "config_hash": scn.config_hash(),
        "config": scn.raw,
        "base_seed": scn.seed,
        "baseline_seed": scn.seed,
        "seeds": seeds,
        "targets": {s: [list(t) for t in ts] for s, ts in targets.items()},
        "rides": len(rides),
        "versions": versions(),
        "failures": failures,
    }
    return write_manifest(out, meta)

