"""Calibrated ride synthesis from vehicle-count sensors and a daily intensity profile."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .geo import haversine_m, to_unit_xyz
from .network import RoadNetwork
from .routing import GraphArrays, PathPool, all_pairs_paths

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86_400


class Ride(NamedTuple):
    start: int
    end: int
    theta: int  # seconds of day

    def validate(self) -> "Ride":
        if self.start == self.end:
            raise ValueError(f"ride starts and ends at node {self.start}")
        if not 0 <= self.theta < SECONDS_PER_DAY:
            raise ValueError(f"start time {self.theta} outside the day")
        return self


@dataclass
class SensorDatum:
    lat: float
    lon: float
    daily_count: float


class CsvSchemaError(ValueError):
    def __init__(self, path, row: int, msg: str):
        super().__init__(f"{path}: row {row}: {msg}")
        self.row = row


# ---------------------------------------------------------------- csv io

def _read_csv(path, columns: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != columns:
            raise CsvSchemaError(path, 1, f"expected header {','.join(columns)}, got {reader.fieldnames}")
        return [{k.strip(): v for k, v in row.items()} for row in reader]


def load_sensors(path) -> list[SensorDatum]:
    out = []
    for i, row in enumerate(_read_csv(path, ["lat", "lon", "daily_count"]), start=2):
        try:
            d = SensorDatum(float(row["lat"]), float(row["lon"]), float(row["daily_count"]))
        except (TypeError, ValueError) as exc:
            raise CsvSchemaError(path, i, str(exc)) from exc
        if d.daily_count < 0 or not math.isfinite(d.daily_count):
            raise CsvSchemaError(path, i, "daily_count must be a non-negative number")
        if not (-90 <= d.lat <= 90 and -180 <= d.lon <= 180):
            raise CsvSchemaError(path, i, "coordinate out of range")
        out.append(d)
    return out


def load_intensity(path) -> np.ndarray:
    """Hourly weights from an ``hour,weight`` CSV with 24 rows, normalised to sum 1."""
    rows = _read_csv(path, ["hour", "weight"])
    weights = np.zeros(24)
    seen = set()
    for i, row in enumerate(rows, start=2):
        try:
            h, w = int(row["hour"]), float(row["weight"])
        except (TypeError, ValueError) as exc:
            raise CsvSchemaError(path, i, str(exc)) from exc
        if not 0 <= h < 24 or h in seen:
            raise CsvSchemaError(path, i, f"hour {h} out of range or repeated")
        if w < 0 or not math.isfinite(w):
            raise CsvSchemaError(path, i, "weight must be non-negative")
        seen.add(h)
        weights[h] = w
    if len(seen) != 24:
        raise CsvSchemaError(path, len(rows) + 1, f"expected 24 hourly rows, got {len(seen)}")
    return normalize_intensity(weights)


def normalize_intensity(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) == 0 or (w < 0).any() or w.sum() <= 0:
        raise ValueError("intensity weights must be non-negative with a positive sum")
    return w / w.sum()


def save_rides(rides: list[Ride], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start_node", "end_node", "theta_seconds"])
        for r in rides:
            w.writerow([r.start, r.end, r.theta])


def load_rides(path) -> list[Ride]:
    out = []
    for i, row in enumerate(_read_csv(path, ["start_node", "end_node", "theta_seconds"]), start=2):
        try:
            out.append(Ride(int(row["start_node"]), int(row["end_node"]),
                            int(row["theta_seconds"])).validate())
        except (TypeError, ValueError) as exc:
            raise CsvSchemaError(path, i, str(exc)) from exc
    return out


def rides_hash(rides: list[Ride]) -> str:
    h = hashlib.sha256()
    for r in rides:
        h.update(f"{r.start},{r.end},{r.theta}\n".encode())
    return h.hexdigest()


def sort_rides(rides) -> list[Ride]:
    return sorted(rides, key=lambda r: (r.theta, r.start, r.end))


# ---------------------------------------------------------------- algorithm

def assign_sensors(g: RoadNetwork, data: list[SensorDatum]) -> dict[int, int]:
    """Attach each datum to its nearest node and return node -> initial count.

    The count is the mean of the attached daily counts, rounded half-up to
    an integer since generation decrements it one ride at a time.
    """
    if not data:
        return {}
    nodes = g.node_list()
    xyz = to_unit_xyz([g.nodes[n][0] for n in nodes], [g.nodes[n][1] for n in nodes])
    tree = cKDTree(xyz)
    attached: dict[int, list[float]] = {}
    k = min(4, len(nodes))
    for d in data:
        dist, idx = tree.query(to_unit_xyz([d.lat], [d.lon])[0], k=k)
        idx = np.atleast_1d(idx)
        # exact haversine re-rank of the few nearest, ties to the lower node id
        best = min((haversine_m((d.lat, d.lon), g.nodes[nodes[i]]), nodes[i]) for i in idx)
        attached.setdefault(best[1], []).append(d.daily_count)
    return {n: int(math.floor(sum(ks) / len(ks) + 0.5)) for n, ks in sorted(attached.items())}


@dataclass
class CandidatePool:
    """Sensor-touching shortest paths admitted for ride sampling."""

    start: np.ndarray       # node ids
    end: np.ndarray
    length: np.ndarray      # meters
    sensors: list[tuple[int, ...]]   # sensor node ids on each path

    def __len__(self) -> int:
        return len(self.start)


def sample_candidate_paths(g: RoadNetwork, sensors: dict[int, int], rng,
                           p_load: float = 1 / 1000, pool: PathPool | None = None) -> CandidatePool:
    """Admit each sensor-touching pairwise shortest path with probability ``p_load``.

    One uniform draw is consumed per sensor-touching path, in (start, end)
    node order, so the pool is reproducible from the generator state.
    """
    if not 0.0 <= p_load <= 1.0:
        raise ValueError("p_load must lie in [0, 1]")
    ga = GraphArrays.from_network(g)
    if pool is None:
        pool = all_pairs_paths(ga)
    is_sensor = np.zeros(ga.n, dtype=bool)
    for s in sensors:
        is_sensor[ga.index[s]] = True
    hit = is_sensor[pool.node_item]
    per_path: dict[int, set[int]] = {}
    for p, item in zip(pool.node_path[hit].tolist(), pool.node_item[hit].tolist()):
        per_path.setdefault(p, set()).add(int(ga.node_ids[item]))
    touching = np.array(sorted(per_path), dtype=np.int64)
    draws = rng.random(len(touching))
    keep = touching[draws < p_load] if p_load < 1.0 else touching
    return CandidatePool(ga.node_ids[pool.src[keep]], ga.node_ids[pool.dst[keep]],
                         pool.length[keep], [tuple(sorted(per_path[int(p)])) for p in keep])


def draw_start_time(intensity: np.ndarray, rng) -> int:
    """Pick a bin by weight, then a uniform second inside it."""
    nbins = len(intensity)
    width = SECONDS_PER_DAY // nbins
    b = int(np.searchsorted(np.cumsum(intensity), rng.random() * 1.0, side="right"))
    b = min(b, nbins - 1)
    return b * width + int(rng.integers(width))


@dataclass
class GenerationResult:
    rides: list[Ride]
    initial: dict[int, int]
    residual: dict[int, int]
    path_sensors: list[tuple[int, ...]]  # sensors on each emitted ride's path, in emission order
    pool_exhausted: bool


def generate_rides(g: RoadNetwork, sensors: dict[int, int], pool: CandidatePool,
                   intensity, rng, mu: float = 8000.0, sigma: float = 1000.0) -> GenerationResult:
    """Draw paths until every sensor count reaches zero or the pool runs dry.

    Paths are weighted by the N(mu, sigma) density at their length. Rides
    come back sorted by (start time, start node, end node).
    """
    intensity = normalize_intensity(intensity)
    residual = dict(sensors)
    alive = np.ones(len(pool), dtype=bool)
    through: dict[int, list[int]] = {}
    for i, ss in enumerate(pool.sensors):
        for s in ss:
            through.setdefault(s, []).append(i)
    # a sensor that starts at zero admits no rides through it
    for s, x in residual.items():
        if x <= 0:
            alive[through.get(s, [])] = False

    # log-density, shifted so the best path has weight 1 (avoids underflow)
    logw = -0.5 * ((np.asarray(pool.length, dtype=float) - mu) / sigma) ** 2
    cum = None

    emitted: list[tuple[Ride, tuple[int, ...]]] = []
    while any(x > 0 for x in residual.values()) and alive.any():
        if cum is None:
            # shift by the best surviving path so weights never all underflow
            top = logw[alive].max()
            cum = np.cumsum(np.where(alive, np.exp(logw - top), 0.0))
        i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        i = min(i, len(cum) - 1)
        assert alive[i]
        ss = pool.sensors[i]
        for s in ss:
            residual[s] -= 1
            if residual[s] == 0:
                alive[through[s]] = False
                cum = None
        theta = draw_start_time(intensity, rng)
        emitted.append((Ride(int(pool.start[i]), int(pool.end[i]), theta), ss))
    order = sorted(range(len(emitted)), key=lambda k: (emitted[k][0].theta, emitted[k][0].start,
                                                        emitted[k][0].end, k))
    rides = [emitted[k][0] for k in order]
    exhausted = not alive.any() and any(x > 0 for x in residual.values())
    if exhausted:
        log.info("path pool exhausted with residual counts %s",
                 {s: x for s, x in residual.items() if x > 0})
    return GenerationResult(rides, dict(sensors), residual, [emitted[k][1] for k in order], exhausted)


def synthesize_rides(g: RoadNetwork, data: list[SensorDatum], intensity, seed: int,
                     p_load: float = 1 / 1000, mu: float = 8000.0,
                     sigma: float = 1000.0) -> GenerationResult:
    """Full generation pipeline from raw sensor data with one seeded generator."""
    rng = np.random.default_rng(seed)
    sensors = assign_sensors(g, data)
    pool = sample_candidate_paths(g, sensors, rng, p_load)
    return generate_rides(g, sensors, pool, intensity, rng, mu, sigma)


def save_residuals(result: GenerationResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "initial", "residual"])
        for n in sorted(result.initial):
            w.writerow([n, result.initial[n], result.residual[n]])
