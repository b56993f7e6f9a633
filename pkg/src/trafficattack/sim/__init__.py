"""Multi-lane cellular-automaton traffic model on a directed road network.

The step loop lives in a compiled kernel (``_ckernel``) when the extension
is built, and in ``_pykernel`` otherwise. Both consume the same uniform
stream and produce identical logs; set ``TRAFFICATTACK_ENGINE=python`` to
force the fallback.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..network import RoadNetwork
from ..rides import Ride, rides_hash
from ..routing import GraphArrays, route_edges
from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

HAVE_COMPILED = _ckernel is not None


def default_engine() -> str:
    forced = os.environ.get("TRAFFICATTACK_ENGINE", "").strip().lower()
    if forced in ("python", "compiled"):
        return forced
    return "compiled" if HAVE_COMPILED else "python"


def _kernel(engine: str | None):
    engine = engine or default_engine()
    if engine == "compiled":
        if _ckernel is None:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return _ckernel.simulate
    if engine == "python":
        return _pykernel.simulate
    raise ValueError(f"unknown engine {engine!r}")


@dataclass(frozen=True)
class SimParams:
    d_vehicle: float = 7.5
    v_max: int = 5
    p_slow: float = 0.01
    t_max: int = 86_400
    seed: int = 0
    # safety stop for pathological inputs; None means 4 * t_max
    max_steps: int | None = None

    def __post_init__(self):
        if not self.d_vehicle > 0:
            raise ValueError("d_vehicle must be positive")
        if self.v_max < 1:
            raise ValueError("v_max must be at least 1")
        if not 0.0 <= self.p_slow <= 1.0:
            raise ValueError("p_slow must lie in [0, 1]")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")

    @property
    def step_limit(self) -> int:
        return self.max_steps if self.max_steps is not None else 4 * self.t_max


def cells_for_edge(length_m: float, d_vehicle: float = 7.5) -> int:
    if length_m <= 0:
        raise ValueError("edge length must be positive")
    # tolerate float noise on exact multiples (15 / 7.5 must give 2, not 3)
    return max(1, math.ceil(length_m / d_vehicle - 1e-9))


@dataclass
class TrafficLog:
    """Outcome of one run: per-ride completion times and per-edge entry counts."""

    theta: np.ndarray               # ride start steps
    times: np.ndarray               # T in steps, inf if unfinished or unreachable
    unreachable: np.ndarray         # rides never injected for lack of a route
    edges: list[tuple[int, int]]
    edge_counts: np.ndarray
    steps: int
    network_hash: str = ""
    rides_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def finished(self) -> np.ndarray:
        return np.isfinite(self.times)

    def edge_count_map(self) -> dict[tuple[int, int], int]:
        return {e: int(c) for e, c in zip(self.edges, self.edge_counts)}

    def rides_csv(self) -> str:
        lines = ["ride_id,theta,T_steps,finished"]
        for i, (th, T) in enumerate(zip(self.theta.tolist(), self.times.tolist())):
            fin = math.isfinite(T)
            lines.append(f"{i},{th},{int(T) if fin else 'inf'},{int(fin)}")
        return "\n".join(lines) + "\n"

    def edges_csv(self) -> str:
        lines = ["u,v,traversal_count"]
        lines += [f"{u},{v},{int(c)}" for (u, v), c in zip(self.edges, self.edge_counts.tolist())]
        return "\n".join(lines) + "\n"

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "rides.csv").write_text(self.rides_csv())
        (d / "edges.csv").write_text(self.edges_csv())

    @classmethod
    def load(cls, directory, network_hash: str = "", rides_hash: str = "") -> "TrafficLog":
        d = Path(directory)
        theta, times = [], []
        with open(d / "rides.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                theta.append(int(row["theta"]))
                times.append(float(row["T_steps"]) if row["finished"] == "1" else math.inf)
        edges, counts = [], []
        with open(d / "edges.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                edges.append((int(row["u"]), int(row["v"])))
                counts.append(int(row["traversal_count"]))
        times_a = np.array(times, dtype=float)
        return cls(np.array(theta, dtype=np.int64), times_a, np.zeros(len(times), dtype=bool),
                   edges, np.array(counts, dtype=np.int64), steps=-1,
                   network_hash=network_hash, rides_hash=rides_hash)


def validate_rides(g: RoadNetwork, rides: Sequence[Ride], params: SimParams) -> None:
    bad_time = [i for i, r in enumerate(rides) if not 0 <= r.theta < params.t_max]
    if bad_time:
        raise ValueError(f"{len(bad_time)} ride(s) start outside [0, t_max): ids {bad_time[:10]}")
    bad_node = [i for i, r in enumerate(rides) if r.start not in g.nodes or r.end not in g.nodes]
    if bad_node:
        raise ValueError(f"ride(s) reference unknown nodes: ids {bad_node[:10]}")
    same = [i for i, r in enumerate(rides) if r.start == r.end]
    if same:
        raise ValueError(f"ride(s) start and end at the same node: ids {same[:10]}")


def compute_routes(g: RoadNetwork, rides: Sequence[Ride],
                   removed: Sequence[tuple[int, int]] = (),
                   ga: GraphArrays | None = None) -> list[np.ndarray | None]:
    """Length-shortest edge-id routes in ``g`` minus ``removed``; None if unreachable."""
    ga = ga or GraphArrays.from_network(g)
    active = None
    if removed:
        active = np.ones(ga.m, dtype=bool)
        active[ga.edge_ids_of(removed)] = False
    pairs = [(ga.index[r.start], ga.index[r.end]) for r in rides]
    return route_edges(ga, pairs, "length", active)


def pack_routes(routes: Sequence[np.ndarray | None]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(routes) + 1, dtype=np.int64)
    for i, r in enumerate(routes):
        ptr[i + 1] = ptr[i] + (0 if r is None else len(r))
    flat = np.concatenate([r for r in routes if r is not None]) if ptr[-1] else np.zeros(0, np.int64)
    return ptr, flat.astype(np.int64)


def run(g: RoadNetwork, rides: Sequence[Ride], params: SimParams = SimParams(),
        routes: Sequence[np.ndarray | None] | None = None, engine: str | None = None,
        observer=None, rng=None) -> TrafficLog:
    """Simulate one day of traffic and return its log.

    ``routes`` (edge ids in ``g.edge_list()`` order, None = unreachable)
    defaults to length-shortest paths in ``g``. The run continues past
    ``t_max`` until all injected rides finish.
    """
    validate_rides(g, rides, params)
    ga = GraphArrays.from_network(g)
    if routes is None:
        routes = compute_routes(g, rides, ga=ga)
    if len(routes) != len(rides):
        raise ValueError("one route per ride is required")
    cells = np.array([cells_for_edge(x, params.d_vehicle) for x in ga.length], dtype=np.int64)
    ptr, flat = pack_routes(routes)
    theta = np.array([r.theta for r in rides], dtype=np.int64)
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    sim = _kernel("python" if observer is not None else engine)
    finish, counts, t_end = sim(cells, ga.lanes, theta, ptr, flat, int(params.v_max),
                                float(params.p_slow), int(params.t_max), params.step_limit,
                                rng, observer)
    finish = np.asarray(finish, dtype=np.int64)
    times = np.where(finish >= 0, finish - theta + 1, np.inf).astype(float)
    unreachable = np.array([r is None for r in routes], dtype=bool)
    return TrafficLog(theta, times, unreachable, g.edge_list(), np.asarray(counts, dtype=np.int64),
                      int(t_end), g.content_hash(), rides_hash(list(rides)),
                      meta={"seed": params.seed, "engine": engine or default_engine()})


class SnapshotWriter:
    """Observer that writes run-length encoded occupancy, one block per step.

    Format: ``t <step>`` followed by ``<u> <v> <lane> <runs>`` for every lane
    holding a vehicle, where runs alternate empty/occupied counts starting
    with empty (``3.1x4.`` = 3 empty, 1 occupied, 4 empty).
    """

    def __init__(self, g: RoadNetwork, fh, params: SimParams = SimParams(), every: int = 1):
        ga = GraphArrays.from_network(g)
        self.edges = g.edge_list()
        self.cells = [cells_for_edge(x, params.d_vehicle) for x in ga.length]
        self.lanes = ga.lanes.tolist()
        self.fh = fh
        self.every = every

    def __call__(self, t, occ, offsets):
        if t % self.every:
            return
        out = [f"t {t}"]
        for e, (u, v) in enumerate(self.edges):
            c = self.cells[e]
            for lane in range(self.lanes[e]):
                base = offsets[e] + lane * c
                seg = occ[base:base + c]
                if not any(seg):
                    continue
                runs, cur, n = [], 0, 0
                for x in seg:
                    if x == cur:
                        n += 1
                    else:
                        runs.append(f"{n}{'x' if cur else '.'}")
                        cur, n = x, 1
                runs.append(f"{n}{'x' if cur else '.'}")
                out.append(f"{u} {v} {lane} {''.join(runs)}")
        self.fh.write("\n".join(out) + "\n")
