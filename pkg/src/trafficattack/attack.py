"""Target selection and follow-through rerouting."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geo import point_in_polygon
from .network import RoadNetwork
from .rides import Ride
from .routing import GraphArrays, PathPool, all_pairs_paths, route_edges

log = logging.getLogger(__name__)

STRATEGIES = ("greedy", "random")


@dataclass
class AttackPlan:
    strategy: str
    budget: int
    targets: list[tuple[int, int]]
    region: list[tuple[float, float]] | None = None
    seed: int | None = None
    candidates: list[tuple[int, int]] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        self.targets = [tuple(map(int, t)) for t in self.targets]
        if len(self.targets) > self.budget:
            raise ValueError(f"{len(self.targets)} targets exceed budget {self.budget}")

    def to_json(self) -> str:
        return json.dumps({
            "strategy": self.strategy,
            "budget": self.budget,
            "targets": [list(t) for t in self.targets],
            "region": None if self.region is None else [list(p) for p in self.region],
            "seed": self.seed,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "AttackPlan":
        d = json.loads(text)
        unknown = set(d) - {"strategy", "budget", "targets", "region", "seed"}
        if unknown:
            raise ValueError(f"unknown attack plan keys: {sorted(unknown)}")
        region = d.get("region")
        return cls(d["strategy"], int(d["budget"]), [tuple(t) for t in d["targets"]],
                   None if region is None else [tuple(p) for p in region], d.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "AttackPlan":
        return cls.from_json(Path(path).read_text())

    def validate_against(self, g: RoadNetwork) -> None:
        missing = [t for t in self.targets if t not in g.edges]
        if missing:
            raise ValueError(f"attack targets not in network: {missing[:5]}")


def region_filter(g: RoadNetwork, polygon: Sequence[Sequence[float]]) -> list[tuple[int, int]]:
    """Edges with both endpoints strictly inside ``polygon`` (even-odd rule)."""
    ring = [tuple(map(float, p)) for p in polygon]
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring = ring[:-1]
    if len(ring) < 3:
        raise ValueError("region polygon needs at least 3 distinct vertices")
    inside = {n: point_in_polygon(lat, lon, ring) for n, (lat, lon) in g.nodes.items()}
    return [e for e in g.edge_list() if inside[e[0]] and inside[e[1]]]


def greedy_targets(g: RoadNetwork, candidates: Sequence[tuple[int, int]] | None, budget: int,
                   pool: PathPool | None = None, ga: GraphArrays | None = None) -> list[tuple[int, int]]:
    """Repeatedly take the candidate edge on the most not-yet-affected shortest paths.

    The path pool holds one canonical length-shortest path per ordered node
    pair. A path is affected once it contains a chosen target. Ties go to
    the lowest edge id; selection stops early when no unaffected path uses
    any remaining candidate.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    ga = ga or GraphArrays.from_network(g)
    cand_ids = (np.arange(ga.m) if candidates is None
                else np.unique(ga.edge_ids_of(candidates)))
    if budget > len(cand_ids):
        log.warning("budget %d exceeds %d candidates; targeting all of them", budget, len(cand_ids))
        return [ga.edge_key(int(k)) for k in cand_ids]
    if budget == 0 or len(cand_ids) == 0:
        return []
    if pool is None:
        pool = all_pairs_paths(ga)
    alive = np.ones(len(pool), dtype=bool)
    is_cand = np.zeros(ga.m, dtype=bool)
    is_cand[cand_ids] = True
    chosen: list[int] = []
    for _ in range(budget):
        live = alive[pool.edge_path]
        cover = np.bincount(pool.edge_item[live], minlength=ga.m)
        cover = np.where(is_cand, cover, -1)
        best = int(np.argmax(cover))  # first max = lowest edge id
        if cover[best] <= 0:
            break
        chosen.append(best)
        is_cand[best] = False
        alive[pool.edge_path[pool.edge_item == best]] = False
    return [ga.edge_key(k) for k in chosen]


def random_targets(candidates: Sequence[tuple[int, int]], budget: int, rng) -> list[tuple[int, int]]:
    cands = sorted(map(tuple, candidates))
    if budget > len(cands):
        raise ValueError(f"budget {budget} exceeds {len(cands)} candidates")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    idx = rng.choice(len(cands), size=budget, replace=False) if budget else []
    return [cands[i] for i in sorted(int(i) for i in idx)]


def plan_attack(g: RoadNetwork, strategy: str, budget: int,
                region: Sequence[Sequence[float]] | None = None, seed: int | None = None,
                pool: PathPool | None = None) -> AttackPlan:
    candidates = g.edge_list() if region is None else region_filter(g, region)
    if strategy == "greedy":
        targets = greedy_targets(g, candidates, budget, pool=pool)
    elif strategy == "random":
        targets = random_targets(candidates, min(budget, len(candidates)),
                                 np.random.default_rng(seed))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return AttackPlan(strategy, budget, targets,
                      None if region is None else [tuple(p) for p in region], seed, candidates)


def follower_count(rate: float, n_rides: int) -> int:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("follow-through rate must lie in [0, 1]")
    return int(math.floor(rate * n_rides + 0.5))


def choose_followers(n_rides: int, rate: float, rng) -> np.ndarray:
    """Uniformly random follower ride ids, returned sorted.

    Followers are a prefix of one random permutation, so with a fixed
    generator state the follower sets for increasing rates are nested.
    """
    perm = rng.permutation(n_rides)
    return np.sort(perm[:follower_count(rate, n_rides)])


@dataclass
class ReroutePlan:
    routes: list[np.ndarray | None]
    followers: np.ndarray
    follow_rate: float
    unreachable: np.ndarray   # follower ids left without any route


def reroute(g: RoadNetwork, rides: Sequence[Ride], targets: Sequence[tuple[int, int]],
            follow_rate: float, rng, baseline_routes: Sequence[np.ndarray | None] | None = None,
            ga: GraphArrays | None = None) -> ReroutePlan:
    """Followers get shortest routes avoiding every target; others keep baseline routes."""
    ga = ga or GraphArrays.from_network(g)
    pairs = [(ga.index[r.start], ga.index[r.end]) for r in rides]
    if baseline_routes is None:
        baseline_routes = route_edges(ga, pairs)
    followers = choose_followers(len(rides), follow_rate, rng)
    routes = list(baseline_routes)
    if len(followers) and targets:
        active = np.ones(ga.m, dtype=bool)
        active[ga.edge_ids_of(targets)] = False
        detours = route_edges(ga, [pairs[i] for i in followers], "length", active)
        for i, rt in zip(followers.tolist(), detours):
            routes[i] = rt
    unreachable = np.array([i for i in followers.tolist() if routes[i] is None], dtype=np.int64)
    return ReroutePlan(routes, followers, follow_rate, unreachable)
