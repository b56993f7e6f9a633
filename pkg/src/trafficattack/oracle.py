"""Exact brute-force solvers for target selection and cut-problem reductions.

These exist to certify small instances, not to scale: every solver refuses
instances above a hard size guard.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .network import RoadNetwork
from .objective import f_star, f_star_m_empty
from .rides import Ride
from .sim import SimParams, compute_routes, run

MODELS = ("M_empty", "M_star_degenerate")
MAX_CANDIDATES = 20
MAX_BUDGET = 4
# every edge one vehicle long, so each lane is a single cell
DEGENERATE_VEHICLE_M = 7.5


class GuardError(ValueError):
    """Instance too large for exhaustive enumeration."""


Edge = tuple[int, int]


@dataclass
class DisruptionInstance:
    nodes: list[int]
    edges: list[Edge]
    candidates: list[Edge]
    rides: list[tuple[int, int]]
    model: str = "M_empty"
    budget: int | None = None
    xi: float | None = None

    def __post_init__(self):
        self.nodes = sorted(int(n) for n in self.nodes)
        self.edges = sorted({(int(u), int(v)) for u, v in self.edges})
        self.candidates = sorted({(int(u), int(v)) for u, v in self.candidates})
        self.rides = [(int(s), int(t)) for s, t in self.rides]
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if not set(self.candidates) <= set(self.edges):
            raise ValueError("candidate set must be a subset of the edges")
        if self.budget is None and self.xi is None:
            raise ValueError("instance needs a budget or a threshold xi")
        nodeset = set(self.nodes)
        for u, v in self.edges:
            if u not in nodeset or v not in nodeset or u == v:
                raise ValueError(f"bad edge ({u}, {v})")
        for s, t in self.rides:
            if s not in nodeset or t not in nodeset or s == t:
                raise ValueError(f"bad ride ({s}, {t})")

    def network(self, removed: Iterable[Edge] = ()) -> RoadNetwork:
        removed = set(removed)
        lanes = max(1, len(self.rides))
        g = RoadNetwork({n: (0.0, 0.0) for n in self.nodes})
        for u, v in self.edges:
            if (u, v) not in removed:
                g.add_edge(u, v, DEGENERATE_VEHICLE_M, lanes)
        return g

    def to_dict(self) -> dict:
        d = {"nodes": self.nodes, "edges": [list(e) for e in self.edges],
             "candidates": [list(e) for e in self.candidates],
             "rides": [list(r) for r in self.rides], "model": self.model}
        if self.budget is not None:
            d["budget"] = self.budget
        if self.xi is not None:
            d["xi"] = self.xi
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> "DisruptionInstance":
        unknown = set(d) - {"nodes", "edges", "candidates", "rides", "model", "budget", "xi"}
        if unknown:
            raise ValueError(f"unknown instance keys: {sorted(unknown)}")
        rides = [tuple(r[:2]) for r in d["rides"]]
        return cls(d["nodes"], [tuple(e) for e in d["edges"]],
                   [tuple(e) for e in d.get("candidates", d["edges"])], rides,
                   d.get("model", "M_empty"), d.get("budget"), d.get("xi"))

    @classmethod
    def load(cls, path) -> "DisruptionInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate(inst: DisruptionInstance, removed: Iterable[Edge] = ()) -> float:
    """f* after deleting ``removed``; the degenerate model is actually simulated."""
    removed = list(removed)
    if inst.model == "M_empty":
        return f_star_m_empty(inst.network(), inst.rides, removed)
    g = inst.network(removed)
    rides = [Ride(s, t, 0) for s, t in inst.rides]
    # a simple path has fewer hops than there are nodes; the default 4 * t_max limit would truncate
    params = SimParams(d_vehicle=DEGENERATE_VEHICLE_M, v_max=1, p_slow=0.0, t_max=1, seed=0,
                       max_steps=len(inst.nodes) + 1)
    log = run(g, rides, params, routes=compute_routes(g, rides))
    return f_star(log.times.tolist())


def _check_guard(inst: DisruptionInstance, budget: int | None = None) -> None:
    if len(inst.candidates) > MAX_CANDIDATES:
        raise GuardError(f"{len(inst.candidates)} candidates exceed the guard of {MAX_CANDIDATES}")
    if budget is not None and budget > MAX_BUDGET:
        raise GuardError(f"budget {budget} exceeds the guard of {MAX_BUDGET}")


def _edge_ids(inst: DisruptionInstance) -> dict[Edge, int]:
    return {e: i for i, e in enumerate(inst.edges)}


def brute_force_max_disruption(inst: DisruptionInstance) -> tuple[list[Edge], float]:
    """Subset of at most ``budget`` candidates minimising f*.

    Ties go to the lexicographically smallest tuple of edge ids.
    """
    if inst.budget is None:
        raise ValueError("instance has no budget")
    _check_guard(inst, inst.budget)
    ids = _edge_ids(inst)
    best = None
    for k in range(min(inst.budget, len(inst.candidates)) + 1):
        for combo in itertools.combinations(inst.candidates, k):
            key = (evaluate(inst, combo), tuple(sorted(ids[e] for e in combo)))
            if best is None or key < best[0]:
                best = (key, list(combo))
    return best[1], best[0][0]


def brute_force_min_targets(inst: DisruptionInstance) -> list[Edge] | None:
    """Smallest candidate subset pushing f* to at most ``xi``; None if infeasible."""
    if inst.xi is None:
        raise ValueError("instance has no threshold xi")
    _check_guard(inst)
    for k in range(len(inst.candidates) + 1):
        for combo in itertools.combinations(inst.candidates, k):
            if evaluate(inst, combo) <= inst.xi:
                return list(combo)
    return None


# ---------------------------------------------------------------- cut problems

@dataclass
class MultiwayCutInstance:
    nodes: list[int]
    edges: list[Edge]
    terminals: list[int]
    cut_budget: int

    def __post_init__(self):
        if len(set(self.terminals)) != len(self.terminals):
            raise ValueError("terminals must be distinct")
        if len(self.terminals) < 2:
            raise ValueError("need at least two terminals")

    def terminal_pairs(self) -> list[tuple[int, int]]:
        return [(s, t) for s in self.terminals for t in self.terminals if s != t]


def reduce_multiway_cut(mwc: MultiwayCutInstance, model: str = "M_star_degenerate") -> DisruptionInstance:
    """Every edge a candidate, one ride each way per terminal pair, b = c, xi = 0."""
    return DisruptionInstance(mwc.nodes, mwc.edges, mwc.edges, mwc.terminal_pairs(),
                              model, budget=mwc.cut_budget, xi=0.0)


def reduce_multicut(pairs: Sequence[tuple[int, int]], nodes: Sequence[int], edges: Sequence[Edge],
                    model: str = "M_empty") -> DisruptionInstance:
    """One ride per source-destination pair, every edge a candidate, xi = 0."""
    if not pairs:
        raise ValueError("multicut needs at least one pair")
    return DisruptionInstance(list(nodes), list(edges), list(edges), list(pairs), model, xi=0.0)


def _reachable(adj: dict[int, list[int]], s: int, t: int) -> bool:
    stack, seen = [s], {s}
    while stack:
        u = stack.pop()
        if u == t:
            return True
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def is_cut(edges: Sequence[Edge], removed: Iterable[Edge], pairs: Sequence[tuple[int, int]]) -> bool:
    """True when no pair's source still reaches its destination."""
    removed = set(removed)
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        if (u, v) not in removed:
            adj.setdefault(u, []).append(v)
    return not any(_reachable(adj, s, t) for s, t in pairs)


def enumerate_cuts(edges: Sequence[Edge], pairs: Sequence[tuple[int, int]],
                   pool: Sequence[Edge] | None = None) -> set[frozenset]:
    """Every subset of ``pool`` (default all edges) that separates all pairs."""
    pool = sorted(set(edges) if pool is None else set(pool))
    if len(pool) > MAX_CANDIDATES:
        raise GuardError(f"{len(pool)} edges exceed the guard of {MAX_CANDIDATES}")
    out = set()
    for k in range(len(pool) + 1):
        for combo in itertools.combinations(pool, k):
            if is_cut(edges, combo, pairs):
                out.add(frozenset(combo))
    return out


def min_cut_size(edges: Sequence[Edge], pairs: Sequence[tuple[int, int]]) -> int:
    return min(len(c) for c in enumerate_cuts(edges, pairs))


# ---------------------------------------------------------------- fixtures

def random_digraph(rng, n_nodes: int, n_edges: int) -> tuple[list[int], list[Edge]]:
    """Random simple digraph with exactly ``n_edges`` edges (capped by n(n-1))."""
    all_pairs = [(u, v) for u in range(n_nodes) for v in range(n_nodes) if u != v]
    k = min(n_edges, len(all_pairs))
    idx = rng.choice(len(all_pairs), size=k, replace=False)
    return list(range(n_nodes)), sorted(all_pairs[i] for i in idx)


def random_strongly_connected(rng, n_nodes: int, extra_edges: int) -> tuple[list[int], list[Edge]]:
    """A random Hamiltonian cycle plus ``extra_edges`` random chords."""
    perm = [int(x) for x in rng.permutation(n_nodes)]
    edges = {(perm[i], perm[(i + 1) % n_nodes]) for i in range(n_nodes)} if n_nodes > 1 else set()
    others = [(u, v) for u in range(n_nodes) for v in range(n_nodes) if u != v and (u, v) not in edges]
    if others and extra_edges:
        pick = rng.choice(len(others), size=min(extra_edges, len(others)), replace=False)
        edges |= {others[i] for i in pick}
    return list(range(n_nodes)), sorted(edges)


def random_multiway_cut_instance(rng, max_edges: int = 8) -> MultiwayCutInstance:
    n = int(rng.integers(3, 6))
    m = int(rng.integers(n, max_edges + 1))
    nodes, edges = random_digraph(rng, n, m)
    k = int(rng.integers(2, min(n, 3) + 1))
    terminals = sorted(int(x) for x in rng.choice(n, size=k, replace=False))
    return MultiwayCutInstance(nodes, edges, terminals, int(rng.integers(0, 4)))


def random_multicut_instance(rng, max_edges: int = 8):
    n = int(rng.integers(3, 7))
    m = int(rng.integers(n, max_edges + 1))
    nodes, edges = random_digraph(rng, n, m)
    n_pairs = int(rng.integers(1, 4))
    pairs = []
    while len(pairs) < n_pairs:
        s, t = (int(x) for x in rng.choice(n, size=2, replace=False))
        if (s, t) not in pairs:
            pairs.append((s, t))
    return nodes, edges, pairs


def summarize(result_targets: list[Edge] | None, value: float | None = None) -> dict:
    if result_targets is None:
        return {"status": "infeasible"}
    out = {"status": "ok", "targets": [list(e) for e in result_targets], "size": len(result_targets)}
    if value is not None:
        out["f_star"] = value
    return out

