"""Traffic-quality objective and the closed-form hop-count traffic model."""

from __future__ import annotations

import math
from collections import deque
from typing import Iterable, Sequence

from .network import RoadNetwork

UNREACHABLE = math.inf


def f_star(times: Iterable[float]) -> float:
    """Mean reciprocal ride time; unreachable or unfinished rides contribute 0."""
    times = list(times)
    if not times:
        raise ValueError("f* is undefined for an empty ride set")
    total = 0.0
    for T in times:
        if T == UNREACHABLE:
            continue
        if not T > 0:
            raise ValueError(f"ride time must be positive, got {T}")
        total += 1.0 / T
    return total / len(times)


def hop_distances(g: RoadNetwork, source: int, removed: frozenset | set = frozenset()) -> dict[int, int]:
    """Breadth-first hop counts from ``source``, ignoring edges in ``removed``."""
    if source not in g.nodes:
        raise KeyError(f"unknown node {source}")
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.succ[u]:
            if v not in dist and (u, v) not in removed:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def m_empty_time(g: RoadNetwork, start: int, end: int,
                 removed: frozenset | set = frozenset()) -> float:
    """Hop-count shortest distance, or UNREACHABLE."""
    if end not in g.nodes:
        raise KeyError(f"unknown node {end}")
    return hop_distances(g, start, removed).get(end, UNREACHABLE)


def m_empty_times(g: RoadNetwork, pairs: Sequence[tuple[int, int]],
                  removed: Iterable = ()) -> list[float]:
    removed = frozenset(map(tuple, removed))
    cache: dict[int, dict[int, int]] = {}
    out = []
    for s, t in pairs:
        if s not in cache:
            cache[s] = hop_distances(g, s, removed)
        if t not in g.nodes:
            raise KeyError(f"unknown node {t}")
        out.append(cache[s].get(t, UNREACHABLE))
    return out


def f_star_m_empty(g: RoadNetwork, pairs: Sequence[tuple[int, int]], removed: Iterable = ()) -> float:
    return f_star(m_empty_times(g, pairs, removed))
