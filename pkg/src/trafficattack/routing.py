"""Deterministic shortest paths over a RoadNetwork.

Every shortest path produced here is the lexicographically smallest node
sequence among all shortest paths: distances *to* a destination are computed
once (Dijkstra on the reversed graph) and each node then steps to its
smallest-id successor that stays on a shortest path. The resulting
next-hop table is an in-tree per destination, which is what makes
all-pairs path pools cheap to materialise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .network import RoadNetwork

# distances are sums of at most a few thousand float lengths in meters
_ABS_TOL = 1e-6
_REL_TOL = 1e-12


@dataclass
class GraphArrays:
    """Array view of a RoadNetwork with node and edge indices in sorted-id order."""

    node_ids: np.ndarray          # index -> node id
    index: dict                   # node id -> index
    src: np.ndarray               # per edge, node index
    dst: np.ndarray
    length: np.ndarray
    lanes: np.ndarray
    indptr: np.ndarray            # CSR row pointers over edges grouped by src

    @property
    def n(self) -> int:
        return len(self.node_ids)

    @property
    def m(self) -> int:
        return len(self.src)

    @classmethod
    def from_network(cls, g: RoadNetwork) -> "GraphArrays":
        node_ids = np.array(g.node_list(), dtype=np.int64)
        index = {int(n): i for i, n in enumerate(node_ids)}
        el = g.edge_list()
        src = np.array([index[u] for u, _ in el], dtype=np.int64)
        dst = np.array([index[v] for _, v in el], dtype=np.int64)
        length = np.array([g.edges[e].length_m for e in el], dtype=float)
        lanes = np.array([g.edges[e].lanes for e in el], dtype=np.int64)
        indptr = np.searchsorted(src, np.arange(len(node_ids) + 1)).astype(np.int64)
        return cls(node_ids, index, src, dst, length, lanes, indptr)

    def edge_id(self, u_idx, v_idx):
        """Edge ids for (u, v) index pairs; -1 where no such edge exists."""
        keys = self.src * self.n + self.dst
        q = np.asarray(u_idx, dtype=np.int64) * self.n + np.asarray(v_idx, dtype=np.int64)
        pos = np.searchsorted(keys, q)
        pos_c = np.minimum(pos, max(self.m - 1, 0))
        ok = (pos < self.m) & (keys[pos_c] == q) if self.m else np.zeros_like(q, dtype=bool)
        return np.where(ok, pos_c, -1)

    def edge_key(self, k: int) -> tuple[int, int]:
        return int(self.node_ids[self.src[k]]), int(self.node_ids[self.dst[k]])

    def edge_ids_of(self, pairs) -> np.ndarray:
        pairs = list(pairs)
        if not pairs:
            return np.zeros(0, dtype=np.int64)
        u = [self.index[int(a)] for a, _ in pairs]
        v = [self.index[int(b)] for _, b in pairs]
        ids = self.edge_id(u, v)
        if (ids < 0).any():
            bad = [p for p, i in zip(pairs, ids) if i < 0]
            raise KeyError(f"edges not in network: {bad[:5]}")
        return ids


def _weights(ga: GraphArrays, weight: str) -> np.ndarray:
    if weight == "length":
        return ga.length
    if weight == "hops":
        return np.ones(ga.m)
    raise ValueError(f"unknown weight {weight!r}")


def next_hops(ga: GraphArrays, targets, weight: str = "length",
              active: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Distances and next hops towards each target.

    Returns ``(dist, nxt)`` of shape (n, len(targets)); ``nxt[u, j]`` is the
    node index following u on the canonical shortest path to ``targets[j]``,
    or -1 when u is the target or cannot reach it. ``active`` is an optional
    boolean edge mask (False = removed edge).
    """
    targets = np.asarray(targets, dtype=np.int64)
    n = ga.n
    w = _weights(ga, weight)
    mask = np.ones(ga.m, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    # reversed graph: edge v <- u stored as (v, u)
    rev = csr_matrix((w[mask], (ga.dst[mask], ga.src[mask])), shape=(n, n))
    dist = dijkstra(rev, directed=True, indices=targets).T  # (n, k)
    if dist.ndim == 1:
        dist = dist[:, None]

    du = dist[ga.src]                # (m, k)
    dv = dist[ga.dst]
    tol = _ABS_TOL + _REL_TOL * np.abs(np.where(np.isfinite(du), du, 0.0))
    with np.errstate(invalid="ignore"):  # inf - inf where unreachable
        tight = np.isfinite(du) & np.isfinite(dv) & (np.abs(w[:, None] + dv - du) <= tol)
    tight &= mask[:, None]
    cand = np.where(tight, ga.dst[:, None], n)

    nxt = np.full((n, len(targets)), n, dtype=np.int64)
    has_out = ga.indptr[1:] > ga.indptr[:-1]
    if ga.m:
        starts = ga.indptr[:-1][has_out]
        nxt[has_out] = np.minimum.reduceat(cand, starts, axis=0)
    nxt[nxt == n] = -1
    nxt[targets, np.arange(len(targets))] = -1
    return dist, nxt


def follow(nxt_col: np.ndarray, s: int, t: int) -> list[int] | None:
    """Node index sequence from s to t along a next-hop column; None if unreachable."""
    if s == t:
        return [s]
    path = [s]
    cur = s
    while cur != t:
        cur = int(nxt_col[cur])
        if cur < 0:
            return None
        path.append(cur)
    return path


def shortest_path(g: RoadNetwork, s: int, t: int, weight: str = "length") -> list[int] | None:
    """Canonical shortest path between node ids, as a node id list."""
    ga = GraphArrays.from_network(g)
    _, nxt = next_hops(ga, [ga.index[t]], weight)
    p = follow(nxt[:, 0], ga.index[s], ga.index[t])
    return None if p is None else [int(ga.node_ids[i]) for i in p]


def route_edges(ga: GraphArrays, pairs, weight: str = "length",
                active: np.ndarray | None = None, chunk: int = 256) -> list[np.ndarray | None]:
    """Edge-id routes for (start_idx, end_idx) pairs; None where unreachable."""
    pairs = [(int(s), int(t)) for s, t in pairs]
    routes: list[np.ndarray | None] = [None] * len(pairs)
    by_target: dict[int, list[int]] = {}
    for i, (_, t) in enumerate(pairs):
        by_target.setdefault(t, []).append(i)
    targets = sorted(by_target)
    for c0 in range(0, len(targets), chunk):
        tchunk = targets[c0:c0 + chunk]
        _, nxt = next_hops(ga, tchunk, weight, active)
        for j, t in enumerate(tchunk):
            col = nxt[:, j]
            for i in by_target[t]:
                p = follow(col, pairs[i][0], t)
                if p is None or len(p) < 2:
                    continue
                routes[i] = ga.edge_id(p[:-1], p[1:])
    return routes


@dataclass
class PathPool:
    """All canonical shortest paths between ordered node pairs.

    Path ``k`` runs from ``src[k]`` to ``dst[k]`` (node indices). Membership
    is stored as flat (path, item) incidence arrays for edges and for nodes.
    """

    src: np.ndarray
    dst: np.ndarray
    length: np.ndarray
    edge_path: np.ndarray
    edge_item: np.ndarray
    node_path: np.ndarray
    node_item: np.ndarray

    def __len__(self) -> int:
        return len(self.src)


def all_pairs_paths(ga: GraphArrays, weight: str = "length",
                    active: np.ndarray | None = None, chunk: int = 128) -> PathPool:
    """One canonical shortest path per reachable ordered pair (v, w), v != w.

    Paths are numbered by (v, w) in ascending index order.
    """
    n = ga.n
    srcs, dsts, lens = [], [], []
    e_path, e_item, n_path, n_item = [], [], [], []
    n_paths = 0
    blocks = []
    for c0 in range(0, n, chunk):
        tchunk = np.arange(c0, min(n, c0 + chunk))
        dist, nxt = next_hops(ga, tchunk, weight, active)
        # path length in meters is needed even for hop routing (ride sampling uses it)
        s_grid, j_grid = np.meshgrid(np.arange(n), np.arange(len(tchunk)), indexing="ij")
        t_grid = tchunk[j_grid]
        ok = (s_grid != t_grid) & np.isfinite(dist)
        blocks.append((s_grid[ok], t_grid[ok], j_grid[ok], nxt))
    # number paths globally in (v, w) order
    all_s = np.concatenate([b[0] for b in blocks]) if blocks else np.zeros(0, np.int64)
    all_t = np.concatenate([b[1] for b in blocks]) if blocks else np.zeros(0, np.int64)
    order_key = all_s * n + all_t
    rank = np.empty(len(order_key), dtype=np.int64)
    rank[np.argsort(order_key, kind="stable")] = np.arange(len(order_key))
    offset = 0
    for s, t, j, nxt in blocks:
        ids = rank[offset:offset + len(s)]
        offset += len(s)
        cur = s.copy()
        total = np.zeros(len(s))
        alive = np.ones(len(s), dtype=bool)
        n_path.append(ids)
        n_item.append(cur.copy())
        while alive.any():
            idx = np.nonzero(alive)[0]
            c = cur[idx]
            nx = nxt[c, j[idx]]
            eid = ga.edge_id(c, nx)
            e_path.append(ids[idx])
            e_item.append(eid)
            total[idx] += ga.length[eid]
            n_path.append(ids[idx])
            n_item.append(nx)
            cur[idx] = nx
            alive[idx] = nx != t[idx]
        srcs.append((ids, s))
        dsts.append((ids, t))
        lens.append((ids, total))
    src = np.empty(n_paths + len(rank), dtype=np.int64)
    dst = np.empty_like(src)
    length = np.empty(len(src))
    for (ids, s), (_, t), (_, L) in zip(srcs, dsts, lens):
        src[ids], dst[ids], length[ids] = s, t, L

    def cat(xs, dtype=np.int64):
        return np.concatenate(xs).astype(dtype) if xs else np.zeros(0, dtype)

    return PathPool(src, dst, length, cat(e_path), cat(e_item), cat(n_path), cat(n_item))
