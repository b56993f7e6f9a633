"""Road graph construction from map extracts.

The pipeline turns an OSM-style XML extract into a simulation-ready directed
graph in four stages: extraction with lane classification, merging of nearby
nodes, strong-connectivity repair and contraction of pass-through nodes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geo import chord_for_distance, haversine_m, to_unit_xyz

log = logging.getLogger(__name__)

LANES_BY_CLASS = {
    "motorway": 4,
    "trunk": 4,
    "primary": 3,
    "secondary": 3,
    "tertiary": 2,
    "unclassified": 2,
    "residential": 1,
    "service": 1,
}
ADMITTED_CLASSES = frozenset(LANES_BY_CLASS)
ONEWAY_VALUES = frozenset({"yes", "true", "1"})
MIN_EDGE_LENGTH_M = 1.0


class ExtractError(ValueError):
    """Raised for malformed map extracts."""


class EmptyNetworkError(ExtractError):
    """The extract holds no admitted ways."""


def lanes_for_class(highway_class: str) -> int:
    return LANES_BY_CLASS[highway_class]


@dataclass(frozen=True)
class RawWay:
    way_id: int
    node_ids: tuple[int, ...]
    highway_class: str
    oneway: bool


@dataclass
class Edge:
    length_m: float
    lanes: int


class RoadNetwork:
    """Directed road graph: node id -> (lat, lon), (u, v) -> Edge.

    Adjacency sets are kept in sync with the edge map so the pipeline stages
    can query predecessors and successors cheaply.
    """

    def __init__(self, nodes: dict[int, tuple[float, float]] | None = None,
                 edges: dict[tuple[int, int], Edge] | None = None):
        self.nodes: dict[int, tuple[float, float]] = {}
        self.edges: dict[tuple[int, int], Edge] = {}
        self.succ: dict[int, set[int]] = {}
        self.pred: dict[int, set[int]] = {}
        for n, coord in (nodes or {}).items():
            self.add_node(n, coord)
        for (u, v), e in (edges or {}).items():
            self.add_edge(u, v, e.length_m, e.lanes)

    def add_node(self, n: int, coord) -> None:
        self.nodes[n] = (float(coord[0]), float(coord[1]))
        self.succ.setdefault(n, set())
        self.pred.setdefault(n, set())

    def add_edge(self, u: int, v: int, length_m: float, lanes: int) -> None:
        if u == v:
            raise ValueError(f"self-loop at node {u}")
        if u not in self.nodes or v not in self.nodes:
            raise KeyError(f"edge ({u}, {v}) references an unknown node")
        self.edges[(u, v)] = Edge(max(float(length_m), MIN_EDGE_LENGTH_M), int(lanes))
        self.succ[u].add(v)
        self.pred[v].add(u)

    def remove_edge(self, u: int, v: int) -> None:
        del self.edges[(u, v)]
        self.succ[u].discard(v)
        self.pred[v].discard(u)

    def remove_node(self, n: int) -> None:
        for v in list(self.succ[n]):
            self.remove_edge(n, v)
        for u in list(self.pred[n]):
            self.remove_edge(u, n)
        del self.nodes[n], self.succ[n], self.pred[n]

    def copy(self) -> "RoadNetwork":
        return RoadNetwork(dict(self.nodes),
                           {k: Edge(e.length_m, e.lanes) for k, e in self.edges.items()})

    def without_edges(self, removed: Iterable[tuple[int, int]]) -> "RoadNetwork":
        removed = set(map(tuple, removed))
        return RoadNetwork(dict(self.nodes),
                           {k: Edge(e.length_m, e.lanes)
                            for k, e in self.edges.items() if k not in removed})

    # Deterministic indexings used by routing, simulation and reports.
    def node_list(self) -> list[int]:
        return sorted(self.nodes)

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return self.to_text() == other.to_text()

    def __repr__(self) -> str:
        return f"RoadNetwork(nodes={len(self.nodes)}, edges={len(self.edges)})"

    # ---- plain-text graph format ----
    def to_text(self) -> str:
        lines = [f"nodes {len(self.nodes)} edges {len(self.edges)}"]
        for n in self.node_list():
            lat, lon = self.nodes[n]
            lines.append(f"{n} {lat!r} {lon!r}")
        for u, v in self.edge_list():
            e = self.edges[(u, v)]
            lines.append(f"{u} {v} {e.length_m!r} {e.lanes}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RoadNetwork":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty graph file")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "nodes" or head[2] != "edges":
            raise ValueError(f"bad graph header: {lines[0]!r}")
        n_nodes, n_edges = int(head[1]), int(head[3])
        if len(lines) != 1 + n_nodes + n_edges:
            raise ValueError("graph file line count does not match header")
        g = cls()
        for i, ln in enumerate(lines[1:1 + n_nodes], start=2):
            parts = ln.split()
            if len(parts) != 3:
                raise ValueError(f"line {i}: expected '<id> <lat> <lon>'")
            g.add_node(int(parts[0]), (float(parts[1]), float(parts[2])))
        for i, ln in enumerate(lines[1 + n_nodes:], start=2 + n_nodes):
            parts = ln.split()
            if len(parts) != 4:
                raise ValueError(f"line {i}: expected '<u> <v> <length_m> <lanes>'")
            g.add_edge(int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3]))
        return g

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "RoadNetwork":
        return cls.from_text(Path(path).read_text())

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def to_geojson(self, edge_properties: dict | None = None) -> dict:
        """FeatureCollection with one LineString per directed edge.

        ``edge_properties`` maps (u, v) to extra property dicts merged into
        each feature.
        """
        feats = []
        for u, v in self.edge_list():
            e = self.edges[(u, v)]
            (la1, lo1), (la2, lo2) = self.nodes[u], self.nodes[v]
            props = {"u": u, "v": v, "length_m": e.length_m, "lanes": e.lanes}
            if edge_properties and (u, v) in edge_properties:
                props.update(edge_properties[(u, v)])
            feats.append({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": [[lo1, la1], [lo2, la2]]},
                "properties": props,
            })
        return {"type": "FeatureCollection", "features": feats}

    def save_geojson(self, path, edge_properties: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_geojson(edge_properties), indent=1))

    # ---- structure queries ----
    def is_strongly_connected(self) -> bool:
        if not self.nodes:
            return False
        return len(strongly_connected_components(self)) == 1


def strongly_connected_components(g: RoadNetwork) -> list[list[int]]:
    """SCCs as sorted node lists, ordered by their smallest node id."""
    nodes = g.node_list()
    if not nodes:
        return []
    index = {n: i for i, n in enumerate(nodes)}
    rows = [index[u] for u, _ in g.edges]
    cols = [index[v] for _, v in g.edges]
    mat = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, labels = connected_components(mat, directed=True, connection="strong")
    groups: dict[int, list[int]] = {}
    for n, lab in zip(nodes, labels):
        groups.setdefault(int(lab), []).append(n)
    return sorted(groups.values(), key=lambda c: c[0])


# ---------------------------------------------------------------- parsing

def parse_extract(source) -> tuple[list[RawWay], dict[int, tuple[float, float]], list[str]]:
    """Parse an OSM-style XML extract.

    ``source`` may be a path or the XML text itself. Returns the admitted
    ways, the coordinate table of every declared node, and a list of
    diagnostics for ways that were rejected.
    """
    try:
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("<")):
            root = ET.parse(source).getroot()
        else:
            root = ET.fromstring(source)
    except ET.ParseError as exc:
        line, col = exc.position
        raise ExtractError(f"malformed extract at line {line}, column {col}: {exc}") from exc

    coords: dict[int, tuple[float, float]] = {}
    for el in root.iter("node"):
        try:
            nid = int(el.attrib["id"])
            lat, lon = float(el.attrib["lat"]), float(el.attrib["lon"])
        except (KeyError, ValueError) as exc:
            raise ExtractError(f"node element missing id/lat/lon: {el.attrib}") from exc
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise ExtractError(f"node {nid} has out-of-range coordinates ({lat}, {lon})")
        coords[nid] = (lat, lon)

    ways: list[RawWay] = []
    diagnostics: list[str] = []
    for el in root.iter("way"):
        tags = {t.attrib.get("k"): t.attrib.get("v") for t in el.iter("tag")}
        cls = tags.get("highway")
        if cls not in ADMITTED_CLASSES:
            continue
        way_id = int(el.attrib.get("id", -1))
        refs = tuple(int(nd.attrib["ref"]) for nd in el.iter("nd"))
        missing = [r for r in refs if r not in coords]
        if missing:
            diagnostics.append(f"way {way_id} rejected: references undeclared node(s) {missing[:5]}")
            continue
        if len(refs) < 2:
            diagnostics.append(f"way {way_id} rejected: fewer than 2 nodes")
            continue
        oneway = str(tags.get("oneway", "")).strip().lower() in ONEWAY_VALUES
        ways.append(RawWay(way_id, refs, cls, oneway))
    for d in diagnostics:
        log.warning(d)
    return ways, coords, diagnostics


def network_from_ways(ways: Iterable[RawWay], coords: dict[int, tuple[float, float]]) -> RoadNetwork:
    """Stage 1: consecutive way nodes become edges (both directions unless oneway)."""
    g = RoadNetwork()
    for w in ways:
        lanes = lanes_for_class(w.highway_class)
        for a, b in zip(w.node_ids, w.node_ids[1:]):
            if a == b:
                continue
            for n in (a, b):
                if n not in g.nodes:
                    g.add_node(n, coords[n])
            pairs = [(a, b)] if w.oneway else [(a, b), (b, a)]
            for u, v in pairs:
                old = g.edges.get((u, v))
                length = haversine_m(coords[u], coords[v])
                g.add_edge(u, v, length, max(lanes, old.lanes) if old else lanes)
    return g


# ---------------------------------------------------------------- stage 2

class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smallest id stays the representative
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _close_pairs(g: RoadNetwork, radius_m: float) -> list[tuple[int, int]]:
    nodes = g.node_list()
    if len(nodes) < 2:
        return []
    lat = [g.nodes[n][0] for n in nodes]
    lon = [g.nodes[n][1] for n in nodes]
    tree = cKDTree(to_unit_xyz(lat, lon))
    # slightly generous chord radius, then exact haversine filter
    cand = tree.query_pairs(chord_for_distance(radius_m) * (1 + 1e-9) + 1e-15)
    out = []
    for i, j in cand:
        if haversine_m(g.nodes[nodes[i]], g.nodes[nodes[j]]) < radius_m:
            out.append((nodes[i], nodes[j]))
    return sorted(out)


def merge_nearby(g: RoadNetwork, radius_m: float = 20.0) -> RoadNetwork:
    """Merge node groups closer than ``radius_m`` until no such pair is left.

    Groups are connected components of the "closer than radius" relation;
    each group becomes its smallest node id, placed at the mean of the
    group's coordinates. Lanes of the merged edge are the max over the
    contributing edges; lengths are recomputed only for edges touching a
    merged group.
    """
    g = g.copy()
    while True:
        pairs = _close_pairs(g, radius_m)
        if not pairs:
            return g
        uf = _UnionFind(g.nodes)
        for a, b in pairs:
            uf.union(a, b)
        groups: dict[int, list[int]] = {}
        for n in g.node_list():
            groups.setdefault(uf.find(n), []).append(n)
        merged = RoadNetwork()
        for rep, members in groups.items():
            lat = sum(g.nodes[m][0] for m in members) / len(members)
            lon = sum(g.nodes[m][1] for m in members) / len(members)
            merged.add_node(rep, (lat, lon))
        new_edges: dict[tuple[int, int], int] = {}
        kept_length: dict[tuple[int, int], float] = {}
        for (u, v), e in g.edges.items():
            x, y = uf.find(u), uf.find(v)
            if x == y:
                continue
            new_edges[(x, y)] = max(new_edges.get((x, y), 0), e.lanes)
            if len(groups[x]) == 1 and len(groups[y]) == 1:
                kept_length[(x, y)] = e.length_m
        for (x, y), lanes in sorted(new_edges.items()):
            length = kept_length.get((x, y))
            if length is None:
                length = haversine_m(merged.nodes[x], merged.nodes[y])
            merged.add_edge(x, y, length, lanes)
        g = merged


# ---------------------------------------------------------------- stage 3

def _closest_component_pair(g: RoadNetwork, comps: list[list[int]]) -> tuple[int, int]:
    nodes = g.node_list()
    comp_of = {}
    for ci, comp in enumerate(comps):
        for n in comp:
            comp_of[n] = ci
    labels = np.array([comp_of[n] for n in nodes])
    xyz = to_unit_xyz([g.nodes[n][0] for n in nodes], [g.nodes[n][1] for n in nodes])
    tree = cKDTree(xyz)
    best = None
    n_total = len(nodes)
    for i, n in enumerate(nodes):
        k = min(8, n_total)
        while True:
            dist, idx = tree.query(xyz[i], k=k)
            idx = np.atleast_1d(idx)
            other = [j for j in idx if labels[j] != labels[i]]
            if other or k >= n_total:
                break
            k = min(2 * k, n_total)
        # all points at the nearest cross-component chord distance are candidates
        for j in other:
            m = nodes[j]
            d = haversine_m(g.nodes[n], g.nodes[m])
            key = (d, min(n, m), max(n, m))
            if best is None or key < best:
                best = key
    assert best is not None
    return best[1], best[2]


def ensure_strong_connectivity(g: RoadNetwork) -> RoadNetwork:
    """Join the geographically closest pair of SCCs until one SCC remains."""
    if not g.nodes:
        raise ValueError("cannot repair an empty network")
    g = g.copy()
    while True:
        comps = strongly_connected_components(g)
        if len(comps) == 1:
            return g
        x, y = _closest_component_pair(g, comps)
        d = haversine_m(g.nodes[x], g.nodes[y])
        fwd, back = g.edges.get((x, y)), g.edges.get((y, x))
        if fwd is None and back is None:
            g.add_edge(x, y, d, 1)
            g.add_edge(y, x, d, 1)
        elif fwd is None:
            g.add_edge(x, y, d, back.lanes)
            back.length_m = max(d, MIN_EDGE_LENGTH_M)
        else:
            g.add_edge(y, x, d, fwd.lanes)
            fwd.length_m = max(d, MIN_EDGE_LENGTH_M)


# ---------------------------------------------------------------- stage 4

def contractible(g: RoadNetwork, y: int) -> list[tuple[int, int]] | None:
    """Return the (pred, succ) replacements for ``y`` if it can be contracted."""
    preds, succs = g.pred[y], g.succ[y]
    if len(preds) == 1 and len(succs) == 1:
        (x,), (z,) = preds, succs
        if x != z:
            return [(x, z)]
        return None
    if len(preds) == 2 and preds == succs:
        x, z = sorted(preds)
        return [(x, z), (z, x)]
    return None


def contract(g: RoadNetwork) -> RoadNetwork:
    """Remove pass-through nodes, replacing x->y->z by x->z.

    The replacement edge has summed length and max lanes. When x->z
    already exists the shorter of the two is kept (lanes max), so the graph
    stays simple and shortest distances are preserved.
    """
    g = g.copy()
    changed = True
    while changed:
        changed = False
        for y in g.node_list():
            if y not in g.nodes:
                continue
            repl = contractible(g, y)
            if repl is None:
                continue
            new = []
            for x, z in repl:
                a, b = g.edges[(x, y)], g.edges[(y, z)]
                new.append((x, z, a.length_m + b.length_m, max(a.lanes, b.lanes)))
            g.remove_node(y)
            for x, z, length, lanes in new:
                old = g.edges.get((x, z))
                if old is not None:
                    lanes = max(lanes, old.lanes)
                    length = min(length, old.length_m)
                g.add_edge(x, z, length, lanes)
            changed = True
    return g


@dataclass
class BuildReport:
    stages: list[tuple[str, int, int]] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def add(self, stage: str, g: RoadNetwork) -> None:
        self.stages.append((stage, len(g.nodes), len(g.edges)))

    def to_dict(self) -> dict:
        return {"stages": [{"stage": s, "nodes": n, "edges": m} for s, n, m in self.stages],
                "diagnostics": list(self.diagnostics)}


def build_pipeline(g: RoadNetwork, merge_radius_m: float = 20.0,
                   report: BuildReport | None = None) -> RoadNetwork:
    """Run stages 2-4 on an extracted graph."""
    report = report if report is not None else BuildReport()
    report.add("extract", g)
    g = merge_nearby(g, merge_radius_m)
    report.add("merge", g)
    g = ensure_strong_connectivity(g)
    report.add("connect", g)
    g = contract(g)
    report.add("contract", g)
    return g


def build_network(source, merge_radius_m: float = 20.0) -> tuple[RoadNetwork, BuildReport]:
    ways, coords, diags = parse_extract(source)
    report = BuildReport(diagnostics=diags)
    g = network_from_ways(ways, coords)
    if not g.nodes:
        raise EmptyNetworkError("empty network: no admitted ways in extract")
    return build_pipeline(g, merge_radius_m, report), report
