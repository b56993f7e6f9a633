"""Synthetic inputs: grid cities, sensors, a diurnal intensity profile and a small map extract."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import quoteattr

import numpy as np

from .geo import EARTH_RADIUS_M, haversine_m
from .network import RoadNetwork
from .rides import SensorDatum

ORIGIN = (41.85, -87.70)
DATA_DIR = Path(__file__).parent / "data"


def _offset(origin, north_m: float, east_m: float) -> tuple[float, float]:
    lat0, lon0 = origin
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    dlon = math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat0 + dlat, lon0 + dlon


def grid_city(n: int = 10, spacing_m: float = 800.0, jitter: float = 0.05, seed: int = 0,
              arterial_every: int = 5, origin=ORIGIN) -> RoadNetwork:
    """An n x n two-way street grid; node ``r*n + c + 1`` sits at row r, column c.

    Coordinates are jittered by up to ``jitter * spacing_m`` so that path
    lengths rarely tie. Every ``arterial_every``-th row and column has two
    lanes, the rest one.
    """
    if n < 2:
        raise ValueError("grid needs at least 2 rows")
    rng = np.random.default_rng(seed)
    g = RoadNetwork()
    shake = rng.uniform(-jitter, jitter, size=(n * n, 2)) * spacing_m
    for r in range(n):
        for c in range(n):
            k = r * n + c
            g.add_node(k + 1, _offset(origin, r * spacing_m + shake[k, 0], c * spacing_m + shake[k, 1]))

    def link(a, b, lanes):
        d = haversine_m(g.nodes[a], g.nodes[b])
        g.add_edge(a, b, d, lanes)
        g.add_edge(b, a, d, lanes)

    for r in range(n):
        for c in range(n):
            k = r * n + c + 1
            if c + 1 < n:
                link(k, k + 1, 2 if r % arterial_every == 0 else 1)
            if r + 1 < n:
                link(k, k + n, 2 if c % arterial_every == 0 else 1)
    return g


def grid_sensors(g: RoadNetwork, k: int, daily_count: float, seed: int = 0,
                 spread: float = 0.25) -> list[SensorDatum]:
    """``k`` sensors on distinct random nodes, counts varying by +-``spread``."""
    rng = np.random.default_rng(seed)
    nodes = g.node_list()
    pick = sorted(int(i) for i in rng.choice(len(nodes), size=k, replace=False))
    out = []
    for i in pick:
        lat, lon = g.nodes[nodes[i]]
        # sensors sit a few meters off the intersection, like real count stations
        lat, lon = _offset((lat, lon), 3.0, 2.0)
        count = round(daily_count * (1 + rng.uniform(-spread, spread)))
        out.append(SensorDatum(lat, lon, float(count)))
    return out


def diurnal_intensity() -> np.ndarray:
    """Hourly weights with a morning and an evening peak over a night floor."""
    h = np.arange(24) + 0.5
    w = 0.15 + np.exp(-0.5 * ((h - 8.0) / 1.5) ** 2) + 1.2 * np.exp(-0.5 * ((h - 17.5) / 2.0) ** 2)
    return w / w.sum()


# ---------------------------------------------------------------- map extract

def demo_extract_xml() -> str:
    """A small OSM-style extract exercising every pipeline stage.

    A 4 x 4 block grid with mid-block pass-through nodes, two one-way
    streets, a pair of nodes 8 m apart that must merge, a footway that is
    dropped, an island of two streets joined to the main grid only by
    connectivity repair, and a way referencing an undeclared node.
    """
    nodes: dict[int, tuple[float, float]] = {}
    ways: list[tuple[int, list[int], dict]] = []
    spacing = 400.0

    def node(nid, north, east):
        nodes[nid] = _offset(ORIGIN, north, east)
        return nid

    corner = {(r, c): node(1000 + 10 * r + c, r * spacing, c * spacing) for r in range(4) for c in range(4)}
    mid_id = 2000
    wid = 1
    classes = ["primary", "residential", "tertiary", "secondary"]
    for r in range(4):
        for c in range(3):
            mid_id += 1
            m = node(mid_id, r * spacing + 6.0, c * spacing + spacing / 2)
            tags = {"highway": classes[r], "name": f"Row {r}"}
            if r == 1 and c == 1:
                tags["oneway"] = "yes"
            ways.append((wid, [corner[r, c], m, corner[r, c + 1]], tags))
            wid += 1
    for c in range(4):
        for r in range(3):
            mid_id += 1
            m = node(mid_id, r * spacing + spacing / 2, c * spacing - 5.0)
            tags = {"highway": "residential" if c in (1, 2) else "unclassified", "name": f"Col {c}"}
            if c == 2 and r == 0:
                tags["oneway"] = "true"
            ways.append((wid, [corner[r, c], m, corner[r + 1, c]], tags))
            wid += 1
    # near-duplicate of a corner, reached by a service lane
    node(3001, 3 * spacing + 8.0, 3 * spacing + 1.0)
    node(3002, 3 * spacing + 150.0, 3 * spacing + 160.0)
    ways.append((wid, [3001, 3002], {"highway": "service"}))
    wid += 1
    # footway, never admitted
    node(3003, 1.5 * spacing, 1.5 * spacing)
    ways.append((wid, [corner[1, 1], 3003, corner[2, 2]], {"highway": "footway"}))
    wid += 1
    # island east of the grid
    node(4001, 0.0, 4 * spacing + 300.0)
    node(4002, spacing, 4 * spacing + 320.0)
    node(4003, 2 * spacing, 4 * spacing + 310.0)
    ways.append((wid, [4001, 4002, 4003], {"highway": "motorway", "oneway": "yes"}))
    wid += 1
    ways.append((wid, [4003, 4001], {"highway": "trunk", "oneway": "1"}))
    wid += 1
    # dangling reference: rejected with a diagnostic
    ways.append((wid, [corner[0, 0], 9999], {"highway": "residential"}))

    lines = ['<?xml version="1.0" encoding="UTF-8"?>', '<osm version="0.6" generator="trafficattack-demo">']
    for nid in sorted(nodes):
        lat, lon = nodes[nid]
        lines.append(f'  <node id="{nid}" lat="{lat:.7f}" lon="{lon:.7f}"/>')
    for w, refs, tags in ways:
        lines.append(f'  <way id="{w}">')
        lines += [f'    <nd ref="{r}"/>' for r in refs]
        lines += [f"    <tag k={quoteattr(k)} v={quoteattr(v)}/>" for k, v in tags.items()]
        lines.append("  </way>")
    lines.append("</osm>")
    return "\n".join(lines) + "\n"


def write_sensors_csv(data: list[SensorDatum], path) -> None:
    with open(path, "w") as fh:
        fh.write("lat,lon,daily_count\n")
        for d in data:
            fh.write(f"{d.lat:.7f},{d.lon:.7f},{d.daily_count:g}\n")


def write_intensity_csv(weights, path) -> None:
    with open(path, "w") as fh:
        fh.write("hour,weight\n")
        for h, w in enumerate(weights):
            fh.write(f"{h},{w:.9f}\n")


def write_demo_data(directory=DATA_DIR) -> None:
    """Regenerate the shipped demo files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "demo_extract.osm").write_text(demo_extract_xml())
    g = grid_city(10, 800.0, seed=0)
    g.save(d / "demo_grid.graph")
    write_sensors_csv(grid_sensors(g, 8, 400, seed=0), d / "demo_sensors.csv")
    write_intensity_csv(diurnal_intensity(), d / "demo_intensity.csv")


if __name__ == "__main__":
    write_demo_data()
