"""Small builders shared by the test modules."""

import math

from hypothesis import strategies as st

from trafficattack.network import RoadNetwork

LAT0, LON0 = 41.85, -87.70
M_PER_DEG_LAT = 6_371_000 * math.pi / 180


def coord(north_m=0.0, east_m=0.0):
    return (LAT0 + north_m / M_PER_DEG_LAT,
            LON0 + east_m / (M_PER_DEG_LAT * math.cos(math.radians(LAT0))))


def net(edges, length=100.0, lanes=1, coords=None):
    """Network from (u, v) or (u, v, length, lanes) tuples; nodes spread on a line."""
    g = RoadNetwork()
    ids = sorted({x for e in edges for x in e[:2]})
    for i, n in enumerate(ids):
        g.add_node(n, (coords or {}).get(n, coord(0.0, 1000.0 * i)))
    for e in edges:
        u, v = e[:2]
        g.add_edge(u, v, e[2] if len(e) > 2 else length, e[3] if len(e) > 3 else lanes)
    return g


def two_way(pairs, **kw):
    out = []
    for u, v in pairs:
        out += [(u, v), (v, u)]
    return net(out, **kw)


@st.composite
def digraphs(draw, min_nodes=2, max_nodes=7, strongly=False):
    """Simple digraphs as (nodes, edges); ``strongly`` adds a Hamiltonian cycle."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    chosen = set(draw(st.lists(st.sampled_from(pairs), max_size=3 * n, unique=True)))
    if strongly:
        perm = draw(st.permutations(range(n)))
        chosen |= {(perm[i], perm[(i + 1) % n]) for i in range(n)}
    return list(range(n)), sorted(chosen)


# acceptance verdicts, printed by the terminal-summary hook in conftest
VERDICTS: dict[int, tuple[str, str, str]] = {}
