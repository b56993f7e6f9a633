import math
from collections import Counter

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from trafficattack.demo import grid_city
from trafficattack.geo import haversine_m
from trafficattack.rides import (SECONDS_PER_DAY, CandidatePool, CsvSchemaError, Ride, SensorDatum,
                                 assign_sensors, draw_start_time, generate_rides, load_intensity,
                                 load_rides, load_sensors, normalize_intensity, rides_hash,
                                 sample_candidate_paths, save_rides, synthesize_rides)
from helpers import coord, two_way

FLAT = np.full(24, 1 / 24)


def grid(n=4):
    return grid_city(n, 300, seed=3)


# ---------------------------------------------------------------- sensors

def test_assign_sensors_nearest_and_rounded_mean():
    g = two_way([(1, 2), (2, 3)])
    lat, lon = g.nodes[2]
    data = [SensorDatum(lat, lon, 10), SensorDatum(lat + 1e-5, lon, 13),
            SensorDatum(*g.nodes[3], 4)]
    # 11.5 rounds half-up to 12
    assert assign_sensors(g, data) == {2: 12, 3: 4}
    assert assign_sensors(g, []) == {}


@given(st.lists(st.tuples(st.floats(-3000, 3000), st.floats(-3000, 6000)), min_size=1, max_size=12))
def test_assign_sensors_matches_brute_force(points):
    g = grid(4)
    data = [SensorDatum(*coord(n, e), 1) for n, e in points]
    got = assign_sensors(g, data)
    expected = Counter()
    for d in data:
        best = min(g.node_list(), key=lambda n: (haversine_m((d.lat, d.lon), g.nodes[n]), n))
        expected[best] = 1
    assert got == dict(expected)


# ---------------------------------------------------------------- candidate pool

def _lex_paths(g):
    h = nx.DiGraph([(u, v, {"w": e.length_m}) for (u, v), e in g.edges.items()])
    out = {}
    for s in sorted(h):
        for t in sorted(h):
            if s != t and nx.has_path(h, s, t):
                out[(s, t)] = min(nx.all_shortest_paths(h, s, t, weight="w"))
    return out


def test_pool_with_full_load_is_every_sensor_touching_path():
    g = grid(3)
    sensors = {1: 5, 9: 5}
    pool = sample_candidate_paths(g, sensors, np.random.default_rng(0), p_load=1.0)
    expected = {k: tuple(sorted(set(p) & set(sensors))) for k, p in _lex_paths(g).items()
                if set(p) & set(sensors)}
    got = {(int(s), int(t)): ss for s, t, ss in zip(pool.start, pool.end, pool.sensors)}
    assert got == expected


def test_pool_admission_rate():
    g = grid(5)
    full = sample_candidate_paths(g, {13: 1}, np.random.default_rng(0), p_load=1.0)
    part = sample_candidate_paths(g, {13: 1}, np.random.default_rng(0), p_load=0.3)
    n = len(full)
    assert abs(len(part) - 0.3 * n) < 4 * math.sqrt(n * 0.3 * 0.7)
    assert len(sample_candidate_paths(g, {13: 1}, np.random.default_rng(0), p_load=0.0)) == 0
    with pytest.raises(ValueError):
        sample_candidate_paths(g, {13: 1}, np.random.default_rng(0), p_load=1.2)


# ---------------------------------------------------------------- generation

def test_length_weighting_follows_gaussian_density():
    pool = CandidatePool(np.array([1, 1]), np.array([2, 3]), np.array([8000.0, 9000.0]), [(1,), (1,)])
    g = two_way([(1, 2), (1, 3)])
    res = generate_rides(g, {1: 20000}, pool, FLAT, np.random.default_rng(1), 8000, 1000)
    k = Counter(r.end for r in res.rides)
    # weight ratio is exp(-1/2) for a path one sigma from the mean
    p = math.exp(-0.5) / (1 + math.exp(-0.5))
    assert abs(k[3] / 20000 - p) < 4 * math.sqrt(p * (1 - p) / 20000)


def test_start_times_follow_intensity():
    w = normalize_intensity(np.arange(1, 25, dtype=float))
    rng = np.random.default_rng(7)
    draws = np.array([draw_start_time(w, rng) for _ in range(24000)])
    assert draws.min() >= 0 and draws.max() < SECONDS_PER_DAY
    hours = np.bincount(draws // 3600, minlength=24)
    assert chisquare(hours, w * len(draws)).pvalue > 1e-3
    # uniform inside the hour
    secs = np.bincount(draws % 3600 // 600, minlength=6)
    assert chisquare(secs).pvalue > 1e-3


def test_zero_count_sensor_blocks_its_paths():
    pool = CandidatePool(np.array([1, 1]), np.array([2, 3]), np.array([8000.0, 8000.0]), [(1, 2), (1,)])
    g = two_way([(1, 2), (1, 3)])
    res = generate_rides(g, {1: 5, 2: 0}, pool, FLAT, np.random.default_rng(0))
    assert all(r.end == 3 for r in res.rides) and res.residual == {1: 0, 2: 0}


def test_empty_pool_is_exhausted():
    g = two_way([(1, 2)])
    empty = CandidatePool(np.zeros(0, int), np.zeros(0, int), np.zeros(0), [])
    res = generate_rides(g, {1: 3}, empty, FLAT, np.random.default_rng(0))
    assert res.rides == [] and res.pool_exhausted and res.residual == {1: 3}
    res = generate_rides(g, {}, empty, FLAT, np.random.default_rng(0))
    assert res.rides == [] and not res.pool_exhausted


@given(st.dictionaries(st.integers(1, 16), st.integers(0, 40), max_size=5),
       st.floats(0.05, 1.0), st.integers(0, 2**20))
def test_generation_invariants(sensors, p_load, seed):
    g = grid(4)
    rng = np.random.default_rng(seed)
    pool = sample_candidate_paths(g, sensors, rng, p_load)
    res = generate_rides(g, sensors, pool, FLAT, rng, mu=1000, sigma=500)
    assert res.initial == sensors
    assert all(x >= 0 for x in res.residual.values())
    used = Counter(s for ss in res.path_sensors for s in ss)
    for s in sensors:
        assert sensors[s] - res.residual[s] == used[s]
    if res.pool_exhausted:
        assert any(res.residual.values())
    else:
        assert not any(res.residual.values())
    pairs = set(zip(pool.start.tolist(), pool.end.tolist()))
    assert all((r.start, r.end) in pairs for r in res.rides)
    keys = [(r.theta, r.start, r.end) for r in res.rides]
    assert keys == sorted(keys)


def test_synthesis_is_seeded():
    g = grid(4)
    data = [SensorDatum(*g.nodes[6], 30), SensorDatum(*g.nodes[11], 20)]
    a = synthesize_rides(g, data, FLAT, seed=4, p_load=0.5, mu=900, sigma=400)
    b = synthesize_rides(g, data, FLAT, seed=4, p_load=0.5, mu=900, sigma=400)
    c = synthesize_rides(g, data, FLAT, seed=5, p_load=0.5, mu=900, sigma=400)
    assert a.rides == b.rides and rides_hash(a.rides) == rides_hash(b.rides)
    assert a.rides != c.rides


# ---------------------------------------------------------------- io

def test_ride_validation():
    with pytest.raises(ValueError):
        Ride(1, 1, 0).validate()
    with pytest.raises(ValueError):
        Ride(1, 2, SECONDS_PER_DAY).validate()


def test_rides_roundtrip(tmp_path):
    rides = [Ride(1, 2, 5), Ride(3, 1, 86399)]
    save_rides(rides, tmp_path / "r.csv")
    assert load_rides(tmp_path / "r.csv") == rides


@pytest.mark.parametrize("text,row", [
    ("lat,lon,count\n1,2,3\n", 1),
    ("lat,lon,daily_count\n1,2,3\n1,x,3\n", 3),
    ("lat,lon,daily_count\n1,2,-3\n", 2),
    ("lat,lon,daily_count\n91,2,3\n", 2),
])
def test_sensor_csv_errors_name_the_row(tmp_path, text, row):
    p = tmp_path / "s.csv"
    p.write_text(text)
    with pytest.raises(CsvSchemaError) as info:
        load_sensors(p)
    assert info.value.row == row


def test_intensity_csv(tmp_path):
    p = tmp_path / "i.csv"
    p.write_text("hour,weight\n" + "".join(f"{h},{h + 1}\n" for h in range(24)))
    w = load_intensity(p)
    assert w.sum() == pytest.approx(1) and w[23] / w[0] == pytest.approx(24)
    p.write_text("hour,weight\n" + "".join(f"{h},1\n" for h in range(23)))
    with pytest.raises(CsvSchemaError, match="24"):
        load_intensity(p)
    p.write_text("hour,weight\n" + "".join(f"{h},0\n" for h in range(24)))
    with pytest.raises(ValueError):
        load_intensity(p)
