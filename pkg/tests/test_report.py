import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trafficattack.attack import reroute
from trafficattack.report import (LogMismatchError, additional_times, annotate_distances,
                                  binned_disruption_curve, delay_distribution,
                                  distance_to_nearest_target, distances_to_targets, traffic_delta,
                                  write_report)
from trafficattack.rides import Ride
from trafficattack.sim import SimParams, TrafficLog, compute_routes, run
from helpers import net, two_way

EDGES = [(1, 2), (2, 3), (3, 4)]


def log(counts, times=(5.0, 6.0, 7.0), edges=EDGES, h="n"):
    times = np.array(times, dtype=float)
    return TrafficLog(np.zeros(len(times), dtype=np.int64), times, np.zeros(len(times), bool),
                      list(edges), np.array(counts, dtype=np.int64), 10, h, "r")


# ---------------------------------------------------------------- deltas

def test_traffic_delta_means_over_runs():
    d = traffic_delta(log([4, 4, 4]), [log([6, 4, 1]), log([8, 4, 3])])
    assert [x.attacked for x in d] == [7.0, 4.0, 2.0]
    assert [x.delta for x in d] == [3.0, 0.0, -2.0]
    assert [x.kind for x in d] == ["increase", "unchanged", "decrease"]
    assert d[0].per_run.tolist() == [2.0, 4.0]


def test_mismatched_logs_rejected():
    base = log([1, 1, 1])
    with pytest.raises(LogMismatchError):
        traffic_delta(base, [log([1, 1, 1], h="other")])
    with pytest.raises(LogMismatchError):
        traffic_delta(base, [log([1, 1], edges=EDGES[:2])])
    with pytest.raises(ValueError):
        traffic_delta(base, [])


def test_detour_shifts_traffic():
    # direct 1->2->3 (200 m) and detour 1->4->3 (300 m)
    g = net([(1, 2, 100), (2, 3, 100), (1, 4, 150), (4, 3, 150)])
    rides = [Ride(1, 3, t) for t in range(0, 200, 5)]
    p = SimParams(p_slow=0.0, t_max=1000)
    base = run(g, rides, p)
    plan = reroute(g, rides, [(1, 2)], 1.0, np.random.default_rng(0))
    att = run(g, rides, p, routes=plan.routes)
    d = {x.edge: x.delta for x in traffic_delta(base, [att])}
    assert d == {(1, 2): -40.0, (1, 4): 40.0, (2, 3): -40.0, (4, 3): 40.0}
    ids, extra = additional_times(base, att)
    assert len(ids) == 40 and (extra > 0).all()


@given(st.integers(0, 2**16), st.floats(0, 1))
def test_entries_conserved_when_all_finish(seed, rate):
    g = two_way([(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)])
    rng = np.random.default_rng(seed)
    nodes = g.node_list()
    rides = []
    for _ in range(15):
        s, t = rng.choice(nodes, 2, replace=False)
        rides.append(Ride(int(s), int(t), int(rng.integers(0, 50))))
    p = SimParams(p_slow=0.1, t_max=100, seed=seed)
    plan = reroute(g, rides, [(1, 3)], rate, rng)
    base, att = run(g, rides, p), run(g, rides, p, routes=plan.routes)
    assert base.finished.all() and att.finished.all()
    hops_base = sum(len(r) for r in compute_routes(g, rides))
    hops_att = sum(len(r) for r in plan.routes)
    deltas = traffic_delta(base, [att])
    assert sum(x.delta for x in deltas) == hops_att - hops_base


# ---------------------------------------------------------------- distances

def test_distance_modes_on_a_line():
    # nodes 1..4 sit 1 km apart on an east-west line
    g = net([(1, 2), (2, 3), (3, 4)])
    assert distance_to_nearest_target(g, (1, 2), [(3, 4)]) == pytest.approx(2000, rel=1e-3)
    assert distance_to_nearest_target(g, (1, 2), [(3, 4)], "endpoint") == pytest.approx(1000, rel=1e-3)
    d = distances_to_targets(g, EDGES, [(3, 4), (1, 2)])
    assert d[0] == 0.0 and d[2] == 0.0 and d[1] == pytest.approx(1000, rel=1e-3)
    with pytest.raises(ValueError):
        distances_to_targets(g, EDGES, [])
    with pytest.raises(ValueError):
        distances_to_targets(g, EDGES, [(1, 2)], mode="centroid")


# ---------------------------------------------------------------- curve

def test_curve_ci_closed_form():
    g = net([(1, 2), (2, 3), (3, 4)])
    base = log([10, 10, 10])
    runs = [log([10, 13, 16]), log([10, 15, 12]), log([10, 14, 14])]
    deltas = traffic_delta(base, runs)
    annotate_distances(g, deltas, [(1, 2)])
    curve = binned_disruption_curve(deltas, bin_width_m=5000)
    (all_bin,) = [c for c in curve if c.series == "all"]
    # target excluded; edges (2,3) and (3,4) share one bin
    assert all_bin.n_edges == 2
    per_run = np.array([(3 + 6) / 2, (5 + 2) / 2, (4 + 4) / 2])
    mean = per_run.mean()
    half = 1.96 * per_run.std(ddof=1) / math.sqrt(3)
    assert all_bin.mean == pytest.approx(mean)
    assert all_bin.total == pytest.approx(4 + 4)
    assert (all_bin.ci_lo, all_bin.ci_hi) == (pytest.approx(mean - half), pytest.approx(mean + half))
    assert {c.series for c in curve} == {"all", "increase"}
    with_t = binned_disruption_curve(deltas, 5000, include_targets=True)
    assert [c.n_edges for c in with_t if c.series == "all"] == [3]


def test_curve_without_ci_for_one_run_and_bins_by_width():
    g = net([(1, 2), (2, 3), (3, 4)])
    deltas = traffic_delta(log([5, 5, 5]), [log([5, 2, 9])])
    annotate_distances(g, deltas, [(1, 2)])
    # distances are about 1000 m and 2000 m, well inside 600 m bins 1 and 3
    curve = binned_disruption_curve(deltas, bin_width_m=600)
    lows = {(c.series, c.bin_lo) for c in curve}
    assert lows == {("all", 600.0), ("all", 1800.0), ("decrease", 600.0), ("increase", 1800.0)}
    assert all(c.ci_lo is None and c.ci_hi is None for c in curve)
    with pytest.raises(ValueError):
        binned_disruption_curve(traffic_delta(log([5, 5, 5]), [log([5, 2, 9])]))


# ---------------------------------------------------------------- delays

def test_delay_distribution_by_hand():
    base = log([0, 0, 0], times=[10, 10, 10, 10, math.inf])
    a = log([0, 0, 0], times=[70, 10, 5, math.inf, 10])
    b = log([0, 0, 0], times=[80, 10, 7, 12, 10])
    dist = delay_distribution(base, [a, b], bin_width=60, thresholds=(60, 65))
    # ride 3 unfinished in run a, ride 4 unfinished in the baseline
    assert dist.ride_ids.tolist() == [0, 1, 2] and dist.excluded == 2
    assert dist.mean_delay.tolist() == [65.0, 0.0, -4.0]
    assert (dist.fraction_delayed, dist.fraction_sped_up, dist.fraction_unchanged) == (1 / 3, 1 / 3, 1 / 3)
    assert dist.above == {60: 1, 65: 0}
    assert dist.bin_edges.tolist() == [-60.0, 0.0, 60.0, 120.0]
    assert dist.counts.tolist() == [1, 1, 1]


@given(st.lists(st.tuples(st.integers(1, 500), st.integers(1, 500)), min_size=0, max_size=40),
       st.integers(1, 100))
def test_delay_fractions_partition(pairs, width):
    if not pairs:
        pairs = [(1, 1)]
    base = log([0, 0, 0], times=[p[0] for p in pairs])
    att = log([0, 0, 0], times=[p[1] for p in pairs])
    dist = delay_distribution(base, [att], bin_width=width)
    assert dist.fraction_delayed + dist.fraction_sped_up + dist.fraction_unchanged == pytest.approx(1)
    assert dist.counts.sum() == len(pairs)
    assert dist.bin_edges[0] <= dist.mean_delay.min() and dist.mean_delay.max() < dist.bin_edges[-1]


# ---------------------------------------------------------------- export

def test_write_report(tmp_path):
    g = net([(1, 2, 100), (2, 3, 100), (1, 4, 150), (4, 3, 150)])
    rides = [Ride(1, 3, t) for t in range(0, 100, 5)]
    p = SimParams(p_slow=0.05, t_max=500)
    base = run(g, rides, p)
    runs = []
    for k in range(2):
        plan = reroute(g, rides, [(1, 2)], 0.5, np.random.default_rng(k))
        runs.append(run(g, rides, SimParams(p_slow=0.05, t_max=500, seed=k), routes=plan.routes))
    s = write_report(tmp_path, g, base, runs, [(1, 2)], bin_width_m=100)
    for name in ("edge_delta.csv", "disruption_curve.csv", "delay_hist.csv", "map.geojson", "summary.json"):
        assert (tmp_path / name).exists()
    assert json.loads((tmp_path / "summary.json").read_text()) == json.loads(json.dumps(s))
    assert s["runs"] == 2 and s["targets"] == [[1, 2]]
    assert s["f_star_mean"] < s["f_star_baseline"]
    with open(tmp_path / "edge_delta.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(int(r["u"]), int(r["v"])) for r in rows] == g.edge_list()
    assert [r for r in rows if r["is_target"] == "1"][0]["distance_m"] == "0.0"
    feats = json.loads((tmp_path / "map.geojson").read_text())["features"]
    assert any(f["properties"].get("is_target") for f in feats)
