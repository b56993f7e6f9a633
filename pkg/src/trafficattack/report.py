"""Aggregate baseline and attacked traffic logs into edge deltas, delay statistics and exports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geo import haversine_many
from .network import RoadNetwork
from .objective import f_star
from .sim import TrafficLog

Z95 = 1.96
DEFAULT_THRESHOLDS = (60, 300, 600)


class LogMismatchError(ValueError):
    pass


def _check_same_inputs(baseline: TrafficLog, attacked: Sequence[TrafficLog]) -> None:
    if not attacked:
        raise ValueError("need at least one attacked run")
    for k, a in enumerate(attacked):
        if a.network_hash != baseline.network_hash:
            raise LogMismatchError(f"attacked run {k} was produced on a different network")
        if a.rides_hash and baseline.rides_hash and a.rides_hash != baseline.rides_hash:
            raise LogMismatchError(f"attacked run {k} used a different ride set")
        if a.edges != baseline.edges or len(a.times) != len(baseline.times):
            raise LogMismatchError(f"attacked run {k} has mismatched edges or rides")


# ---------------------------------------------------------------- edge deltas

@dataclass
class EdgeDelta:
    edge: tuple[int, int]
    baseline: int
    attacked: float          # mean over runs
    delta: float
    per_run: np.ndarray      # attacked - baseline for every run
    distance_m: float = math.nan
    is_target: bool = False

    @property
    def kind(self) -> str:
        return "increase" if self.delta > 0 else "decrease" if self.delta < 0 else "unchanged"


def traffic_delta(baseline: TrafficLog, attacked: Sequence[TrafficLog]) -> list[EdgeDelta]:
    _check_same_inputs(baseline, attacked)
    base = baseline.edge_counts.astype(float)
    runs = np.stack([a.edge_counts for a in attacked]).astype(float)  # (runs, m)
    per_run = runs - base
    mean = runs.mean(axis=0)
    return [EdgeDelta(e, int(baseline.edge_counts[i]), float(mean[i]), float(mean[i] - base[i]),
                      per_run[:, i])
            for i, e in enumerate(baseline.edges)]


def _edge_endpoints(g: RoadNetwork, edges) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([g.nodes[u] for u, _ in edges], dtype=float).reshape(-1, 2)
    b = np.array([g.nodes[v] for _, v in edges], dtype=float).reshape(-1, 2)
    return a, b


def distances_to_targets(g: RoadNetwork, edges: Sequence[tuple[int, int]],
                         targets: Sequence[tuple[int, int]], mode: str = "midpoint") -> np.ndarray:
    """Haversine meters from every edge to its nearest target; 0 for targets themselves.

    ``mode="midpoint"`` compares edge midpoints (mean of endpoint
    coordinates); ``mode="endpoint"`` takes the closest pair of endpoints.
    """
    targets = [tuple(t) for t in targets]
    if not targets:
        raise ValueError("distance to the nearest target needs at least one target")
    if mode not in ("midpoint", "endpoint"):
        raise ValueError(f"unknown distance mode {mode!r}")
    ea, eb = _edge_endpoints(g, edges)
    ta, tb = _edge_endpoints(g, targets)
    if mode == "midpoint":
        em, tm = (ea + eb) / 2, (ta + tb) / 2
        d = haversine_many(em[:, None, 0], em[:, None, 1], tm[None, :, 0], tm[None, :, 1])
    else:
        d = np.full((len(edges), len(targets)), np.inf)
        for p in (ea, eb):
            for q in (ta, tb):
                d = np.minimum(d, haversine_many(p[:, None, 0], p[:, None, 1], q[None, :, 0], q[None, :, 1]))
    out = d.min(axis=1)
    tset = set(targets)
    out[[i for i, e in enumerate(edges) if tuple(e) in tset]] = 0.0
    return out


def distance_to_nearest_target(g: RoadNetwork, edge: tuple[int, int],
                               targets: Sequence[tuple[int, int]], mode: str = "midpoint") -> float:
    return float(distances_to_targets(g, [edge], targets, mode)[0])


def annotate_distances(g: RoadNetwork, deltas: list[EdgeDelta], targets, mode: str = "midpoint") -> None:
    d = distances_to_targets(g, [x.edge for x in deltas], targets, mode)
    tset = {tuple(t) for t in targets}
    for x, dist in zip(deltas, d.tolist()):
        x.distance_m = dist
        x.is_target = x.edge in tset


# ---------------------------------------------------------------- ride delays

def additional_times(baseline: TrafficLog, attacked: TrafficLog) -> tuple[np.ndarray, np.ndarray]:
    """(ride ids, attacked - baseline T) for rides finished in both runs."""
    both = np.isfinite(baseline.times) & np.isfinite(attacked.times)
    ids = np.flatnonzero(both)
    return ids, attacked.times[ids] - baseline.times[ids]


@dataclass
class DelayDistribution:
    ride_ids: np.ndarray
    mean_delay: np.ndarray      # per ride, averaged over runs
    excluded: int               # rides unfinished in the baseline or any attacked run
    bin_width: int
    bin_edges: np.ndarray
    counts: np.ndarray
    fraction_delayed: float
    fraction_sped_up: float
    fraction_unchanged: float
    above: dict[int, int]

    def summary(self) -> dict:
        return {
            "rides_compared": int(len(self.ride_ids)),
            "rides_excluded_unfinished": self.excluded,
            "fraction_delayed": self.fraction_delayed,
            "fraction_sped_up": self.fraction_sped_up,
            "fraction_unchanged": self.fraction_unchanged,
            "mean_additional_steps": float(self.mean_delay.mean()) if len(self.mean_delay) else 0.0,
            "rides_delayed_above": {str(k): v for k, v in self.above.items()},
        }


def delay_distribution(baseline: TrafficLog, attacked: Sequence[TrafficLog], bin_width: int = 60,
                       thresholds: Sequence[int] = DEFAULT_THRESHOLDS) -> DelayDistribution:
    _check_same_inputs(baseline, attacked)
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    ok = np.isfinite(baseline.times)
    for a in attacked:
        ok &= np.isfinite(a.times)
    ids = np.flatnonzero(ok)
    mean = np.mean([a.times[ids] - baseline.times[ids] for a in attacked], axis=0) if len(ids) else np.zeros(0)
    n = len(ids)
    delayed = int((mean > 0).sum())
    sped = int((mean < 0).sum())
    unchanged = n - delayed - sped
    if n:
        lo = math.floor(mean.min() / bin_width) * bin_width
        hi = (math.floor(mean.max() / bin_width) + 1) * bin_width
        edges = np.arange(lo, hi + bin_width, bin_width, dtype=float)
        counts, _ = np.histogram(mean, bins=edges)
    else:
        edges, counts = np.array([0.0, float(bin_width)]), np.zeros(1, dtype=np.int64)
    return DelayDistribution(
        ids, mean, int(len(ok) - n), bin_width, edges, counts,
        delayed / n if n else 0.0, sped / n if n else 0.0, unchanged / n if n else 1.0,
        {int(t): int((mean > t).sum()) for t in thresholds})


# ---------------------------------------------------------------- distance curve

@dataclass
class CurveBin:
    series: str
    bin_lo: float
    bin_hi: float
    n_edges: int
    mean: float
    total: float        # per-bin sum of run-averaged deltas
    ci_lo: float | None
    ci_hi: float | None


def binned_disruption_curve(deltas: Sequence[EdgeDelta], bin_width_m: float = 50.0,
                            include_targets: bool = False) -> list[CurveBin]:
    """Mean edge delta per distance bin for all, increasing and decreasing edges.

    Edges are classified by their run-averaged delta. The CI is normal
    approximation over runs: each run contributes the mean of its own deltas
    over the bin's edges. With a single run the CI is omitted.
    """
    bin_width_m = float(bin_width_m)  # YAML may hand us an int; keep CSV output uniform
    if bin_width_m <= 0:
        raise ValueError("bin width must be positive")
    use = [x for x in deltas if include_targets or not x.is_target]
    if any(math.isnan(x.distance_m) for x in use):
        raise ValueError("edge deltas need distances; call annotate_distances first")
    out: list[CurveBin] = []
    for series in ("all", "increase", "decrease"):
        members = [x for x in use if series == "all" or x.kind == series]
        bins: dict[int, list[EdgeDelta]] = {}
        for x in members:
            bins.setdefault(int(x.distance_m // bin_width_m), []).append(x)
        for b in sorted(bins):
            xs = bins[b]
            per_run = np.mean([x.per_run for x in xs], axis=0)   # (runs,)
            mean = float(np.mean([x.delta for x in xs]))
            ci_lo = ci_hi = None
            if len(per_run) >= 2:
                se = float(np.std(per_run, ddof=1)) / math.sqrt(len(per_run))
                ci_lo, ci_hi = mean - Z95 * se, mean + Z95 * se
            out.append(CurveBin(series, b * bin_width_m, (b + 1) * bin_width_m, len(xs), mean,
                                float(sum(x.delta for x in xs)), ci_lo, ci_hi))
    return out


# ---------------------------------------------------------------- exports

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 9))
    return str(x)


def write_edge_delta_csv(deltas: Sequence[EdgeDelta], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "v", "baseline", "attacked_mean", "delta", "kind", "distance_m", "is_target"])
        for x in deltas:
            w.writerow([x.edge[0], x.edge[1], x.baseline, _fmt(x.attacked), _fmt(x.delta), x.kind,
                        _fmt(x.distance_m), int(x.is_target)])


def write_curve_csv(curve: Sequence[CurveBin], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "bin_lo_m", "bin_hi_m", "n_edges", "mean_delta", "sum_delta", "ci_lo", "ci_hi"])
        for c in curve:
            w.writerow([c.series, _fmt(c.bin_lo), _fmt(c.bin_hi), c.n_edges, _fmt(c.mean), _fmt(c.total),
                        _fmt(c.ci_lo), _fmt(c.ci_hi)])


def write_delay_hist_csv(dist: DelayDistribution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo_steps", "bin_hi_steps", "rides"])
        for lo, hi, c in zip(dist.bin_edges[:-1].tolist(), dist.bin_edges[1:].tolist(), dist.counts.tolist()):
            w.writerow([int(lo), int(hi), int(c)])


def write_report(out_dir, g: RoadNetwork, baseline: TrafficLog, attacked: Sequence[TrafficLog],
                 targets: Sequence[tuple[int, int]], bin_width_m: float = 50.0, delay_bin: int = 60,
                 thresholds: Sequence[int] = DEFAULT_THRESHOLDS, distance_mode: str = "midpoint",
                 extra_summary: dict | None = None) -> dict:
    """Write every report file for one attacked configuration; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    deltas = traffic_delta(baseline, attacked)
    curve: list[CurveBin] = []
    if targets:
        annotate_distances(g, deltas, targets, distance_mode)
        curve = binned_disruption_curve(deltas, bin_width_m)
    dist = delay_distribution(baseline, attacked, delay_bin, thresholds)
    write_edge_delta_csv(deltas, out / "edge_delta.csv")
    write_curve_csv(curve, out / "disruption_curve.csv")
    write_delay_hist_csv(dist, out / "delay_hist.csv")
    props = {x.edge: {"delta": round(x.delta, 9), "is_target": x.is_target} for x in deltas}
    (out / "map.geojson").write_text(json.dumps(g.to_geojson(props)))
    f_runs = [f_star(a.times.tolist()) for a in attacked]
    summary = {
        "targets": [list(t) for t in targets],
        "runs": len(attacked),
        "f_star_baseline": f_star(baseline.times.tolist()),
        "f_star_per_run": f_runs,
        "f_star_mean": float(np.mean(f_runs)),
        "edges_increase": sum(x.kind == "increase" for x in deltas),
        "edges_decrease": sum(x.kind == "decrease" for x in deltas),
        **dist.summary(),
    }
    if extra_summary:
        summary.update(extra_summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary
