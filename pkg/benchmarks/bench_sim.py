"""Time the compiled and pure-Python simulation kernels on the same workload.

    python benchmarks/bench_sim.py --grid 20 --daily-count 260 --repeat 3

Both engines must produce identical logs; the script checks that before
reporting timings.
"""

import argparse
import time

import numpy as np

from trafficattack.demo import diurnal_intensity, grid_city, grid_sensors
from trafficattack.rides import synthesize_rides
from trafficattack.routing import GraphArrays
from trafficattack.sim import HAVE_COMPILED, SimParams, compute_routes, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=20, help="grid side length (default 20)")
    ap.add_argument("--daily-count", type=float, default=260.0)
    ap.add_argument("--p-load", type=float, default=0.05)
    ap.add_argument("--p-slow", type=float, default=0.01)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    g = grid_city(args.grid, 400.0, seed=1)
    rides = synthesize_rides(g, grid_sensors(g, 8, args.daily_count, seed=1), diurnal_intensity(),
                             seed=args.seed, p_load=args.p_load).rides
    routes = compute_routes(g, rides, ga=GraphArrays.from_network(g))
    p = SimParams(p_slow=args.p_slow, seed=args.seed)
    print(f"{len(g.nodes)} nodes, {len(g.edges)} edges, {len(rides)} rides")

    engines = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    if not HAVE_COMPILED:
        print("compiled kernel not built; timing the Python engine only")
    logs, best = {}, {}
    for eng in engines:
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            logs[eng] = run(g, rides, p, routes=routes, engine=eng)
            times.append(time.perf_counter() - t0)
        best[eng] = min(times)
        print(f"{eng:>9}: best {best[eng]:.3f} s over {args.repeat} runs")
    if len(logs) == 2:
        a, b = logs["python"], logs["compiled"]
        same = np.array_equal(a.times, b.times) and np.array_equal(a.edge_counts, b.edge_counts)
        print(f"logs identical: {same}; speedup {best['python'] / best['compiled']:.1f}x")
        return 0 if same else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
