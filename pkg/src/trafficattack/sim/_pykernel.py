"""Pure-Python cellular-automaton kernel (fallback for the compiled ``_ckernel``).

Both kernels must stay step-for-step identical: same processing order and
the same uniforms. Every ride owns a SplitMix64 stream seeded from the run
key and its ride id, so a ride's random draws do not depend on what other
rides do. Paired runs (baseline vs attacked) therefore share randomness for
every ride the attack leaves alone.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)

# ride states
PENDING, WAITING, TRAVERSING, FINISHED = 0, 1, 2, 3


def fmix64(z):
    z = ((z ^ (z >> 30)) * _C1) & MASK64
    z = ((z ^ (z >> 27)) * _C2) & MASK64
    return z ^ (z >> 31)


def ride_seed(key, ride):
    return fmix64((key + (ride + 1) * GOLDEN) & MASK64)


def run_key(rng):
    """One 63-bit key per run, taken from the caller's generator."""
    return int(rng.integers(0, 1 << 63))


class RideStreams:
    """Per-ride SplitMix64 uniforms in [0, 1)."""

    def __init__(self, key, n):
        self.state = [ride_seed(key, r) for r in range(n)]

    def next(self, r):
        s = (self.state[r] + GOLDEN) & MASK64
        self.state[r] = s
        return (fmix64(s) >> 11) * _INV53


def simulate(cells, lanes, theta, route_ptr, route_edges, v_max, p_slow,
             t_max, max_steps, rng, observer=None):
    """Run the model; returns (finish_step list, edge entry counts, final t).

    ``finish_step[i]`` is the step in which ride i left its last edge, or -1.
    ``observer(t, occ, offsets)`` is called after every simulated step when given.
    """
    cells = [int(c) for c in cells]
    lanes = [int(l) for l in lanes]
    theta = [int(x) for x in theta]
    route_ptr = [int(x) for x in route_ptr]
    route_edges = [int(x) for x in route_edges]
    m = len(cells)
    n_rides = len(theta)
    offsets = [0] * m
    total = 0
    for e in range(m):
        offsets[e] = total
        total += cells[e] * lanes[e]
    occ = bytearray(total)

    state = [PENDING] * n_rides
    pos = [0] * n_rides
    lane = [0] * n_rides
    cell = [0] * n_rides
    speed = [0] * n_rides
    finish = [-1] * n_rides
    counts = [0] * m

    order = sorted(range(n_rides), key=lambda i: (theta[i], i))
    nxt_inject = 0
    stream = RideStreams(run_key(rng), n_rides)
    active = []
    t = 0
    limit = max_steps if max_steps is not None else -1

    while t < t_max or active:
        if limit >= 0 and t >= limit:
            break
        if not active:
            # nothing moves until the next injection
            nt = theta[order[nxt_inject]] if nxt_inject < n_rides else t_max
            nt = min(nt, t_max)
            if limit >= 0:
                nt = min(nt, limit)
            if nt > t:
                t = nt
                continue

        new = []
        while nxt_inject < n_rides and theta[order[nxt_inject]] == t:
            r = order[nxt_inject]
            nxt_inject += 1
            if route_ptr[r] == route_ptr[r + 1]:
                continue  # unreachable rides are never injected
            state[r] = WAITING
            pos[r] = route_ptr[r]
            speed[r] = 0
            new.append(r)
        if new:
            active = sorted(active + new)

        for r in active:
            if state[r] != WAITING:
                continue
            e = route_edges[pos[r]]
            c = cells[e]
            base = offsets[e]
            free = [l for l in range(lanes[e]) if not occ[base + l * c]]
            k = len(free)
            if k == 0:
                speed[r] = 0
                continue
            if k == 1:
                chosen = free[0]
            else:
                chosen = free[min(int(stream.next(r) * k), k - 1)]
            lane[r] = chosen
            cell[r] = 1
            occ[base + chosen * c] = 1
            state[r] = TRAVERSING
            counts[e] += 1

        done = False
        for r in active:
            if state[r] != TRAVERSING:
                continue
            e = route_edges[pos[r]]
            c = cells[e]
            base = offsets[e]
            ci = cell[r]
            li = lane[r]
            v = speed[r] + 1
            if v > v_max:
                v = v_max
            lb = base + li * c
            x = 0
            while x < v and ci + x < c and not occ[lb + ci + x]:
                x += 1
            if x < v:
                best_l, best_x = li, x
                for l in range(lanes[e]):
                    if l == li:
                        continue
                    ob = base + l * c
                    if occ[ob + ci - 1]:
                        continue
                    xl = 0
                    while ci + xl < c and not occ[ob + ci + xl]:
                        xl += 1
                    if xl > best_x:
                        best_l, best_x = l, xl
                if best_l != li:
                    occ[lb + ci - 1] = 0
                    li = best_l
                    lb = base + li * c
                    occ[lb + ci - 1] = 1
                    lane[r] = li
                x = best_x
            if x < v:
                v = x
            if v > 0 and p_slow > 0.0 and stream.next(r) < p_slow:
                v -= 1
            occ[lb + ci - 1] = 0
            ci += v
            speed[r] = v
            if ci == c:
                pos[r] += 1
                if pos[r] == route_ptr[r + 1]:
                    state[r] = FINISHED
                    finish[r] = t
                    done = True
                else:
                    state[r] = WAITING
            else:
                occ[lb + ci - 1] = 1
                cell[r] = ci

        if done:
            active = [r for r in active if state[r] != FINISHED]
        if observer is not None:
            observer(t, occ, offsets)
        t += 1

    return finish, counts, t
