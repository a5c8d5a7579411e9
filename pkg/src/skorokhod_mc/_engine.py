"""Compiled path kernels.

A path cursor is two small arrays:

``sf`` (float64, 3)
    0 B, 1 time offset from exact first-passage jumps, 2 running Tanaka sum
    ``sum sgn(B_i) (B_{i+1} - B_i)``.
``si`` (int64, 5)
    0 grid steps taken, 1 normal draws used, 2 uniform draws used,
    3 occupation count ``#{i < k: |B_i| <= eps}``, 4 first-passage draws used.

Time is ``si[0] * dt + sf[1]``.
"""

import math

import numpy as np
from numba import njit

from ._philox import (
    STREAM_EXACT,
    STREAM_FIRST_PASSAGE,
    STREAM_NORMAL,
    STREAM_UNIFORM,
    block,
    normal_at,
    normal_from_word,
    uniform_at,
)

MODE_BM = 0
MODE_ABSORBED = 1
MODE_GBM = 2

EXIT_LOWER = 0
EXIT_UPPER = 1
EXIT_HORIZON = 2
EXIT_DECLARED = 3  # GBM fell below delta: barrier at 0 treated as reached

STATUS_OK = 0
STATUS_HORIZON = 1

_SF = 3
_SI = 5


@njit(cache=True)
def new_cursor(start):
    sf = np.zeros(_SF)
    si = np.zeros(_SI, dtype=np.int64)
    sf[0] = start
    return sf, si


@njit(cache=True)
def cursor_time(sf, si, dt):
    return si[0] * dt + sf[1]


@njit(cache=True, nogil=True)
def run_exit(sf, si, seed, pid, lo, hi, mode, dt, t_max, bridge, eps, delta):
    """Advance the cursor until it leaves (lo, hi) or the horizon is reached.

    Barriers are in the natural coordinate: B for the Brownian modes, Z for
    GBM. Returns ``(code, bridged)``: an EXIT_* code and whether the exit came
    from the bridge crossing test rather than a grid overshoot. On a barrier
    exit the path value is snapped onto the barrier; the exit time is the
    right end of the triggering step.
    """
    sqdt = math.sqrt(dt)
    b = sf[0]
    k = si[0]
    toff = sf[1]
    tan = sf[2]
    nidx = si[1]
    uidx = si[2]
    occ = si[3]
    declared_lo = False
    if mode == MODE_GBM:
        if lo <= 0.0:
            ylo = math.log(delta)
            declared_lo = True
        else:
            ylo = math.log(lo)
        yhi = math.log(hi) if hi < np.inf else np.inf
        drift = 0.5
    else:
        ylo = lo
        yhi = hi
        drift = 0.0
    use_bridge = bridge and (ylo > -np.inf or yhi < np.inf)
    # horizon: step k -> k+1 allowed iff (k+1)*dt + toff <= t_max
    if t_max < np.inf:
        k_stop = int(math.floor((t_max - toff) / dt + 1e-9))
    else:
        k_stop = 1 << 62
    code = EXIT_HORIZON
    bridged = False
    y = b - drift * (k * dt + toff)
    if y <= ylo:
        code = EXIT_DECLARED if declared_lo else EXIT_LOWER
        k_stop = k
    elif y >= yhi:
        code = EXIT_UPPER
        k_stop = k
    has_lo = ylo > -np.inf
    has_hi = yhi < np.inf
    inv_dt = 1.0 / dt
    w0 = w1 = w2 = w3 = np.uint64(0)
    if k < k_stop and nidx & 3:
        w0, w1, w2, w3 = block(seed, pid, STREAM_NORMAL, nidx >> 2)
    while k < k_stop:
        if abs(b) <= eps:
            occ += 1
        lane = nidx & 3
        if lane == 0:
            w0, w1, w2, w3 = block(seed, pid, STREAM_NORMAL, nidx >> 2)
            w = w0
        elif lane == 1:
            w = w1
        elif lane == 2:
            w = w2
        else:
            w = w3
        z = normal_from_word(seed, pid, STREAM_NORMAL, nidx, w)
        nidx += 1
        y0 = y
        y1 = y0 + sqdt * z - drift * dt
        hit = -1
        if y1 <= ylo:
            hit = 0
        elif y1 >= yhi:
            hit = 1
        elif use_bridge:
            # nearer barrier only: the one with the larger crossing probability
            dlo = (y0 - ylo) * (y1 - ylo) if has_lo else np.inf
            dhi = (yhi - y0) * (yhi - y1) if has_hi else np.inf
            if dhi < dlo:
                side = 1
                d = dhi
            else:
                side = 0
                d = dlo
            # a uniform is drawn only when the crossing probability can exceed
            # the smallest uniform value 2**-33; other steps cannot trigger
            x = 2.0 * d * inv_dt
            if x < 23.0:
                u = uniform_at(seed, pid, STREAM_UNIFORM, uidx)
                uidx += 1
                if u < math.exp(-x):
                    hit = side
                    bridged = True
        if hit == 0:
            y1 = ylo
        elif hit == 1:
            y1 = yhi
        b1 = y1 + drift * ((k + 1) * dt + toff)
        if b > 0.0:
            tan += b1 - b
        else:
            tan -= b1 - b
        b = b1
        y = y1
        k += 1
        if hit >= 0:
            if hit == 0:
                code = EXIT_DECLARED if declared_lo else EXIT_LOWER
            else:
                code = EXIT_UPPER
            break
    sf[0] = b
    sf[2] = tan
    si[0] = k
    si[1] = nidx
    si[2] = uidx
    si[3] = occ
    return code, bridged


@njit(cache=True, nogil=True)
def first_passage_jump(sf, si, seed, pid, level, dt, t_max):
    """Jump a Brownian cursor from B > level to level at an exact hitting time.

    The hitting time of a level at distance r is r^2 / N^2 in law. Returns
    False, leaving the cursor untouched apart from the draw counter, if that
    time would pass the horizon.
    """
    r = sf[0] - level
    if r <= 0.0:
        return True
    z = normal_at(seed, pid, STREAM_FIRST_PASSAGE, si[4])
    si[4] += 1
    tau = (r / z) ** 2
    if si[0] * dt + sf[1] + tau > t_max:
        return False
    sf[1] += tau
    # the path stays above level during the jump, so no local time at 0 accrues
    sf[2] += (1.0 if sf[0] > 0.0 else -1.0) * (level - sf[0])
    sf[0] = level
    return True


@njit(cache=True, nogil=True)
def local_times(sf, si, dt, eps):
    """(Tanaka, occupation) local-time estimates at the cursor's current time."""
    return abs(sf[0]) - sf[2], si[3] * dt / (2.0 * eps)


@njit(cache=True, nogil=True)
def embed_paths(
    pids, seed, start, root_value, n_max, root0,
    node_lo, node_hi, node_lower, node_upper, node_value, node_next,
    root_node, root_drop,
    mode, dt, t_max, bridge, eps, delta,
    times, values, ltan, locc, status, fail_stage,
):
    """Embed the process into each path id; row i of the outputs is pids[i].

    Per stage: optional drop to ``root_drop[entry]``, then descent of the split
    tree whose root is ``root_node[entry]``. Horizon failures leave NaN in the
    remaining stages.
    """
    for row in range(pids.shape[0]):
        pid = pids[row]
        sf, si = new_cursor(start)
        times[row, 0] = 0.0
        values[row, 0] = root_value
        ltan[row, 0], locc[row, 0] = local_times(sf, si, dt, eps)
        status[row] = STATUS_OK
        fail_stage[row] = -1
        entry = root0
        absorbed = False
        for n in range(1, n_max + 1):
            if absorbed:
                times[row, n] = np.inf
                values[row, n] = 0.0
                ltan[row, n] = np.nan
                locc[row, n] = np.nan
                continue
            failed = False
            drop = root_drop[entry]
            node = root_node[entry]
            if not math.isnan(drop):
                if mode == MODE_ABSORBED:
                    if not first_passage_jump(sf, si, seed, pid, drop, dt, t_max):
                        failed = True
                else:
                    code, _ = run_exit(sf, si, seed, pid, drop, np.inf, mode, dt,
                                    t_max, bridge, eps, delta)
                    if code == EXIT_HORIZON:
                        failed = True
                    elif code == EXIT_DECLARED:
                        absorbed = True
            while not failed and not absorbed and node_lower[node] >= 0:
                code, _ = run_exit(sf, si, seed, pid, node_lo[node], node_hi[node],
                                mode, dt, t_max, bridge, eps, delta)
                if code == EXIT_HORIZON:
                    failed = True
                elif code == EXIT_DECLARED:
                    absorbed = True
                elif code == EXIT_LOWER:
                    node = node_lower[node]
                else:
                    node = node_upper[node]
            if failed:
                status[row] = STATUS_HORIZON
                fail_stage[row] = n
                for m in range(n, n_max + 1):
                    times[row, m] = np.nan
                    values[row, m] = np.nan
                    ltan[row, m] = np.nan
                    locc[row, m] = np.nan
                break
            if absorbed:
                times[row, n] = np.inf
                values[row, n] = 0.0
                ltan[row, n] = np.nan
                locc[row, n] = np.nan
                continue
            # barrier snap makes the path value equal the leaf value exactly
            times[row, n] = si[0] * dt + sf[1]
            values[row, n] = node_value[node]
            ltan[row, n], locc[row, n] = local_times(sf, si, dt, eps)
            entry = node_next[node]


@njit(cache=True, nogil=True)
def exit_paths(pids, seed, start, lo, hi, mode, dt, t_cap, bridge, eps, delta,
               times, codes, b_end, ltan, locc):
    """Single exit of (lo, hi) per path, stopped at t_cap if no exit by then."""
    for row in range(pids.shape[0]):
        pid = pids[row]
        sf, si = new_cursor(start)
        code, _ = run_exit(sf, si, seed, pid, lo, hi, mode, dt, t_cap, bridge, eps, delta)
        codes[row] = code
        times[row] = si[0] * dt + sf[1]
        b_end[row] = sf[0]
        ltan[row], locc[row] = local_times(sf, si, dt, eps)


@njit(cache=True, nogil=True)
def local_time_grid(pids, seed, start, dt, t_grid_steps, eps, ltan, locc, b_at):
    """Local-time estimates of free paths at each grid step count in t_grid_steps."""
    m = t_grid_steps.shape[0]
    for row in range(pids.shape[0]):
        pid = pids[row]
        sf, si = new_cursor(start)
        for j in range(m):
            t_target = t_grid_steps[j] * dt
            run_exit(sf, si, seed, pid, -np.inf, np.inf, MODE_BM, dt, t_target,
                     False, eps, 1.0)
            ltan[row, j], locc[row, j] = local_times(sf, si, dt, eps)
            b_at[row, j] = sf[0]


@njit(cache=True, nogil=True)
def exact_paths(pids, seed, n_max, root0, root_node, node_lower, node_upper,
                node_p_upper, node_value, node_next, values):
    """Path-free sampler: descend split trees with branch probabilities only."""
    for row in range(pids.shape[0]):
        pid = pids[row]
        entry = root0
        uidx = 0
        values[row, 0] = np.nan
        for n in range(1, n_max + 1):
            node = root_node[entry]
            while node_lower[node] >= 0:
                u = uniform_at(seed, pid, STREAM_EXACT, uidx)
                uidx += 1
                if u < node_p_upper[node]:
                    node = node_upper[node]
                else:
                    node = node_lower[node]
            values[row, n] = node_value[node]
            entry = node_next[node]
