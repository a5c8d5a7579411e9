"""Seed-deterministic Brownian paths, barrier exits and the geometric transform."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _engine
from ._philox import STREAM_NORMAL, STREAM_UNIFORM, check_seed, normals, uniforms

WORKERS_ENV = "SKMC_WORKERS"


def n_workers() -> int:
    """Worker threads for path fan-out; never affects results."""
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def fan_out(func, pids: np.ndarray, outputs, *args, workers: int | None = None,
            chunk: int = 256):
    """Run ``func(pids_chunk, *args, *output_slices)`` over contiguous chunks.

    ``func`` is a nogil kernel that writes row ``i`` of each output for
    ``pids_chunk[i]``; chunking and thread count only change scheduling.
    """
    workers = workers or n_workers()
    n = len(pids)
    bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]

    def job(lo_hi):
        lo, hi = lo_hi
        func(pids[lo:hi], *args, *(out[lo:hi] for out in outputs))

    if workers == 1 or len(bounds) <= 1:
        for b in bounds:
            job(b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(job, bounds))


def as_path_ids(paths) -> np.ndarray:
    """Accept a path count or an iterable of non-negative ids."""
    if np.isscalar(paths):
        n = int(paths)
        if n < 1:
            raise ValueError("need at least one path")
        return np.arange(n, dtype=np.int64)
    pids = np.asarray(paths, dtype=np.int64).ravel()
    if pids.size == 0 or pids.min() < 0 or pids.max() >= 2**56:
        raise ValueError("path ids must be non-empty and in [0, 2**56)")
    return pids


def increments(seed: int, path_id: int, dt: float, count: int, start: int = 0) -> np.ndarray:
    """Gaussian increments ``N(0, dt)`` for steps ``start .. start+count-1``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return math.sqrt(dt) * normals(check_seed(seed), int(path_id), STREAM_NORMAL,
                                   int(start), int(count))


def bridge_uniforms(seed: int, path_id: int, count: int, start: int = 0) -> np.ndarray:
    return uniforms(check_seed(seed), int(path_id), STREAM_UNIFORM, int(start), int(count))


class HorizonError(RuntimeError):
    """The path reached ``t_max`` before the requested stopping time."""


@dataclass(frozen=True)
class ExitResult:
    time: float
    side: str
    value: float
    crossed_within_step: bool


class BrownianPath:
    """Cursor over one simulated Brownian path.

    The raw sample stream on the grid ``t_i = i * dt`` is available through
    :meth:`samples`. Stopping operations (:func:`first_exit`) advance the
    cursor and snap the value onto the barrier they hit; later steps continue
    from the snapped value.
    """

    def __init__(self, seed: int, path_id: int, dt: float = 1e-4, t_max: float = 500.0,
                 start: float = 0.0, epsilon: float | None = None):
        if not dt > 0 or not t_max > 0:
            raise ValueError("dt and t_max must be positive")
        self.seed = check_seed(seed)
        self.path_id = int(path_id)
        self.dt = float(dt)
        self.t_max = float(t_max)
        self.start = float(start)
        self.epsilon = default_epsilon(dt) if epsilon is None else float(epsilon)
        self.reset()

    def reset(self):
        self._sf, self._si = _engine.new_cursor(self.start)

    @property
    def time(self) -> float:
        return float(self._si[0] * self.dt + self._sf[1])

    @property
    def value(self) -> float:
        return float(self._sf[0])

    @property
    def steps(self) -> int:
        return int(self._si[0])

    def max_samples(self) -> int:
        return math.ceil(self.t_max / self.dt - 1e-9) + 1

    def samples(self, count: int | None = None):
        """Raw grid samples ``(t_i, B_i)`` from the start, ignoring any snapping."""
        n = self.max_samples() if count is None else min(int(count), self.max_samples())
        dB = increments(self.seed, self.path_id, self.dt, n - 1)
        b = np.empty(n)
        b[0] = self.start
        np.cumsum(dB, out=b[1:])
        b[1:] += self.start
        return np.arange(n) * self.dt, b

    def advance_to(self, t: float):
        """Free evolution (no barriers) up to the last grid time <= t."""
        _engine.run_exit(self._sf, self._si, self.seed, self.path_id, -np.inf, np.inf,
                         _engine.MODE_BM, self.dt, min(t, self.t_max), False,
                         self.epsilon, 1.0)
        return self

    def local_times(self):
        """(Tanaka, occupation) local time at 0 up to the current time."""
        return _engine.local_times(self._sf, self._si, self.dt, self.epsilon)

    def __repr__(self):
        return (f"BrownianPath(seed={self.seed}, path_id={self.path_id}, dt={self.dt:g}, "
                f"t={self.time:.6g}, B={self.value:.6g})")


def default_epsilon(dt: float) -> float:
    """Occupation bandwidth 2 * sqrt(dt)."""
    return 2.0 * math.sqrt(dt)


def first_exit(path: BrownianPath, x: float, interval, bridge_correct: bool = True):
    """First exit of ``path`` (currently at ``x``) from the open interval.

    Returns an :class:`ExitResult` with the absolute exit time, or ``None``
    if ``t_max`` is reached inside the interval.
    """
    a, b = map(float, interval)
    if not a < b:
        raise ValueError(f"empty interval [{a}, {b}]")
    if not a <= x <= b:
        raise ValueError(f"start {x} outside [{a}, {b}]")
    if abs(path.value - x) > 1e-12 * max(1.0, abs(x)):
        raise ValueError(f"path is at {path.value}, not {x}")
    code, bridged = _engine.run_exit(path._sf, path._si, path.seed, path.path_id, a, b,
                                     _engine.MODE_BM, path.dt, path.t_max,
                                     bool(bridge_correct), path.epsilon, 1.0)
    if code == _engine.EXIT_HORIZON:
        return None
    side = "lower" if code == _engine.EXIT_LOWER else "upper"
    return ExitResult(path.time, side, a if side == "lower" else b, bool(bridged))


def gbm_transform(path: BrownianPath, count: int | None = None):
    """Geometric Brownian motion ``Z_t = exp(B_t - t/2)`` on the raw grid."""
    if path.start != 0.0:
        raise ValueError("the geometric transform needs a path started at 0")
    t, b = path.samples(count)
    return t, np.exp(b - t / 2)


def exit_batch(seed: int, paths, interval, x: float = 0.0, dt: float = 1e-4,
               t_cap: float = np.inf, bridge_correct: bool = True,
               epsilon: float | None = None, workers: int | None = None):
    """One exit of ``interval`` per path, stopped at ``t_cap`` if still inside.

    Returns a dict of arrays: ``time`` (T ^ t_cap), ``side`` (0 lower, 1 upper,
    2 not exited), ``value`` (B at T ^ t_cap), ``l_tanaka`` and
    ``l_occupation`` (local time at T ^ t_cap).
    """
    a, b = map(float, interval)
    if not a < b or not a <= x <= b:
        raise ValueError("need a < b and a <= x <= b")
    pids = as_path_ids(paths)
    eps = default_epsilon(dt) if epsilon is None else float(epsilon)
    n = len(pids)
    out = dict(time=np.empty(n), side=np.empty(n, np.int64), value=np.empty(n),
               l_tanaka=np.empty(n), l_occupation=np.empty(n))
    fan_out(_engine.exit_paths, pids, list(out.values()), check_seed(seed), float(x), a, b,
            _engine.MODE_BM, float(dt), float(t_cap), bool(bridge_correct), eps, 1.0,
            workers=workers)
    return out
