"""Local time at 0: Tanaka and occupation-density estimators, identity checks.

Tanaka's formula rearranged gives the pathwise estimate

    L_t = |B_t| - sum_i sgn(B_{t_i}) (B_{t_{i+1}} - B_{t_i}),   sgn(0) = -1,

and the occupation estimate is (1 / 2 eps) * dt * #{i : |B_{t_i}| <= eps}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine
from ._philox import check_seed
from .brownian import BrownianPath, as_path_ids, default_epsilon, exit_batch, fan_out
from .distributions import L1Profile
from .dubins import EmbeddingResult

SE_MULT = 3.0
FIXED_ALLOWANCE = 0.02
FINAL_ALLOWANCE = 0.05


@dataclass(frozen=True)
class LocalTimeEstimate:
    t: float
    tanaka: float
    occupation: float
    epsilon: float


def _sgn(b):
    return np.where(b > 0, 1.0, -1.0)


def tanaka_from_samples(b: np.ndarray) -> np.ndarray:
    """Tanaka local time at every grid point of a sample array ``b``."""
    b = np.asarray(b, float)
    integral = np.concatenate([[0.0], np.cumsum(_sgn(b[:-1]) * np.diff(b))])
    return np.abs(b) - integral


def occupation_from_samples(b: np.ndarray, dt: float, epsilon: float) -> np.ndarray:
    """Occupation-density local time at every grid point (left Riemann sum)."""
    inside = (np.abs(np.asarray(b, float)[:-1]) <= epsilon).astype(float)
    return np.concatenate([[0.0], np.cumsum(inside)]) * dt / (2 * epsilon)


def _advance(path: BrownianPath, t: float):
    if t < path.time - 1e-12:
        raise ValueError(f"path is already at time {path.time} > {t}")
    path.advance_to(t)


def local_time_tanaka(path: BrownianPath, t: float) -> float:
    """Tanaka estimate of L_t, advancing ``path`` to the last grid point <= t."""
    _advance(path, t)
    return float(path.local_times()[0])


def local_time_occupation(path: BrownianPath, t: float, epsilon: float | None = None) -> float:
    """Occupation estimate of L_t with bandwidth ``epsilon`` (default 2 sqrt(dt))."""
    if epsilon is not None:
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        if epsilon != path.epsilon:
            if path.time > 0:
                raise ValueError("bandwidth is fixed once the path has advanced")
            path.epsilon = float(epsilon)
    _advance(path, t)
    return float(path.local_times()[1])


def estimate(path: BrownianPath, t: float) -> LocalTimeEstimate:
    _advance(path, t)
    tan, occ = path.local_times()
    return LocalTimeEstimate(path.time, float(tan), float(occ), path.epsilon)


def local_time_batch(seed: int, paths, t_grid, dt: float = 1e-4,
                     epsilon: float | None = None, workers=None):
    """Both estimators for free paths at each time in ``t_grid``.

    Returns ``(tanaka, occupation, B)`` arrays of shape (paths, len(t_grid)).
    """
    pids = as_path_ids(paths)
    steps = np.floor(np.asarray(t_grid, float) / dt + 1e-9).astype(np.int64)
    if np.any(np.diff(steps) < 0) or steps.size == 0 or steps[0] < 0:
        raise ValueError("t_grid must be non-empty, non-negative and increasing")
    eps = default_epsilon(dt) if epsilon is None else float(epsilon)
    shape = (len(pids), len(steps))
    outs = [np.empty(shape), np.empty(shape), np.empty(shape)]
    fan_out(_engine.local_time_grid, pids, outs, check_seed(seed), 0.0, float(dt), steps,
            eps, workers=workers)
    return tuple(outs)


def _mean_se(x):
    x = np.asarray(x, float)
    if x.size < 2:
        return float(x.mean()) if x.size else 0.0, 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


@dataclass(frozen=True)
class IdentityCheck:
    """Both sides of E[L_{T ^ m}] = E|B_{T ^ m}| with their standard errors."""

    m: float
    l_hat: float
    abs_b_hat: float
    se_l: float
    se_abs_b: float
    n_paths: int

    @property
    def gap(self) -> float:
        return abs(self.l_hat - self.abs_b_hat)

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.se_l, self.se_abs_b))

    def passes(self, se_mult: float = SE_MULT, allowance: float = FIXED_ALLOWANCE) -> bool:
        return self.gap < se_mult * self.combined_se + allowance


def identity_from_arrays(l_values, abs_b_values, m: float) -> IdentityCheck:
    l_hat, se_l = _mean_se(l_values)
    b_hat, se_b = _mean_se(abs_b_values)
    return IdentityCheck(float(m), l_hat, b_hat, se_l, se_b, len(np.asarray(l_values)))


def check_identity_truncated(seed: int, paths, interval, m: float = np.inf, x: float = 0.0,
                             dt: float = 1e-4, bridge_correct: bool = True,
                             workers=None) -> IdentityCheck:
    """Estimate both sides of E[L_{T ^ m}] = E|B_{T ^ m}| for T the exit of ``interval``."""
    res = exit_batch(seed, paths, interval, x=x, dt=dt, t_cap=m,
                     bridge_correct=bridge_correct, workers=workers)
    return identity_from_arrays(res["l_tanaka"], np.abs(res["value"]), m)


@dataclass(frozen=True)
class ChainRow:
    n: int
    l_hat: float
    abs_b_hat: float
    exact_abs_m: float
    se_l: float
    se_abs_b: float
    passed: bool


@dataclass(frozen=True)
class ChainReport:
    rows: tuple[ChainRow, ...]
    k_bound: float
    l_final: float
    final_passed: bool

    @property
    def passed(self) -> bool:
        return self.final_passed and all(r.passed for r in self.rows)


def check_identity_chain(result: EmbeddingResult, profile: L1Profile,
                         se_mult: float = SE_MULT, allowance: float = FIXED_ALLOWANCE,
                         final_allowance: float = FINAL_ALLOWANCE) -> ChainReport:
    """Per-stage E[L_{T_n}] vs E|B_{T_n}| vs exact E|M_n|, and the final bound by K.

    A stage passes when the local-time mean is within ``se_mult`` standard
    errors plus ``allowance`` of both the exact E|M_n| and the empirical
    E|B_{T_n}|. The last stage's local time is the monotone lower proxy for
    L at the limiting stopping time and must not exceed K + ``final_allowance``.
    """
    ok = result.ok
    lt = result.local_times[ok]
    if np.isnan(lt).any():
        raise ValueError("local times missing for some completed paths")
    absb = np.abs(result.values[ok])
    if len(profile.per_stage) != result.n_max + 1:
        raise ValueError("profile and result cover different numbers of stages")
    rows = []
    for n in range(result.n_max + 1):
        l_hat, se_l = _mean_se(lt[:, n])
        b_hat, se_b = _mean_se(absb[:, n])
        exact = profile.per_stage[n]
        passed = (abs(l_hat - exact) < se_mult * se_l + allowance
                  and abs(l_hat - b_hat) < se_mult * float(np.hypot(se_l, se_b)) + allowance)
        rows.append(ChainRow(n, l_hat, b_hat, exact, se_l, se_b, bool(passed)))
    l_final = rows[-1].l_hat
    return ChainReport(tuple(rows), profile.k_bound, l_final,
                       bool(l_final <= profile.k_bound + final_allowance))
