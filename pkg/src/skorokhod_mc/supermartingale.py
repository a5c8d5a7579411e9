"""Non-negative supermartingales in absorbed Brownian motion and in GBM.

Each kernel is realized without randomized stopping: if the kernel mean m is
below the current state, first run until the process hits m (it does, since
it is continuous and heads to 0), then split around m exactly as in the
martingale case. A barrier at 0 is absorption for the Brownian motion started
at 1; for ``Z_t = exp(B_t - t/2)`` it is never reached, so it is declared once
Z falls below ``delta`` and the time is recorded as ``inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _engine
from ._philox import check_seed
from .brownian import BrownianPath, as_path_ids, default_epsilon
from .distributions import (
    MEAN_TOL,
    SUPERMARTINGALE,
    DiscreteDistribution,
    ProcessSpec,
    all_laws,
    check_valid,
)
from .dubins import (
    EmbeddingResult,
    Leaf,
    SplitTree,
    _split,
    compile_plan,
    format_tree,
    plan_exact_law,
    run_exact,
    run_plan,
)


@dataclass(frozen=True)
class SuperPlan:
    drop_level: float | None
    split: SplitTree
    zero_atom_mass: float

    def exact_law(self) -> DiscreteDistribution:
        """Pushforward of the plan, the zero (never-hit) branch included."""
        return plan_exact_law(self.split)

    def __str__(self):
        head = "no drop\n" if self.drop_level is None else f"drop to {self.drop_level:.12g}\n"
        return head + format_tree(self.split)


def build_super_plan(target: DiscreteDistribution, x: float) -> SuperPlan:
    if target.values[0] < 0:
        raise ValueError("supermartingale kernels need non-negative atoms")
    if x < 0:
        raise ValueError("state must be non-negative")
    m = target.mean
    if m > x + MEAN_TOL:
        raise ValueError(f"kernel mean {m:.12g} exceeds state {x:.12g}")
    zero = target.mass_of(0.0, tol=0.0)
    if target.is_point_mass() and target.values[0] == x:
        return SuperPlan(None, Leaf(x), zero)
    # relative test: states can be far below the absolute mean tolerance
    if m < x * (1 - 1e-12):
        return SuperPlan(m, _split(list(target.values), list(target.masses), m), zero)
    return SuperPlan(None, _split(list(target.values), list(target.masses), x), zero)


def _plan_fn(target, x):
    plan = build_super_plan(target, x)
    return plan.drop_level, plan.split


def _fresh(path: BrownianPath, start: float):
    if path.time != 0.0 or path.value != start:
        raise ValueError(f"path must be fresh and started at {start}")


class SuperEmbedder(BaseEstimator):
    """Embed a non-negative supermartingale, in absorbed BM or in GBM.

    Parameters
    ----------
    method : {"absorbed", "gbm"}
        ``"absorbed"`` runs Brownian motion from the root value, stopped at
        0; drops to a lower level use the exact first-passage time law.
        ``"gbm"`` runs ``Z_t = exp(B_t - t/2)`` from 1 on the time grid.
    delta : float
        GBM level below which a path counts as having reached 0.
    dt, t_max, bridge_correct, seed, workers
        As for :class:`~skorokhod_mc.dubins.DubinsEmbedder`.
    """

    def __init__(self, method="absorbed", delta=1e-4, dt=1e-4, t_max=1e8,
                 bridge_correct=True, seed=0, workers=None):
        self.method = method
        self.delta = delta
        self.dt = dt
        self.t_max = t_max
        self.bridge_correct = bridge_correct
        self.seed = seed
        self.workers = workers

    def fit(self, spec: ProcessSpec, y=None):
        if self.method not in ("absorbed", "gbm"):
            raise ValueError(f"method must be 'absorbed' or 'gbm', got {self.method!r}")
        if not self.delta > 0 or not self.dt > 0 or not self.t_max > 0:
            raise ValueError("delta, dt and t_max must be positive")
        check_seed(self.seed)
        if spec.kind != SUPERMARTINGALE:
            raise ValueError("SuperEmbedder needs a supermartingale spec")
        check_valid(spec)
        if self.method == "gbm" and spec.root_value != 1.0:
            raise ValueError("the GBM embedding starts at Z_0 = 1; root_value must be 1")
        self.spec_ = spec
        self.plan_ = compile_plan(spec, _plan_fn)
        self.laws_ = all_laws(spec)
        return self

    def transform(self, paths) -> EmbeddingResult:
        check_is_fitted(self, "plan_")
        if self.method == "absorbed":
            mode, start = _engine.MODE_ABSORBED, self.spec_.root_value
        else:
            mode, start = _engine.MODE_GBM, 0.0
        return run_plan(self.plan_, as_path_ids(paths), seed=self.seed, start=start,
                        root_value=self.spec_.root_value, mode=mode, dt=self.dt,
                        t_max=self.t_max, bridge=self.bridge_correct,
                        epsilon=default_epsilon(self.dt), delta=self.delta,
                        workers=self.workers, mode_name=self.method)

    def fit_transform(self, spec, paths=10_000):
        return self.fit(spec).transform(paths)

    def sample_exact(self, paths) -> np.ndarray:
        check_is_fitted(self, "plan_")
        return run_exact(self.plan_, as_path_ids(paths), self.seed, self.spec_.root_value,
                         workers=self.workers)

    def plans(self) -> dict:
        check_is_fitted(self, "plan_")
        return {key: build_super_plan(self.spec_.kernels[key], key[1])
                for key in self.plan_.trees}


def embed_super_absorbed(path: BrownianPath, spec: ProcessSpec) -> EmbeddingResult:
    """Embed ``spec`` into one Brownian path started at the root value, absorbed at 0."""
    _fresh(path, spec.root_value)
    est = SuperEmbedder("absorbed", dt=path.dt, t_max=path.t_max, seed=path.seed).fit(spec)
    return est.transform([path.path_id])


def embed_super_gbm(path: BrownianPath, spec: ProcessSpec, delta: float = 1e-4,
                    bridge_correct: bool = True) -> EmbeddingResult:
    """Embed ``spec`` into ``Z = exp(B - t/2)`` along one path started at 0."""
    _fresh(path, 0.0)
    est = SuperEmbedder("gbm", delta=delta, dt=path.dt, t_max=path.t_max, seed=path.seed,
                        bridge_correct=bridge_correct).fit(spec)
    return est.transform([path.path_id])
