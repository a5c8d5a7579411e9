"""Dubins binary-splitting embedding of finite-support martingales.

A centered target law is compiled into nested exit intervals: split the
support at the conditional mean, use the two conditional means as barriers,
and recurse on each side. Running Brownian motion through the tree realizes a
stopping time whose stopped value has exactly the target law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _engine
from ._philox import STREAM_EXACT, check_seed, uniforms
from .brownian import (
    BrownianPath,
    HorizonError,
    as_path_ids,
    default_epsilon,
    fan_out,
    first_exit,
)
from .distributions import (
    MARTINGALE,
    MEAN_TOL,
    DiscreteDistribution,
    ProcessSpec,
    all_laws,
    check_valid,
    l1_profile,
    make_distribution,
)


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Branch:
    center: float
    a: float
    b: float
    p_upper: float
    lower: "SplitTree"
    upper: "SplitTree"


SplitTree = Union[Leaf, Branch]


def _split(values: list[float], masses: list[float], center: float) -> SplitTree:
    if len(values) == 1:
        return Leaf(values[0])
    tol = 1e-12 * max(abs(values[0]), abs(values[-1]))
    lower = [(v, m) for v, m in zip(values, masses) if v < center - tol]
    upper = [(v, m) for v, m in zip(values, masses) if v >= center - tol]
    if not lower or not upper:
        raise ValueError(f"atoms {values} cannot have mean {center}")
    lo_mass = math.fsum(m for _, m in lower)
    up_mass = math.fsum(m for _, m in upper)
    a = math.fsum(v * m for v, m in lower) / lo_mass
    b = math.fsum(v * m for v, m in upper) / up_mass
    if len(lower) == 1:
        a = lower[0][0]
    if len(upper) == 1:
        b = upper[0][0]
    return Branch(
        center=center,
        a=a,
        b=b,
        p_upper=(center - a) / (b - a),
        lower=_split([v for v, _ in lower], [m / lo_mass for _, m in lower], a),
        upper=_split([v for v, _ in upper], [m / up_mass for _, m in upper], b),
    )


def build_split_tree(target: DiscreteDistribution, x: float) -> SplitTree:
    """Split tree embedding ``target`` for Brownian motion started at ``x``.

    An atom sitting exactly at a conditional mean goes to the upper part.
    """
    if abs(target.mean - x) > MEAN_TOL:
        raise ValueError(f"target mean {target.mean:.12g} differs from start {x:.12g}")
    return _split(list(target.values), list(target.masses), float(x))


def tree_depth(tree: SplitTree) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(tree_depth(tree.lower), tree_depth(tree.upper))


def iter_leaves(tree: SplitTree, prob: float = 1.0):
    """Yield ``(value, probability)`` for every leaf."""
    if isinstance(tree, Leaf):
        yield tree.value, prob
    else:
        yield from iter_leaves(tree.lower, prob * (1.0 - tree.p_upper))
        yield from iter_leaves(tree.upper, prob * tree.p_upper)


def plan_exact_law(tree: SplitTree) -> DiscreteDistribution:
    """Law of the leaf reached when branches are taken with their probabilities."""
    return make_distribution(iter_leaves(tree))


def format_tree(tree: SplitTree, indent: str = "") -> str:
    if isinstance(tree, Leaf):
        return f"{indent}leaf {tree.value:.12g}\n"
    head = (f"{indent}exit ({tree.a:.12g}, {tree.b:.12g}) from {tree.center:.12g}, "
            f"p_upper={tree.p_upper:.12g}\n")
    return head + format_tree(tree.lower, indent + "  ") + format_tree(tree.upper, indent + "  ")


# compiled plans ----------------------------------------------------------


@dataclass
class CompiledPlan:
    """Flat arrays of every stage's split tree, as consumed by the kernels.

    Root entry ``e`` belongs to one ``(stage, state)`` kernel: ``root_node[e]``
    is its tree root and ``root_drop[e]`` an optional level to hit first (NaN
    for none). Each leaf's ``node_next`` is the root entry of the kernel at the
    next stage for the leaf's value, or -1 after the last stage.
    """

    n_max: int
    root0: int
    node_lo: np.ndarray
    node_hi: np.ndarray
    node_lower: np.ndarray
    node_upper: np.ndarray
    node_p_upper: np.ndarray
    node_value: np.ndarray
    node_next: np.ndarray
    root_node: np.ndarray
    root_drop: np.ndarray
    entries: dict = field(repr=False)
    trees: dict = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.node_lo)


PlanFn = Callable[[DiscreteDistribution, float], "tuple[float | None, SplitTree]"]


def dubins_plan(target: DiscreteDistribution, x: float):
    return None, build_split_tree(target, x)


def compile_plan(spec: ProcessSpec, plan_fn: PlanFn = dubins_plan) -> CompiledPlan:
    keys = sorted(spec.kernels)
    entries = {key: i for i, key in enumerate(keys)}
    trees = {}
    cols = {name: [] for name in ("lo", "hi", "lower", "upper", "p", "value", "next")}
    root_node = np.empty(len(keys), np.int64)
    root_drop = np.full(len(keys), np.nan)

    def add(tree, stage):
        i = len(cols["lo"])
        for col in cols.values():
            col.append(0)
        if isinstance(tree, Leaf):
            cols["lo"][i] = cols["hi"][i] = np.nan
            cols["lower"][i] = cols["upper"][i] = -1
            cols["p"][i] = np.nan
            cols["value"][i] = tree.value
            cols["next"][i] = entries.get((stage + 1, tree.value), -1)
            if stage + 1 < spec.n_max and cols["next"][i] < 0:
                raise ValueError(f"no kernel for state {tree.value} at stage {stage + 1}")
            return i
        cols["lo"][i] = tree.a
        cols["hi"][i] = tree.b
        cols["p"][i] = tree.p_upper
        cols["value"][i] = np.nan
        cols["next"][i] = -1
        cols["lower"][i] = add(tree.lower, stage)
        cols["upper"][i] = add(tree.upper, stage)
        return i

    for key in keys:
        stage, state = key
        drop, tree = plan_fn(spec.kernels[key], state)
        trees[key] = (drop, tree)
        root_node[entries[key]] = add(tree, stage)
        if drop is not None:
            root_drop[entries[key]] = drop
    return CompiledPlan(
        n_max=spec.n_max,
        root0=entries[(0, spec.root_value)],
        node_lo=np.asarray(cols["lo"], float),
        node_hi=np.asarray(cols["hi"], float),
        node_lower=np.asarray(cols["lower"], np.int64),
        node_upper=np.asarray(cols["upper"], np.int64),
        node_p_upper=np.asarray(cols["p"], float),
        node_value=np.asarray(cols["value"], float),
        node_next=np.asarray(cols["next"], np.int64),
        root_node=root_node,
        root_drop=root_drop,
        entries=entries,
        trees=trees,
    )


# results -----------------------------------------------------------------


@dataclass
class EmbeddingResult:
    """Per-path stopping times ``T_n``, embedded values and local times.

    Rows follow ``path_ids``. Paths that hit the horizon carry NaN from the
    failing stage on; GBM paths declared absorbed carry ``inf`` times and 0
    values from the absorbing stage on.
    """

    path_ids: np.ndarray
    stopping_times: np.ndarray
    values: np.ndarray
    local_times: np.ndarray
    occupation: np.ndarray
    status: np.ndarray
    fail_stage: np.ndarray
    mode: str = "brownian"

    @property
    def n_paths(self) -> int:
        return len(self.path_ids)

    @property
    def n_max(self) -> int:
        return self.values.shape[1] - 1

    @property
    def ok(self) -> np.ndarray:
        return self.status == _engine.STATUS_OK

    @property
    def horizon_failures(self) -> int:
        return int((~self.ok).sum())

    @property
    def declared_absorbed(self) -> np.ndarray:
        return self.ok & np.isinf(self.stopping_times[:, -1])

    def empirical_law(self, n: int) -> DiscreteDistribution:
        vals = self.values[self.ok, n]
        uniq, counts = np.unique(vals, return_counts=True)
        return make_distribution(zip(uniq.tolist(), (counts / counts.sum()).tolist()))

    def row(self, i: int) -> dict:
        return dict(path_id=int(self.path_ids[i]), stopping_times=self.stopping_times[i],
                    values=self.values[i], local_times=self.local_times[i],
                    hit_horizon=bool(self.status[i] != _engine.STATUS_OK))


def _allocate(n, n_max):
    return (np.empty((n, n_max + 1)), np.empty((n, n_max + 1)), np.empty((n, n_max + 1)),
            np.empty((n, n_max + 1)), np.empty(n, np.int64), np.empty(n, np.int64))


def run_plan(plan: CompiledPlan, pids: np.ndarray, *, seed: int, start: float,
             root_value: float, mode: int, dt: float, t_max: float, bridge: bool,
             epsilon: float, delta: float = 1e-4, workers=None, mode_name="brownian"):
    outs = _allocate(len(pids), plan.n_max)
    fan_out(_engine.embed_paths, pids, outs, check_seed(seed), float(start),
            float(root_value), plan.n_max, plan.root0, plan.node_lo, plan.node_hi,
            plan.node_lower, plan.node_upper, plan.node_value, plan.node_next,
            plan.root_node, plan.root_drop, mode, float(dt), float(t_max), bool(bridge),
            float(epsilon), float(delta), workers=workers)
    return EmbeddingResult(pids, *outs, mode=mode_name)


def run_exact(plan: CompiledPlan, pids: np.ndarray, seed: int, root_value: float,
              workers=None) -> np.ndarray:
    values = np.empty((len(pids), plan.n_max + 1))
    fan_out(_engine.exact_paths, pids, [values], check_seed(seed), plan.n_max, plan.root0,
            plan.root_node, plan.node_lower, plan.node_upper, plan.node_p_upper,
            plan.node_value, plan.node_next, workers=workers)
    values[:, 0] = root_value
    return values


# per-path operations -------------------------------------------------------


def embed_step(path: BrownianPath, x: float, tree: SplitTree, bridge_correct: bool = True):
    """Descend ``tree`` on ``path`` (positioned at ``x``); return ``(T, B_T)``.

    Raises :class:`HorizonError` if ``t_max`` runs out mid-descent.
    """
    node = tree
    while isinstance(node, Branch):
        res = first_exit(path, path.value, (node.a, node.b), bridge_correct)
        if res is None:
            raise HorizonError(f"path {path.path_id} reached t_max={path.t_max}")
        node = node.lower if res.side == "lower" else node.upper
    if isinstance(tree, Leaf) and abs(tree.value - x) > MEAN_TOL:
        raise ValueError("leaf tree must sit at the current state")
    return path.time, node.value


def embed_sequence(path: BrownianPath, spec: ProcessSpec, bridge_correct: bool = True,
                   trees: dict | None = None) -> EmbeddingResult:
    """Embed every stage of ``spec`` into one path (pure Python descent)."""
    if spec.kind != MARTINGALE:
        raise ValueError("embed_sequence needs a martingale spec")
    if abs(path.value - spec.root_value) > MEAN_TOL or path.time != 0.0:
        raise ValueError("path must start fresh at the spec's root value")
    trees = {} if trees is None else trees
    n_max = spec.n_max
    times, values, ltan, locc, status, fail = (a[0] for a in _allocate(1, n_max))
    status = np.zeros(1, np.int64)
    fail = np.full(1, -1, np.int64)
    x = spec.root_value
    times[0], values[0] = 0.0, x
    ltan[0], locc[0] = path.local_times()
    for n in range(1, n_max + 1):
        key = (n - 1, x)
        if key not in trees:
            trees[key] = build_split_tree(spec.kernels[key], x)
        try:
            t, x = embed_step(path, x, trees[key], bridge_correct)
        except HorizonError:
            status[0] = _engine.STATUS_HORIZON
            fail[0] = n
            times[n:] = values[n:] = ltan[n:] = locc[n:] = np.nan
            break
        times[n], values[n] = t, x
        ltan[n], locc[n] = path.local_times()
    return EmbeddingResult(np.array([path.path_id]), times[None], values[None],
                           ltan[None], locc[None], status, fail)


def exact_mode_sample(seed: int, path_id: int, spec: ProcessSpec) -> np.ndarray:
    """One realization of the spec's process using only branch probabilities."""
    seed = check_seed(seed)
    out = [spec.root_value]
    x = spec.root_value
    j = 0
    for n in range(spec.n_max):
        node = build_split_tree(spec.kernels[(n, x)], x)
        while isinstance(node, Branch):
            u = uniforms(seed, int(path_id), STREAM_EXACT, j, 1)[0]
            j += 1
            node = node.upper if u < node.p_upper else node.lower
        x = node.value
        out.append(x)
    return np.array(out)


# estimator -----------------------------------------------------------------


class DubinsEmbedder(BaseEstimator):
    """Embed a finite-support martingale into Brownian motion.

    ``fit`` compiles one split tree per (stage, state) kernel; ``transform``
    runs those trees along the requested paths.

    Parameters
    ----------
    dt : float
        Grid step of the simulated paths.
    t_max : float
        Horizon; paths still inside an exit interval at ``t_max`` are reported
        as horizon failures.
    bridge_correct : bool
        Apply the Brownian-bridge crossing test between grid points.
    seed : int
        64-bit master seed.
    epsilon : float or None
        Occupation-density bandwidth; ``None`` means ``2 * sqrt(dt)``.
    workers : int or None
        Thread count for the path fan-out; ``None`` reads ``SKMC_WORKERS``.
    """

    def __init__(self, dt=1e-4, t_max=500.0, bridge_correct=True, seed=0, epsilon=None,
                 workers=None):
        self.dt = dt
        self.t_max = t_max
        self.bridge_correct = bridge_correct
        self.seed = seed
        self.epsilon = epsilon
        self.workers = workers

    def _check_params(self):
        if not self.dt > 0 or not self.t_max > 0:
            raise ValueError("dt and t_max must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        check_seed(self.seed)

    def fit(self, spec: ProcessSpec, y=None):
        self._check_params()
        if spec.kind != MARTINGALE:
            raise ValueError(f"{type(self).__name__} needs a martingale spec")
        check_valid(spec)
        self.spec_ = spec
        self.plan_ = compile_plan(spec, dubins_plan)
        self.laws_ = all_laws(spec)
        self.profile_ = l1_profile(spec)
        return self

    def transform(self, paths) -> EmbeddingResult:
        check_is_fitted(self, "plan_")
        eps = default_epsilon(self.dt) if self.epsilon is None else self.epsilon
        return run_plan(self.plan_, as_path_ids(paths), seed=self.seed,
                        start=self.spec_.root_value, root_value=self.spec_.root_value,
                        mode=_engine.MODE_BM, dt=self.dt, t_max=self.t_max,
                        bridge=self.bridge_correct, epsilon=eps, workers=self.workers)

    def fit_transform(self, spec, paths=10_000):
        return self.fit(spec).transform(paths)

    def sample_exact(self, paths) -> np.ndarray:
        """Path-free samples of (M_0, ..., M_n_max), one row per path id."""
        check_is_fitted(self, "plan_")
        return run_exact(self.plan_, as_path_ids(paths), self.seed, self.spec_.root_value,
                         workers=self.workers)

    def trees(self):
        check_is_fitted(self, "plan_")
        return {key: tree for key, (_, tree) in self.plan_.trees.items()}
