"""Experiment orchestration: run embeddings, aggregate, check, write reports.

Reports are self-auditing: every pass flag is recomputed by :func:`evaluate`
from the stored tables, counters and tolerances, so ``skmc report DIR`` can
rebuild ``summary.json`` from the CSV files alone.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .distributions import (
    MARTINGALE,
    SUPERMARTINGALE,
    DiscreteDistribution,
    ProcessSpec,
    all_laws,
    check_valid,
    l1_profile,
    make_distribution,
    spec_from_json,
)
from .dubins import DubinsEmbedder, EmbeddingResult
from .local_time import check_identity_chain
from .supermartingale import SuperEmbedder

MODES = ("theorem1", "supermartingale", "negative_control")

DEFAULT_TAIL_GRID = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0)

STAGE_COLUMNS = {
    "theorem1": ("n", "L_hat", "absB_hat", "exact_E_absM", "k_bound", "tv", "se_L",
                 "se_absB", "tv_exact_mode", "pass"),
    "supermartingale": ("n", "mean_absorbed", "mean_gbm", "exact_mean", "tv_absorbed",
                        "tv_gbm", "tv_cross", "se_absorbed", "se_gbm", "pass"),
}
STAGE_COLUMNS["negative_control"] = STAGE_COLUMNS["theorem1"]
TAIL_COLUMNS = ("t", "frac")
CONVERGENCE_COLUMNS = ("window", "threshold", "fraction", "se", "exact", "n_paths", "pass")


@dataclass
class Tolerances:
    se_multiplier: float = 3.0
    fixed_allowance: float = 0.02
    tv: float = 0.02
    final_allowance: float = 0.05
    horizon_budget: float = 0.001
    absorption_budget: float = 0.01


@dataclass
class ExperimentConfig:
    spec: dict
    mode: str = "theorem1"
    num_paths: int = 10_000
    dt: float = 1e-4
    t_max: float | None = None
    seed: int = 0
    bridge_correct: bool = True
    epsilon: float | None = None
    epsilon_factor: float = 2.0
    delta: float = 1e-4
    tolerances: Tolerances = field(default_factory=Tolerances)
    tail_grid: tuple = DEFAULT_TAIL_GRID
    convergence_window: int | None = None
    convergence_threshold: float | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.tolerances, dict):
            self.tolerances = _strict(Tolerances, self.tolerances, "tolerances")
        self.tail_grid = tuple(float(t) for t in self.tail_grid)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.num_paths) < 1:
            raise ValueError("num_paths must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not self.delta > 0 or not self.epsilon_factor > 0:
            raise ValueError("delta and epsilon_factor must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if any(not v > 0 for v in asdict(self.tolerances).values()):
            raise ValueError("tolerances must be positive")

    @property
    def horizon(self) -> float:
        if self.t_max is not None:
            return float(self.t_max)
        return 1e8 if self.mode == "supermartingale" else 500.0

    @property
    def eps(self) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return self.epsilon_factor * math.sqrt(self.dt)

    @property
    def window(self) -> int:
        if self.convergence_window is not None:
            return int(self.convergence_window)
        return 2 if self.mode == "supermartingale" else 3

    @property
    def threshold(self) -> float:
        if self.convergence_threshold is not None:
            return float(self.convergence_threshold)
        return 0.01 if self.mode == "supermartingale" else 0.0

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["tail_grid"] = list(self.tail_grid)
        d.pop("output_dir")
        return d

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentConfig":
        return _strict(cls, doc, "config")


def _strict(cls, doc, what):
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError(f"unknown {what} keys: {sorted(unknown)}")
    return cls(**doc)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_json_dict(json.load(fh))


# statistics ------------------------------------------------------------------


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, float)
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def empirical_law(values) -> DiscreteDistribution:
    uniq, counts = np.unique(np.asarray(values, float), return_counts=True)
    return make_distribution(zip(uniq.tolist(), (counts / counts.sum()).tolist()))


def tv_distance(empirical: DiscreteDistribution, exact: DiscreteDistribution,
                tol: float = 1e-9) -> float:
    """Half the L1 distance, with empirical atoms snapped onto the exact support.

    Empirical mass with no exact atom within ``tol`` counts wholly against
    the distance.
    """
    ex_vals = np.asarray(exact.values)
    remaining = dict(zip(exact.values, exact.masses))
    total = 0.0
    for v, p in empirical.items():
        i = int(np.argmin(np.abs(ex_vals - v)))
        if abs(ex_vals[i] - v) <= tol * max(1.0, abs(v)) and ex_vals[i] in remaining:
            total += abs(p - remaining.pop(ex_vals[i]))
        else:
            total += p
    total += math.fsum(remaining.values())
    return min(1.0, 0.5 * total)


def oscillation(values: np.ndarray, window: int) -> np.ndarray:
    """Per-path range of the last ``window + 1`` stages (``window`` transitions)."""
    tail = values[:, -(window + 1):]
    return tail.max(axis=1) - tail.min(axis=1)


def convergence_stats(result: EmbeddingResult | np.ndarray, window: int,
                      threshold: float = 0.0) -> dict:
    """Fraction of paths whose trailing-window oscillation exceeds ``threshold``."""
    values = result.values[result.ok] if isinstance(result, EmbeddingResult) else result
    n_max = values.shape[1] - 1
    if not 2 <= window <= n_max:
        raise ValueError(f"window must be in 2..{n_max}, got {window}")
    exceed = oscillation(values, window) > threshold
    frac, se = _mean_se(exceed)
    return {"window": window, "threshold": threshold, "fraction": frac, "se": se,
            "n_paths": int(exceed.size)}


def exact_oscillation_probability(spec: ProcessSpec, window: int, threshold: float) -> float:
    """Exact P(range of the last ``window + 1`` stages > threshold), by enumeration."""
    start = spec.n_max - window
    law = all_laws(spec)[start]
    states = {}
    for x, p in law.items():
        states[(x, x, x)] = states.get((x, x, x), 0.0) + p
    for n in range(start, spec.n_max):
        nxt = {}
        for (x, lo, hi), p in states.items():
            for v, q in spec.kernels[(n, x)].items():
                key = (v, min(lo, v), max(hi, v))
                nxt[key] = nxt.get(key, 0.0) + p * q
        states = nxt
    return math.fsum(p for (_, lo, hi), p in states.items() if hi - lo > threshold)


def t_infinity_tail(times, grid) -> list[tuple[float, float]]:
    """Fraction of paths with final stopping time above each ``t`` in ``grid``.

    Infinite times (declared GBM absorption) are excluded.
    """
    times = np.asarray(times, float)
    times = times[np.isfinite(times)]
    out = []
    for t in grid:
        out.append((float(t), float((times > t).mean()) if times.size else 0.0))
    return out


# experiment --------------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    stage_columns: tuple
    stages: list
    tail: list
    convergence: list
    counters: dict
    verdicts: dict = field(default_factory=dict)
    # raw per-path results keyed by embedding name; never written to disk
    results: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def provenance(self) -> dict:
        return {"package": "skorokhod_mc", "version": __version__,
                "rng": "philox4x32-10", "normals": "ziggurat-128"}


def _theorem1(cfg: ExperimentConfig, spec: ProcessSpec):
    if spec.kind != MARTINGALE:
        raise ValueError(f"mode {cfg.mode} needs a martingale spec")
    est = DubinsEmbedder(dt=cfg.dt, t_max=cfg.horizon, bridge_correct=cfg.bridge_correct,
                         seed=cfg.seed, epsilon=cfg.eps).fit(spec)
    res = est.transform(cfg.num_paths)
    exact_mode = est.sample_exact(cfg.num_paths)
    laws = est.laws_
    profile = est.profile_
    chain = check_identity_chain(res, profile, cfg.tolerances.se_multiplier,
                                 cfg.tolerances.fixed_allowance,
                                 cfg.tolerances.final_allowance)
    ok = res.ok
    stages = []
    for row in chain.rows:
        n = row.n
        tv = tv_distance(empirical_law(res.values[ok, n]), laws[n]) if ok.any() else 1.0
        tv_ex = tv_distance(empirical_law(exact_mode[:, n]),
                            empirical_law(res.values[ok, n])) if ok.any() else 1.0
        stages.append({"n": n, "L_hat": row.l_hat, "absB_hat": row.abs_b_hat,
                       "exact_E_absM": row.exact_abs_m, "k_bound": profile.k_bound,
                       "tv": tv, "se_L": row.se_l, "se_absB": row.se_abs_b,
                       "tv_exact_mode": tv_ex})
    final_t = res.stopping_times[ok, -1]
    tail = [{"t": t, "frac": f} for t, f in t_infinity_tail(final_t, cfg.tail_grid)]
    conv = []
    if 2 <= cfg.window <= spec.n_max:
        c = convergence_stats(res, cfg.window, cfg.threshold)
        c["exact"] = exact_oscillation_probability(spec, cfg.window, cfg.threshold)
        conv.append(c)
    counters = {"num_paths": cfg.num_paths, "horizon_failures": res.horizon_failures,
                "absorption_declared": 0}
    return stages, tail, conv, counters, {"brownian": res}


def _supermartingale(cfg: ExperimentConfig, spec: ProcessSpec):
    if spec.kind != SUPERMARTINGALE:
        raise ValueError("mode supermartingale needs a supermartingale spec")
    common = dict(dt=cfg.dt, t_max=cfg.horizon, bridge_correct=cfg.bridge_correct,
                  seed=cfg.seed, delta=cfg.delta)
    absorbed = SuperEmbedder("absorbed", **common).fit(spec)
    res_a = absorbed.transform(cfg.num_paths)
    res_g = SuperEmbedder("gbm", **common).fit(spec).transform(cfg.num_paths)
    laws = absorbed.laws_
    stages = []
    for n in range(spec.n_max + 1):
        va = res_a.values[res_a.ok, n]
        vg = res_g.values[res_g.ok, n]
        ma, sa = _mean_se(va)
        mg, sg = _mean_se(vg)
        la, lg = empirical_law(va), empirical_law(vg)
        stages.append({"n": n, "mean_absorbed": ma, "mean_gbm": mg,
                       "exact_mean": laws[n].mean, "tv_absorbed": tv_distance(la, laws[n]),
                       "tv_gbm": tv_distance(lg, laws[n]), "tv_cross": tv_distance(lg, la),
                       "se_absorbed": sa, "se_gbm": sg})
    tail = [{"t": t, "frac": f}
            for t, f in t_infinity_tail(res_a.stopping_times[res_a.ok, -1], cfg.tail_grid)]
    conv = []
    if 2 <= cfg.window <= spec.n_max:
        c = convergence_stats(res_a, cfg.window, cfg.threshold)
        c["exact"] = exact_oscillation_probability(spec, cfg.window, cfg.threshold)
        conv.append(c)
    declared = int(res_g.declared_absorbed.sum())
    counters = {"num_paths": cfg.num_paths,
                "horizon_failures": res_a.horizon_failures,
                "horizon_failures_gbm": res_g.horizon_failures,
                "absorption_declared": declared,
                "gbm_completed": int(res_g.ok.sum()),
                "exact_zero_mass": laws[-1].mass_of(0.0, tol=0.0)}
    return stages, tail, conv, counters, {"absorbed": res_a, "gbm": res_g}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run the configured experiment; output is a pure function of the config."""
    spec = spec_from_json(config.spec)
    check_valid(spec)
    if config.mode == "supermartingale":
        stages, tail, conv, counters, results = _supermartingale(config, spec)
    else:
        stages, tail, conv, counters, results = _theorem1(config, spec)
    report = ExperimentReport(config, STAGE_COLUMNS[config.mode], stages, tail, conv, counters,
                              results=results)
    evaluate(report)
    if config.output_dir:
        write_report(report, config.output_dir)
    return report


def _close(a, b, se, tol) -> bool:
    return abs(a - b) < tol.se_multiplier * se + tol.fixed_allowance


def evaluate(report: ExperimentReport) -> dict:
    """Fill per-row pass flags and the verdict map from stored numbers only."""
    cfg = report.config
    tol = cfg.tolerances
    verdicts = {}
    if cfg.mode in ("theorem1", "negative_control"):
        bound_ok = ident_ok = tv_ok = True
        for r in report.stages:
            r_ident = (_close(r["L_hat"], r["exact_E_absM"], r["se_L"], tol)
                     and _close(r["L_hat"], r["absB_hat"], math.hypot(r["se_L"], r["se_absB"]), tol))
            r_bound = r["absB_hat"] <= (r["k_bound"] + tol.se_multiplier * r["se_absB"]
                                      + tol.fixed_allowance)
            r_tv = r["tv"] < tol.tv and r["tv_exact_mode"] < tol.tv
            r["pass"] = bool(r_ident and r_bound and r_tv)
            ident_ok &= r_ident
            bound_ok &= r_bound
            tv_ok &= r_tv
        verdicts["local_time_identity"] = bool(ident_ok)
        if cfg.mode == "theorem1":
            verdicts["l1_bound"] = bool(bound_ok)
            verdicts["law_tv"] = bool(tv_ok)
            last = report.stages[-1]
            verdicts["final_local_time_bound"] = bool(
                last["L_hat"] <= last["k_bound"] + tol.final_allowance)
        else:
            first, last = report.stages[1], report.stages[-1]
            se = math.hypot(first["se_L"], last["se_L"])
            verdicts["local_time_grows"] = bool(
                last["L_hat"] - first["L_hat"] > tol.se_multiplier * se)
        fracs = [r["frac"] for r in report.tail]
        verdicts["tail_non_increasing"] = all(b <= a for a, b in zip(fracs, fracs[1:]))
    else:
        means_ok = tv_ok = contraction = True
        prev = None
        for r in report.stages:
            r_mean = (_close(r["mean_absorbed"], r["exact_mean"], r["se_absorbed"], tol)
                      and _close(r["mean_gbm"], r["exact_mean"], r["se_gbm"], tol))
            r_tv = max(r["tv_absorbed"], r["tv_gbm"], r["tv_cross"]) < tol.tv
            r["pass"] = bool(r_mean and r_tv)
            means_ok &= r_mean
            tv_ok &= r_tv
            if prev is not None:
                contraction &= (r["mean_absorbed"] <= prev["mean_absorbed"]
                                + tol.se_multiplier * math.hypot(r["se_absorbed"], prev["se_absorbed"]))
            prev = r
        verdicts["mean_matches_exact"] = bool(means_ok)
        verdicts["law_tv"] = bool(tv_ok)
        verdicts["mean_contraction"] = bool(contraction)
        c = report.counters
        n_done = max(c["gbm_completed"], 1)
        frac = c["absorption_declared"] / n_done
        se = math.sqrt(max(frac * (1 - frac), 1e-300) / n_done)
        verdicts["absorption_budget"] = bool(
            abs(frac - c["exact_zero_mass"]) <= tol.absorption_budget + tol.se_multiplier * se)
        verdicts["horizon_budget_gbm"] = bool(
            c["horizon_failures_gbm"] / c["num_paths"] < tol.horizon_budget)
    verdicts["horizon_budget"] = bool(
        report.counters["horizon_failures"] / report.counters["num_paths"] < tol.horizon_budget)
    for r in report.convergence:
        r["pass"] = bool(abs(r["fraction"] - r["exact"]) <= tol.se_multiplier * r["se"]
                         or (r["se"] == 0 and r["fraction"] == r["exact"]))
    if report.convergence:
        verdicts["convergence_matches_exact"] = all(r["pass"] for r in report.convergence)
    report.verdicts = verdicts
    return verdicts


# files -----------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _parse(v: str):
    if v in ("true", "false"):
        return v == "true"
    try:
        return int(v)
    except ValueError:
        return float(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, [{c: _parse(v) for c, v in zip(header, r)} for r in body]


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def summary_json(report: ExperimentReport) -> str:
    doc = {"config": report.config.to_json_dict(), "counters": report.counters,
           "verdicts": report.verdicts, "passed": report.passed,
           "provenance": report.provenance(),
           "stage_pass": [r.get("pass") for r in report.stages]}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_report(report: ExperimentReport, directory) -> list[str]:
    """Write stages.csv, tail.csv, convergence.csv and summary.json."""
    os.makedirs(directory, exist_ok=True)
    files = {
        "stages.csv": _csv_text(report.stage_columns, report.stages),
        "tail.csv": _csv_text(TAIL_COLUMNS, report.tail),
        "convergence.csv": _csv_text(CONVERGENCE_COLUMNS, report.convergence),
        "summary.json": summary_json(report),
    }
    paths = []
    for name, text in files.items():
        path = os.path.join(directory, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths


def load_report(directory) -> ExperimentReport:
    """Rebuild a report from its CSVs plus the config and counters in summary.json.

    Verdicts are recomputed, not read back.
    """
    with open(os.path.join(directory, "summary.json")) as fh:
        summary = json.load(fh)
    config = ExperimentConfig.from_json_dict(summary["config"])
    columns, stages = _read_csv(os.path.join(directory, "stages.csv"))
    _, tail = _read_csv(os.path.join(directory, "tail.csv"))
    _, conv = _read_csv(os.path.join(directory, "convergence.csv"))
    report = ExperimentReport(config, tuple(columns), stages, tail, conv, summary["counters"])
    evaluate(report)
    return report
