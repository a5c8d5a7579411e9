"""Acceptance criteria 1-8 at full size.

Each test prints one ``criterion k: PASS|FAIL`` line (also repeated in the
terminal summary) and then asserts. Targets come from exact oracles:
enumeration of the discrete laws, rational-arithmetic pushforwards, the
folded-normal mean sqrt(2/pi), and hand arithmetic for 0.875**5.
"""

import math
import os

import numpy as np
import pytest

from oracles import dubins_pushforward, mean, random_rational_law, super_pushforward
from skorokhod_mc.brownian import exit_batch
from skorokhod_mc.distributions import from_preset, make_distribution, unconditional_law
from skorokhod_mc.dubins import build_split_tree, plan_exact_law
from skorokhod_mc.local_time import local_time_batch
from skorokhod_mc.supermartingale import SuperEmbedder, build_super_plan
from skorokhod_mc.verify import (
    ExperimentConfig,
    convergence_stats,
    exact_oscillation_probability,
    run_experiment,
    t_infinity_tail,
)

pytestmark = pytest.mark.acceptance

SEED = 0
DT = 1e-4
TAIL_GRID = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0)


def _verdict(log, k, checks: dict, detail: str):
    ok = all(checks.values())
    failed = [name for name, v in checks.items() if not v]
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    if failed:
        line += f"  failed={failed}"
    log.append(line)
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="session")
def stopped10():
    return run_experiment(ExperimentConfig(
        spec={"preset": "stopped_walk", "n_max": 10}, mode="theorem1",
        num_paths=50_000, dt=DT, seed=SEED))


@pytest.fixture(scope="session")
def stopped30():
    return run_experiment(ExperimentConfig(
        spec={"preset": "stopped_walk", "n_max": 30}, mode="theorem1",
        num_paths=10_000, dt=DT, seed=SEED, convergence_window=3, tail_grid=TAIL_GRID))


@pytest.fixture(scope="session")
def unstopped25():
    return run_experiment(ExperimentConfig(
        spec={"preset": "random_walk", "n_max": 25}, mode="negative_control",
        num_paths=10_000, dt=DT, seed=SEED, tail_grid=TAIL_GRID))


def test_criterion_1_exact_plans(acceptance_log):
    worst_m = worst_s = 0.0
    for i in range(20):
        rng = np.random.default_rng(1000 + i)
        atoms = random_rational_law(rng, max_atoms=8)
        x = mean(atoms)
        assert dubins_pushforward(atoms, x) == atoms
        law = plan_exact_law(build_split_tree(
            make_distribution((float(v), float(m)) for v, m in atoms.items()), float(x)))
        assert len(law) == len(atoms)
        worst_m = max(worst_m, max(abs(law.mass_of(float(v), tol=0) - float(m))
                                   for v, m in atoms.items()))
    for i in range(20):
        rng = np.random.default_rng(2000 + i)
        atoms = random_rational_law(rng, max_atoms=8, lo=0, hi=12)
        x = mean(atoms) + int(rng.integers(0, 3))
        assert super_pushforward(atoms, x) == atoms
        law = build_super_plan(
            make_distribution((float(v), float(m)) for v, m in atoms.items()), float(x)).exact_law()
        assert len(law) == len(atoms)
        worst_s = max(worst_s, max(abs(law.mass_of(float(v), tol=0) - float(m))
                                   for v, m in atoms.items()))
    _verdict(acceptance_log, 1, {"martingale": worst_m <= 1e-12, "super": worst_s <= 1e-12},
             f"max atom error martingale={worst_m:.2e} super={worst_s:.2e}")


def test_criterion_2_law_embedding(stopped10, acceptance_log):
    tv = max(r["tv"] for r in stopped10.stages)
    fail_frac = stopped10.counters["horizon_failures"] / stopped10.counters["num_paths"]
    _verdict(acceptance_log, 2, {"tv": tv < 0.02, "horizon": fail_frac < 0.001},
             f"max stage TV={tv:.4f} horizon failures={fail_frac:.4%}")


def test_criterion_3_local_time_identities(stopped10, acceptance_log):
    res = exit_batch(SEED, 100_000, (-1.0, 1.0), dt=DT)
    l_exit = res["l_tanaka"].mean()
    gaps = [abs(r["L_hat"] - r["exact_E_absM"]) - (3 * r["se_L"] + 0.02)
            for r in stopped10.stages[1:]]
    last = stopped10.stages[-1]
    checks = {
        "exit_interval": abs(l_exit - 1.0) < 0.02,
        "per_stage": all(g < 0 for g in gaps),
        "identity_verdict": stopped10.verdicts["local_time_identity"],
        "final_bound": last["L_hat"] <= last["k_bound"] + 0.05,
    }
    _verdict(acceptance_log, 3, checks,
             f"E[L_T] exit[-1,1]={l_exit:.4f}; worst stage slack={max(gaps):+.4f}; "
             f"L_final={last['L_hat']:.4f} K={last['k_bound']:.4f}")


def test_criterion_4_local_time_estimators(acceptance_log):
    tan, occ, _ = local_time_batch(SEED, 100_000, [1.0], dt=DT)
    target = math.sqrt(2 / math.pi)
    t_mean, o_mean = tan.mean(), occ.mean()
    rel = abs(t_mean - target) / target
    gap = abs(t_mean - o_mean) / t_mean
    _verdict(acceptance_log, 4, {"tanaka": rel < 0.01, "agreement": gap < 0.05},
             f"Tanaka mean={t_mean:.5f} (rel err {rel:.3%}), occupation mean={o_mean:.5f} "
             f"(gap {gap:.3%})")


def test_criterion_5_negative_control(unstopped25, stopped30, acceptance_log):
    rep = unstopped25
    l_hat = [r["L_hat"] for r in rep.stages]
    # stopped walk on the same seed and paths, read at stage 25
    stopped = stopped30.results["brownian"]
    t25 = stopped.stopping_times[stopped.ok, 25]
    stopped_tail = [f for _, f in t_infinity_tail(t25, TAIL_GRID)]
    free_tail = [r["frac"] for r in rep.tail]
    checks = {
        "identity_per_stage": rep.verdicts["local_time_identity"],
        "local_time_grows": rep.verdicts["local_time_grows"],
        "tail_not_below": all(f >= s for f, s in zip(free_tail, stopped_tail)),
        "tail_strictly_above": any(f > s for f, s in zip(free_tail, stopped_tail)),
    }
    _verdict(acceptance_log, 5, checks,
             f"L_hat stage1={l_hat[1]:.3f} stage25={l_hat[-1]:.3f}; tail at t=20 "
             f"unstopped={free_tail[4]:.4f} vs stopped={stopped_tail[4]:.4f}")


def test_criterion_6_supermartingale(acceptance_log):
    rep = run_experiment(ExperimentConfig(
        spec={"preset": "multiplicative", "n_max": 5}, mode="supermartingale",
        num_paths=50_000, dt=DT, seed=SEED))
    tv = max(max(r["tv_absorbed"], r["tv_gbm"]) for r in rep.stages)
    cross = max(r["tv_cross"] for r in rep.stages)
    last = rep.stages[-1]
    target = 0.875 ** 5
    checks = {
        "tv_exact": tv < 0.02,
        "mean_absorbed": abs(last["mean_absorbed"] - target) < 3 * last["se_absorbed"] + 0.02,
        "mean_gbm": abs(last["mean_gbm"] - target) < 3 * last["se_gbm"] + 0.02,
        "cross_tv": cross < 0.02,
        "report_passed": rep.passed,
    }
    _verdict(acceptance_log, 6, checks,
             f"max TV to exact={tv:.4f}; absorbed vs GBM TV={cross:.4f}; "
             f"E[X5] absorbed={last['mean_absorbed']:.4f} gbm={last['mean_gbm']:.4f} "
             f"target={target:.4f}")


def test_criterion_7_convergence(stopped30, acceptance_log):
    conv = stopped30.convergence[0]
    spec = from_preset("stopped_walk", 30)
    law27 = unconditional_law(spec, 27)
    unabsorbed = 1 - law27.mass_of(-3) - law27.mass_of(5)
    tail200 = dict((r["t"], r["frac"]) for r in stopped30.tail)[200.0]

    sspec = from_preset("multiplicative", 40)
    res = SuperEmbedder("absorbed", dt=DT, seed=SEED).fit_transform(sspec, 10_000)
    sc = convergence_stats(res, 2, 0.01)
    s_exact = exact_oscillation_probability(sspec, 2, 0.01)
    checks = {
        "walk_matches_oracle": abs(conv["fraction"] - unabsorbed) <= 3 * conv["se"],
        "walk_tail_200": tail200 < 0.05,
        "super_below_5pct": sc["fraction"] < 0.05,
        "super_matches_oracle": abs(sc["fraction"] - s_exact) <= 3 * sc["se"],
        "super_horizon": res.horizon_failures / res.n_paths < 0.001,
    }
    _verdict(acceptance_log, 7, checks,
             f"walk changed-fraction={conv['fraction']:.4f} oracle={unabsorbed:.4f} "
             f"(SE {conv['se']:.4f}); tail(200)={tail200:.4f}; super exceed-fraction="
             f"{sc['fraction']:.4f} oracle={s_exact:.4f}")


def test_criterion_8_determinism(tmp_path, monkeypatch, acceptance_log):
    configs = {
        "theorem1": {"preset": "stopped_walk", "n_max": 10},
        "supermartingale": {"preset": "multiplicative", "n_max": 5},
    }
    same = {}
    for mode, spec in configs.items():
        blobs = []
        for workers in ("1", "4"):
            monkeypatch.setenv("SKMC_WORKERS", workers)
            out = tmp_path / f"{mode}-{workers}"
            run_experiment(ExperimentConfig(spec=spec, mode=mode, num_paths=5000, dt=DT,
                                            seed=SEED, output_dir=str(out)))
            blobs.append({f: (out / f).read_bytes() for f in sorted(os.listdir(out))})
        same[mode] = blobs[0] == blobs[1] and len(blobs[0]) == 4
    _verdict(acceptance_log, 8, same, "byte-identical outputs with 1 and 4 workers")
