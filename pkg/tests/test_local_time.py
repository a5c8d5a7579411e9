import numpy as np
import pytest

from skorokhod_mc.brownian import BrownianPath
from skorokhod_mc.distributions import from_preset, l1_profile
from skorokhod_mc.dubins import DubinsEmbedder
from skorokhod_mc.local_time import (
    check_identity_chain,
    check_identity_truncated,
    estimate,
    identity_from_arrays,
    local_time_batch,
    local_time_occupation,
    local_time_tanaka,
    occupation_from_samples,
    tanaka_from_samples,
)

ROOT_2_PI = np.sqrt(2 / np.pi)


def test_oracles_on_hand_path():
    b = np.array([0.0, 0.5, -0.5, -0.2, 0.3])
    # sgn(0) = -1, so the first increment enters with a minus sign
    expected_integral = np.cumsum([0, -1 * 0.5, 1 * -1.0, -1 * 0.3, -1 * 0.5])
    np.testing.assert_allclose(tanaka_from_samples(b), np.abs(b) - expected_integral)
    occ = occupation_from_samples(b, dt=0.1, epsilon=0.25)
    np.testing.assert_allclose(occ, np.array([0, 1, 1, 1, 2]) * 0.1 / 0.5)


def test_zero_time():
    path = BrownianPath(0, 0)
    assert local_time_tanaka(path, 0.0) == 0
    assert local_time_occupation(BrownianPath(0, 0), 0.0) == 0


def test_engine_matches_numpy_oracle():
    dt, eps = 1e-3, 2 * np.sqrt(1e-3)
    grid = [0.25, 0.5, 1.0, 2.0]
    tan, occ, b_at = local_time_batch(3, 30, grid, dt=dt)
    for pid in range(30):
        _, b = BrownianPath(3, pid, dt=dt, t_max=2.0).samples()
        idx = np.rint(np.asarray(grid) / dt).astype(int)
        np.testing.assert_allclose(b_at[pid], b[idx], atol=1e-10)
        np.testing.assert_allclose(tan[pid], tanaka_from_samples(b)[idx], atol=1e-9)
        np.testing.assert_allclose(occ[pid], occupation_from_samples(b, dt, eps)[idx], atol=1e-12)


def test_single_path_matches_batch():
    tan, occ, _ = local_time_batch(3, [4], [1.0], dt=1e-3)
    est = estimate(BrownianPath(3, 4, dt=1e-3), 1.0)
    assert est.tanaka == pytest.approx(tan[0, 0], abs=1e-12)
    assert est.occupation == pytest.approx(occ[0, 0], abs=1e-12)


def test_cannot_rewind():
    path = BrownianPath(0, 0, dt=1e-3)
    local_time_tanaka(path, 1.0)
    with pytest.raises(ValueError):
        local_time_tanaka(path, 0.5)
    with pytest.raises(ValueError):
        local_time_occupation(path, 2.0, epsilon=0.5)


def test_monotonicity():
    dt = 1e-4
    grid = np.linspace(0.01, 1.0, 100)
    tan, occ, _ = local_time_batch(1, 300, grid, dt=dt)
    assert np.all(np.diff(occ, axis=1) >= 0)
    drops = np.minimum(np.diff(tan, axis=1), 0)
    rms = np.sqrt((drops ** 2).sum(axis=1))  # accumulated over unit time
    assert np.all(rms <= 3 * np.sqrt(dt))


def test_constant_away_from_zero():
    # once |B| stays away from 0 the Tanaka estimate is flat up to rounding
    dt = 1e-3
    _, b = BrownianPath(2, 0, dt=dt, t_max=20.0).samples()
    lt = tanaka_from_samples(b)
    far = np.abs(b) > 0.5
    run = np.flatnonzero(far[:-1] & far[1:])
    assert run.size > 100
    assert np.max(np.abs(lt[run + 1] - lt[run])) < 1e-12


def test_mean_at_unit_time():
    n = 20_000
    tan, occ, b = local_time_batch(7, n, [1.0], dt=1e-3)
    se = tan.std() / np.sqrt(n)
    assert abs(tan.mean() - ROOT_2_PI) < 3 * se + 0.01
    assert abs(occ.mean() - ROOT_2_PI) < 3 * se + 0.02
    assert abs(np.abs(b).mean() - ROOT_2_PI) < 3 * se


def test_identity_trivial_stopping_time():
    chk = check_identity_truncated(0, 100, (0.0, 1.0), x=0.0)
    assert chk.l_hat == 0 and chk.abs_b_hat == 0 and chk.passes()


@pytest.mark.parametrize("m", [0.25, 1.0, 4.0, np.inf])
def test_truncated_identity(m):
    chk = check_identity_truncated(5, 20_000, (-1.0, 1.0), m=m, dt=1e-3)
    assert chk.passes()
    if m == np.inf:
        assert chk.abs_b_hat == 1.0


def test_identity_from_arrays():
    chk = identity_from_arrays([1.0, 1.0], [1.0, 1.0], 1.0)
    assert chk.gap == 0 and chk.combined_se == 0


def test_chain_constant():
    spec = from_preset("constant", 3)
    res = DubinsEmbedder().fit_transform(spec, 10)
    rep = check_identity_chain(res, l1_profile(spec))
    assert rep.passed and rep.k_bound == 0 and rep.l_final == 0


def test_chain_stopped_walk_small():
    spec = from_preset("stopped_walk", 6)
    res = DubinsEmbedder(dt=1e-3, seed=2).fit_transform(spec, 4000)
    rep = check_identity_chain(res, l1_profile(spec))
    assert rep.passed
    assert [r.exact_abs_m for r in rep.rows] == list(l1_profile(spec).per_stage)


def test_chain_rejects_mismatched_profile():
    res = DubinsEmbedder(dt=1e-3).fit_transform(from_preset("random_walk", 3), 10)
    with pytest.raises(ValueError):
        check_identity_chain(res, l1_profile(from_preset("random_walk", 4)))
