import numpy as np
import pytest
from scipy import stats

from skorokhod_mc import _philox as px

# Known-answer vectors for Philox4x32-10 from the Random123 distribution.
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("counter,key,expected", KAT)
def test_known_answers(counter, key, expected):
    assert px.philox_raw(counter, key) == expected


def test_normals_are_deterministic_and_sliceable():
    a = px.normals(7, 3, px.STREAM_NORMAL, 0, 1000)
    b = px.normals(7, 3, px.STREAM_NORMAL, 0, 1000)
    c = px.normals(7, 3, px.STREAM_NORMAL, 501, 499)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[501:], c)
    assert px.normal_at(7, 3, px.STREAM_NORMAL, 777) == a[777]


def test_streams_and_paths_differ():
    base = px.normals(1, 0, px.STREAM_NORMAL, 0, 64)
    assert not np.array_equal(base, px.normals(1, 1, px.STREAM_NORMAL, 0, 64))
    assert not np.array_equal(base, px.normals(2, 0, px.STREAM_NORMAL, 0, 64))
    assert not np.array_equal(base, px.normals(1, 0, px.STREAM_EXACT, 0, 64))


def test_normal_distribution_fit():
    z = px.normals(123, 9, px.STREAM_NORMAL, 0, 400_000)
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.01
    # binned chi-square including both tails
    edges = np.concatenate([[-np.inf], np.linspace(-4, 4, 41), [np.inf]])
    observed, _ = np.histogram(z, edges)
    expected = np.diff(stats.norm.cdf(edges)) * z.size
    assert stats.chisquare(observed, expected).pvalue > 1e-4
    assert stats.kstest(z[:50_000], "norm").pvalue > 1e-4


def test_tail_draws_present():
    z = px.normals(5, 0, px.STREAM_NORMAL, 0, 2_000_000)
    frac = np.mean(np.abs(z) > 3.5)
    expected = 2 * stats.norm.sf(3.5)
    assert abs(frac - expected) < 5 * np.sqrt(expected / z.size)


def test_uniforms_in_open_interval():
    u = px.uniforms(11, 2, px.STREAM_UNIFORM, 0, 200_000)
    assert u.min() > 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 1e-4


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seed_range(seed):
    with pytest.raises(ValueError):
        px.check_seed(seed)
