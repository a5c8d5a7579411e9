"""Philox4x32-10 counter-based generator, compiled with numba.

Every draw is a pure function of ``(seed, path_id, stream, index)``, so any
path can be regenerated in isolation and results do not depend on how paths
are distributed over workers.

Counter layout (four 32-bit words)::

    c0, c1  block index (low, high)
    c2      path_id low 32 bits
    c3      path_id bits 32..55 | stream << 24

The key is the 64-bit master seed split into two words.

Normals use a 128-layer ziggurat. Draw ``j`` of a normal stream is word
``j & 3`` of block ``j >> 2``: the low 7 bits pick the layer and the upper 25
bits carry sign and magnitude, so the two never share bits. The rare
rejection branch continues on a private sub-stream indexed by ``j``, which
keeps draw ``j`` a pure function of ``j``.
"""

import math

import numpy as np
from numba import njit

_MASK = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_SH32 = np.uint64(32)
_SH24 = np.uint64(24)
_INV32 = 1.0 / 4294967296.0

STREAM_NORMAL = 0
STREAM_UNIFORM = 1
STREAM_EXACT = 2
STREAM_FIRST_PASSAGE = 3
_TAIL_OFFSET = 64  # stream + 64 holds ziggurat rejection draws
_TAIL_BLOCKS = 64  # blocks reserved per normal draw on the rejection stream


def _ziggurat_tables():
    m1 = 16777216.0  # 2**24: magnitude range of a 25-bit signed word
    dn = 3.442619855899
    tn = dn
    vn = 9.91256303526217e-3
    kn = np.zeros(128)
    wn = np.zeros(128)
    fn = np.zeros(128)
    q = vn / math.exp(-0.5 * dn * dn)
    kn[0] = (dn / q) * m1
    kn[1] = 0.0
    wn[0] = q / m1
    wn[127] = dn / m1
    fn[0] = 1.0
    fn[127] = math.exp(-0.5 * dn * dn)
    for i in range(126, 0, -1):
        dn = math.sqrt(-2.0 * math.log(vn / dn + math.exp(-0.5 * dn * dn)))
        kn[i + 1] = (dn / tn) * m1
        tn = dn
        fn[i] = math.exp(-0.5 * dn * dn)
        wn[i] = dn / m1
    return kn, wn, fn


_KN, _WN, _FN = _ziggurat_tables()
_ZIG_R = 3.442619855899


@njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds; all arguments and results are uint64 holding 32 bits."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SH32
        lo0 = p0 & _MASK
        hi1 = p1 >> _SH32
        lo1 = p1 & _MASK
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def block(seed, path_id, stream, index):
    s = np.uint64(seed)
    pid = np.uint64(path_id)
    idx = np.uint64(index)
    k0 = s & _MASK
    k1 = s >> _SH32
    c0 = idx & _MASK
    c1 = idx >> _SH32
    c2 = pid & _MASK
    c3 = ((pid >> _SH32) & np.uint64(0xFFFFFF)) | (np.uint64(stream) << _SH24)
    return philox4x32(c0, c1, c2, c3, k0, k1)


@njit(cache=True, inline="always")
def to_unit(u):
    """Map a 32-bit word to the open interval (0, 1)."""
    return (float(u) + 0.5) * _INV32


@njit(cache=True, inline="always")
def _split_word(u):
    """(signed 25-bit magnitude, 7-bit layer) from one 32-bit word."""
    v = np.int64(u >> np.uint64(7))
    if v >= 16777216:
        v -= 33554432
    return v, np.int64(u & np.uint64(127))


@njit(cache=True, inline="always")
def uniform_at(seed, path_id, stream, j):
    """Uniform draw ``j`` of a stream: word ``j & 3`` of block ``j >> 2``."""
    r0, r1, r2, r3 = block(seed, path_id, stream, j >> 2)
    lane = j & 3
    if lane == 0:
        return to_unit(r0)
    if lane == 1:
        return to_unit(r1)
    if lane == 2:
        return to_unit(r2)
    return to_unit(r3)


@njit(cache=True)
def _normal_slow(seed, path_id, stream, j, hz, iz):
    tail = stream + _TAIL_OFFSET
    base = j * _TAIL_BLOCKS
    sub = 0
    while True:
        r0, r1, r2, r3 = block(seed, path_id, tail, base + (sub % _TAIL_BLOCKS))
        sub += 1
        if iz == 0:
            # base strip: sample beyond R, retrying within the tail until accepted
            xx = -math.log(to_unit(r0)) / _ZIG_R
            yy = -math.log(to_unit(r1))
            if yy + yy >= xx * xx:
                return _ZIG_R + xx if hz > 0 else -_ZIG_R - xx
            xx = -math.log(to_unit(r2)) / _ZIG_R
            yy = -math.log(to_unit(r3))
            if yy + yy >= xx * xx:
                return _ZIG_R + xx if hz > 0 else -_ZIG_R - xx
            continue
        x = hz * _WN[iz]
        if _FN[iz] + to_unit(r0) * (_FN[iz - 1] - _FN[iz]) < math.exp(-0.5 * x * x):
            return x
        hz, iz = _split_word(r2)
        if abs(hz) < _KN[iz]:
            return hz * _WN[iz]


@njit(cache=True, inline="always")
def normal_from_word(seed, path_id, stream, j, w):
    """Normal draw ``j`` given its word ``w`` (word ``j & 3`` of block ``j >> 2``)."""
    hz, iz = _split_word(w)
    if abs(hz) < _KN[iz]:
        return hz * _WN[iz]
    return _normal_slow(seed, path_id, stream, j, hz, iz)


@njit(cache=True, inline="always")
def normal_at(seed, path_id, stream, j):
    """Standard normal draw ``j`` of a stream."""
    r0, r1, r2, r3 = block(seed, path_id, stream, j >> 2)
    lane = j & 3
    if lane == 0:
        w = r0
    elif lane == 1:
        w = r1
    elif lane == 2:
        w = r2
    else:
        w = r3
    return normal_from_word(seed, path_id, stream, j, w)


@njit(cache=True)
def normals(seed, path_id, stream, start, count):
    """``count`` standard normals starting at draw index ``start``."""
    out = np.empty(count)
    w0 = w1 = w2 = w3 = np.uint64(0)
    for i in range(count):
        j = start + i
        lane = j & 3
        if lane == 0 or i == 0:
            w0, w1, w2, w3 = block(seed, path_id, stream, j >> 2)
        if lane == 0:
            w = w0
        elif lane == 1:
            w = w1
        elif lane == 2:
            w = w2
        else:
            w = w3
        out[i] = normal_from_word(seed, path_id, stream, j, w)
    return out


@njit(cache=True)
def uniforms(seed, path_id, stream, start, count):
    out = np.empty(count)
    for i in range(count):
        out[i] = uniform_at(seed, path_id, stream, start + i)
    return out


def philox_raw(counter, key):
    """Direct access to the bijection: counter is 4 words, key is 2 words."""
    c = [np.uint64(w) for w in counter]
    k = [np.uint64(w) for w in key]
    return tuple(int(w) for w in philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed
