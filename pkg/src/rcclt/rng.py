"""Counter-based random numbers.

All randomness in the package flows through a 10-round Philox4x64 block
cipher: four 64-bit output words are a pure function of a 256-bit counter
and a 128-bit key.  Draw ``i`` of the stream ``(seed, purpose, lane)`` is
word ``i % 4`` of the block with counter ``(i // 4, lane, 0, 0)`` and key
``(seed, purpose)``.  Any draw is therefore addressable without generating
its predecessors, which is what makes environments, walks and chi paths
reproducible independently of evaluation order and thread count.

The vectorized path (`raw_stream`, `uniform_stream`) and the scalar
kernels (`philox_block`, `stream_uniform`) implement the same function and
are cross-checked against each other and against an external reference
implementation in the test suite.
"""

import numpy as np
from numba import njit

U64 = np.uint64

# Philox4x64 round multipliers and key schedule increments.
_M0 = U64(0xD2E7470EE14C6C93)
_M1 = U64(0xCA5A826395121157)
_W0 = U64(0x9E3779B97F4A7C15)
_W1 = U64(0xBB67AE8584CAA73B)
_MASK32 = U64(0xFFFFFFFF)
_S32 = U64(32)
_S11 = U64(11)
_INV53 = 2.0 ** -53

# Stream purposes; keeps draws for different uses disjoint by key.
PURPOSE_ENV_SEEDS = U64(1)  # key0 = master seed, draw i = seed of environment i
PURPOSE_EDGES = U64(2)      # key0 = environment seed, draw i = edge i
PURPOSE_WALK = U64(3)       # key0 = environment seed, lane = walk index
PURPOSE_CHI = U64(4)        # key0 = master seed, lane = path index
PURPOSE_TEST = U64(1000)


def _mulhilo_vec(a, b):
    """128-bit product of uint64 arrays, split into (high, low) words."""
    lo = a * b
    ah, al = a >> _S32, a & _MASK32
    bh, bl = b >> _S32, b & _MASK32
    mid = ((al * bl) >> _S32) + ((ah * bl) & _MASK32) + ((al * bh) & _MASK32)
    hi = ah * bh + ((ah * bl) >> _S32) + ((al * bh) >> _S32) + (mid >> _S32)
    return hi, lo


def philox_blocks(c0, c1, c2, c3, k0, k1):
    """Apply the 10-round Philox4x64 function to (broadcast) counter arrays.

    Returns the four output words as uint64 arrays of the broadcast shape.
    """
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 = np.asarray(k0, dtype=np.uint64)
    k1 = np.asarray(k1, dtype=np.uint64)
    with np.errstate(over="ignore"):  # wraparound is the point
        for _ in range(10):
            hi0, lo0 = _mulhilo_vec(_M0, c0)
            hi1, lo1 = _mulhilo_vec(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


def raw_stream(seed, purpose, lane, n, first=0):
    """Words ``first .. first+n-1`` of the stream (seed, purpose, lane)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    b_lo = first // 4
    b_hi = (first + n + 3) // 4
    ctr = np.arange(b_lo, b_hi, dtype=np.uint64)
    w0, w1, w2, w3 = philox_blocks(ctr, U64(lane), U64(0), U64(0), U64(seed), U64(purpose))
    words = np.stack((w0, w1, w2, w3), axis=1).ravel()
    off = first - 4 * b_lo
    return words[off:off + n]


def uniform_stream(seed, purpose, lane, n, first=0):
    """Uniform [0, 1) doubles from the 53 high bits of each stream word."""
    bits = raw_stream(seed, purpose, lane, n, first)
    return (bits >> _S11).astype(np.float64) * _INV53


def derive_env_seeds(master_seed, n_env):
    """Per-environment seeds, a pure function of the master seed."""
    return raw_stream(master_seed, PURPOSE_ENV_SEEDS, 0, n_env)


@njit(cache=True, nogil=True)
def _mulhilo(a, b):
    lo = a * b
    ah, al = a >> _S32, a & _MASK32
    bh, bl = b >> _S32, b & _MASK32
    mid = ((al * bl) >> _S32) + ((ah * bl) & _MASK32) + ((al * bh) & _MASK32)
    hi = ah * bh + ((ah * bl) >> _S32) + ((al * bh) >> _S32) + (mid >> _S32)
    return hi, lo


@njit(cache=True, nogil=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Scalar Philox4x64-10 block; identical to `philox_blocks`."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def word_to_uniform(w):
    """Map one 64-bit word to a double in [0, 1)."""
    return np.float64(w >> _S11) * _INV53


@njit(cache=True, nogil=True)
def stream_uniform(seed, purpose, lane, i):
    """Draw ``i`` of a stream as a uniform double (scalar, addressable)."""
    blk = U64(i) >> U64(2)
    w = philox_block(blk, lane, U64(0), U64(0), seed, purpose)
    j = U64(i) & U64(3)
    if j == U64(0):
        return word_to_uniform(w[0])
    elif j == U64(1):
        return word_to_uniform(w[1])
    elif j == U64(2):
        return word_to_uniform(w[2])
    return word_to_uniform(w[3])
