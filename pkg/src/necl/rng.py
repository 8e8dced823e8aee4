"""Counter-based random streams.

Every random number is a pure function of ``(key, block, channel, trajectory,
tag)``: the Philox4x64-10 bijection is evaluated on that 256-bit counter. A
trajectory, or a single mode inside it, can therefore be regenerated in
isolation and in any order, and whole ensembles can be drawn with vectorized
array arithmetic. The block function is bit-identical to
``numpy.random.Philox`` (checked in the test-suite), which is used only
because numpy does not expose a vectorized keyed evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)

# stream tags separate independent uses of the same (trajectory, channel)
TAG_INITIAL = 0
TAG_NOISE = 1


def _mulhilo(a, b):
    a0, a1 = a & _LO, a >> _S32
    b0, b1 = b & _LO, b >> _S32
    p00, p01, p10, p11 = a0 * b0, a0 * b1, a1 * b0, a1 * b1
    mid = (p00 >> _S32) + (p01 & _LO) + (p10 & _LO)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, a * b


def philox4x64(counter, key):
    """Philox4x64-10 block function on broadcastable uint64 arrays.

    Parameters
    ----------
    counter : sequence of four array_like
        Counter words ``(c0, c1, c2, c3)``.
    key : sequence of two int
        Key words.

    Returns
    -------
    tuple of four uint64 arrays
    """
    x0, x1, x2, x3 = np.broadcast_arrays(*[np.asarray(c, dtype=np.uint64) for c in counter])
    k0, k1 = np.uint64(key[0]), np.uint64(key[1])
    with np.errstate(over="ignore"):
        for rnd in range(10):
            if rnd:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0, x0)
            hi1, lo1 = _mulhilo(_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
    return x0, x1, x2, x3


def key_from_seed(seed: int) -> tuple[int, int]:
    """Derive a 128-bit Philox key from an integer master seed."""
    st = np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)
    return int(st[0]), int(st[1])


def _to_unit(u):
    # 53 random bits, centred in the cell so the result lies strictly in (0, 1)
    return ((u >> _S11).astype(np.float64) + 0.5) * 2.0**-53


def uniforms(key, trajectory, channel, block=0, tag=TAG_INITIAL) -> np.ndarray:
    """Four uniforms in (0, 1) per counter, stacked on the last axis."""
    words = philox4x64((block, channel, trajectory, tag), key)
    return np.stack([_to_unit(w) for w in words], axis=-1)


def normals(key, trajectory, channel, block=0, tag=TAG_INITIAL) -> np.ndarray:
    """Four standard normals per counter (two Box-Muller pairs)."""
    u = uniforms(key, trajectory, channel, block, tag)
    rad01 = np.sqrt(-2.0 * np.log(u[..., 0]))
    rad23 = np.sqrt(-2.0 * np.log(u[..., 2]))
    ang01 = 2.0 * np.pi * u[..., 1]
    ang23 = 2.0 * np.pi * u[..., 3]
    return np.stack(
        [rad01 * np.cos(ang01), rad01 * np.sin(ang01), rad23 * np.cos(ang23), rad23 * np.sin(ang23)],
        axis=-1,
    )


@dataclass(frozen=True)
class StreamSet:
    """Random source for an ensemble of trajectories.

    ``draw_pairs(trajectories, channels)`` returns two independent standard
    normals for every (trajectory, channel) pair; channel 0 is reserved for
    the system and channels ``1..`` enumerate reservoir modes.
    """

    seed: int

    @property
    def key(self) -> tuple[int, int]:
        return key_from_seed(self.seed)

    def draw_pairs(self, trajectories, channels, tag: int = TAG_INITIAL) -> np.ndarray:
        tr = np.asarray(trajectories, dtype=np.uint64)[:, None]
        ch = np.asarray(channels, dtype=np.uint64)[None, :]
        z = normals(self.key, tr, ch, 0, tag)
        return z[..., :2]

    def draw_uniform_pairs(self, trajectories, channels, tag: int = TAG_INITIAL) -> np.ndarray:
        tr = np.asarray(trajectories, dtype=np.uint64)[:, None]
        ch = np.asarray(channels, dtype=np.uint64)[None, :]
        return uniforms(self.key, tr, ch, 0, tag)[..., :2]

    def normal_stream(self, trajectory: int, channel: int, count: int, tag: int = TAG_NOISE) -> np.ndarray:
        """``count`` normals from consecutive blocks of one (trajectory, channel)."""
        blocks = np.arange((count + 3) // 4, dtype=np.uint64)
        z = normals(self.key, np.uint64(trajectory), np.uint64(channel), blocks, tag)
        return z.reshape(-1)[:count]
