"""Counter-based random streams.

Every draw is a pure function of ``(master_seed, path_index, counter)``, so a
path's increments do not depend on which worker simulates it or in what
order.  The mixer is the SplitMix64 finaliser; a path key is derived from the
seed and path index, and the counter is hashed before being combined with the
key so that streams of different paths never overlap as shifted copies.

Normals use Box-Muller on consecutive uniform pairs: normal ``n`` takes the
cosine (even n) or sine (odd n) branch of pair ``n // 2``.  Bridge-correction
uniforms live in a separate counter lane so that switching the correction on
does not perturb the Gaussian increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
PATH_MULT = 0xD1B54A32D192ED03
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
LANE_SHIFT = 56
LANE_NORMAL = 0
LANE_BRIDGE = 1
TWO_PI = 6.283185307179586

_U = np.uint64


def mix64(z):
    """SplitMix64 finaliser on a Python int or a uint64 array."""
    if isinstance(z, np.ndarray):
        z = z ^ (z >> _U(30))
        z = z * _U(MIX1)
        z = z ^ (z >> _U(27))
        z = z * _U(MIX2)
        return z ^ (z >> _U(31))
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def path_key(master_seed: int, path_index):
    """Key of one path (int) or of an array of paths (uint64 array)."""
    base = mix64((int(master_seed) + GOLDEN) & MASK64)
    if isinstance(path_index, np.ndarray):
        p = path_index.astype(np.uint64)
        return mix64(_U(base) ^ (p * _U(PATH_MULT)))
    return mix64(base ^ ((int(path_index) * PATH_MULT) & MASK64))


def _raw(keys, counter: int):
    c = mix64((counter + GOLDEN) & MASK64)
    return mix64(keys ^ _U(c))


def _to_unit(raw):
    # (0, 1): never exactly 0 or 1, so log() and bridge comparisons are safe
    return ((raw >> _U(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def uniforms_at(keys: np.ndarray, counter: int, lane: int = LANE_NORMAL) -> np.ndarray:
    return _to_unit(_raw(keys, (lane << LANE_SHIFT) | counter))


def normal_pairs(keys: np.ndarray, pair: int):
    """Both Box-Muller outputs of ``pair`` for every key."""
    u1 = uniforms_at(keys, 2 * pair)
    u2 = uniforms_at(keys, 2 * pair + 1)
    rad = np.sqrt(-2.0 * np.log(u1))
    theta = TWO_PI * u2
    return rad * np.cos(theta), rad * np.sin(theta)


def counter_uniforms(key: int, counters, lane: int = LANE_NORMAL) -> np.ndarray:
    """Uniforms of a single key at an array of counters."""
    c = np.asarray(counters, dtype=np.uint64) | _U(lane << LANE_SHIFT)
    return _to_unit(mix64(_U(key) ^ mix64(c + _U(GOLDEN))))


def counter_normals(key: int, start: int, count: int) -> np.ndarray:
    """Normals ``start .. start+count-1`` of a single key."""
    if count <= 0:
        return np.empty(0)
    p0 = start // 2
    pairs = np.arange(p0, (start + count - 1) // 2 + 1, dtype=np.uint64)
    u1 = counter_uniforms(key, 2 * pairs)
    u2 = counter_uniforms(key, 2 * pairs + _U(1))
    rad = np.sqrt(-2.0 * np.log(u1))
    theta = TWO_PI * u2
    both = np.empty(2 * pairs.size)
    both[0::2] = rad * np.cos(theta)
    both[1::2] = rad * np.sin(theta)
    off = start - 2 * p0
    return both[off:off + count]


def normal_block(keys: np.ndarray, start: int, count: int) -> np.ndarray:
    """Normals ``start .. start+count-1`` for each key, shape (len(keys), count)."""
    out = np.empty((keys.size, count))
    first_pair = start // 2
    last_pair = (start + count - 1) // 2
    for p in range(first_pair, last_pair + 1):
        c, s = normal_pairs(keys, p)
        for n, v in ((2 * p, c), (2 * p + 1, s)):
            j = n - start
            if 0 <= j < count:
                out[:, j] = v
    return out


@dataclass(frozen=True)
class RngStream:
    """Random stream of one simulated path."""

    master_seed: int
    path_index: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed <= MASK64):
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if self.path_index < 0:
            raise ValueError("path_index must be non-negative")

    @property
    def key(self) -> int:
        return path_key(self.master_seed, self.path_index)

    def normals(self, start: int, count: int) -> np.ndarray:
        return counter_normals(self.key, start, count)

    def bridge_uniforms(self, count: int) -> np.ndarray:
        """Bridge-lane uniforms for steps 0 .. count-1."""
        return counter_uniforms(self.key, np.arange(count), LANE_BRIDGE)

    def child(self, path_index: int) -> "RngStream":
        return RngStream(self.master_seed, path_index)
