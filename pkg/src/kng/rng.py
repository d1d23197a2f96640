"""Deterministic random number generation.

Everything random in this package flows through one generator family so that
results are reproducible bit-for-bit from a single integer seed, on any
platform, with no dependence on numpy's generator versioning:

  * splitmix64 expands a 64-bit seed into generator state,
  * xoshiro256** produces the u64 stream,
  * bounded ints use rejection sampling (no modulo bias),
  * uniforms in [0, 1) are (u64 >> 11) * 2^-53,
  * normals come from Box-Muller.

Two shapes are provided. ``Xoshiro256`` is the scalar generator used on
contract paths (channel selection, center initialization, stream shuffling),
where draw counts are tiny. ``XoshiroLanes`` runs many independent xoshiro
streams in parallel with numpy for bulk generation; lane j is seeded with
words 4j..4j+3 of the splitmix64 stream, so a 1-lane bank reproduces the
scalar generator exactly (this equivalence is property-tested).

splitmix64 state advances by a fixed additive constant, so its i-th output
has the closed form mix(seed + (i+1)*GOLDEN); lane seeding uses that to
avoid a scalar loop.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _sm_mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix64_stream(seed: int, n: int) -> list[int]:
    """First n outputs of splitmix64 seeded with ``seed``."""
    state = seed & MASK64
    out = []
    for _ in range(n):
        state = (state + GOLDEN) & MASK64
        out.append(_sm_mix(state))
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """Scalar xoshiro256** generator, state seeded via splitmix64."""

    def __init__(self, seed: int):
        self.state = splitmix64_stream(seed, 4)

    @classmethod
    def from_state(cls, state) -> "Xoshiro256":
        if len(state) != 4:
            raise ValueError("state must be 4 words")
        obj = cls.__new__(cls)
        obj.state = [int(w) & MASK64 for w in state]
        return obj

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.state
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.state = [s0, s1, s2, s3]
        return result

    def below(self, n: int) -> int:
        """Uniform int in [0, n) by rejection; unbiased for any n >= 1."""
        if n <= 0:
            raise ValueError("bound must be positive")
        # reject draws from the tail remainder of the 2^64 range
        limit = MASK64 + 1 - ((MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.below(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample_indices(self, n: int, m: int) -> list[int]:
        """m distinct indices from range(n) via partial Fisher-Yates, draw order."""
        if not 0 <= m <= n:
            raise ValueError(f"cannot sample {m} from {n}")
        pool = list(range(n))
        for i in range(m):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:m]


def _sm_mix_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class XoshiroLanes:
    """Bank of independent xoshiro256** streams advanced in lockstep."""

    def __init__(self, seed: int, n_lanes: int):
        if n_lanes < 1:
            raise ValueError("need at least one lane")
        idx = np.arange(1, 4 * n_lanes + 1, dtype=np.uint64)
        words = _sm_mix_vec(np.uint64(seed & MASK64) + idx * np.uint64(GOLDEN))
        self.state = [words[k::4].copy() for k in range(4)]
        self.n_lanes = n_lanes

    def next_u64(self) -> np.ndarray:
        """One u64 per lane, shape (n_lanes,)."""
        s0, s1, s2, s3 = self.state
        five, nine = np.uint64(5), np.uint64(9)
        x = s1 * five
        result = ((x << np.uint64(7)) | (x >> np.uint64(57))) * nine
        t = s1 << np.uint64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
        self.state = [s0, s1, s2, s3]
        return result

    def block_u64(self, n_cols: int) -> np.ndarray:
        """(n_lanes, n_cols) of raw u64 draws; column = draw index."""
        cols = [self.next_u64() for _ in range(n_cols)]
        return np.stack(cols, axis=1)


def uniform_from_u64(u: np.ndarray) -> np.ndarray:
    """Map raw u64 draws to float64 uniforms in [0, 1)."""
    return (u >> np.uint64(11)).astype(np.float64) * 2.0**-53


def normals_from_u64(u: np.ndarray) -> np.ndarray:
    """Box-Muller over pairs of u64 draws along the last axis.

    The last axis must be even; each pair (a, b) yields two normals. The log
    argument uses ((a >> 11) + 1) * 2^-53 in (0, 1] so log(0) cannot occur.
    """
    if u.shape[-1] % 2 != 0:
        raise ValueError("last axis must be even for Box-Muller pairs")
    a = u[..., 0::2]
    b = u[..., 1::2]
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = uniform_from_u64(b)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(u.shape, dtype=np.float64)
    out[..., 0::2] = r * np.cos(theta)
    out[..., 1::2] = r * np.sin(theta)
    return out
