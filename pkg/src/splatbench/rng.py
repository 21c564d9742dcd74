"""Deterministic random streams for reproducible benchmark generation.

Every stochastic procedure in this toolkit draws from an RngStream keyed by a
lineage triple (master_seed, sample_id, corruption_tag).  The generator is
xoshiro256** seeded through a splitmix64 chain, so identical lineages produce
bit-identical sequences regardless of call site, platform, or worker count.

Uniform doubles are built from the top 53 bits of each 64-bit output
(``(x >> 11) * 2**-53``, in [0, 1)).  Normal variates come from the Box-Muller
transform applied to two successive uniforms; both outputs of each pair are
consumed in order, with the spare cached between calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_INV_2_53 = 2.0 ** -53


def splitmix64_mix(z: int) -> int:
    """The splitmix64 output finalizer (Stafford's mix13)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _splitmix64_next(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN_GAMMA) & _MASK64
    return state, splitmix64_mix(state)


def fold_lineage(master_seed: int, sample_id: int, corruption_tag: int) -> int:
    """Fold a lineage triple into a single 64-bit generator seed.

    Each component is mixed before xor-folding so that low-entropy ids
    (0, 1, 2, ...) land far apart in seed space.
    """
    s = splitmix64_mix(master_seed)
    s = splitmix64_mix(s ^ splitmix64_mix(sample_id ^ _GOLDEN_GAMMA))
    s = splitmix64_mix(s ^ splitmix64_mix(corruption_tag ^ (_GOLDEN_GAMMA << 1)))
    return s


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


@dataclass
class RngStream:
    """xoshiro256** generator tied to a fixed lineage.

    Value semantics: clone per work item, never share mutably across workers.
    """

    lineage: tuple[int, int, int]
    _s: list[int] = field(default_factory=list, repr=False)
    _spare_normal: float | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not self._s:
            seed = fold_lineage(*self.lineage)
            state = seed
            s = []
            for _ in range(4):
                state, out = _splitmix64_next(state)
                s.append(out)
            self._s = s

    def clone(self) -> "RngStream":
        return RngStream(self.lineage, list(self._s), self._spare_normal)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Next double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs are consumed in order."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1]: keeps log() finite
        u2 = self.uniform()
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        self._spare_normal = float(r * np.sin(theta))
        return float(r * np.cos(theta))

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) from one uniform draw."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return min(n - 1, int(self.uniform() * n))

    def randint_inclusive(self, lo: int, hi: int) -> int:
        return lo + self.randint(hi - lo + 1)

    def shuffle_indices(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n), high index down."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx


def derive_stream(master_seed: int, sample_id: int, corruption_tag: int) -> RngStream:
    """Build the deterministic stream for one lineage triple."""
    for name, v in (("master_seed", master_seed), ("sample_id", sample_id),
                    ("corruption_tag", corruption_tag)):
        if not (0 <= v <= _MASK64):
            raise ValueError(f"{name} must fit in u64, got {v}")
    return RngStream((master_seed, sample_id, corruption_tag))


def format_uniform(u: float) -> str:
    """Canonical 17-significant-digit text form used by the golden files."""
    return f"{u:.17g}"
