"""Seeded, portable randomness for reproducible experiments.

The core generator is SplitMix64 (Steele, Lea & Flood, "Fast splittable
pseudorandom number generators", OOPSLA 2014): the state advances by a fixed
odd increment GAMMA and each output is a bijective finalizer (``mix64``) of
the state. Two properties this module leans on:

* the k-th output of a generator seeded with s is ``mix64(s + (k+1)*GAMMA)``,
  so per-round sub-stream seeds can be derived in O(1) by index
  (``stream_seed``) and whole seed arrays can be produced vectorized
  (``stream_seeds``); any execution order gives identical draws;
* every derived quantity (uniforms, normals, Haar samples) is a pure function
  of the seed, so concurrent use is race-free by construction.

There is deliberately no module-level generator: all entropy enters through
explicit seeds.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 output finalizer (a bijection on 64-bit integers)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MULT1) & MASK64
    z = ((z ^ (z >> 27)) * _MULT2) & MASK64
    return (z ^ (z >> 31)) & MASK64


def stream_seed(master_seed: int, index: int) -> int:
    """Seed of sub-stream `index`: the (index+1)-th raw output of the master.

    Equals ``SplitMix64(master_seed).next_u64()`` iterated index+1 times,
    without the iteration.
    """
    if index < 0:
        raise ValueError(f"stream index must be nonnegative, got {index}")
    return mix64((master_seed + (index + 1) * GAMMA) & MASK64)


def stream_seeds(master_seed: int, n: int) -> np.ndarray:
    """Vectorized ``stream_seed(master_seed, i)`` for i = 0..n-1 (uint64)."""
    idx = np.arange(1, n + 1, dtype=np.uint64)
    return _mix64_array(np.uint64(master_seed & MASK64) + idx * np.uint64(GAMMA))


def first_uniforms(seeds: np.ndarray) -> np.ndarray:
    """First uniform draw in [0, 1) of a SplitMix64 started at each seed."""
    out = _mix64_array(seeds.astype(np.uint64) + np.uint64(GAMMA))
    return (out >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps mod 2^64, matching the scalar implementation
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_MULT1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MULT2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Sequential SplitMix64 generator with uniform and Gaussian draws."""

    def __init__(self, seed: int):
        self._state = seed & MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + GAMMA) & MASK64
        return mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs are cached."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = self.random()
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log1p(-u1))  # log1p avoids log(0)
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def complex_normals(self, n: int) -> np.ndarray:
        """n entries x + iy with x, y independent standard normals."""
        xs = self.normals(2 * n)
        return xs[0::2] + 1j * xs[1::2]


def haar_state(dim: int, rng: SplitMix64) -> np.ndarray:
    """Haar-random unit vector: complex Gaussian entries, normalized."""
    v = rng.complex_normals(dim)
    return v / np.linalg.norm(v)


def haar_unitary(dim: int, rng: SplitMix64) -> np.ndarray:
    """Haar-random unitary: QR of a complex Gaussian matrix.

    The Q factor is rephased column-wise so the R diagonal is real positive,
    which makes the distribution exactly Haar and the output deterministic.
    """
    g = rng.complex_normals(dim * dim).reshape(dim, dim)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))[np.newaxis, :]


def random_density(dim: int, rng: SplitMix64) -> np.ndarray:
    """Random full-rank density matrix G G† / tr(G G†)."""
    g = rng.complex_normals(dim * dim).reshape(dim, dim)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def inverse_cdf_select(weights: np.ndarray, u: float) -> int:
    """Index selected by inverse CDF over `weights` (in index order).

    weights need not be exactly normalized; u is uniform in [0, 1). Cells of
    zero weight are never selected; if rounding leaves u beyond the final
    cumulative sum, the last cell of positive weight is chosen.
    """
    cdf = np.cumsum(weights)
    total = cdf[-1]
    idx = int(np.searchsorted(cdf, u * total, side="right"))
    if idx >= len(weights):
        idx = int(np.max(np.nonzero(weights)))
    return idx
