"""Counter-based deterministic random number generation.

Every stochastic draw in the simulator is a pure function of
(root seed, stream, index, counter), so any shot or control block can be
replayed in isolation and shots can be executed in any order (or in
parallel) with bit-identical results.  The generator chains splitmix64
finalizer rounds over the four words; the compiled kernel implements the
same arithmetic on native uint64, so both execution lanes produce
identical streams.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Stream identifiers (domain separation between independent draw families).
STREAM_SHOT = 0  # per-shot protocol draws, index = global shot number
STREAM_CRC = 1  # charge-resonance-check draws, index = global block number
STREAM_RUN = 2  # derived sub-run seeds (phase points, table legs)

# Fixed per-shot draw addresses (the counter argument).  Conditional draws
# do not shift later ones because every draw is addressed, not sequential.
ADDR_EMIT_EARLY = 1
ADDR_EMIT_LATE = 2
ADDR_PHASE_N1 = 3
ADDR_PHASE_N2 = 4
ADDR_DELTA_N1 = 5
ADDR_DELTA_N2 = 6
ADDR_ROUTE_EARLY = 7
ADDR_ROUTE_LATE = 8
ADDR_OVERLAP = 9
ADDR_CLICK = 10
ADDR_DARK = 11
ADDR_DARK_PLACE = 12
ADDR_LEAK = 13
ADDR_LEAK_ROUTE = 14
ADDR_READ_PROJ = 15
ADDR_READ_POIS = 16
ADDR_FLIP_BASE = 20  # flip/dephase instructions use ADDR_FLIP_BASE + k

_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix(z: int) -> int:
    """splitmix64 finalizer on a 64-bit word."""
    z &= MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z


def draw_u64(seed: int, stream: int, index: int, counter: int) -> int:
    z = _mix((seed + GOLDEN * (stream + 1)) & MASK64)
    z = _mix((z + GOLDEN * (index + 1)) & MASK64)
    z = _mix((z + GOLDEN * (counter + 1)) & MASK64)
    return z


def uniform(seed: int, stream: int, index: int, counter: int) -> float:
    """Uniform double in [0, 1)."""
    return (draw_u64(seed, stream, index, counter) >> 11) * _INV_2_53


def normal(seed: int, stream: int, index: int, counter: int) -> float:
    """Standard normal via Box-Muller; consumes counters (counter, counter+1)."""
    u1 = uniform(seed, stream, index, counter)
    u2 = uniform(seed, stream, index, counter + 1)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


def poisson_inv(lam: float, u: float) -> int:
    """Poisson sample by CDF inversion from a single uniform.

    Exact for the moderate means used here (lam <~ 700, limited by the
    underflow of exp(-lam)); the accumulation order is part of the
    cross-lane contract.
    """
    if lam <= 0.0:
        return 0
    p = math.exp(-lam)
    cum = p
    k = 0
    # hard cap keeps pathological inputs from spinning
    while u > cum and k < 100000:
        k += 1
        p *= lam / k
        cum += p
    return k


def derive_seed(seed: int, index: int) -> int:
    """Derived 63-bit sub-run seed (phase points, table legs, lanes)."""
    return draw_u64(seed, STREAM_RUN, index, 0) & 0x7FFFFFFFFFFFFFFF


def _mix_array(z):
    import numpy as np

    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def uniform_array(seed: int, stream: int, indices, counter: int):
    """Vectorized uniform draws over an index array (same values as uniform())."""
    import numpy as np

    g = np.uint64(GOLDEN)
    idx = np.asarray(indices, dtype=np.uint64)
    z = _mix_array(np.full_like(idx, (seed + GOLDEN * (stream + 1)) & MASK64))
    z = _mix_array(z + g * (idx + np.uint64(1)))
    step = np.uint64((GOLDEN * (counter + 1)) & MASK64)
    z = _mix_array(z + np.full_like(idx, step))
    return (z >> np.uint64(11)) * _INV_2_53


def normal_array(seed: int, stream: int, indices, counter: int):
    """Vectorized standard normals matching normal() draw-for-draw."""
    import numpy as np

    u1 = uniform_array(seed, stream, indices, counter)
    u2 = uniform_array(seed, stream, indices, counter + 1)
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)


class CounterRng:
    """Stateful view over one (seed, stream, index) cell.

    Used by the engine-level operations (measure, trajectory branching)
    where a plain auto-incrementing counter is convenient.
    """

    def __init__(self, seed: int, stream: int = STREAM_SHOT, index: int = 0):
        self.seed = seed
        self.stream = stream
        self.index = index
        self.counter = 0

    def uniform(self) -> float:
        u = uniform(self.seed, self.stream, self.index, self.counter)
        self.counter += 1
        return u

    def normal(self) -> float:
        n = normal(self.seed, self.stream, self.index, self.counter)
        self.counter += 2
        return n

    def poisson(self, lam: float) -> int:
        return poisson_inv(lam, self.uniform())
