"""Simple random walk engine with reproducible random streams.

Every stream is a numpy ``PCG64`` generator (128-bit state) seeded through
``SeedSequence`` with a 64-bit value derived from ``(base_seed, stream_id)``
by the splitmix64 finalizer. A step draws one uniform ``u`` and moves along
axis ``floor(2d u) // 2``, in the positive direction when ``floor(2d u)`` is
even. The numba kernels use the same convention, so Python-level walks and
kernel walks replay identically from the same stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import StepCapExceeded
from .lattice import as_sites

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
DEFAULT_STEP_CAP = 10**9
GENERATOR_ID = ("numpy.random.PCG64/SeedSequence("
                "splitmix64(base_seed + 0x9E3779B97F4A7C15*(stream_id+1)))")

TARGET = "target"
ABSORBING = "absorbing"


def mix64(z: int) -> int:
    """splitmix64 finalizer, a bijection of 64-bit integers."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, stream_id: int) -> int:
    # bijective in stream_id for a fixed base_seed, and vice versa
    return mix64((base_seed + GOLDEN * (stream_id + 1)) & MASK64)


def stream_id(*parts: int) -> int:
    """Fold a tuple of integers (experiment index, trial, ...) into one stream id."""
    s = 0
    for p in parts:
        s = mix64((s * GOLDEN + int(p) + 1) & MASK64)
    return s


class RandomSource:
    """A reproducible random stream identified by ``(base_seed, stream_id)``."""

    def __init__(self, base_seed: int, stream_id: int = 0):
        self.base_seed = int(base_seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        self.rng = np.random.Generator(
            np.random.PCG64(derive_seed(self.base_seed, self.stream_id)))

    def child(self, stream: int) -> "RandomSource":
        return RandomSource(self.base_seed, stream)

    def metadata(self) -> dict:
        return {"base_seed": self.base_seed, "stream_id": self.stream_id,
                "generator": GENERATOR_ID}

    def __repr__(self):
        return f"RandomSource(base_seed={self.base_seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class WalkState:
    position: tuple
    step_count: int = 0

    @property
    def d(self) -> int:
        return len(self.position)


def step(state: WalkState, source: RandomSource) -> WalkState:
    d = state.d
    u = int(source.rng.random() * 2 * d)
    axis, sign = u >> 1, (1 if u & 1 == 0 else -1)
    pos = list(state.position)
    pos[axis] += sign
    return WalkState(tuple(pos), state.step_count + 1)


@numba.njit(nogil=True, cache=True)
def _hit_kernel(labels, lo, shape, start, rng, step_cap):
    d = start.shape[0]
    pos = start.copy()
    strides = np.ones(d, np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    t = 0
    while True:
        inside = True
        idx = 0
        for j in range(d):
            c = pos[j] - lo[j]
            if c < 0 or c >= shape[j]:
                inside = False
                break
            idx += c * strides[j]
        if inside:
            lab = labels[idx]
            if lab > 0:
                return pos, lab, t
        if t >= step_cap:
            return pos, 0, t
        u = int(rng.random() * 2 * d)
        j = u >> 1
        if u & 1 == 0:
            pos[j] += 1
        else:
            pos[j] -= 1
        t += 1


def run_until_hit(state: WalkState, target, absorbing, source: RandomSource,
                  step_cap: int = DEFAULT_STEP_CAP):
    """Walk until the first visit (time 0 included) to ``target`` or ``absorbing``.

    Returns ``(site, kind, steps)``; a site in both sets counts as target.
    """
    d = state.d
    tgt = as_sites(target, d)
    ab = as_sites(absorbing, d)
    start = np.asarray(state.position, dtype=np.int64)
    allp = np.vstack([tgt, ab, start[None, :]])
    lo = allp.min(axis=0)
    shape = allp.max(axis=0) - lo + 1
    labels = np.zeros(int(np.prod(shape)), dtype=np.int8)
    strides = np.ones(d, dtype=np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    if len(ab):
        labels[(ab - lo) @ strides] = 2
    if len(tgt):
        labels[(tgt - lo) @ strides] = 1
    pos, lab, t = _hit_kernel(labels, lo, shape, start, source.rng, int(step_cap))
    if lab == 0:
        raise StepCapExceeded(f"no hit within {step_cap} steps from {state.position}")
    kind = TARGET if lab == 1 else ABSORBING
    return tuple(int(v) for v in pos), kind, int(t)
