"""Integer geometry of Z^d: balls, boundaries, shells, tiles and cells.

Sites are rows of an ``(K, d)`` int64 array. Every function that returns a
set of sites returns them sorted lexicographically, so iteration order is
reproducible. Ball membership is decided on squared integer norms against an
exact rational bound on the squared radius, never on floating point norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import PreconditionViolated

INNER = "inner"
INWARD = "inward"
OUTWARD = "outward"


def radius_bound(r) -> int:
    """Largest integer m with m < r**2, or -1 when the ball B(., r) is empty.

    ``y`` lies in ``B(x, r)`` iff ``|y - x|^2 <= radius_bound(r)``.
    """
    fr = Fraction(r)
    if fr <= 0:
        return -1
    sq = fr * fr
    return math.ceil(sq) - 1


def as_sites(sites, d: int | None = None) -> np.ndarray:
    arr = np.asarray(sites, dtype=np.int64)
    if arr.size == 0:
        if d is None:
            d = arr.shape[-1] if arr.ndim == 2 else 0
        return np.zeros((0, d), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def norm2(sites) -> np.ndarray:
    arr = as_sites(sites)
    return np.einsum("ij,ij->i", arr, arr)


def lexsort_sites(sites: np.ndarray) -> np.ndarray:
    if len(sites) == 0:
        return sites
    order = np.lexsort(sites.T[::-1])
    return sites[order]


def unique_sites(sites: np.ndarray) -> np.ndarray:
    if len(sites) == 0:
        return sites
    return np.unique(sites, axis=0)


def site_keys(sites: np.ndarray, lo: np.ndarray, span: np.ndarray) -> np.ndarray:
    """Injective int64 encoding of sites lying in the box [lo, lo + span)."""
    shifted = sites - lo
    keys = np.zeros(len(sites), dtype=np.int64)
    for j in range(sites.shape[1]):
        keys = keys * span[j] + shifted[:, j]
    return keys


def isin_sites(sites, region) -> np.ndarray:
    """Boolean mask: which rows of ``sites`` belong to ``region``."""
    a = as_sites(sites)
    b = as_sites(region, a.shape[1] if a.ndim == 2 else None)
    if len(a) == 0:
        return np.zeros(0, dtype=bool)
    if len(b) == 0:
        return np.zeros(len(a), dtype=bool)
    both = np.vstack([a, b])
    lo = both.min(axis=0)
    span = both.max(axis=0) - lo + 1
    return np.isin(site_keys(a, lo, span), site_keys(b, lo, span))


def box_sites(lo, hi) -> np.ndarray:
    """All sites of the integer box lo <= y <= hi, in lexicographic order."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    shape = tuple(int(v) for v in (hi - lo + 1))
    if any(s <= 0 for s in shape):
        return np.zeros((0, len(lo)), dtype=np.int64)
    grid = np.indices(shape, dtype=np.int64).reshape(len(shape), -1).T
    return grid + lo


def ball_sites(center, radius) -> np.ndarray:
    """Lattice sites y with |y - center| < radius, lexicographically sorted."""
    c = np.asarray(center, dtype=np.int64).ravel()
    if radius < 0:
        raise PreconditionViolated(f"negative radius {radius}")
    m = radius_bound(radius)
    if m < 0:
        return np.zeros((0, len(c)), dtype=np.int64)
    w = math.isqrt(m)
    pts = box_sites(c - w, c + w)
    rel = pts - c
    return pts[np.einsum("ij,ij->i", rel, rel) <= m]


def in_ball(sites, center, radius) -> np.ndarray:
    arr = as_sites(sites)
    rel = arr - np.asarray(center, dtype=np.int64)
    return np.einsum("ij,ij->i", rel, rel) <= radius_bound(radius)


def neighbor_offsets(d: int) -> np.ndarray:
    """The 2d unit moves; row 2j is +e_j and row 2j+1 is -e_j."""
    off = np.zeros((2 * d, d), dtype=np.int64)
    for j in range(d):
        off[2 * j, j] = 1
        off[2 * j + 1, j] = -1
    return off


def boundary(region, d: int | None = None) -> np.ndarray:
    """External boundary {z not in region : some y in region with |y - z| = 1}."""
    reg = as_sites(region, d)
    if len(reg) == 0:
        return reg
    dim = reg.shape[1]
    cand = (reg[:, None, :] + neighbor_offsets(dim)[None, :, :]).reshape(-1, dim)
    cand = unique_sites(cand)
    return cand[~isin_sites(cand, reg)]


def sphere_sites(radius, d: int, center=None) -> np.ndarray:
    """Discrete sphere: the boundary of the ball B(center, radius)."""
    c = np.zeros(d, dtype=np.int64) if center is None else np.asarray(center)
    return boundary(ball_sites(c, radius), d)


def ball_volume(radius, d: int) -> int:
    """|B(0, radius)| by exact counting."""
    return len(ball_sites(np.zeros(d, dtype=np.int64), radius))


def default_height(n: float, d: int) -> float:
    """Shell height: log n in d = 2, sqrt(log n) in d >= 3, floored at 1."""
    if d < 2:
        raise PreconditionViolated("dimension must be at least 2")
    if n <= 1:
        return 1.0
    h = math.log(n) if d == 2 else math.sqrt(math.log(n))
    return max(1.0, h)


def thin_centers(sites: np.ndarray, separation: float) -> np.ndarray:
    """Greedy lexicographic maximal subset with pairwise distance >= separation."""
    sites = lexsort_sites(as_sites(sites))
    m = radius_bound(separation)
    kept: list[np.ndarray] = []
    for s in sites:
        if all(int(np.dot(s - k, s - k)) > m for k in kept):
            kept.append(s)
    if not kept:
        return sites[:0]
    return np.array(kept, dtype=np.int64)


# shells and spheres are recomputed for every tile and cell otherwise
@lru_cache(maxsize=64)
def _sphere(radius, d: int) -> np.ndarray:
    out = sphere_sites(radius, d)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _annulus(outer, inner, d: int) -> np.ndarray:
    sites = ball_sites(np.zeros(d, dtype=np.int64), outer)
    out = sites[norm2(sites) > radius_bound(inner)]
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ShellPartition:
    """Concentric shells S_k with separating spheres Sigma_k.

    ``inner``:   S_0 = B(0,h), S_k = B(0,(k+1)h) \\ B(0,kh), Sigma_k = dB(0,kh).
    ``outward``: S_k = B(0,n+2(k+1)h) \\ B(0,n+2kh), Sigma_k = dB(0,n+(2k+1)h).
    ``inward``:  S_k = B(0,2R-2(k-1)h) \\ B(0,2R-2kh), Sigma_k = dB(0,2R-(2k-1)h),
                 k = 1..R/2h.
    """

    mode: str
    d: int
    base_radius: float
    height: float
    shell_count: int

    @property
    def first_index(self) -> int:
        return 1 if self.mode == INWARD else 0

    def indices(self) -> range:
        return range(self.first_index, self.first_index + self.shell_count)

    def shell_radii(self, k: int) -> tuple[float, float]:
        """(outer, inner) radii of S_k; S_k = B(0, outer) \\ B(0, inner)."""
        b, h = self.base_radius, self.height
        if self.mode == INNER:
            return (k + 1) * h, k * h
        if self.mode == OUTWARD:
            return b + 2 * (k + 1) * h, b + 2 * k * h
        return 2 * b - 2 * (k - 1) * h, 2 * b - 2 * k * h

    def sphere_radius(self, k: int) -> float:
        b, h = self.base_radius, self.height
        if self.mode == INNER:
            return k * h
        if self.mode == OUTWARD:
            return b + (2 * k + 1) * h
        return 2 * b - (2 * k - 1) * h

    def shell(self, k: int) -> np.ndarray:
        return _annulus(*self.shell_radii(k), self.d)

    def sphere(self, k: int) -> np.ndarray:
        return _sphere(self.sphere_radius(k), self.d)

    def covered_region(self) -> tuple[float, float]:
        """(outer, inner) radii of the region tiled by all shells."""
        ks = self.indices()
        if self.mode == INWARD:
            return self.shell_radii(ks[0])[0], self.shell_radii(ks[-1])[1]
        return self.shell_radii(ks[-1])[0], self.shell_radii(ks[0])[1]

    def tile(self, z, k: int) -> np.ndarray:
        """T(z) = B(z, h/2) intersected with Sigma_k."""
        sph = self.sphere(k)
        return sph[in_ball(sph, z, Fraction(self.height) / 2)]

    def cell(self, z, k: int) -> np.ndarray:
        """C(z) = B(z, h) intersected with S_k."""
        sh = self.shell(k)
        return sh[in_ball(sh, z, self.height)]

    def tile_centers(self, k: int, thinned: bool = False) -> np.ndarray:
        sph = self.sphere(k)
        if thinned:
            return thin_centers(sph, Fraction(self.height) / 2)
        return sph


def partition_shells(mode: str, d: int, base_radius: float,
                     height: float | None = None,
                     shell_count: int | None = None) -> ShellPartition:
    """Build a shell partition, validating and adjusting the height.

    In inward mode the height is raised to the smallest value h' >= height
    with R / 2h' a positive integer. In inner mode the default height is
    ``default_height(n, d)`` and the default shell count covers B(0, n).
    """
    if d < 2:
        raise PreconditionViolated("dimension must be at least 2")
    if mode not in (INNER, INWARD, OUTWARD):
        raise PreconditionViolated(f"unknown shell mode {mode!r}")
    if height is None:
        height = default_height(base_radius, d)
    if height < 1:
        raise PreconditionViolated(f"shell height {height} < 1")
    if base_radius <= 0:
        raise PreconditionViolated("base radius must be positive")

    if mode == INWARD:
        m = max(1, math.floor(Fraction(base_radius) / (2 * Fraction(height))))
        height = base_radius / (2 * m)
        if height < 1:
            raise PreconditionViolated(f"R={base_radius} too small for shells of height >= 1")
        if shell_count is not None and shell_count != m:
            raise PreconditionViolated(f"inward mode needs shell_count = R/2h = {m}")
        shell_count = m
    elif mode == INNER and shell_count is None:
        shell_count = max(1, math.ceil(base_radius / height))
    elif shell_count is None:
        shell_count = 3
    if shell_count < 1:
        raise PreconditionViolated("shell_count must be >= 1")
    return ShellPartition(mode, d, float(base_radius), float(height), int(shell_count))


def sites_to_set(sites: Iterable) -> set[tuple[int, ...]]:
    return {tuple(int(v) for v in s) for s in sites}
