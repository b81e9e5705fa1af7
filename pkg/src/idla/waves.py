"""Internal DLA grown shell by shell, and the per-tile observables of a wave.

With N = |B(0, n)| explorers at the origin, wave 0 releases everybody and
freezes those still unsettled when they first step onto Sigma_1 =
dB(0, h). Wave k releases the explorers frozen on Sigma_k, in explorer index
order, and freezes the survivors on Sigma_{k+1}. The final cluster has the
law of the sequential cluster (abelian property of the aggregation rule);
only the order in which explorers move changes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._engine import PENDING, SETTLED, STOPPED, BoxGrid, explore, initial_half_width
from .errors import DomainTooLarge, PreconditionViolated
from .greens import MAX_SITES, exit_probabilities
from .growth import Cluster
from .lattice import (INNER, ShellPartition, as_sites, ball_sites,
                      partition_shells, radius_bound, sites_to_set)
from .walk import DEFAULT_STEP_CAP, RandomSource

DEFAULT_L = 2.0
DEFAULT_A = 4.0


@dataclass(frozen=True)
class WaveState:
    """Snapshot taken when every unsettled explorer is frozen on Sigma_k."""

    k: int
    sphere_radius: float
    settled: np.ndarray
    paused_sites: np.ndarray
    paused_index: np.ndarray

    @property
    def paused(self) -> dict:
        out: dict = {}
        for s in self.paused_sites:
            key = tuple(int(v) for v in s)
            out[key] = out.get(key, 0) + 1
        return out

    @property
    def n_paused(self) -> int:
        return len(self.paused_index)


@dataclass(frozen=True)
class TileStats:
    center: tuple
    W: int
    mu: float
    mu_halfwidth: float
    exclusion_radius: float


def grow_by_waves(n: float, d: int, source: RandomSource,
                  height: float | None = None,
                  step_cap: int = DEFAULT_STEP_CAP) -> tuple[Cluster, list[WaveState], ShellPartition]:
    """Grow the cluster of N = |B(0, n)| explorers wave by wave.

    Returns the cluster, one WaveState per sphere on which explorers were
    frozen (k = 1, 2, ...), and the shell partition used.
    """
    part = partition_shells(INNER, d, n, height)
    h = part.height
    N = len(ball_sites(np.zeros(d, dtype=np.int64), n))
    cur = np.zeros((N, d), dtype=np.int64)
    tau = np.zeros(N, dtype=np.int64)
    status = np.full(N, PENDING, dtype=np.int8)
    grid = BoxGrid(d, initial_half_width(N, d, n))
    waves: list[WaveState] = []
    k = 0
    while True:
        stop_r = (k + 1) * h
        explore(grid, cur, tau, status, source.rng, stop_m=radius_bound(stop_r),
                aggregate=True, step_cap=step_cap)
        frozen = np.flatnonzero(status == STOPPED)
        if len(frozen) == 0:
            break
        k += 1
        waves.append(WaveState(k, stop_r, grid.occupied_sites(),
                               cur[frozen].copy(), frozen.copy()))
        status[frozen] = PENDING
    idx = np.arange(N, dtype=np.int64)
    s = status == SETTLED
    meta = source.metadata()
    meta.update({"n": n, "height": h, "waves": len(waves)})
    cluster = Cluster(d, N, idx[s], cur[s], tau[s], meta=meta)
    return cluster, waves, part


def wave_tiles(part: ShellPartition, k: int, thinned: bool = False) -> dict:
    """Tiles of Sigma_k keyed by their centre (all centres, or a thinned family)."""
    return {tuple(int(v) for v in z): part.tile(z, k)
            for z in part.tile_centers(k, thinned)}


def tile_W_counts(wave: WaveState, tiles) -> dict:
    """Paused explorers per tile; an explorer on y counts for each tile holding y."""
    items = tiles.items() if isinstance(tiles, dict) else enumerate(tiles)
    d = wave.paused_sites.shape[1]
    sites, mult = np.unique(wave.paused_sites.reshape(-1, d), axis=0, return_counts=True)
    load = dict(zip(map(tuple, sites.tolist()), mult.tolist()))
    out = {}
    for key, t in items:
        t = as_sites(t, d)
        out[key] = sum(load.get(y, 0) for y in map(tuple, t.tolist()))
    return out


def far_mask(sites: np.ndarray, tile: np.ndarray, r: float) -> np.ndarray:
    """True for the sites at distance >= r from every site of ``tile``."""
    m = radius_bound(r)
    far = np.ones(len(sites), dtype=bool)
    if m < 0 or len(tile) == 0:
        return far
    for t in tile:
        rel = sites - t
        far &= np.einsum("ij,ij->i", rel, rel) > m
    return far


def _exit_law(part: ShellPartition, k: int, tile: np.ndarray):
    R = part.sphere_radius(k)
    if len(ball_sites(np.zeros(part.d, dtype=np.int64), R)) > MAX_SITES:
        raise DomainTooLarge(f"B(0,{R}) exceeds the exact-solve budget")
    return exit_probabilities(R, part.d, tile)


def _mc_mu(part, k, tile, N, L, trials, source):
    """Monte Carlo version: N u(0) - |far| E[u(Y)], Y uniform on the far set."""
    d = part.d
    R = part.sphere_radius(k)
    m = radius_bound(R)
    ball = ball_sites(np.zeros(d, dtype=np.int64), R)
    far = ball[far_mask(ball, tile, L * part.height)]
    tile_set = sites_to_set(tile)

    def exits(starts):
        cur = starts.copy()
        grid = BoxGrid(d, int(math.ceil(R)) + 3)
        explore(grid, cur, np.zeros(len(cur), dtype=np.int64),
                np.full(len(cur), PENDING, dtype=np.int8), source.rng,
                stop_m=m, aggregate=False)
        return np.array([tuple(int(v) for v in s) in tile_set for s in cur], dtype=float)

    x0 = exits(np.zeros((trials, d), dtype=np.int64))
    if len(far):
        ys = far[source.rng.integers(0, len(far), size=trials)]
        x1 = exits(ys)
    else:
        x1 = np.zeros(trials)
    est = N * x0.mean() - len(far) * x1.mean()
    var = (N ** 2 * x0.var(ddof=1) + len(far) ** 2 * x1.var(ddof=1)) / trials
    return float(est), float(1.96 * math.sqrt(var))


def mu_tile(tile, n: float, k: int, L: float = DEFAULT_L, d: int | None = None,
            height: float | None = None, mc_trials: int | None = None,
            source: RandomSource | None = None) -> tuple[float, float]:
    """Mean excess mu(T) of tile hits: E M(N 1_0, T) - E M(B(0,kh) minus its
    L h-neighbourhood of T, T), all walks stopped on leaving B(0, kh).

    Returns (value, halfwidth); the halfwidth is 0 for the exact solve. When
    the ball is too large for an exact solve, ``mc_trials`` and ``source``
    select a Monte Carlo estimate with a 95% halfwidth.
    """
    tile = as_sites(tile, d)
    d = tile.shape[1] if d is None else d
    part = partition_shells(INNER, d, n, height, shell_count=max(k, 1))
    if len(tile) == 0:
        return 0.0, 0.0
    N = len(ball_sites(np.zeros(d, dtype=np.int64), n))
    try:
        sites, u = _exit_law(part, k, tile)
    except DomainTooLarge:
        if not mc_trials or source is None:
            raise
        return _mc_mu(part, k, tile, N, L, mc_trials, source)
    origin = np.flatnonzero(~sites.any(axis=1))
    u0 = float(u[origin[0]]) if len(origin) else 0.0
    far = far_mask(sites, tile, L * part.height)
    return N * u0 - float(u[far].sum()), 0.0


def check_h1(tile, k: int, L: float = DEFAULT_L, n: float | None = None,
             d: int | None = None, height: float | None = None) -> float:
    """sup over y in B(0, kh) far (>= L h) from T of P_y(exit B(0, kh) in T).

    The shell height is ``height`` if given, else the default height at n.
    """
    tile = as_sites(tile, d)
    d = tile.shape[1] if d is None else d
    if len(tile) == 0:
        return 0.0
    if height is None:
        if n is None:
            raise PreconditionViolated("give the shell height or n")
        height = partition_shells(INNER, d, n).height
    part = partition_shells(INNER, d, max(k * height, 1.0), height, shell_count=max(k, 1))
    sites, u = _exit_law(part, k, tile)
    far = far_mask(sites, tile, L * part.height)
    return float(u[far].max()) if far.any() else 0.0


def wave_report(n: float, d: int, source: RandomSource, L: float = DEFAULT_L,
                thinned: bool = True, exact: bool = True) -> list[dict]:
    """Rows (k, tile_center, W, mu_estimate, mu_halfwidth) for every wave."""
    _, waves, part = grow_by_waves(n, d, source)
    rows = []
    for w in waves:
        tiles = wave_tiles(part, w.k, thinned)
        counts = tile_W_counts(w, tiles)
        for z, t in tiles.items():
            mu, hw = (mu_tile(t, n, w.k, L, d, part.height) if exact
                      else (math.nan, math.nan))
            rows.append({"k": w.k, "tile_center": z, "W": counts[z],
                         "mu_estimate": mu, "mu_halfwidth": hw})
    return rows

