import numpy as np
import pytest

from idla.growth import grow_ball
from idla.lattice import INNER, ball_sites, partition_shells, sites_to_set
from idla.walk import RandomSource
from idla.waves import (WaveState, _mc_mu, check_h1, far_mask, grow_by_waves, mu_tile,
                        tile_W_counts, wave_report, wave_tiles)


def exit_law_dense(R, d, tile):
    """P_y(exit B(0,R) through tile) by a dense solve written from scratch."""
    sites = [tuple(s) for s in ball_sites(np.zeros(d, dtype=np.int64), R)]
    idx = {s: i for i, s in enumerate(sites)}
    tset = {tuple(t) for t in tile}
    n = len(sites)
    A = np.eye(n)
    b = np.zeros(n)
    for s, i in idx.items():
        for j in range(d):
            for e in (1, -1):
                t = list(s)
                t[j] += e
                t = tuple(t)
                if t in idx:
                    A[i, idx[t]] -= 1 / (2 * d)
                elif t in tset:
                    b[i] += 1 / (2 * d)
    return sites, np.linalg.solve(A, b)


def test_single_wave_matches_grow_pathwise():
    cl, waves, _ = grow_by_waves(3, 2, RandomSource(5, 5), height=50)
    ref = grow_ball(3, 2, RandomSource(5, 5))
    assert waves == []
    assert cl.settle_order == ref.settle_order


def test_wave_conservation():
    n = 12
    N = len(ball_sites(np.zeros(2, dtype=np.int64), n))
    cl, waves, part = grow_by_waves(n, 2, RandomSource(1, 2))
    assert cl.volume == N
    for w in waves:
        assert len(w.settled) + w.n_paused == N
        r = part.sphere_radius(w.k)
        assert np.all((w.settled ** 2).sum(axis=1) < (r + part.height) ** 2)
        sph = sites_to_set(part.sphere(w.k))
        assert set(w.paused) <= sph


def test_tile_counts():
    part = partition_shells(INNER, 2, 12)
    k = 2
    sph = part.sphere(k)
    z = tuple(sph[0])
    w = WaveState(k, part.sphere_radius(k), np.zeros((0, 2), dtype=np.int64),
                  np.array([z, tuple(sph[3])]), np.array([0, 1]))
    tiles = wave_tiles(part, k)
    counts = tile_W_counts(w, tiles)
    assert counts[z] >= 1
    # every paused explorer is counted by some tile
    assert all(any(tuple(p) in sites_to_set(t) for t in tiles.values()) for p in w.paused_sites)
    disjoint = []
    used = set()
    for c, t in tiles.items():
        ts = sites_to_set(t)
        if not ts & used:
            disjoint.append(t)
            used |= ts
    assert sum(tile_W_counts(w, disjoint).values()) <= w.n_paused


def test_mu_tile_trivial_cases():
    n, k = 10, 2
    part = partition_shells(INNER, 2, n)
    N = len(ball_sites(np.zeros(2, dtype=np.int64), n))
    whole = part.sphere(k)
    assert mu_tile(whole, n, k, L=100) == (pytest.approx(N), 0.0)
    assert mu_tile(np.zeros((0, 2), dtype=np.int64), n, k) == (0.0, 0.0)


def test_mu_tile_against_dense_oracle():
    n, k, L = 10, 2, 2.0
    part = partition_shells(INNER, 2, n)
    z = tuple(part.tile_centers(k)[5])
    tile = part.tile(z, k)
    val, hw = mu_tile(tile, n, k, L)
    R = part.sphere_radius(k)
    sites, u = exit_law_dense(R, 2, tile)
    N = len(ball_sites(np.zeros(2, dtype=np.int64), n))
    far = far_mask(np.array(sites), tile, L * part.height)
    oracle = N * u[sites.index((0, 0))] - u[far].sum()
    assert hw == 0.0
    assert val == pytest.approx(oracle, rel=1e-8)
    assert val > 0


def test_mu_tile_additive_at_L0():
    n, k = 10, 2
    part = partition_shells(INNER, 2, n)
    sph = part.sphere(k)
    a, b = sph[:5], sph[5:11]
    ab = np.vstack([a, b])
    va, _ = mu_tile(a, n, k, L=0)
    vb, _ = mu_tile(b, n, k, L=0)
    vab, _ = mu_tile(ab, n, k, L=0)
    assert vab == pytest.approx(va + vb, rel=1e-9)


def test_monte_carlo_mu_agrees_with_exact():
    n, k, L = 8, 2, 2.0
    part = partition_shells(INNER, 2, n, shell_count=k)
    z = tuple(part.tile_centers(k)[0])
    tile = part.tile(z, k)
    exact, _ = mu_tile(tile, n, k, L)
    N = len(ball_sites(np.zeros(2, dtype=np.int64), n))
    est, hw = _mc_mu(part, k, tile, N, L, 20000, RandomSource(3, 3))
    assert hw > 0
    assert abs(est - exact) <= 2 * hw


def test_check_h1():
    n, k = 10, 2
    part = partition_shells(INNER, 2, n)
    assert check_h1(np.zeros((0, 2), dtype=np.int64), k, n=n) == 0.0
    assert check_h1(part.sphere(k), k, L=0.1, n=n) == pytest.approx(1.0)
    tile = part.tile(tuple(part.tile_centers(k)[0]), k)
    vals = [check_h1(tile, k, L=L, n=n) for L in (0.5, 1.0, 1.5)]
    assert all(0 < v < 1 for v in vals)
    assert vals[0] >= vals[1] >= vals[2]


def test_wave_report_rows():
    rows = wave_report(8, 2, RandomSource(2, 2))
    assert rows
    assert set(rows[0]) == {"k", "tile_center", "W", "mu_estimate", "mu_halfwidth"}
    assert all(r["W"] >= 0 for r in rows)


@pytest.mark.slow
def test_wave_load_tracks_depth():
    # explorers frozen per tile on Sigma_k against the depth A = (n - k h)/h
    n = 20
    cl, waves, part = grow_by_waves(n, 3, RandomSource(7, 0))
    h = part.height
    depth, load = [], []
    for w in waves:
        A = (n - part.sphere_radius(w.k)) / h
        if A <= 0:
            continue
        depth.append(A)
        load.append(np.mean(list(tile_W_counts(w, wave_tiles(part, w.k)).values())))
    assert len(depth) >= 8
    order = np.argsort(depth)
    assert np.all(np.diff(np.array(load)[order]) > 0)
    c = min(m / (A * h ** 3) for A, m in zip(depth, load))
    assert c > 0.1
