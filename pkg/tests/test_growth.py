import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idla.errors import ConfigOutsideDomain, PreconditionViolated
from idla.growth import (EXPLORERS_W, WALKERS_M, Cluster, Configuration, count_hits,
                         error_radii, grow, grow_ball, grow_from_origin, grow_stopped,
                         inner_error, outer_error)
from idla.lattice import ball_sites, norm2, sites_to_set, sphere_sites
from idla.walk import RandomSource


def cluster_of(sites, d=2):
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, d)
    idx = np.arange(len(sites))
    return Cluster(d, len(sites), idx, sites, np.zeros(len(sites), dtype=np.int64))


def test_single_explorer_settles_at_origin():
    cl = grow(Configuration.at_origin(1, 2), RandomSource(1))
    assert cl.settle_order == [(0, (0, 0), 0)]


def test_two_explorers_law():
    counts = {}
    n = 100_000
    for t in range(n):
        cl = grow_from_origin(2, 2, RandomSource(99, t))
        s = tuple(int(v) for v in cl.settled_sites[1])
        counts[s] = counts.get(s, 0) + 1
    assert set(counts) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    for v in counts.values():
        assert abs(v / n - 0.25) < 0.02


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 3), st.integers(1, 400), st.integers(0, 2**32))
def test_conservation_and_distinct_sites(d, N, seed):
    cl = grow_from_origin(N, d, RandomSource(seed))
    assert cl.volume == N
    assert len(sites_to_set(cl.settled_sites)) == N
    assert sorted(cl.settled_index.tolist()) == list(range(N))


def test_growth_is_monotone_prefix():
    cl = grow_from_origin(300, 2, RandomSource(3))
    seen = set()
    for i, s, t in cl.settle_order:
        assert s not in seen
        seen.add(s)
    # each settling site borders the earlier cluster (or is the origin)
    occ = set()
    for i, s, t in cl.settle_order:
        if occ:
            assert any(tuple(a + b for a, b in zip(s, o)) in occ
                       for o in [(1, 0), (-1, 0), (0, 1), (0, -1)])
        occ.add(s)


def test_multi_site_processing_order():
    eta = Configuration.from_sites([(2, 0), (0, 0), (2, 0), (-1, 0)])
    starts = eta.explorers()
    assert [tuple(s) for s in starts] == [(-1, 0), (0, 0), (2, 0), (2, 0)]
    cl = grow(eta, RandomSource(5))
    assert cl.volume == 4
    assert cl.settled_tau[cl.settled_index == 0][0] == 0   # first explorer settles at once


def test_replay_identical():
    a = grow_from_origin(500, 3, RandomSource(8, 2))
    b = grow_from_origin(500, 3, RandomSource(8, 2))
    assert a.settle_order == b.settle_order


def test_stopped_growth_examples():
    cl = grow_stopped(Configuration.at_origin(1, 2), 3, RandomSource(1))
    assert cl.settle_order == [(0, (0, 0), 0)]
    assert cl.stopped_on_boundary == {}
    with pytest.raises(ConfigOutsideDomain):
        grow_stopped(Configuration.point(1, (5, 0)), 3, RandomSource(1))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 300), st.floats(1.5, 8), st.integers(0, 1000))
def test_stopped_conservation(N, R, seed):
    cl = grow_stopped(Configuration.at_origin(N, 2), R, RandomSource(seed))
    assert cl.volume + sum(cl.stopped_on_boundary.values()) == N
    assert np.all(norm2(cl.settled_sites) < R * R)
    sph = sites_to_set(sphere_sites(R, 2))
    assert set(cl.stopped_on_boundary) <= sph


def test_inner_error_examples():
    n = 6.5
    ball = ball_sites(np.zeros(2, dtype=np.int64), n)
    assert inner_error(cluster_of(ball), n) == 0
    assert inner_error(cluster_of(np.zeros((0, 2))), n) == n
    # remove a site of norm in [ceil(n) - 1, n)
    target = np.flatnonzero(np.all(ball == (6, 0), axis=1))[0]
    holed = np.delete(ball, target, axis=0)
    assert inner_error(cluster_of(holed), n) == pytest.approx(n - 6.0)


def test_outer_error_examples():
    n = 4.0
    ball = ball_sites(np.zeros(2, dtype=np.int64), n)
    assert outer_error(cluster_of(ball), n) == 0
    cl = cluster_of([(0, 0), (5, 3)])
    assert outer_error(cl, n) == pytest.approx(math.sqrt(34) - n)
    assert outer_error(cluster_of([(0, 0)]), 0.5) == 0
    er = error_radii(cl, n)
    assert er.outer_norm2 == 34


@settings(max_examples=20, deadline=None)
@given(st.floats(1.0, 12.0), st.integers(0, 10**6))
def test_error_radii_sandwich(n, seed):
    cl = grow_ball(n, 2, RandomSource(seed))
    er = error_radii(cl, n)
    assert 0 <= er.inner <= n and er.outer >= 0
    occ = sites_to_set(cl.settled_sites)
    o = np.zeros(2, dtype=np.int64)
    # exact form: B(0, n - delta_I) is B(0, sqrt(inner_norm2)) when there is a hole
    ball = ball_sites(o, n)
    if er.inner_norm2 is not None:
        assert sites_to_set(ball[norm2(ball) < er.inner_norm2]) <= occ
        assert er.inner == pytest.approx(max(0.0, n - math.sqrt(er.inner_norm2)))
    else:
        assert sites_to_set(ball) <= occ
    assert max(norm2(cl.settled_sites)) == er.outer_norm2
    assert occ <= sites_to_set(ball_sites(o, n + er.outer + 1e-9))


def test_count_hits_examples():
    R = 4
    sph = sphere_sites(R, 2)
    eta = Configuration.at_origin(50, 2)
    m = count_hits(eta, R, sph, WALKERS_M, RandomSource(2))
    assert sum(m.values()) == 50
    z = (1, 1)
    w = count_hits(Configuration.point(1, z), R, [z], EXPLORERS_W, RandomSource(3))
    assert w[z] >= 1
    with pytest.raises(PreconditionViolated):
        count_hits(eta, R, [(9, 9)], WALKERS_M, RandomSource(3))


def test_w_counts_at_most_m_on_shared_paths():
    # explorers stop when they settle, free walks do not: W <= M path by path
    R = 5
    tg = sphere_sites(R, 2)
    eta = Configuration.at_origin(60, 2)
    w = count_hits(eta, R, tg, EXPLORERS_W, RandomSource(4, 1))
    m = count_hits(eta, R, tg, WALKERS_M, RandomSource(4, 1))
    assert sum(w.values()) <= sum(m.values())


def test_cluster_json_round_trip():
    cl = grow_stopped(Configuration.at_origin(40, 2), 3, RandomSource(9))
    back = Cluster.from_json(cl.to_json())
    assert back.settle_order == cl.settle_order
    assert back.stopped_on_boundary == cl.stopped_on_boundary
    assert back.meta["base_seed"] == 9
