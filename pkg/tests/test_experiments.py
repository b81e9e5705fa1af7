import math

import numpy as np
import pytest

from idla.errors import PreconditionViolated
from idla.experiments import (ProbeResult, covering_configuration, fit_decay, map_trials,
                              normalizer, origin_decay_variable, probe_covering,
                              probe_origin_hit, probe_traps, random_subdivision,
                              ratio_stability, scan_fluctuations, subdivide, trial_source,
                              wilson_halfwidth)
from idla.growth import grow_ball
from idla.walk import RandomSource


def test_trial_streams_distinct_and_stable():
    a = trial_source(1, 2, (6.0, 1.0, 3), 0).rng.random(4)
    b = trial_source(1, 2, (6.0, 1.0, 3), 0).rng.random(4)
    c = trial_source(1, 2, (6.0, 1.0, 3), 1).rng.random(4)
    d = trial_source(1, 2, (6.0, 2.0, 3), 0).rng.random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_map_trials_thread_independent():
    fn = lambda t: float(trial_source(3, 1, (1,), t).rng.random())
    assert map_trials(fn, 20, 1) == map_trials(fn, 20, 4)


def test_covering_configuration_counts():
    eta = covering_configuration(6, 2.0, 3)
    assert eta.total == math.floor(2 * 6 ** 3)
    assert covering_configuration(1, 1.0, 2).total == 1
    u = covering_configuration(6, 1.0, 2, "uniform", np.random.default_rng(0))
    assert u.total == 36
    with pytest.raises(PreconditionViolated):
        covering_configuration(6, 1.0, 2, "sideways")


def test_covering_probe_edge_cases():
    # |B(0,5)| = 81 in d = 2 while A R^2 = 1250 explorers easily fill it
    assert probe_covering(5, 50, 20, 0, d=2).success_count == 0
    # R = 1: B(0, 1) is just the origin, always covered
    assert probe_covering(1, 1, 20, 0, d=2).success_count == 0
    with pytest.raises(PreconditionViolated):
        probe_covering(5, 0.5, 1, 0)


def test_covering_probe_reproducible_across_threads():
    a = probe_covering(4, 1, 30, 9, d=2)
    b = probe_covering(4, 1, 30, 9, d=2, threads=3)
    assert a.success_count == b.success_count


def test_origin_probe():
    # beta R^d < 1: nobody is released, the origin stays empty
    r = probe_origin_hit(3, 0.05, 10, 0)
    assert r.success_count == 0 and r.params["explorers"] == 0
    a = probe_origin_hit(4, 1.0, 50, 7)
    b = probe_origin_hit(4, 1.0, 50, 7)
    assert a.success_count == b.success_count
    assert origin_decay_variable(math.e, 2) == pytest.approx(math.e ** 2)
    assert origin_decay_variable(3, 3) == 9


def test_traps_probe_density_zero():
    # with no trap-free sites the only way through is a run of flashes that
    # all land past the lattice fringe of B(0, 2R); rare, never via the walk
    r = probe_traps(6, 0.0, 100, 1)
    assert r.success_count <= 5
    assert r.extra["plain_crossed"] == 0
    assert r.extra["containment_violations"] == 0
    assert r.params["mean_V"] == 0.0


def test_traps_probe_density_one_matches_plain():
    r = probe_traps(6, 1.0, 100, 1)
    assert r.success_count == r.extra["plain_crossed"]


def test_wilson_and_fit():
    assert wilson_halfwidth(0, 0) == 0.5
    # textbook value: 95% Wilson interval for 5/10 is (0.2366, 0.7634)
    assert wilson_halfwidth(5, 10) == pytest.approx((0.7634 - 0.2366) / 2, abs=1e-4)
    res = [ProbeResult("x", {}, 1000, 0, k) for k in (500, 100, 20, 0)]
    fit = fit_decay([1, 2, 3, 4], res)
    assert fit.slope < 0
    assert fit.adjusted == (3,)
    x = np.array([0.0, 1.0, 2.0])
    exact = [ProbeResult("x", {}, 10**6 - 2, 0, int(round(10**6 * math.exp(-v))) - 1) for v in x]
    assert fit_decay(x, exact).slope == pytest.approx(-1.0, abs=1e-3)
    assert math.isnan(fit_decay([1.0], res[:1]).slope)


def test_normalizer():
    assert normalizer(1, 2) == 0.0
    assert normalizer(math.e ** 2, 2) == pytest.approx(2.0)
    assert normalizer(math.e ** 4, 3) == pytest.approx(2.0)


def test_scan_basic_and_degenerate():
    sc = scan_fluctuations(2, [1, 4], 5, 0)
    st = sc.stats()
    assert st[0]["degenerate_normalizer"] and not st[1]["degenerate_normalizer"]
    assert st[0]["inner_ratio"] == st[0]["inner_mean"]
    assert len(sc.trial_rows()) == 10
    # trial t of radius n is exactly grow_ball on its own stream
    from idla.growth import error_radii
    cl = grow_ball(4.0, 2, trial_source(0, 4, (4.0, 2), 3))
    assert error_radii(cl, 4.0).inner == sc.inner[4.0][3]
    rs = ratio_stability(sc)
    assert set(rs) == {"spread", "spread_ok", "envelope_ok"}
    with pytest.raises(PreconditionViolated):
        scan_fluctuations(2, [4, 4], 1, 0)
    with pytest.raises(PreconditionViolated):
        scan_fluctuations(2, [4, 2], 1, 0)


def test_subdivide_minimum_counts():
    R = 16.0
    sub = subdivide(R, 1.0, lambda k, hk: math.floor(hk), 2)
    assert sub.invariants() == {"heights_at_least_one": True, "middle_sum_in_range": True,
                                "last_height_nonnegative": True}
    assert sum(sub.heights) == pytest.approx(R)


def test_subdivide_R4():
    sub = subdivide(4.0, 1.0, [1, 1, 1], 2)
    assert sub.heights[0] == 1.0
    assert sub.L == 2
    assert sub.heights[-1] == pytest.approx(1.0)


def test_subdivide_constant_counts():
    R, beta, d = 64.0, 0.5, 2
    N = beta * (R / 4) ** d
    sub = subdivide(R, 1.0, lambda k, hk: int(N), d)
    h = int(N) ** 0.5
    assert all(v == pytest.approx(h) for v in sub.heights[1:sub.L + 1])
    assert sub.L == math.ceil((R / 2) / h)


def test_subdivide_rejections():
    with pytest.raises(PreconditionViolated):
        subdivide(3.0, 1.0, [1], 2)
    with pytest.raises(PreconditionViolated):
        subdivide(16.0, 0.5, [4], 2)
    with pytest.raises(PreconditionViolated):
        subdivide(16.0, 1.0, [1], 2)      # N_0 < floor(h_0)
    with pytest.raises(PreconditionViolated):
        subdivide(16.0, 1.0, [17], 2)     # gamma N_0 > h_0^d
    with pytest.raises(PreconditionViolated):
        subdivide(16.0, 1.0, [4], 2)      # sequence runs out


def test_subdivide_from_cluster():
    cl = grow_ball(6, 2, RandomSource(2, 2))
    with pytest.raises(PreconditionViolated):
        subdivide(16.0, 1.0, cl, 2)       # |eta| > h_0^d
    sub = subdivide(48.0, 1.0, [144] * 10, 2)
    assert sub.L >= 1


def test_random_subdivisions():
    rng = np.random.default_rng(11)
    for _ in range(200):
        random_subdivision(rng).check()


@pytest.mark.slow
def test_covering_far_inside_bound():
    assert probe_covering(5, 50, 1000, 0, d=3).success_count == 0


@pytest.mark.slow
def test_origin_hits_decrease_with_R():
    counts = [probe_origin_hit(R, 7.75, 2000, 0).success_count for R in (6, 9, 12)]
    assert counts[0] > counts[1] > counts[2]


def test_single_explorer_never_reaches_origin():
    # a lone explorer settles on its own (empty) start site at time 0
    r = probe_origin_hit(5, 1.0 / 25, 200, 0)
    assert r.params["explorers"] == 1
    assert r.success_count == 0


def test_traps_density_one_matches_exact_crossing_probability():
    from idla.greens import Domain
    from idla.lattice import ball_sites, radius_bound, sphere_sites
    R = 6
    big = ball_sites(np.zeros(2, dtype=np.int64), 4 * R)
    n2 = (big ** 2).sum(axis=1)
    dom = Domain(big[n2 > radius_bound(R)])
    inner = ball_sites(np.zeros(2, dtype=np.int64), R)
    u = dom.solve(dom.exit_weights(inner))
    exact = float(u[dom.index(sphere_sites(2 * R, 2))].mean())
    r = probe_traps(R, 1.0, 4000, 3)
    f = r.extra["plain_frequency"]
    se = math.sqrt(exact * (1 - exact) / r.trials)
    assert abs(f - exact) <= 4 * se


@pytest.mark.slow
def test_traps_decay_in_inverse_density():
    R, d = 12, 2
    res = [probe_traps(R, rho, 1000, 5) for rho in (0.2, 0.5, 0.8)]
    x = [(R ** d / r.params["mean_V"]) ** (1 / (d - 1)) for r in res]
    assert fit_decay(x, res).slope < 0
    assert all(r.extra["plain_crossed"] <= r.success_count for r in res)


@pytest.mark.slow
def test_planar_ratio_grows_spatial_ratio_flat():
    two = [r["inner_ratio_sqrtlog"] for r in scan_fluctuations(2, [10, 20, 40], 100, 0).stats()]
    three = [r["inner_ratio_sqrtlog"] for r in scan_fluctuations(3, [10, 20], 100, 0).stats()]
    assert two[0] < two[1] < two[2]
    assert three[1] / three[0] < two[1] / two[0]
