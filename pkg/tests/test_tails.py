import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from idla import tails
from idla.errors import InvalidInput, LambdaOutOfRange, PreconditionViolated
from idla.tails import LOWER, UPPER, TailBoundInput
from idla.walk import RandomSource


def lower_expr(mu, xi, c, kappa, s2, lam):
    return math.exp(min(0.0, -lam * (mu - xi - c) + lam ** 2 / 2 * (mu + kappa * s2)))


def upper_expr(mu, xi, s2, lam):
    return math.exp(min(0.0, -lam * (xi - mu) + lam ** 2 * (mu + 4 * s2)))


def test_lambda_zero_gives_one():
    inp = TailBoundInput(5, 3, 1, 2.0, 1)
    assert tails.lower_tail_bound(inp, 0) == 1.0
    assert tails.upper_tail_bound(inp, 0) == 1.0


def test_lower_worked_example():
    inp = TailBoundInput(100, 50, 0, 2, 10)
    lam, b = tails.optimize_lambda(inp, LOWER)
    assert lam == pytest.approx(50 / 120)
    assert b == pytest.approx(math.exp(-50 ** 2 / (2 * 120)), rel=1e-12)
    assert b == pytest.approx(2.98e-5, rel=0.01)


def test_lower_vacuous():
    inp = TailBoundInput(10, 9, 2, 2, 1)
    assert tuple(tails.optimize_lambda(inp, LOWER)) == (0.0, 1.0)


def test_upper_range():
    inp = TailBoundInput(10, 40, 0, None, 5)
    tails.upper_tail_bound(inp, math.log(2))
    with pytest.raises(LambdaOutOfRange):
        tails.upper_tail_bound(inp, 0.7)
    with pytest.raises(LambdaOutOfRange):
        tails.lower_tail_bound(TailBoundInput(1, 0, 0, 2, 0), -0.1)


def test_upper_optimum_against_scalar_minimizer():
    mu, xi, s2 = 10, 40, 5
    opt = tails.optimize_lambda(TailBoundInput(mu, xi, 0, None, s2), UPPER)
    res = minimize_scalar(lambda l: -l * (xi - mu) + l * l * (mu + 4 * s2),
                          bounds=(0, math.log(2)), method="bounded",
                          options={"xatol": 1e-10})
    assert opt.lam == pytest.approx(res.x, abs=1e-6)
    assert opt.bound == pytest.approx(math.exp(res.fun), rel=1e-8)
    assert opt.bound == pytest.approx(math.exp(-7.5))


def test_degenerate_denominator():
    # mu + kappa s2 = 0: no finite minimizer, the vacuous bound is returned
    assert tuple(tails.optimize_lambda(TailBoundInput(0, -1, 0, 2, 0), LOWER)) == (0.0, 1.0)


def test_upper_clamps_at_log2():
    opt = tails.optimize_lambda(TailBoundInput(1, 100, 0, None, 0), UPPER)
    assert opt.lam == pytest.approx(math.log(2))


def test_invalid_inputs():
    with pytest.raises(InvalidInput):
        tails.lower_tail_bound(TailBoundInput(-1, 0, 0, 2, 0), 0.1)
    with pytest.raises(InvalidInput):
        tails.lower_tail_bound(TailBoundInput(1, 0, 0, 1.0, 0), 0.1)
    with pytest.raises(InvalidInput):
        tails.lower_tail_bound(TailBoundInput(1, 0, -1, 2, 0), 0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 200), st.floats(-100, 300), st.floats(0, 10), st.floats(1.01, 5),
       st.floats(0, 50), st.floats(0, 3))
def test_closed_forms(mu, xi, c, kappa, s2, lam):
    inp = TailBoundInput(mu, xi, c, kappa, s2)
    assert tails.lower_tail_bound(inp, lam) == pytest.approx(
        min(1.0, lower_expr(mu, xi, c, kappa, s2, lam)), rel=1e-9, abs=1e-300)
    lu = min(lam, math.log(2))
    assert tails.upper_tail_bound(inp, lu) == pytest.approx(
        min(1.0, upper_expr(mu, xi, s2, lu)), rel=1e-9, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 200), st.floats(-50, 300), st.floats(0, 10), st.floats(1.01, 5),
       st.floats(0, 50))
def test_optimum_beats_grid(mu, xi, c, kappa, s2):
    inp = TailBoundInput(mu, xi, c, kappa, s2)
    lo = tails.optimize_lambda(inp, LOWER)
    if mu + kappa * s2 > 0:
        for lam in np.linspace(0, 5, 100):
            assert lo.log_bound <= tails.log_lower_tail_bound(inp, lam) + 1e-9
    up = tails.optimize_lambda(inp, UPPER)
    for lam in np.linspace(0, math.log(2), 100):
        assert up.log_bound <= tails.log_upper_tail_bound(inp, lam) + 1e-9


def test_lower_bound_monotone_in_mu():
    for xi in (0.0, 5.0, 20.0):
        for c in (0.0, 2.0):
            for s2 in (0.0, 3.0, 30.0):
                prev = math.inf
                for mu in np.linspace(0, 150, 301):
                    b = tails.optimize_lambda(TailBoundInput(mu, xi, c, 1.5, s2), LOWER).log_bound
                    assert b <= prev + 1e-12
                    prev = b


def test_log_space_no_underflow():
    opt = tails.optimize_lambda(TailBoundInput(1e6, 0, 0, 2, 0), LOWER)
    assert opt.log_bound < -1e5 and opt.bound == 0.0


def test_pairing():
    pp, qq, pu = tails.pair_bernoullis([0.9, 0.5, 0.3, 0.2], [0.4, 0.25])
    assert sorted(pp.tolist()) == [0.3, 0.5]
    assert sorted(pu.tolist()) == [0.2, 0.9]
    with pytest.raises(PreconditionViolated):
        tails.pair_bernoullis([0.1], [0.5])


def test_coupled_sampler_means():
    p = np.array([0.8, 0.6, 0.5, 0.3])
    q = np.array([0.5, 0.2])
    rng = np.random.Generator(np.random.PCG64(0))
    w = tails.sample_coupled(p, q, 1.0, 200_000, rng, LOWER)
    pp, qq, pu = tails.pair_bernoullis(p, q)
    expected = pu.sum() + ((pp - qq) / (1 - qq)).sum() - 1.0
    assert w.mean() == pytest.approx(expected, abs=0.01)
    # E W + E L + c >= E M
    assert w.mean() + q.sum() + 1.0 >= p.sum() - 0.01


def test_validate_trivial_and_refusals():
    src = RandomSource(1, 1)
    v = tails.validate_bound([0.5] * 10, [0.2] * 3, -100, 0, 1000, src)
    assert v.empirical_freq == 0 and v.holds
    with pytest.raises(PreconditionViolated):
        tails.validate_bound([0.1], [0.2, 0.3], 0, 0, 10, src)
    with pytest.raises(PreconditionViolated):
        tails.validate_bound([0.9, 0.9], [0.8], 0, 0, 10, src, kappa=1.1)


def test_validation_on_a_few_cells():
    for cell in tails.validation_grid(6, seed=3):
        for which, xi in ((LOWER, cell["xi_lower"]), (UPPER, cell["xi_upper"])):
            v = tails.validate_bound(cell["p_m"], cell["q_l"], xi, cell["c"], 4000,
                                     RandomSource(2, cell["cell"]), which=which)
            assert v.holds
