"""Exponential tail bounds for differences of Bernoulli sums.

Setting: W + L + c >= M' with M' equal in law to M, W independent of L, and
L, M sums of independent Bernoulli variables. With mu = E M - E L,
s2 = sum of E[Y_i]^2 over the Bernoulli terms Y_i of L, and kappa > 1 above
1/(1 - max E[Y_i]):

    P(W < xi)  <= exp(-lam (mu - xi - c) + lam^2/2 (mu + kappa s2)),  lam >= 0
    P(W >= xi) <= exp(-lam (xi - mu) + lam^2 (mu + 4 s2)),  0 <= lam <= log 2

the second one under W + L <= M' instead. Everything is evaluated in log
space; the public evaluators return the probability clamped to [0, 1].
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, LambdaOutOfRange, PreconditionViolated
from .walk import RandomSource

LOG2 = math.log(2.0)
LOWER = "lower"
UPPER = "upper"


@dataclass(frozen=True)
class TailBoundInput:
    mu: float
    xi: float
    c: float = 0.0
    kappa: float | None = None
    s2: float = 0.0

    def validate(self, which: str) -> None:
        if not all(math.isfinite(v) for v in (self.mu, self.xi, self.c, self.s2)):
            raise InvalidInput("inputs must be finite")
        if self.mu < 0:
            raise InvalidInput(f"mu = {self.mu} < 0 violates E M - E L >= 0")
        if self.s2 < 0:
            raise InvalidInput("s2 must be >= 0")
        if which == LOWER:
            if self.c < 0:
                raise InvalidInput("c must be >= 0")
            if self.kappa is None or not self.kappa > 1:
                raise InvalidInput(f"kappa = {self.kappa} must exceed 1")


def log_lower_tail_bound(inp: TailBoundInput, lam: float) -> float:
    inp.validate(LOWER)
    if lam < 0:
        raise LambdaOutOfRange(f"lambda = {lam} < 0")
    return -lam * (inp.mu - inp.xi - inp.c) + 0.5 * lam * lam * (inp.mu + inp.kappa * inp.s2)


def log_upper_tail_bound(inp: TailBoundInput, lam: float) -> float:
    inp.validate(UPPER)
    if not 0.0 <= lam <= LOG2:
        raise LambdaOutOfRange(f"lambda = {lam} outside [0, log 2]")
    return -lam * (inp.xi - inp.mu) + lam * lam * (inp.mu + 4.0 * inp.s2)


def _clamp(logb: float) -> float:
    return 1.0 if logb >= 0 else math.exp(logb)


def lower_tail_bound(inp: TailBoundInput, lam: float) -> float:
    """Bound on P(W < xi), clamped to [0, 1]."""
    return _clamp(log_lower_tail_bound(inp, lam))


def upper_tail_bound(inp: TailBoundInput, lam: float) -> float:
    """Bound on P(W >= xi), clamped to [0, 1]."""
    return _clamp(log_upper_tail_bound(inp, lam))


@dataclass(frozen=True)
class OptimizedBound:
    lam: float
    log_bound: float

    @property
    def bound(self) -> float:
        return _clamp(self.log_bound)

    def __iter__(self):
        # unpacks as (lambda_star, bound)
        return iter((self.lam, self.bound))


def optimize_lambda(inp: TailBoundInput, which: str) -> OptimizedBound:
    """Minimize the exponent over the admissible lambda range."""
    if which == LOWER:
        inp.validate(LOWER)
        gap = inp.mu - inp.xi - inp.c
        den = inp.mu + inp.kappa * inp.s2
        if gap <= 0 or den <= 0:
            return OptimizedBound(0.0, 0.0)
        lam = gap / den
        return OptimizedBound(lam, log_lower_tail_bound(inp, lam))
    if which == UPPER:
        inp.validate(UPPER)
        gap = inp.xi - inp.mu
        den = inp.mu + 4.0 * inp.s2
        if gap <= 0 or den <= 0:
            # with den = 0 the exponent is linear in lambda: take the range end
            if gap > 0:
                return OptimizedBound(LOG2, log_upper_tail_bound(inp, LOG2))
            return OptimizedBound(0.0, 0.0)
        lam = min(max(gap / (2.0 * den), 0.0), LOG2)
        return OptimizedBound(lam, log_upper_tail_bound(inp, lam))
    raise PreconditionViolated(f"unknown tail {which!r}")


@dataclass(frozen=True)
class Validation:
    which: str
    empirical_freq: float
    analytic_bound: float
    standard_error: float
    holds: bool
    lam: float
    mu: float
    s2: float
    kappa: float | None
    trials: int


def pair_bernoullis(p_m, q_l) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Match every L parameter q with a distinct M parameter p >= q.

    Returns (paired p, paired q, unpaired p). The largest q takes the
    smallest p above it, and so on down; this succeeds whenever any matching
    does and leaves the largest possible mass unpaired.
    """
    avail = sorted(float(v) for v in p_m)
    q = np.sort(np.asarray(q_l, dtype=float))[::-1]
    paired = []
    for v in q:
        i = bisect.bisect_left(avail, v)
        if i == len(avail):
            raise PreconditionViolated("L is not dominated term by term by M; no coupling available")
        paired.append(avail.pop(i))
    return np.array(paired), q, np.array(avail)


def sample_coupled(p_m, q_l, c: float, trials: int, rng, which: str = LOWER):
    """Draws of W built independent of L with the required inequality.

    Pair (X_j, Y_j) with p_j >= q_j and write X'_j = max(Y_j, U_j), where
    U_j ~ Bernoulli((p_j - q_j)/(1 - q_j)) is independent of Y_j, so that X'_j
    has law Bernoulli(p_j). With M' = sum of unpaired X_i + sum X'_j:

    * lower tail: W = sum of unpaired X_i + sum U_j - c, which gives
      W + L + c >= M';
    * upper tail: W = sum of unpaired X_i, which gives W + L <= M'.
    """
    pp, qq, pu = pair_bernoullis(p_m, q_l)
    free = (rng.random((trials, len(pu))) < pu).sum(axis=1) if len(pu) else np.zeros(trials)
    if which == UPPER:
        return free.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(qq < 1, (pp - qq) / (1 - qq), 0.0)
    extra = (rng.random((trials, len(r))) < r).sum(axis=1) if len(r) else np.zeros(trials)
    return free + extra - c


def validate_bound(p_m, q_l, xi: float, c: float, trials: int, source: RandomSource,
                   kappa: float | None = None, which: str = LOWER) -> Validation:
    """Monte Carlo check of the optimized bound on a coupled instance.

    ``holds`` is freq <= bound + 3 binomial standard errors of the empirical
    frequency. Refuses instances violating E M - E L >= 0 or, for the lower
    tail, max E Y_i < (kappa - 1)/kappa. ``kappa`` defaults to the smallest
    admissible value rounded up by 1%.
    """
    p_m = np.asarray(p_m, dtype=float)
    q_l = np.asarray(q_l, dtype=float)
    if np.any((p_m < 0) | (p_m > 1)) or np.any((q_l < 0) | (q_l > 1)):
        raise InvalidInput("Bernoulli parameters must lie in [0, 1]")
    mu = float(p_m.sum() - q_l.sum())
    if mu < 0:
        raise PreconditionViolated(f"E M - E L = {mu} < 0: hypothesis (H2) fails")
    s2 = float(np.sum(q_l ** 2))
    qmax = float(q_l.max()) if len(q_l) else 0.0
    if which == LOWER:
        if kappa is None:
            kappa = 1.01 / (1.0 - qmax) if qmax < 1 else math.inf
        if not math.isfinite(kappa) or not qmax < (kappa - 1.0) / kappa:
            raise PreconditionViolated("hypothesis (H1) fails for this kappa")
    inp = TailBoundInput(mu, xi, c if which == LOWER else 0.0, kappa, s2)
    opt = optimize_lambda(inp, which)
    w = sample_coupled(p_m, q_l, c, trials, source.rng, which)
    freq = float(np.mean(w < xi) if which == LOWER else np.mean(w >= xi))
    se = math.sqrt(freq * (1.0 - freq) / trials)
    return Validation(which, freq, opt.bound, se, freq <= opt.bound + 3.0 * se,
                      opt.lam, mu, s2, kappa, trials)


def validation_grid(size: int = 50, seed: int = 0) -> list[dict]:
    """A reproducible grid of Bernoulli instances spanning small and large means,
    tight and loose domination, and thresholds on both sides of mu."""
    rng = np.random.Generator(np.random.PCG64(seed))
    cells = []
    for i in range(size):
        n_m = int(rng.integers(5, 200))
        n_l = int(rng.integers(0, n_m + 1))
        p = rng.uniform(0.05, 0.95, n_m)
        shrink = rng.uniform(0.0, 1.0)
        q = np.sort(p)[::-1][:n_l] * shrink * rng.uniform(0.5, 1.0, n_l)
        mu = p.sum() - q.sum()
        sd = math.sqrt(max(p.sum(), 1.0))
        c = float(rng.choice([0.0, 1.0, 3.0]))
        xi_lo = mu - c - float(rng.uniform(0.0, 3.0)) * sd
        xi_hi = mu + float(rng.uniform(0.0, 3.0)) * sd
        cells.append({"cell": i, "p_m": p, "q_l": q, "c": c,
                      "xi_lower": xi_lo, "xi_upper": xi_hi})
    return cells
