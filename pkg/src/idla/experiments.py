"""Monte Carlo probes of the large-deviation lemmas, fluctuation scans and the
adaptive shell subdivision.

Every trial draws from its own stream ``stream_id(probe, *parameter bits,
trial)`` under the caller's base seed, so results do not depend on how
trials are spread over threads or on which other parameters are scanned.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import PreconditionViolated
from .flashing import Z_TRAP, TrapField, trap_crossing
from .growth import Cluster, Configuration, error_radii, grow, grow_ball, grow_stopped
from .lattice import ball_sites, isin_sites, norm2, radius_bound, sphere_sites
from .walk import RandomSource, stream_id

PROBE_COVERING = 1
PROBE_ORIGIN = 2
PROBE_TRAPS = 3
SCAN = 4
SUBDIVIDE = 5

PLACE_EVEN = "even"
PLACE_UNIFORM = "uniform"

DEFAULT_ALPHA = 4.0
DEFAULT_BETA = 7.75


def param_bits(*values) -> tuple[int, ...]:
    """Exact integer images of parameter values, for stream derivation."""
    out = []
    for v in values:
        if isinstance(v, (int, np.integer)):
            out.append(int(v))
        else:
            out.append(int(np.float64(v).view(np.int64)))
    return tuple(out)


def trial_source(base_seed: int, probe: int, params: tuple, trial: int) -> RandomSource:
    return RandomSource(base_seed, stream_id(probe, *param_bits(*params), trial))


def default_threads() -> int:
    env = os.environ.get("IDLA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_trials(fn: Callable[[int], object], trials: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(trials - 1)]``, computed on ``threads`` threads."""
    if threads <= 1 or trials <= 1:
        return [fn(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))


def wilson_halfwidth(k: int, n: int, z: float = 1.959963984540054) -> float:
    if n == 0:
        return 0.5
    p = k / n
    return z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)


@dataclass
class ProbeResult:
    probe: str
    params: dict
    trials: int
    base_seed: int
    success_count: int
    extra: dict = field(default_factory=dict)

    @property
    def frequency(self) -> float:
        return self.success_count / self.trials if self.trials else 0.0

    @property
    def wilson_halfwidth(self) -> float:
        return wilson_halfwidth(self.success_count, self.trials)

    def row(self) -> dict:
        return {**self.params, "trials": self.trials, "base_seed": self.base_seed,
                "successes": self.success_count, "frequency": self.frequency,
                "wilson_halfwidth": self.wilson_halfwidth, **self.extra}


@dataclass(frozen=True)
class DecayFit:
    """Least squares fit of log frequency = intercept + slope * x."""

    slope: float
    intercept: float
    r2: float
    adjusted: tuple  # indices of cells with zero successes

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "zero_count_cells": list(self.adjusted)}


def fit_decay(x: Sequence[float], results: Sequence[ProbeResult]) -> DecayFit:
    """All cells use the add-one estimate (k + 1)/(n + 2); cells with k = 0,
    for which this matters most, are listed in ``adjusted``."""
    x = np.asarray(x, dtype=float)
    y = np.array([math.log((r.success_count + 1) / (r.trials + 2)) for r in results])
    zero = tuple(i for i, r in enumerate(results) if r.success_count == 0)
    if len(x) < 2 or np.ptp(x) == 0:
        return DecayFit(math.nan, float(y.mean()) if len(y) else math.nan, math.nan, zero)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / tot if tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2, zero)


# ---------------------------------------------------------------- covering

def covering_configuration(R: float, A: float, d: int, placement: str = PLACE_EVEN,
                           rng=None) -> Configuration:
    """floor(A R^d) explorers on B(0, R/2).

    ``even``: every site gets floor(N / |B(0,R/2)|), the remainder sits at
    the origin. ``uniform``: independent uniform sites (needs ``rng``).
    """
    N = int(math.floor(A * R ** d))
    sites = ball_sites(np.zeros(d, dtype=np.int64), R / 2)
    if N == 0 or len(sites) == 0:
        return Configuration.from_sites(np.zeros((0, d), dtype=np.int64))
    if placement == PLACE_EVEN:
        q, r = divmod(N, len(sites))
        counts = np.full(len(sites), q, dtype=np.int64)
        counts[np.flatnonzero(~sites.any(axis=1))[0]] += r
        return Configuration.from_sites(sites, counts)
    if placement == PLACE_UNIFORM:
        idx = rng.integers(0, len(sites), size=N)
        return Configuration.from_sites(sites[idx])
    raise PreconditionViolated(f"unknown placement {placement!r}")


def probe_covering(R: float, A: float, trials: int, base_seed: int, d: int = 3,
                   alpha: float = DEFAULT_ALPHA, placement: str = PLACE_EVEN,
                   threads: int = 1) -> ProbeResult:
    """Frequency of {B(0, R) not inside A_{alpha R}(eta)}."""
    if A < 1:
        raise PreconditionViolated("A must be >= 1")
    ball = ball_sites(np.zeros(d, dtype=np.int64), R)
    params = (R, A, d, alpha)

    def one(t):
        src = trial_source(base_seed, PROBE_COVERING, params, t)
        eta = covering_configuration(R, A, d, placement, src.rng)
        if eta.total == 0:
            return len(ball) > 0
        cl = grow_stopped(eta, alpha * R, src)
        return not bool(np.all(isin_sites(ball, cl.settled_sites)))

    hits = map_trials(one, trials, threads)
    return ProbeResult("covering", {"d": d, "R": R, "A": A, "alpha": alpha,
                                    "placement": placement},
                       trials, base_seed, int(sum(hits)))


# ------------------------------------------------------------- origin hit

def origin_configuration(R: float, beta: float, d: int, rng) -> Configuration:
    """floor(beta R^d) explorers at independent uniform sites of dB(0, R)."""
    N = int(math.floor(beta * R ** d))
    if N == 0:
        return Configuration.from_sites(np.zeros((0, d), dtype=np.int64))
    sph = sphere_sites(R, d)
    return Configuration.from_sites(sph[rng.integers(0, len(sph), size=N)])


def probe_origin_hit(R: float, beta: float, trials: int, base_seed: int, d: int = 2,
                     threads: int = 1) -> ProbeResult:
    """Frequency of {0 in A(eta)} for explorers started on dB(0, R)."""
    params = (R, beta, d)
    origin = np.zeros((1, d), dtype=np.int64)

    def one(t):
        src = trial_source(base_seed, PROBE_ORIGIN, params, t)
        eta = origin_configuration(R, beta, d, src.rng)
        if eta.total == 0:
            return False
        return bool(isin_sites(origin, grow(eta, src).settled_sites)[0])

    hits = map_trials(one, trials, threads)
    return ProbeResult("origin_hit", {"d": d, "R": R, "beta": beta,
                                      "explorers": int(math.floor(beta * R ** d))},
                       trials, base_seed, int(sum(hits)))


def origin_decay_variable(R: float, d: int) -> float:
    """R^2 / log R in d = 2, R^2 in d >= 3."""
    return R * R / math.log(R) if d == 2 else R * R


# ------------------------------------------------------------------ traps

def probe_traps(R: float, density: float, trials: int, base_seed: int, d: int = 2,
                height: float = 2.0, threads: int = 1) -> ProbeResult:
    """Crossing frequency of the flashing explorer through a random trap field,
    with the plain-walk crossing read on the same trajectories."""
    params = (R, density, d, height)
    start_sites = sphere_sites(2 * R, d)

    def one(t):
        src = trial_source(base_seed, PROBE_TRAPS, params, t)
        fld = TrapField.random(R, d, density, src.rng, height=height)
        z = start_sites[src.rng.integers(0, len(start_sites))]
        out = trap_crossing(z, R, None, src, field_=fld)
        bad_z = out.crossed and bool(np.any(out.flash_codes == Z_TRAP))
        return out.crossed, out.plain_crossed, bad_z, len(fld.V)

    rows = map_trials(one, trials, threads)
    flash = sum(r[0] for r in rows)
    plain = sum(r[1] for r in rows)
    violations = sum(1 for r in rows if r[1] and not r[0])
    bad_z = sum(r[2] for r in rows)
    mean_v = float(np.mean([r[3] for r in rows])) if rows else 0.0
    h = TrapField(R, d, np.zeros((0, d), dtype=np.int64), height).partition.height
    return ProbeResult("traps", {"d": d, "R": R, "density": density, "height": h,
                                 "mean_V": mean_v},
                       trials, base_seed, int(flash),
                       {"plain_crossed": int(plain),
                        "plain_frequency": plain / trials if trials else 0.0,
                        "containment_violations": int(violations),
                        "crossed_with_trap_flash": int(bad_z)})


# ----------------------------------------------------------- fluctuations

def normalizer(n: float, d: int) -> float:
    """log n in d = 2, sqrt(log n) in d >= 3; 0 when n <= 1."""
    if n <= 1:
        return 0.0
    return math.log(n) if d == 2 else math.sqrt(math.log(n))


@dataclass
class ScalingScan:
    d: int
    n_values: list
    trials: int
    base_seed: int
    inner: dict   # n -> array of delta_I per trial
    outer: dict   # n -> array of delta_O per trial

    def stats(self) -> list[dict]:
        rows = []
        for n in self.n_values:
            norm = normalizer(n, self.d)
            sq = math.sqrt(math.log(n)) if n > 1 else 0.0
            row = {"n": n, "d": self.d, "trials": self.trials,
                   "normalizer": norm, "degenerate_normalizer": norm == 0.0}
            for name, data in (("inner", self.inner[n]), ("outer", self.outer[n])):
                q10, med, q90 = np.quantile(data, [0.1, 0.5, 0.9])
                mean = float(np.mean(data))
                row.update({
                    f"{name}_mean": mean, f"{name}_median": float(med),
                    f"{name}_max": float(np.max(data)), f"{name}_q10": float(q10),
                    f"{name}_q90": float(q90),
                    f"{name}_ratio": mean / norm if norm > 0 else mean,
                    f"{name}_ratio_sqrtlog": mean / sq if sq > 0 else mean,
                })
            rows.append(row)
        return rows

    def fitted(self) -> dict:
        st = self.stats()
        return {"alpha_hat": max(r["inner_ratio"] for r in st),
                "beta_hat": max(r["outer_ratio"] for r in st)}

    def trial_rows(self) -> list[dict]:
        return [{"n": n, "trial": t, "delta_I": float(self.inner[n][t]),
                 "delta_O": float(self.outer[n][t])}
                for n in self.n_values for t in range(self.trials)]


def scan_fluctuations(d: int, n_list: Sequence[float], trials: int, base_seed: int,
                      threads: int = 1) -> ScalingScan:
    ns = [float(n) for n in n_list]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise PreconditionViolated("n values must be strictly increasing")
    if any(n <= 0 for n in ns):
        raise PreconditionViolated("n values must be positive")
    inner, outer = {}, {}
    for n in ns:
        def one(t, n=n):
            cl = grow_ball(n, d, trial_source(base_seed, SCAN, (n, d), t))
            er = error_radii(cl, n)
            return er.inner, er.outer
        res = map_trials(one, trials, threads)
        inner[n] = np.array([r[0] for r in res])
        outer[n] = np.array([r[1] for r in res])
    return ScalingScan(d, ns, trials, base_seed, inner, outer)


def ratio_stability(scan: ScalingScan, which: str = "inner", factor: float = 2.0) -> dict:
    """Spread of the mean normalized error across n, and the envelope check
    mean delta(n') <= factor * mean delta(n) * normalizer(n')/normalizer(n), n < n'."""
    st = [r for r in scan.stats() if not r["degenerate_normalizer"]]
    ratios = [r[f"{which}_ratio"] for r in st]
    lo, hi = min(ratios), max(ratios)
    spread = hi / lo if lo > 0 else math.inf
    env_ok = True
    for i, a in enumerate(st):
        for b in st[i + 1:]:
            allowed = factor * a[f"{which}_mean"] * b["normalizer"] / a["normalizer"]
            env_ok &= b[f"{which}_mean"] <= allowed
    return {"spread": spread, "spread_ok": spread < factor, "envelope_ok": bool(env_ok)}


# ------------------------------------------------------------- subdivide

@dataclass(frozen=True)
class Subdivision:
    R: float
    d: int
    gamma: float
    heights: tuple   # h_0, ..., h_{L+1}
    counts: tuple    # N_0, ..., N_{L-1}, the counts that fixed h_1, ..., h_L
    L: int

    def invariants(self) -> dict:
        h = self.heights
        mid = sum(h[1:self.L + 1])
        return {
            "heights_at_least_one": all(v >= 1 - 1e-12 for v in h[:self.L + 1]),
            "middle_sum_in_range": self.R / 2 - 1e-9 <= mid <= 3 * self.R / 4 + 1e-9,
            "last_height_nonnegative": h[self.L + 1] >= -1e-9,
        }

    def check(self) -> None:
        bad = [k for k, ok in self.invariants().items() if not ok]
        if bad:
            raise AssertionError(f"subdivision invariants failed: {bad}")


def shell_count_from_cluster(cluster: Cluster, center=None) -> Callable[[float, float], int]:
    """N_k: settled sites in B(z, outer) minus B(z, inner) for the k-th shell."""
    c = np.zeros(cluster.d, dtype=np.int64) if center is None else np.asarray(center)
    rel2 = norm2(cluster.settled_sites - c)

    def count(outer: float, inner: float) -> int:
        return int(np.sum((rel2 <= radius_bound(outer)) & (rel2 > radius_bound(inner))))
    return count


def subdivide(R: float, gamma: float, counts_source, d: int,
              total: int | None = None) -> Subdivision:
    """Shells of heights h_0 = R/4, h_{k+1}^d = gamma N_k, going inward from
    radius R, until h_1 + ... + h_L >= R/2; then h_{L+1} = R - (h_0 + ... + h_L).

    ``counts_source`` is a Cluster (N_k counted in the k-th shell around the
    origin), a sequence of N_k, or a callable ``(k, h_k) -> N_k``. ``total``
    (|eta|) triggers the check gamma |eta| <= h_0^d; it defaults to the
    cluster volume.
    """
    if gamma < 1:
        raise PreconditionViolated("gamma must be >= 1")
    h0 = R / 4.0
    if h0 < 1:
        raise PreconditionViolated("need h_0 = R/4 >= 1")
    if isinstance(counts_source, Cluster):
        shell_count = shell_count_from_cluster(counts_source)
        if total is None:
            total = counts_source.volume

        def get(k, hk, radius):
            return shell_count(radius, radius - hk)
    elif callable(counts_source):
        def get(k, hk, radius):
            return int(counts_source(k, hk))
    else:
        seq = list(counts_source)

        def get(k, hk, radius):
            if k >= len(seq):
                raise PreconditionViolated("count sequence exhausted before termination")
            return int(seq[k])
    if total is not None and gamma * total > h0 ** d * (1 + 1e-12):
        raise PreconditionViolated(f"gamma |eta| = {gamma * total} exceeds h_0^d = {h0 ** d}")
    heights = [h0]
    counts = []
    radius = R
    mid = 0.0
    k = 0
    while True:
        hk = heights[k]
        nk = get(k, hk, radius)
        if nk < math.floor(hk):
            raise PreconditionViolated(f"N_{k} = {nk} < floor(h_{k}) = {math.floor(hk)}")
        if gamma * nk > h0 ** d * (1 + 1e-12):
            raise PreconditionViolated(f"gamma N_{k} exceeds h_0^d")
        counts.append(nk)
        radius -= hk
        nxt = (gamma * nk) ** (1.0 / d)
        heights.append(nxt)
        mid += nxt
        k += 1
        if mid >= R / 2:
            break
    L = k
    heights.append(R - sum(heights[:L + 1]))
    sub = Subdivision(R, d, gamma, tuple(heights), tuple(counts), L)
    sub.check()
    return sub


def random_subdivision(rng, d: int | None = None) -> Subdivision:
    """A subdivision with random R, gamma and admissible counts
    N_k uniform on [floor(h_k), h_0^d / gamma]."""
    d = int(rng.integers(2, 5)) if d is None else d
    R = float(rng.uniform(4.0, 80.0))
    h0 = R / 4
    gamma = float(rng.uniform(1.0, max(1.0, min(4.0, h0 ** d / max(1.0, math.floor(h0))))))
    cap = int(math.floor(h0 ** d / gamma))

    def counts(k, hk):
        lo = int(math.floor(hk))
        return int(rng.integers(lo, max(lo, cap) + 1))
    return subdivide(R, gamma, counts, d)
