"""Internal DLA: sequential aggregation, the stopped variant, error radii and
the walker/explorer hit counts M_R and W_R.

Explorers are launched one at a time in a fixed order: by starting site in
lexicographic order, then by multiplicity index. Each settles on the first
site of its trajectory (time 0 included) not occupied by earlier explorers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._engine import PENDING, SETTLED, STOPPED, BoxGrid, explore, initial_half_width
from .errors import ConfigOutsideDomain, PreconditionViolated
from .lattice import (as_sites, ball_sites, boundary, in_ball, isin_sites,
                      lexsort_sites, norm2, radius_bound)
from .walk import DEFAULT_STEP_CAP, RandomSource

CLUSTER_SCHEMA = "idla.cluster/1"
WALKERS_M = "walkers_M"
EXPLORERS_W = "explorers_W"


@dataclass(frozen=True)
class Configuration:
    """Finite starting configuration eta: distinct sites with positive counts."""

    sites: np.ndarray
    counts: np.ndarray

    @classmethod
    def point(cls, count: int, site) -> "Configuration":
        site = as_sites(site)
        return cls(site, np.array([int(count)], dtype=np.int64))

    @classmethod
    def at_origin(cls, count: int, d: int) -> "Configuration":
        return cls.point(count, np.zeros(d, dtype=np.int64))

    @classmethod
    def from_sites(cls, sites, counts=None) -> "Configuration":
        """Build from a list of sites, repeated sites adding up."""
        sites = as_sites(sites)
        if counts is None:
            counts = np.ones(len(sites), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if np.any(counts < 0):
            raise PreconditionViolated("negative configuration count")
        if len(sites) == 0:
            return cls(sites, counts)
        uniq, inv = np.unique(sites, axis=0, return_inverse=True)
        tot = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(tot, inv.ravel(), counts)
        keep = tot > 0
        return cls(uniq[keep], tot[keep])

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def explorers(self) -> np.ndarray:
        """Starting site of every explorer, in launch order."""
        order = np.lexsort(self.sites.T[::-1])
        return np.repeat(self.sites[order], self.counts[order], axis=0)

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in s): int(c) for s, c in zip(self.sites, self.counts)}


@dataclass
class Cluster:
    """Outcome of a growth run.

    ``settled_*`` arrays are in settling order; ``stopped_*`` list explorers
    frozen on the stopping sphere.
    """

    d: int
    n_explorers: int
    settled_index: np.ndarray
    settled_sites: np.ndarray
    settled_tau: np.ndarray
    stopped_index: np.ndarray = None
    stopped_sites: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stopped_index is None:
            self.stopped_index = np.zeros(0, dtype=np.int64)
        if self.stopped_sites is None:
            self.stopped_sites = np.zeros((0, self.d), dtype=np.int64)

    @property
    def occupied(self) -> np.ndarray:
        return lexsort_sites(self.settled_sites)

    @property
    def volume(self) -> int:
        return len(self.settled_sites)

    @property
    def settle_order(self) -> list:
        return [(int(i), tuple(int(v) for v in s), int(t))
                for i, s, t in zip(self.settled_index, self.settled_sites, self.settled_tau)]

    @property
    def stopped_on_boundary(self) -> dict:
        out: dict = {}
        for s in self.stopped_sites:
            key = tuple(int(v) for v in s)
            out[key] = out.get(key, 0) + 1
        return out

    def to_json(self) -> str:
        payload = {
            "schema": CLUSTER_SCHEMA,
            "metadata": {"d": self.d, "explorers": self.n_explorers,
                         "code_version": __version__, **self.meta},
            "settle_order": [[i, list(s), t] for i, s, t in self.settle_order],
            "stopped": [[int(i), [int(v) for v in s]]
                        for i, s in zip(self.stopped_index, self.stopped_sites)],
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Cluster":
        obj = json.loads(text)
        if obj.get("schema") != CLUSTER_SCHEMA:
            raise PreconditionViolated(f"unknown cluster schema {obj.get('schema')!r}")
        meta = dict(obj["metadata"])
        d = meta.pop("d")
        n = meta.pop("explorers")
        meta.pop("code_version", None)
        so = obj["settle_order"]
        st = obj["stopped"]
        return cls(
            d, n,
            np.array([r[0] for r in so], dtype=np.int64),
            as_sites([r[1] for r in so], d),
            np.array([r[2] for r in so], dtype=np.int64),
            np.array([r[0] for r in st], dtype=np.int64),
            as_sites([r[1] for r in st], d),
            meta,
        )


@dataclass(frozen=True)
class ErrorRadii:
    """Inner and outer errors, with the exact squared norms that realize them.

    ``inner_norm2`` is the smallest squared norm of an unoccupied site (None
    when B(0, n) is fully covered); ``outer_norm2`` the largest squared norm
    of an occupied site (None for an empty cluster).
    """

    n: float
    inner: float
    outer: float
    inner_norm2: int | None
    outer_norm2: int | None


def _run(eta: Configuration, source: RandomSource, grid: BoxGrid | None = None,
         stop_m: int = -1, aggregate: bool = True, targets=None,
         step_cap: int = DEFAULT_STEP_CAP):
    starts = eta.explorers()
    d = eta.d
    if grid is None:
        extent = float(np.abs(starts).max()) if len(starts) else 0.0
        if stop_m >= 0:
            extent = max(extent, math.sqrt(stop_m) + 1)
        grid = BoxGrid(d, initial_half_width(len(starts), d, extent))
    cur = starts.copy()
    tau = np.zeros(len(cur), dtype=np.int64)
    status = np.full(len(cur), PENDING, dtype=np.int8)
    counts = last_seen = None
    label = None
    if targets is not None and len(targets):
        need = int(np.abs(targets).max()) + 2
        grid.grow_to(need)
        lab = grid.add_array("targets", np.int32, -1)
        lab[grid.index(targets)] = np.arange(len(targets), dtype=np.int32)
        counts = np.zeros(len(targets), dtype=np.int64)
        last_seen = np.full(len(targets), -1, dtype=np.int64)
        label = "targets"
    explore(grid, cur, tau, status, source.rng, stop_m=stop_m,
            aggregate=aggregate, label_name=label, counts=counts,
            last_seen=last_seen, step_cap=step_cap)
    return cur, tau, status, counts, grid


def _cluster(d, cur, tau, status, meta) -> Cluster:
    idx = np.arange(len(cur), dtype=np.int64)
    s = status == SETTLED
    st = status == STOPPED
    return Cluster(d, len(cur), idx[s], cur[s], tau[s], idx[st], cur[st], meta)


def grow(eta: Configuration, source: RandomSource,
         step_cap: int = DEFAULT_STEP_CAP) -> Cluster:
    """Sequential internal DLA from configuration ``eta``."""
    if eta.total < 1:
        raise PreconditionViolated("configuration must hold at least one explorer")
    cur, tau, status, _, _ = _run(eta, source, step_cap=step_cap)
    return _cluster(eta.d, cur, tau, status, source.metadata())


def grow_from_origin(n_explorers: int, d: int, source: RandomSource,
                     step_cap: int = DEFAULT_STEP_CAP) -> Cluster:
    return grow(Configuration.at_origin(n_explorers, d), source, step_cap)


def grow_ball(n: float, d: int, source: RandomSource) -> Cluster:
    """Internal DLA with N = |B(0, n)| explorers started at the origin."""
    N = len(ball_sites(np.zeros(d, dtype=np.int64), n))
    cl = grow_from_origin(N, d, source)
    cl.meta["n"] = n
    return cl


def grow_stopped(eta: Configuration, R: float, source: RandomSource,
                 step_cap: int = DEFAULT_STEP_CAP) -> Cluster:
    """Internal DLA with explorers frozen when they reach dB(0, R)."""
    if eta.total and not np.all(in_ball(eta.sites, np.zeros(eta.d, dtype=np.int64), R)):
        raise ConfigOutsideDomain(f"configuration has mass outside B(0,{R})")
    cur, tau, status, _, _ = _run(eta, source, stop_m=radius_bound(R), step_cap=step_cap)
    meta = source.metadata()
    meta["R"] = R
    return _cluster(eta.d, cur, tau, status, meta)


def error_radii(cluster: Cluster, n: float) -> ErrorRadii:
    d = cluster.d
    occ = cluster.settled_sites
    ball = ball_sites(np.zeros(d, dtype=np.int64), n)
    holes = ball[~isin_sites(ball, occ)]
    if len(holes):
        in2 = int(norm2(holes).min())
        inner = max(0.0, n - math.sqrt(in2))
    else:
        in2, inner = None, 0.0
    if len(occ):
        out2 = int(norm2(occ).max())
        outer = max(0.0, math.sqrt(out2) - n)
    else:
        out2, outer = None, 0.0
    return ErrorRadii(n, min(inner, n), outer, in2, out2)


def inner_error(cluster: Cluster, n: float) -> float:
    """n minus the largest r with B(0, r) inside the cluster, clamped to [0, n]."""
    return error_radii(cluster, n).inner


def outer_error(cluster: Cluster, n: float) -> float:
    """Smallest r with the cluster inside B(0, r), minus n, clamped at 0."""
    return error_radii(cluster, n).outer


def count_hits(eta: Configuration, R: float, targets, mode: str,
               source: RandomSource, return_cluster: bool = False,
               step_cap: int = DEFAULT_STEP_CAP):
    """Per-target counts of trajectories that visit a target when or before
    leaving B(0, R): free walks (``walkers_M``) or explorers (``explorers_W``).

    Returns ``{target: count}``, plus the stopped cluster in W mode when
    ``return_cluster`` is set.
    """
    d = eta.d
    tg = as_sites(targets, d)
    origin = np.zeros(d, dtype=np.int64)
    allowed = in_ball(tg, origin, R) | isin_sites(tg, boundary(ball_sites(origin, R), d))
    if not np.all(allowed):
        raise PreconditionViolated("targets must lie in B(0,R) or on its boundary")
    if mode not in (WALKERS_M, EXPLORERS_W):
        raise PreconditionViolated(f"unknown mode {mode!r}")
    if eta.total and not np.all(in_ball(eta.sites, origin, R) | isin_sites(eta.sites, tg)):
        raise ConfigOutsideDomain(f"configuration has mass outside B(0,{R})")
    cur, tau, status, counts, _ = _run(
        eta, source, stop_m=radius_bound(R), aggregate=(mode == EXPLORERS_W),
        targets=tg, step_cap=step_cap)
    out = {tuple(int(v) for v in t): int(c) for t, c in zip(tg, counts)}
    if return_cluster:
        meta = source.metadata()
        meta["R"] = R
        return out, _cluster(d, cur, tau, status, meta)
    return out


def boundary_identity_pair(n: float, z, d: int, source: RandomSource) -> tuple[int, int]:
    """One sample each of W_n(N 1_0, z) + M_n(A_n(N), z) and of M_n(N 1_0, z).

    The three families of trajectories are drawn sequentially from one stream
    and are mutually independent.
    """
    N = len(ball_sites(np.zeros(d, dtype=np.int64), n))
    eta = Configuration.at_origin(N, d)
    zt = as_sites(z, d)
    w, cluster = count_hits(eta, n, zt, EXPLORERS_W, source, return_cluster=True)
    key = tuple(int(v) for v in zt[0])
    lhs = w[key]
    if cluster.volume:
        a_eta = Configuration.from_sites(cluster.settled_sites)
        lhs += count_hits(a_eta, n, zt, WALKERS_M, source)[key]
    rhs = count_hits(eta, n, zt, WALKERS_M, source)[key]
    return lhs, rhs
