"""Exact discrete potential theory on finite domains.

Everything reduces to solves with ``I - P_D``, where ``P_D`` is the simple
random walk kernel killed on leaving the finite set ``D``. That matrix is
symmetric positive definite, so conjugate gradients are used, and every
solution is checked against an explicit relative residual bound.
"""
from __future__ import annotations

import hashlib
import math
import os
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import DomainTooLarge, PreconditionViolated, WrongDimension
from .lattice import (as_sites, ball_sites, boundary, isin_sites, neighbor_offsets,
                      norm2, site_keys)

RESIDUAL_TOL = 1e-10
MAX_SITES = 200_000
EULER_GAMMA = 0.5772156649015329
KERNEL_CONSTANT = (2 * EULER_GAMMA + math.log(8)) / math.pi
KERNEL_HALF_WIDTH = 200


class Domain:
    """A finite set of sites with its killed-walk operator ``I - P_D``."""

    def __init__(self, sites, max_sites: int = MAX_SITES):
        sites = as_sites(sites)
        if len(sites) > max_sites:
            raise DomainTooLarge(f"{len(sites)} sites exceed the exact-solve budget {max_sites}")
        self.sites = sites
        self.d = sites.shape[1]
        self._lo = sites.min(axis=0) - 2
        self._span = sites.max(axis=0) - self._lo + 3
        keys = site_keys(sites, self._lo, self._span)
        self._order = np.argsort(keys)
        self._sorted_keys = keys[self._order]
        rows, cols = [], []
        for off in neighbor_offsets(self.d):
            nb = self.index(sites + off)
            ok = nb >= 0
            rows.append(np.flatnonzero(ok))
            cols.append(nb[ok])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        n = len(sites)
        P = sp.csr_matrix((np.full(len(r), 1.0 / (2 * self.d)), (r, c)), shape=(n, n))
        self.A = (sp.identity(n, format="csr") - P).tocsr()

    def __len__(self):
        return len(self.sites)

    def index(self, sites) -> np.ndarray:
        """Row index of each site in the domain, -1 for sites outside."""
        s = as_sites(sites, self.d)
        out = np.full(len(s), -1, dtype=np.int64)
        inside_box = np.all((s >= self._lo) & (s < self._lo + self._span), axis=1)
        if not inside_box.any():
            return out
        k = site_keys(s[inside_box], self._lo, self._span)
        pos = np.searchsorted(self._sorted_keys, k)
        pos[pos >= len(self._sorted_keys)] = 0
        hit = self._sorted_keys[pos] == k
        sub = np.full(len(k), -1, dtype=np.int64)
        sub[hit] = self._order[pos[hit]]
        out[inside_box] = sub
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - P_D) x = rhs; raises if the residual exceeds RESIDUAL_TOL."""
        b = np.asarray(rhs, dtype=float)
        nb = np.linalg.norm(b)
        if nb == 0:
            return np.zeros_like(b)
        x, _ = cg(self.A, b, rtol=1e-13, atol=0.0, maxiter=50 * len(b) + 1000)
        res = np.linalg.norm(self.A @ x - b) / nb
        if res > RESIDUAL_TOL:
            raise RuntimeError(f"linear solve residual {res:.3e} above {RESIDUAL_TOL}")
        return x

    def exit_weights(self, targets) -> np.ndarray:
        """Vector whose solve gives P_y(exit D through ``targets``)."""
        t = as_sites(targets, self.d)
        rhs = np.zeros(len(self))
        for off in neighbor_offsets(self.d):
            idx = self.index(t - off)
            np.add.at(rhs, idx[idx >= 0], 1.0 / (2 * self.d))
        return rhs


@lru_cache(maxsize=16)
def ball_domain(d: int, radius: float) -> Domain:
    return Domain(ball_sites(np.zeros(d, dtype=np.int64), radius))


@lru_cache(maxsize=64)
def _green_column(d: int, radius: float, z: tuple) -> np.ndarray:
    dom = ball_domain(d, radius)
    rhs = np.zeros(len(dom))
    rhs[dom.index(np.array(z))[0]] = 1.0
    x = dom.solve(rhs)
    x.setflags(write=False)
    return x


def green_function(n: float, y, z) -> float:
    """Expected visits to z of a walk started at y before it leaves B(0, n)."""
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    dom = ball_domain(len(z), n)
    iy, iz = dom.index(np.vstack([y, z]))
    if iy < 0 or iz < 0:
        return 0.0
    return float(_green_column(len(z), n, tuple(int(v) for v in z))[iy])


def hitting_probability(y, z, R: float) -> float:
    """P_y(H_z < H_exit) for the ball B(0, R), as G_R(y, z) / G_R(z, z)."""
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    if np.array_equal(y, z):
        return 1.0
    dom = ball_domain(len(z), R)
    iy, iz = dom.index(np.vstack([y, z]))
    if iy < 0 or iz < 0:
        return 0.0
    col = _green_column(len(z), R, tuple(int(v) for v in z))
    return float(col[iy] / col[iz])


def hitting_probabilities_to(z, R: float) -> tuple[np.ndarray, np.ndarray]:
    """(sites of B(0,R), P_y(H_z < H_exit) for each site y)."""
    z = np.asarray(z, dtype=np.int64)
    dom = ball_domain(len(z), R)
    iz = dom.index(z)[0]
    if iz < 0:
        raise PreconditionViolated("z must lie in B(0,R)")
    col = _green_column(len(z), R, tuple(int(v) for v in z))
    return dom.sites, col / col[iz]


def exit_probabilities(R: float, d: int, targets) -> tuple[np.ndarray, np.ndarray]:
    """(sites of B(0,R), P_y(the walk leaves B(0,R) through ``targets``))."""
    dom = ball_domain(d, R)
    return dom.sites, dom.solve(dom.exit_weights(targets))


def _component(start: np.ndarray, absorbing: np.ndarray, max_sites: int) -> np.ndarray:
    """Sites reachable from ``start`` without touching ``absorbing``."""
    d = len(start)
    blocked = {tuple(int(v) for v in s) for s in absorbing}
    seen = {tuple(int(v) for v in start)}
    frontier = [tuple(int(v) for v in start)]
    offs = [tuple(int(v) for v in o) for o in neighbor_offsets(d)]
    while frontier:
        nxt = []
        for s in frontier:
            for o in offs:
                t = tuple(a + b for a, b in zip(s, o))
                if t in blocked or t in seen:
                    continue
                seen.add(t)
                if len(seen) > max_sites:
                    raise DomainTooLarge("walk is not confined to a finite region within budget")
                nxt.append(t)
        frontier = nxt
    return np.array(sorted(seen), dtype=np.int64)


def harmonic_measure(y, absorbing, max_sites: int = MAX_SITES) -> dict:
    """Law of the first site of ``absorbing`` hit by a walk started at y."""
    y = np.asarray(y, dtype=np.int64)
    ab = as_sites(absorbing, len(y))
    if isin_sites(y[None, :], ab)[0]:
        return {tuple(int(v) for v in y): 1.0}
    dom = Domain(_component(y, ab, max_sites), max_sites)
    rhs = np.zeros(len(dom))
    rhs[dom.index(y)[0]] = 1.0
    g = dom.solve(rhs)
    out = {}
    targets = boundary(dom.sites, dom.d)
    for b in targets:
        idx = dom.index(b + neighbor_offsets(dom.d))
        mass = g[idx[idx >= 0]].sum() / (2 * dom.d)
        if mass > 0:
            out[tuple(int(v) for v in b)] = float(mass)
    return out


def mean_value_gaps(n: float, R: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Gap | |B(0,R)| G_n(0,z) - sum_{y in B(0,R)} G_n(y,z) | at every z of
    B(0,R) with n - |z| <= 1. Returns (sites z, gaps)."""
    if not (n - n ** (1.0 / 3.0) <= R <= n):
        raise PreconditionViolated(f"need n - n^(1/3) <= R <= n, got n={n}, R={R}")
    dom = ball_domain(d, n)
    origin = np.zeros(d, dtype=np.int64)
    g0 = _green_column(d, n, tuple(origin.tolist()))
    inner = isin_sites(dom.sites, ball_sites(origin, R))
    mass = dom.solve(inner.astype(float))
    nz = np.sqrt(norm2(dom.sites).astype(float))
    eligible = inner & (n - nz <= 1.0)
    gaps = np.abs(inner.sum() * g0 - mass)
    return dom.sites[eligible], gaps[eligible]


def mean_value_gap(n: float, R: float, z) -> float:
    z = np.asarray(z, dtype=np.int64)
    d = len(z)
    if not (n - n ** (1.0 / 3.0) <= R <= n):
        raise PreconditionViolated(f"need n - n^(1/3) <= R <= n, got n={n}, R={R}")
    if not isin_sites(z[None, :], ball_sites(np.zeros(d, dtype=np.int64), R))[0]:
        raise PreconditionViolated("z must lie in B(0,R)")
    if n - math.sqrt(float(z @ z)) > 1:
        raise PreconditionViolated("need n - |z| <= 1")
    sites, gaps = mean_value_gaps(n, R, d)
    return float(gaps[np.flatnonzero(np.all(sites == z, axis=1))[0]])


def kernel_asymptotic(sites) -> np.ndarray:
    """(2/pi) log|z| + (2 gamma + log 8)/pi."""
    r = np.sqrt(norm2(sites).astype(float))
    return 2.0 / math.pi * np.log(r) + KERNEL_CONSTANT


def cache_dir() -> Path:
    base = os.environ.get("IDLA_CACHE_DIR") or os.path.join(
        os.environ.get("XDG_CACHE_HOME", os.path.expanduser("~/.cache")), "idla")
    return Path(base)


def _kernel_table_path(half_width: int) -> Path:
    tag = hashlib.sha1(f"{half_width}|{RESIDUAL_TOL}|{KERNEL_CONSTANT!r}".encode()).hexdigest()[:8]
    return cache_dir() / f"potential_kernel_d2_box{2 * half_width + 1}_tol{RESIDUAL_TOL:.0e}_{tag}.npz"


def _solve_kernel_table(half_width: int) -> tuple[np.ndarray, float]:
    """a(0, .) on the box [-L, L]^2 from the equation
    a(x) - mean of a over the 4 neighbours = -1{x = 0},
    with the two-term asymptotic expansion prescribed on the box boundary
    and the constant fixed by a(0) = 0."""
    L = half_width
    inside = np.indices((2 * L - 1, 2 * L - 1)).reshape(2, -1).T - (L - 1)
    dom = Domain(inside, max_sites=max(MAX_SITES, len(inside)))
    rim = boundary(inside, 2)
    rhs = np.zeros(len(dom))
    vals = kernel_asymptotic(rim)
    for off in neighbor_offsets(2):
        idx = dom.index(rim - off)
        ok = idx >= 0
        np.add.at(rhs, idx[ok], vals[ok] / 4.0)
    rhs[dom.index(np.zeros(2, dtype=np.int64))[0]] -= 1.0
    a = dom.solve(rhs)
    res = float(np.linalg.norm(dom.A @ a - rhs) / np.linalg.norm(rhs))
    a -= a[dom.index(np.zeros(2, dtype=np.int64))[0]]
    table = np.zeros((2 * L + 1, 2 * L + 1))
    table[inside[:, 0] + L, inside[:, 1] + L] = a
    table[rim[:, 0] + L, rim[:, 1] + L] = np.nan
    return table, res


@lru_cache(maxsize=2)
def kernel_table(half_width: int = KERNEL_HALF_WIDTH) -> np.ndarray:
    """Exact-solve table of a(0, z), cached on disk with its parameters."""
    path = _kernel_table_path(half_width)
    if path.exists():
        with np.load(path) as f:
            return f["a"]
    table, res = _solve_kernel_table(half_width)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, a=table, d=2, box=2 * half_width + 1, residual=res)
    os.replace(tmp, path)
    return table


def potential_kernel(z, half_width: int = KERNEL_HALF_WIDTH,
                     exact_range: float = 60.0) -> float:
    """a(0, z) in d = 2: table value for |z| <= exact_range, else asymptotic."""
    z = np.asarray(z, dtype=np.int64)
    if len(z) != 2:
        raise WrongDimension("the potential kernel is only defined here for d = 2")
    if not z.any():
        return 0.0
    if math.sqrt(float(z @ z)) > exact_range or np.abs(z).max() >= half_width:
        return float(kernel_asymptotic(z[None, :])[0])
    table = kernel_table(half_width)
    return float(table[z[0] + half_width, z[1] + half_width])


def fit_kernel_constant(rmin: float = 5.0, rmax: float = 20.0,
                        half_width: int = KERNEL_HALF_WIDTH) -> dict:
    """Smallest K_g with |a(0,z) - asymptotic| <= K_g / |z|^2 on rmin <= |z| <= rmax,
    over the whole range and over its two halves."""
    table = kernel_table(half_width)
    w = int(math.ceil(rmax))
    pts = np.indices((2 * w + 1, 2 * w + 1)).reshape(2, -1).T - w
    r = np.sqrt(norm2(pts).astype(float))
    sel = (r >= rmin) & (r <= rmax)
    pts, r = pts[sel], r[sel]
    exact = table[pts[:, 0] + half_width, pts[:, 1] + half_width]
    scaled = np.abs(exact - kernel_asymptotic(pts)) * r ** 2
    mid = 0.5 * (rmin + rmax)
    return {
        "K_g": float(scaled.max()),
        "K_g_lower_half": float(scaled[r <= mid].max()),
        "K_g_upper_half": float(scaled[r > mid].max()),
        "points": int(len(pts)),
    }


def loop_constants(radii, alpha: float = 4.0) -> dict:
    """Fitted K2, K2' with K2 log R <= G_{alpha R}(z, z) <= K2' log(2 alpha R),
    d = 2, over z in B(0, R) (sampled on the axis) for each R in ``radii``."""
    lo, hi = math.inf, 0.0
    for R in radii:
        for zx in range(0, int(math.ceil(R))):
            if zx >= R:
                continue
            g = green_function(alpha * R, (zx, 0), (zx, 0))
            lo = min(lo, g / math.log(R))
            hi = max(hi, g / math.log(2 * alpha * R))
    return {"K2": lo, "K2_prime": hi}


def fit_hitting_bracket(R: float, z, exclude_radius: float = 0.0) -> dict:
    """Fitted a1 <= a2 with a1/(1+|y-z|^(d-2)) <= P_y(H_z < H_exit) <= a2/(1+|y-z|^(d-2))
    over y in B(0, R), y != z, |y - z| >= exclude_radius."""
    z = np.asarray(z, dtype=np.int64)
    d = len(z)
    sites, p = hitting_probabilities_to(z, R)
    dist = np.sqrt(norm2(sites - z).astype(float))
    sel = (dist > 0) & (dist >= exclude_radius)
    scaled = p[sel] * (1 + dist[sel] ** (d - 2))
    return {"a1": float(scaled.min()), "a2": float(scaled.max())}
