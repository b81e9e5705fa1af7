"""Flashing explorers and their coupling with internal DLA.

A flashing explorer walks like an ordinary explorer but, outside the ball
B(0, n), it may settle only at designated *flashing sites*: on first hitting
a sphere Sigma_k it draws a radius R_k = h U^(1/d) and its flashing site is
the point where its own walk exits B(S(H(Sigma_k)), R_k). If that site is
free it settles there, otherwise it cannot settle before the next sphere.

Coupled runs (``flashing_grow``) drive one trajectory per explorer and read
off both the plain settling time T(i) and the flashing settling time T*(i).
Order T*(i) >= T(i) is enforced by construction:

* inside B(0, n) both rules aggregate, and by induction every site of
  A(i) inside the ball belongs to A*(i), so the flashing explorer cannot
  settle inside the ball before its plain twin;
* outside the ball a flash probe is accepted only once the plain twin has
  settled on the same trajectory. Probes rejected for that reason count as
  failed and are reported as ``gated`` probes.

An explorer leaving B(0, n) and coming back resumes plain aggregation, any
pending flash is dropped and the next flash happens on Sigma_0 again.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainTooLarge, PreconditionViolated, StepCapExceeded
from .lattice import (INWARD, OUTWARD, ShellPartition, as_sites, ball_sites,
                      isin_sites, partition_shells, radius_bound)
from .walk import RandomSource

NEVER = np.iinfo(np.int64).max

# trap-crossing outcomes, per walk
CROSSED = "crossed"
SETTLED_OR_ESCAPED = "settled_or_escaped"

# flash probe codes recorded by the trap kernel
Z_IN_V = 0
Z_TRAP = 1
Z_VOID = 2  # outside the annulus: neither a trap nor trap-free


def flash_radius(h: float, d: int, rng, size=None):
    """R = h U^(1/d): density d r^(d-1) / h^d on [0, h]."""
    u = rng.random(size)
    return h * u ** (1.0 / d)


@numba.njit(cache=True, inline="always")
def _on_sphere(pos, n2, m):
    """Is the site (squared norm n2) on dB(0, r), r given by m = radius_bound(r)?"""
    if n2 <= m:
        return False
    big = 0
    for j in range(pos.shape[0]):
        a = abs(pos[j])
        if a > big:
            big = a
    return n2 - 2 * big + 1 <= m


@numba.njit(nogil=True, cache=True)
def _coupled(occ, occ_star, W, N, d, ball_m, sphere_m, cap_m, h, rng,
             T, T_star, plain_site, flash_site, reach, diag, step_cap):
    """Run N explorers from the origin. Returns 0, or 1 if the box was too small,
    or 2 on step cap. diag = [probes, gated, inside_gated, stopped];
    reach[e] = largest squared norm visited up to T(e) and up to T*(e)."""
    side = 2 * W + 1
    strides = np.ones(d, np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * side
    n_spheres = sphere_m.shape[0]
    pos = np.zeros(d, np.int64)
    anchor = np.zeros(d, np.int64)
    origin_idx = 0
    for j in range(d):
        origin_idx += W * strides[j]
    for e in range(N):
        for j in range(d):
            pos[j] = 0
        idx = origin_idx
        n2 = 0
        t = 0
        plain_done = False
        flash_done = False
        target = 0          # next sphere to flash on
        flashing = False    # a flash ball is being resolved
        flash_r2 = 0.0
        outside = False     # has left B(0, n) since last inside visit
        mx = 0
        while True:
            if n2 > mx:
                mx = n2
            if n2 <= ball_m:
                if outside:
                    outside = False
                    flashing = False
                    target = 0
            else:
                outside = True
            if not plain_done and occ[idx] == 0:
                occ[idx] = 1
                plain_done = True
                T[e] = t
                reach[e, 0] = mx
                for j in range(d):
                    plain_site[e, j] = pos[j]
            if not flash_done:
                if n2 <= ball_m:
                    if occ_star[idx] == 0:
                        if not plain_done:
                            diag[2] += 1
                        else:
                            occ_star[idx] = 1
                            flash_done = True
                            T_star[e] = t
                            for j in range(d):
                                flash_site[e, j] = pos[j]
                else:
                    if flashing:
                        r2 = 0
                        for j in range(d):
                            r2 += (pos[j] - anchor[j]) * (pos[j] - anchor[j])
                        if r2 >= flash_r2:
                            flashing = False
                            diag[0] += 1
                            if occ_star[idx] == 0 and plain_done:
                                occ_star[idx] = 1
                                flash_done = True
                                T_star[e] = t
                                for j in range(d):
                                    flash_site[e, j] = pos[j]
                            else:
                                if occ_star[idx] == 0:
                                    diag[1] += 1
                                target += 1
                    if not flash_done and not flashing and target < n_spheres:
                        if _on_sphere(pos, n2, sphere_m[target]):
                            for j in range(d):
                                anchor[j] = pos[j]
                            u = rng.random()
                            rk = h * u ** (1.0 / d)
                            flash_r2 = rk * rk
                            flashing = True
                            if flash_r2 <= 0.0:
                                # degenerate radius: the anchor is the exit site
                                flashing = False
                                diag[0] += 1
                                if occ_star[idx] == 0 and plain_done:
                                    occ_star[idx] = 1
                                    flash_done = True
                                    T_star[e] = t
                                    for j in range(d):
                                        flash_site[e, j] = pos[j]
                                else:
                                    if occ_star[idx] == 0:
                                        diag[1] += 1
                                    target += 1
                    if not flash_done and n2 > cap_m:
                        flash_done = True
                        T_star[e] = -1
                        diag[3] += 1
                        for j in range(d):
                            flash_site[e, j] = pos[j]
                if flash_done:
                    reach[e, 1] = mx
            if plain_done and flash_done:
                break
            if t >= step_cap:
                return 2
            u = int(rng.random() * 2 * d)
            j = u >> 1
            if u & 1 == 0:
                n2 += 2 * pos[j] + 1
                pos[j] += 1
                idx += strides[j]
            else:
                n2 += -2 * pos[j] + 1
                pos[j] -= 1
                idx -= strides[j]
            t += 1
            if pos[j] >= W or pos[j] <= -W:
                return 1
    return 0


@dataclass
class CoupledRun:
    """Plain and flashing settling data on shared trajectories.

    ``T_star`` is ``NEVER`` for explorers stopped at the outer cap, which
    never settle in the flashing process.
    """

    d: int
    n: float
    height: float
    T: np.ndarray
    T_star: np.ndarray
    plain_sites: np.ndarray
    flash_sites: np.ndarray
    reach: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def stopped(self) -> np.ndarray:
        return self.T_star == NEVER

    @property
    def A(self) -> np.ndarray:
        return self.plain_sites

    @property
    def A_star(self) -> np.ndarray:
        return self.flash_sites[~self.stopped]

    def order_violations(self) -> int:
        return int(np.sum(self.T_star < self.T))

    def left_ball_counts(self) -> tuple[int, int]:
        """Explorers that visited the outside of B(0, n) before settling:
        (plain, flashing). Stopped flashing explorers count as having left."""
        m = radius_bound(self.n)
        return int(np.sum(self.reach[:, 0] > m)), int(np.sum(self.reach[:, 1] > m))

    def coinciding_prefix_ok(self) -> bool:
        """While A(i-1) = A*(i-1), an explorer whose plain twin settles inside
        B(0, n) settles at the same time in both processes."""
        m = radius_bound(self.n)
        diff: set = set()  # symmetric difference of the two clusters
        for i in range(len(self.T)):
            if diff:
                return True
            p = self.plain_sites[i]
            if int(p @ p) <= m and self.T[i] != self.T_star[i]:
                return False
            diff ^= {tuple(p.tolist())}
            if self.T_star[i] != NEVER:
                diff ^= {tuple(self.flash_sites[i].tolist())}
        return True

    def outside_counts(self) -> tuple[int, int]:
        """(|A(N) outside B(0,n)|, |A*(N) outside B(0,n)|)."""
        m = radius_bound(self.n)
        a = int(np.sum(np.einsum("ij,ij->i", self.A, self.A) > m))
        s = self.A_star
        b = int(np.sum(np.einsum("ij,ij->i", s, s) > m))
        return a, b


def flashing_grow(n: float, h: float, d: int, source: RandomSource,
                  cap_shells: float = 3.0, step_cap: int = 10**9) -> CoupledRun:
    """Coupled internal DLA / flashing run with N = |B(0, n)| explorers.

    Flash spheres are Sigma_k = dB(0, n + (2k+1)h) of the outward partition;
    the flashing domain is capped at B(0, n + 2 cap_shells h).
    """
    part = partition_shells(OUTWARD, d, n, h)
    cap_r = n + 2 * cap_shells * part.height
    spheres = [k for k in range(int(cap_shells) + 1) if part.sphere_radius(k) < cap_r]
    sphere_m = np.array([radius_bound(part.sphere_radius(k)) for k in spheres], dtype=np.int64)
    N = len(ball_sites(np.zeros(d, dtype=np.int64), n))
    W = int(math.ceil(cap_r)) + int(math.ceil(n)) + 12
    while True:
        size = (2 * W + 1) ** d
        if size > 2 * 10**8:
            raise DomainTooLarge("coupled flashing box too large")
        occ = np.zeros(size, dtype=np.uint8)
        occ_star = np.zeros(size, dtype=np.uint8)
        T = np.zeros(N, dtype=np.int64)
        T_star = np.zeros(N, dtype=np.int64)
        ps = np.zeros((N, d), dtype=np.int64)
        fs = np.zeros((N, d), dtype=np.int64)
        reach = np.zeros((N, 2), dtype=np.int64)
        diag = np.zeros(4, dtype=np.int64)
        state = source.rng.bit_generator.state
        code = _coupled(occ, occ_star, W, N, d, radius_bound(n), sphere_m,
                        radius_bound(cap_r), float(part.height), source.rng,
                        T, T_star, ps, fs, reach, diag, step_cap)
        if code == 1:
            # replay the same stream in a larger box
            source.rng.bit_generator.state = state
            W = 2 * W
            continue
        if code == 2:
            raise StepCapExceeded(f"coupled walk exceeded {step_cap} steps")
        break
    T_star[T_star < 0] = NEVER
    diagnostics = {"probes": int(diag[0]), "gated": int(diag[1]),
                   "inside_gated": int(diag[2]), "stopped": int(diag[3]),
                   "cap_radius": cap_r, **source.metadata()}
    return CoupledRun(d, n, part.height, T, T_star, ps, fs, reach, diagnostics)


@numba.njit(nogil=True, cache=True)
def _trap_walk(label, W, start, inner_m, cap_m, sphere_m, h, rng, zs, zcode, step_cap):
    """One trajectory; label: 1 = trap (annulus minus V), 2 = annulus site in V.

    Returns (plain_crossed, flash_crossed, n_flashes, steps)."""
    d = start.shape[0]
    side = 2 * W + 1
    strides = np.ones(d, np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * side
    pos = start.copy()
    anchor = np.zeros(d, np.int64)
    idx = 0
    n2 = 0
    for j in range(d):
        idx += (pos[j] + W) * strides[j]
        n2 += pos[j] * pos[j]
    K = sphere_m.shape[0]
    plain = -1      # -1 undecided, 0 failed, 1 crossed
    flash = -1
    target = 0
    flashing = False
    fr2 = 0.0
    nz = 0
    t = 0
    while True:
        lab = label[idx]
        if plain < 0 and lab == 1:
            plain = 0
        if n2 <= inner_m:
            if plain < 0:
                plain = 1
            if flash < 0:
                flash = 1
        if flash < 0:
            if flashing:
                r2 = 0
                for j in range(d):
                    r2 += (pos[j] - anchor[j]) * (pos[j] - anchor[j])
                if r2 >= fr2:
                    flashing = False
                    for j in range(d):
                        zs[nz, j] = pos[j]
                    if lab == 1:
                        zcode[nz] = 1
                        flash = 0
                    elif lab == 2:
                        zcode[nz] = 0
                    else:
                        zcode[nz] = 2
                    nz += 1
            if flash < 0 and not flashing and target < K:
                if _on_sphere(pos, n2, sphere_m[target]):
                    target += 1
                    for j in range(d):
                        anchor[j] = pos[j]
                    u = rng.random()
                    rk = h * u ** (1.0 / d)
                    fr2 = rk * rk
                    flashing = True
                    if fr2 <= 0.0:
                        flashing = False
                        for j in range(d):
                            zs[nz, j] = pos[j]
                        zcode[nz] = 2
                        if lab == 1:
                            zcode[nz] = 1
                            flash = 0
                        elif lab == 2:
                            zcode[nz] = 0
                        nz += 1
        if n2 > cap_m:
            if plain < 0:
                plain = 0
            if flash < 0:
                flash = 0
        if plain >= 0 and flash >= 0:
            break
        if t >= step_cap:
            return -1, -1, nz, t
        u = int(rng.random() * 2 * d)
        j = u >> 1
        if u & 1 == 0:
            n2 += 2 * pos[j] + 1
            pos[j] += 1
            idx += strides[j]
        else:
            n2 += -2 * pos[j] + 1
            pos[j] -= 1
            idx -= strides[j]
        t += 1
    return plain, flash, nz, t


@dataclass(frozen=True)
class TrapOutcome:
    """One trap-crossing probe: both readings of the same trajectory."""

    flashing: str
    plain: str
    flash_sites: np.ndarray
    flash_codes: np.ndarray
    steps: int

    @property
    def crossed(self) -> bool:
        return self.flashing == CROSSED

    @property
    def plain_crossed(self) -> bool:
        return self.plain == CROSSED


class TrapField:
    """The annulus S = B(0,2R) minus B(0,R), a trap-free set V inside it, and
    the inward shell partition used by the flashing explorer."""

    def __init__(self, R: float, d: int, V, height: float = 2.0,
                 cap_factor: float = 4.0):
        if R <= 0:
            raise PreconditionViolated("R must be positive")
        self.R = R
        self.d = d
        self.partition: ShellPartition = partition_shells(INWARD, d, R, height)
        self.cap_radius = cap_factor * R
        origin = np.zeros(d, dtype=np.int64)
        outer = ball_sites(origin, 2 * R)
        self.annulus = outer[np.einsum("ij,ij->i", outer, outer) > radius_bound(R)]
        V = as_sites(V, d)
        if len(V) and not np.all(isin_sites(V, self.annulus)):
            raise PreconditionViolated("V must lie in B(0,2R) minus B(0,R)")
        self.V = V
        self.W = int(math.ceil(self.cap_radius)) + 2
        side = 2 * self.W + 1
        self.label = np.zeros(side ** d, dtype=np.int8)
        strides = side ** np.arange(d - 1, -1, -1, dtype=np.int64)
        self.label[(self.annulus + self.W) @ strides] = 1
        if len(V):
            self.label[(V + self.W) @ strides] = 2
        self.sphere_m = np.array([radius_bound(self.partition.sphere_radius(k))
                                  for k in self.partition.indices()], dtype=np.int64)

    @classmethod
    def random(cls, R: float, d: int, density: float, rng, **kw) -> "TrapField":
        """V keeps each annulus site independently with probability ``density``."""
        if not 0.0 <= density <= 1.0:
            raise PreconditionViolated("density must lie in [0, 1]")
        shell = cls(R, d, np.zeros((0, d), dtype=np.int64), **kw)
        keep = rng.random(len(shell.annulus)) < density
        shell.V = shell.annulus[keep]
        side = 2 * shell.W + 1
        strides = side ** np.arange(d - 1, -1, -1, dtype=np.int64)
        shell.label[(shell.V + shell.W) @ strides] = 2
        return shell


def trap_crossing(z, R: float, V, source: RandomSource, height: float = 2.0,
                  field_: TrapField | None = None, step_cap: int = 10**9) -> TrapOutcome:
    """Run one flashing explorer from z on dB(0, 2R) through the trap field.

    The explorer settles on the first flashing site in the annulus but not in
    V whose resolution precedes its hitting of B(0, R); it has *crossed* if it
    reaches B(0, R) first. The same trajectory also yields the plain event
    {H(B(0,R)) < H(annulus minus V)}. Walks leaving B(0, 4R) count as escaped.
    """
    z = np.asarray(z, dtype=np.int64)
    fld = field_ if field_ is not None else TrapField(R, len(z), V, height)
    m_out = radius_bound(2 * R)
    if not _on_sphere(z, int(z @ z), m_out):
        raise PreconditionViolated(f"start {tuple(z)} is not on dB(0, 2R)")
    zs = np.zeros((len(fld.sphere_m) + 1, len(z)), dtype=np.int64)
    zc = np.zeros(len(fld.sphere_m) + 1, dtype=np.int8)
    plain, flash, nz, t = _trap_walk(
        fld.label, fld.W, z, radius_bound(R), radius_bound(fld.cap_radius),
        fld.sphere_m, float(fld.partition.height), source.rng, zs, zc, step_cap)
    if plain < 0:
        raise StepCapExceeded(f"trap walk exceeded {step_cap} steps")
    return TrapOutcome(CROSSED if flash == 1 else SETTLED_OR_ESCAPED,
                       CROSSED if plain == 1 else SETTLED_OR_ESCAPED,
                       zs[:nz].copy(), zc[:nz].copy(), int(t))


def dense_neighborhoods(sphere, V, beta: float, h: float) -> np.ndarray:
    """Sites y of ``sphere`` with |B(y, h) intersected with V| >= beta h^d."""
    if not 0.0 < beta < 1.0:
        raise PreconditionViolated("beta must lie in (0, 1)")
    sphere = as_sites(sphere)
    d = sphere.shape[1]
    V = as_sites(V, d)
    if len(V) == 0 or len(sphere) == 0:
        return sphere[:0]
    counts = np.zeros(len(sphere), dtype=np.int64)
    for off in ball_sites(np.zeros(d, dtype=np.int64), h):
        counts += isin_sites(sphere + off, V)
    return sphere[counts >= beta * h ** d]
