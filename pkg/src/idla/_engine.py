"""Dense occupancy box and the explorer kernel shared by growth, waves and probes.

The box is the cube [-W, W]^d stored flat in C order. It grows on demand:
the kernel returns early when a walker leaves the box or an explorer
settles within ``EDGE_MARGIN`` of its faces, the driver enlarges every
registered array and resumes exactly where the kernel stopped.
"""
from __future__ import annotations

import numba
import numpy as np

from .errors import StepCapExceeded

SETTLED = 0
STOPPED = 1
PENDING = 2

_DONE = 0
_GROW = 1
_CAP = 2

EDGE_MARGIN = 2


class BoxGrid:
    """Flat arrays indexed by the sites of [-W, W]^d."""

    def __init__(self, d: int, W: int):
        self.d = d
        self.W = int(W)
        self.occ = np.zeros(self.size, dtype=np.uint8)
        self._extra: dict[str, tuple[np.ndarray, int]] = {}

    @property
    def side(self) -> int:
        return 2 * self.W + 1

    @property
    def size(self) -> int:
        return self.side ** self.d

    def strides(self) -> np.ndarray:
        return self.side ** np.arange(self.d - 1, -1, -1, dtype=np.int64)

    def add_array(self, name: str, dtype, fill) -> np.ndarray:
        arr = np.full(self.size, fill, dtype=dtype)
        self._extra[name] = (arr, fill)
        return arr

    def array(self, name: str) -> np.ndarray:
        return self._extra[name][0]

    def index(self, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        return (sites + self.W) @ self.strides()

    def fits(self, sites, margin: int = 0) -> bool:
        sites = np.asarray(sites, dtype=np.int64)
        return len(sites) == 0 or int(np.abs(sites).max()) <= self.W - margin

    def sites(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        out = np.empty((len(flat), self.d), dtype=np.int64)
        rem = flat.copy()
        for j in range(self.d - 1, -1, -1):
            out[:, j] = rem % self.side - self.W
            rem //= self.side
        return out

    def occupied_sites(self) -> np.ndarray:
        return self.sites(np.flatnonzero(self.occ))

    def grow_to(self, W_new: int) -> None:
        W_new = int(W_new)
        if W_new <= self.W:
            return
        off = W_new - self.W
        sl = tuple(slice(off, off + self.side) for _ in range(self.d))
        shape_new = (2 * W_new + 1,) * self.d
        shape_old = (self.side,) * self.d

        def regrow(arr, fill):
            new = np.full(shape_new, fill, dtype=arr.dtype)
            new[sl] = arr.reshape(shape_old)
            return new.ravel()

        self.occ = regrow(self.occ, 0)
        for name, (arr, fill) in list(self._extra.items()):
            self._extra[name] = (regrow(arr, fill), fill)
        self.W = W_new


@numba.njit(nogil=True, cache=True)
def _explore(occ, W, cur, tau, status, first, stop_m, aggregate,
             tlabel, counts, last_seen, rng, step_cap, margin):
    """Advance explorers ``first..K-1`` in order. Returns (resume_index, code)."""
    K, d = cur.shape
    side = 2 * W + 1
    strides = np.ones(d, np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * side
    pos = np.empty(d, np.int64)
    counting = tlabel.shape[0] > 0
    for e in range(first, K):
        if status[e] != 2:
            continue
        idx = 0
        n2 = 0
        for j in range(d):
            c = cur[e, j]
            if c < -W or c > W:
                return e, 1
            pos[j] = c
            idx += (c + W) * strides[j]
            n2 += c * c
        t = tau[e]
        while True:
            if counting:
                lab = tlabel[idx]
                if lab >= 0 and last_seen[lab] != e:
                    last_seen[lab] = e
                    counts[lab] += 1
            if stop_m >= 0 and n2 > stop_m:
                status[e] = 1
                break
            if aggregate and occ[idx] == 0:
                occ[idx] = 1
                status[e] = 0
                for j in range(d):
                    cur[e, j] = pos[j]
                tau[e] = t
                near = False
                for j in range(d):
                    if pos[j] > W - margin or pos[j] < -W + margin:
                        near = True
                if near:
                    return e + 1, 1
                break
            if t >= step_cap:
                for j in range(d):
                    cur[e, j] = pos[j]
                tau[e] = t
                return e, 2
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
            if pos[j] > W or pos[j] < -W:
                for i in range(d):
                    cur[e, i] = pos[i]
                tau[e] = t
                return e, 1
        for j in range(d):
            cur[e, j] = pos[j]
        tau[e] = t
    return K, 0


_NO_LABELS = np.zeros(0, dtype=np.int32)
_NO_COUNTS = np.zeros(0, dtype=np.int64)


def explore(grid: BoxGrid, cur: np.ndarray, tau: np.ndarray, status: np.ndarray,
            rng, *, stop_m: int = -1, aggregate: bool = True,
            label_name: str | None = None, counts: np.ndarray | None = None,
            last_seen: np.ndarray | None = None,
            step_cap: int = 10**9) -> None:
    """Run every PENDING explorer to completion, growing the box as needed.

    ``cur`` holds start positions on entry and final positions on exit;
    ``tau`` accumulates steps; ``status`` ends as SETTLED or STOPPED.
    """
    if stop_m < 0 and not aggregate:
        raise ValueError("free walks need a stopping radius")
    need = int(np.abs(cur).max()) + EDGE_MARGIN + 1 if len(cur) else 0
    if stop_m >= 0:
        need = max(need, int(np.sqrt(stop_m)) + 2)
    if need > grid.W:
        grid.grow_to(need)
    first = 0
    while True:
        tlabel = grid.array(label_name) if label_name else _NO_LABELS
        first, code = _explore(
            grid.occ, grid.W, cur, tau, status, first, stop_m, aggregate,
            tlabel, counts if counts is not None else _NO_COUNTS,
            last_seen if last_seen is not None else _NO_COUNTS,
            rng, step_cap, EDGE_MARGIN)
        if code == _DONE:
            return
        if code == _CAP:
            raise StepCapExceeded(f"explorer {first} exceeded {step_cap} steps")
        grid.grow_to(grid.W + max(8, grid.W // 2))


def initial_half_width(n_explorers: int, d: int, extent: float = 0.0) -> int:
    """Box half-width comfortably containing a cluster of the given volume."""
    from math import gamma, pi
    vol = pi ** (d / 2) / gamma(d / 2 + 1)
    r = (max(n_explorers, 1) / vol) ** (1.0 / d)
    return int(max(1.25 * r + 4, extent + 4))
