"""Godunov upwind local solver and Gauss-Seidel fast sweeping.

This is the serial Eikonal core shared by everything else in the package:
the whole-domain reference solves, the (shifted) coarse-grid solves and the
per-subdomain fine solves all run the same kernels on their own arrays.

Grids are rectangular with uniform spacing.  Solution values live in
``float64`` arrays; characteristic ("wind") directions are tracked per node
as ``int8`` components in {-1, 0, +1}.  The convention is normalized to the
flow direction: a +1 component along an axis means the characteristic flows
in the positive axis direction, i.e. the upwind neighbor sits on the
negative side.  The all-zero vector marks a node whose value has never been
set by a successful update.

Nodes that have not been reached hold the sentinel ``INF`` (half of the
largest finite float64).  It survives comparisons without overflowing and
the local solver short-circuits on it instead of doing arithmetic with it.

The sweeping iteration performs Gauss-Seidel passes over the 2^d
axis-sign orderings (i and j each ascending/descending) and repeats the
round until the largest value change in a full round drops below ``tol``.
Values never increase (min-update), so a converged field is a fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = ["INF", "Field", "godunov_solve", "local_update", "fsm_solve",
           "default_sweep_tol"]

#: Sentinel for "not yet reached".  Large enough to dominate any travel time
#: on the unit domain, small enough that ``INF + r * s`` stays finite.
INF = 0.5 * np.finfo(np.float64).max


@nb.njit(cache=True, nogil=True)
def godunov_solve(a, b, r, s):
    """Closed-form solution of the upwind discretization at one node.

    ``a`` and ``b`` are the upwind values along the two axes (each already
    the minimum of its neighbor pair; ``INF`` when the axis has no data),
    ``r`` the slowness at the node, ``s`` the grid spacing.  When the two
    values are closer than ``r*s`` the quadratic two-sided form applies;
    otherwise the update degenerates to the one-dimensional advance from
    the smaller side.  Returns ``INF`` when both inputs are unreached.
    """
    a_unset = a >= INF
    b_unset = b >= INF
    if a_unset and b_unset:
        return INF
    if a_unset:
        return b + r * s
    if b_unset:
        return a + r * s
    d = a - b if a > b else b - a
    rs = r * s
    if d >= rs:
        return (a if a < b else b) + rs
    return 0.5 * (a + b + math.sqrt(2.0 * rs * rs - d * d))


@nb.njit(cache=True, nogil=True)
def _local_update_2d(left, right, down, up, current, cwx, cwy, r, s):
    # Pick the upwind side per axis; +1 wind = flow towards +axis, upwind
    # neighbor on the -axis side.  Ties resolve to the -1 side.
    if left < right:
        a = left
        wx = 1
    else:
        a = right
        wx = -1
    if down < up:
        b = down
        wy = 1
    else:
        b = up
        wy = -1
    cand = godunov_solve(a, b, r, s)
    # Wind classification: a candidate below the y-side value cannot have
    # used it (axis-x flow), and symmetrically; otherwise it is diagonal.
    if cand < b:
        twx, twy = wx, 0
    elif cand < a:
        twx, twy = 0, wy
    else:
        twx, twy = wx, wy
    if cand < current:
        return cand, twx, twy
    return current, cwx, cwy


@nb.njit(cache=True, nogil=True)
def _fsm_2d(u, wx, wy, fixed, r, s, max_rounds, tol):
    nx, ny = u.shape
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        maxchg = 0.0
        for order in range(4):
            s1 = -1 if order < 2 else 1
            s2 = -1 if order % 2 == 0 else 1
            ibeg = nx - 1 if s1 < 0 else 0
            iend = -1 if s1 < 0 else nx
            jbeg = ny - 1 if s2 < 0 else 0
            jend = -1 if s2 < 0 else ny
            for i in range(ibeg, iend, s1):
                for j in range(jbeg, jend, s2):
                    if fixed[i, j]:
                        continue
                    left = u[i - 1, j] if i > 0 else INF
                    right = u[i + 1, j] if i < nx - 1 else INF
                    down = u[i, j - 1] if j > 0 else INF
                    up = u[i, j + 1] if j < ny - 1 else INF
                    old = u[i, j]
                    v, nwx, nwy = _local_update_2d(
                        left, right, down, up, old, wx[i, j], wy[i, j],
                        r[i, j], s)
                    if v < old:
                        chg = old - v
                        if chg > maxchg:
                            maxchg = chg
                        u[i, j] = v
                        wx[i, j] = nwx
                        wy[i, j] = nwy
        if maxchg < tol:
            break
    return rounds


@nb.njit(cache=True, nogil=True)
def _fsm_1d(u, w, fixed, r, s, max_rounds, tol):
    n = u.shape[0]
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        maxchg = 0.0
        for order in range(2):
            s1 = -1 if order == 0 else 1
            ibeg = n - 1 if s1 < 0 else 0
            iend = -1 if s1 < 0 else n
            for i in range(ibeg, iend, s1):
                if fixed[i]:
                    continue
                left = u[i - 1] if i > 0 else INF
                right = u[i + 1] if i < n - 1 else INF
                if left < right:
                    a, nwd = left, 1
                else:
                    a, nwd = right, -1
                if a >= INF:
                    continue
                cand = a + r[i] * s
                old = u[i]
                if cand < old:
                    chg = old - cand
                    if chg > maxchg:
                        maxchg = chg
                    u[i] = cand
                    w[i] = nwd
        if maxchg < tol:
            break
    return rounds


def local_update(nbrs, current, r, s, wind=(0, 0)):
    """Min-update at one 2-D node from its four neighbor values.

    ``nbrs`` is ``(left, right, down, up)`` with ``INF`` standing in for a
    missing (one-sided) neighbor.  Returns ``(value, wind)`` where the wind
    belongs to whichever of the candidate and the current value survived.
    """
    left, right, down, up = (float(v) for v in nbrs)
    v, wx, wy = _local_update_2d(left, right, down, up, float(current),
                                 np.int8(wind[0]), np.int8(wind[1]),
                                 float(r), float(s))
    return float(v), (int(wx), int(wy))


@dataclass
class Field:
    """Solution values, winds and the fixed-node mask for one grid.

    Fixed nodes carry boundary data and are never touched by the sweeps;
    every other node starts at ``INF`` with an unset wind.
    """

    values: np.ndarray
    fixed: np.ndarray
    wx: np.ndarray
    wy: np.ndarray | None = None

    @classmethod
    def fresh(cls, shape) -> "Field":
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        values = np.full(shape, INF, dtype=np.float64)
        fixed = np.zeros(shape, dtype=np.bool_)
        wx = np.zeros(shape, dtype=np.int8)
        wy = np.zeros(shape, dtype=np.int8) if len(shape) == 2 else None
        return cls(values=values, fixed=fixed, wx=wx, wy=wy)

    @property
    def d(self) -> int:
        return self.values.ndim

    def fix(self, mask: np.ndarray, values: np.ndarray | float) -> None:
        """Pin boundary data: set values under ``mask`` and freeze them."""
        vals = np.asarray(values, dtype=np.float64)
        self.values[mask] = vals[mask] if vals.shape == mask.shape else vals
        self.fixed |= mask


def default_sweep_tol(d: int, r: np.ndarray | float) -> float:
    """Round-termination tolerance: 1e-12 times problem diameter times max r."""
    rmax = float(np.max(r))
    return 1e-12 * math.sqrt(d) * rmax


def fsm_solve(field: Field, slowness: np.ndarray, spacing: float,
              max_rounds: int = 50, tol: float | None = None) -> int:
    """Run fast-sweeping Gauss-Seidel rounds on ``field`` until converged.

    ``slowness`` is the slowness sampled at the field's own nodes (same
    shape as ``field.values``).  Mutates the field in place and returns the
    number of sweep rounds executed; hitting ``max_rounds`` without the
    change dropping below ``tol`` is reported through that count, not as an
    error.
    """
    r = np.ascontiguousarray(np.asarray(slowness, dtype=np.float64))
    if r.shape != field.values.shape:
        raise ValueError(
            f"slowness shape {r.shape} does not match field shape "
            f"{field.values.shape}")
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    if tol is None:
        tol = default_sweep_tol(field.d, r)
    if field.d == 1:
        return int(_fsm_1d(field.values, field.wx, field.fixed, r,
                           float(spacing), max_rounds, tol))
    return int(_fsm_2d(field.values, field.wx, field.wy, field.fixed, r,
                       float(spacing), max_rounds, tol))
