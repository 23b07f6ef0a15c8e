"""Two-level grid geometry: coarse, shifted-coarse and subdomain fine grids.

The unit domain is split into N^d subdomains of side H = 1/N, each carrying
a fine grid of spacing h = H/M.  Besides the plain coarse lattice there are
M-1 horizontally and M-1 vertically shifted copies of it (2-D only); their
union is exactly the set of fine-lattice nodes lying on subdomain boundary
lines.  Everything here is indexed by integers and coordinates are derived
on demand as (integer count) * h, so shifted-grid nodes and subdomain
boundaries match exactly without any floating-point coincidence tests.

Node addressing uses global fine-lattice indices (gi, gj): a node belongs
to the coarse family iff gi % M == 0 and gj % M == 0, to a horizontally
shifted grid iff only gj % M == 0, and to a vertically shifted grid iff
only gi % M == 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["GridSpec", "NodeId", "SubdomainBoundary", "coords",
           "global_index", "boundary_of"]

FAMILIES = ("coarse", "hshift", "vshift", "fine")


@dataclass(frozen=True)
class GridSpec:
    """Two-level geometry: N coarse cells per axis, M fine cells per coarse cell."""

    d: int
    N: int
    M: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")

    @property
    def H(self) -> float:
        return 1.0 / self.N

    @property
    def h(self) -> float:
        return 1.0 / (self.N * self.M)

    @property
    def fine_cells(self) -> int:
        """Fine cells per axis on the global grid (N*M)."""
        return self.N * self.M

    def fine_coords(self) -> np.ndarray:
        """Coordinates of the N*M+1 global fine-lattice nodes along one axis."""
        return np.arange(self.fine_cells + 1, dtype=np.float64) * self.h

    def skeleton_mask(self) -> np.ndarray:
        """Boolean (G+1, G+1) mask of coarse-family nodes (2-D only)."""
        if self.d != 2:
            raise ValueError("skeleton_mask is defined for d=2 only")
        g = self.fine_cells
        on = (np.arange(g + 1) % self.M) == 0
        return on[:, None] | on[None, :]


@dataclass(frozen=True)
class NodeId:
    """A node in one of the grid families.

    2-D families and index ranges:
      coarse(i, j)       0 <= i, j <= N          -> (iH, jH)
      hshift(i, j, l)    0 <= i <= N-1, 1 <= l <= M-1, 0 <= j <= N
                                                  -> (iH + lh, jH)
      vshift(i, j, m)    0 <= i <= N, 0 <= j <= N-1, 1 <= m <= M-1
                                                  -> (iH, jH + mh)
      fine(i, j, l, m)   0 <= i, j <= N-1, 0 <= l, m <= M
                                                  -> (iH + lh, jH + mh)

    In 1-D only ``coarse(i)`` and ``fine(i, l)`` exist; j and m must be 0.
    """

    family: str
    i: int
    j: int = 0
    l: int = 0
    m: int = 0


def _check_range(ok: bool, node: NodeId, what: str):
    if not ok:
        raise IndexError(f"{what} out of range for node {node}")


def global_index(spec: GridSpec, node: NodeId) -> tuple[int, ...]:
    """Map a NodeId to global fine-lattice indices, validating ranges."""
    if node.family not in FAMILIES:
        raise IndexError(f"unknown family {node.family!r}")
    N, M = spec.N, spec.M
    if spec.d == 1:
        _check_range(node.j == 0 and node.m == 0, node, "1-D index")
        if node.family == "coarse":
            _check_range(0 <= node.i <= N and node.l == 0, node, "index")
            return (node.i * M,)
        if node.family == "fine":
            _check_range(0 <= node.i <= N - 1 and 0 <= node.l <= M, node,
                         "index")
            return (node.i * M + node.l,)
        raise IndexError(f"family {node.family!r} does not exist in 1-D")
    if node.family == "coarse":
        _check_range(0 <= node.i <= N and 0 <= node.j <= N
                     and node.l == 0 and node.m == 0, node, "index")
        return (node.i * M, node.j * M)
    if node.family == "hshift":
        _check_range(0 <= node.i <= N - 1 and 1 <= node.l <= M - 1
                     and 0 <= node.j <= N and node.m == 0, node, "index")
        return (node.i * M + node.l, node.j * M)
    if node.family == "vshift":
        _check_range(0 <= node.i <= N and 0 <= node.j <= N - 1
                     and 1 <= node.m <= M - 1 and node.l == 0, node, "index")
        return (node.i * M, node.j * M + node.m)
    _check_range(0 <= node.i <= N - 1 and 0 <= node.j <= N - 1
                 and 0 <= node.l <= M and 0 <= node.m <= M, node, "index")
    return (node.i * M + node.l, node.j * M + node.m)


def coords(spec: GridSpec, node: NodeId) -> tuple[float, ...]:
    """Exact node coordinates, computed as (integer count) * h."""
    return tuple(float(g * spec.h) for g in global_index(spec, node))


def node_at_global(spec: GridSpec, gi: int, gj: int = 0) -> NodeId:
    """Inverse of global_index for coarse-family and fine nodes (2-D)."""
    M = spec.M
    if spec.d == 1:
        return (NodeId("coarse", gi // M) if gi % M == 0
                else NodeId("fine", gi // M, l=gi % M))
    li, mj = gi % M, gj % M
    if li == 0 and mj == 0:
        return NodeId("coarse", gi // M, gj // M)
    if mj == 0:
        return NodeId("hshift", gi // M, gj // M, l=li)
    if li == 0:
        return NodeId("vshift", gi // M, gj // M, m=mj)
    return NodeId("fine", gi // M, gj // M, l=li, m=mj)


@dataclass(frozen=True)
class SubdomainBoundary:
    """All coarse-family nodes on one subdomain boundary with inward normals.

    Each entry pairs a NodeId with the tuple of inward unit normals of the
    subdomain at that node: one normal for edge nodes, two for corners.
    """

    subdomain: tuple[int, ...]
    entries: tuple[tuple[NodeId, tuple[tuple[int, ...], ...]], ...] = field(
        default=())


def boundary_of(spec: GridSpec, i: int, j: int = 0) -> SubdomainBoundary:
    """Enumerate the boundary of subdomain (i, j) with inward normals.

    2-D entries come in a fixed documented order: the four corners
    (SW, SE, NW, NE) followed by the west, east, south and north edge
    nodes, each edge in ascending shift index.  In 1-D the two subinterval
    endpoints carry normals +1 and -1.
    """
    N, M = spec.N, spec.M
    if spec.d == 1:
        if not 0 <= i <= N - 1:
            raise IndexError(f"subinterval {i} out of range for N={N}")
        entries = (
            (NodeId("coarse", i), ((1,),)),
            (NodeId("coarse", i + 1), ((-1,),)),
        )
        return SubdomainBoundary(subdomain=(i,), entries=entries)
    if not (0 <= i <= N - 1 and 0 <= j <= N - 1):
        raise IndexError(f"subdomain ({i}, {j}) out of range for N={N}")
    east, north = (-1, 0), (0, -1)
    west, south = (1, 0), (0, 1)
    entries = [
        (NodeId("coarse", i, j), (west, south)),
        (NodeId("coarse", i + 1, j), (east, south)),
        (NodeId("coarse", i, j + 1), (west, north)),
        (NodeId("coarse", i + 1, j + 1), (east, north)),
    ]
    for m in range(1, M):
        entries.append((NodeId("vshift", i, j, m=m), (west,)))
    for m in range(1, M):
        entries.append((NodeId("vshift", i + 1, j, m=m), (east,)))
    for l in range(1, M):
        entries.append((NodeId("hshift", i, j, l=l), (south,)))
    for l in range(1, M):
        entries.append((NodeId("hshift", i, j + 1, l=l), (north,)))
    return SubdomainBoundary(subdomain=(i, j), entries=tuple(entries))
