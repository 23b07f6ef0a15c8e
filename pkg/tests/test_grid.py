from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from twoscale_eikonal.grid import (
    GridSpec,
    NodeId,
    boundary_of,
    coords,
    global_index,
    node_at_global,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(d=3, N=4, M=4)
    with pytest.raises(ValueError):
        GridSpec(d=2, N=1, M=4)
    with pytest.raises(ValueError):
        GridSpec(d=2, N=4, M=1)


def test_spacing_relation():
    spec = GridSpec(d=2, N=7, M=13)
    assert spec.H == pytest.approx(spec.M * spec.h, rel=1e-15)
    assert spec.fine_cells == 91


def test_coords_origin():
    spec = GridSpec(d=2, N=4, M=5)
    assert coords(spec, NodeId("coarse", 0, 0)) == (0.0, 0.0)


def test_coords_vshift():
    # map: vshift(i, j, m) -> (iH, jH + mh); here (1/4, 2/4 + 3/20)
    spec = GridSpec(d=2, N=4, M=5)
    x, y = coords(spec, NodeId("vshift", 1, 2, m=3))
    assert x == pytest.approx(0.25, abs=1e-15)
    assert y == pytest.approx(0.65, abs=1e-15)


def test_coords_fine_far_corner():
    spec = GridSpec(d=2, N=4, M=5)
    assert coords(spec, NodeId("fine", 3, 3, l=5, m=5)) == (1.0, 1.0)


def test_out_of_range_indices():
    spec = GridSpec(d=2, N=4, M=5)
    with pytest.raises(IndexError):
        coords(spec, NodeId("coarse", 5, 0))
    with pytest.raises(IndexError):
        coords(spec, NodeId("hshift", 0, 0, l=5))
    with pytest.raises(IndexError):
        coords(spec, NodeId("vshift", 0, 4, m=1))
    with pytest.raises(IndexError):
        coords(spec, NodeId("nope", 0, 0))


def test_boundary_of_counts_and_corner_normals():
    spec = GridSpec(d=2, N=2, M=3)
    b = boundary_of(spec, 0, 0)
    assert len(b.entries) == 4 * spec.M
    by_node = dict(b.entries)
    assert set(by_node[NodeId("coarse", 0, 0)]) == {(1, 0), (0, 1)}
    assert set(by_node[NodeId("coarse", 1, 1)]) == {(-1, 0), (0, -1)}


def test_boundary_of_edge_normal():
    spec = GridSpec(d=2, N=2, M=3)
    b = boundary_of(spec, 1, 1)
    by_node = dict(b.entries)
    assert by_node[NodeId("vshift", 1, 1, m=1)] == ((1, 0),)


def test_boundary_of_1d():
    spec = GridSpec(d=1, N=2, M=3)
    b = boundary_of(spec, 0)
    assert b.entries == (
        (NodeId("coarse", 0), ((1,),)),
        (NodeId("coarse", 1), ((-1,),)),
    )


def test_boundary_of_range():
    spec = GridSpec(d=2, N=2, M=3)
    with pytest.raises(IndexError):
        boundary_of(spec, 2, 0)


def test_partition_property():
    # union of subdomain fine nodes covers the global lattice with
    # multiplicity 1 inside, 2 on shared edges, 4 at shared corners
    spec = GridSpec(d=2, N=3, M=4)
    counts = Counter()
    for i in range(spec.N):
        for j in range(spec.N):
            for l in range(spec.M + 1):
                for m in range(spec.M + 1):
                    counts[global_index(spec, NodeId("fine", i, j, l=l,
                                                     m=m))] += 1
    g = spec.fine_cells
    assert set(counts) == {(a, b) for a in range(g + 1)
                           for b in range(g + 1)}
    for (gi, gj), c in counts.items():
        on_v = gi % spec.M == 0 and 0 < gi < g
        on_h = gj % spec.M == 0 and 0 < gj < g
        assert c == (4 if on_v and on_h else 2 if on_v or on_h else 1)


def test_boundary_nodes_shared_between_adjacent_subdomains():
    spec = GridSpec(d=2, N=3, M=3)
    membership = Counter()
    for i in range(spec.N):
        for j in range(spec.N):
            for node, _normals in boundary_of(spec, i, j).entries:
                membership[global_index(spec, node)] += 1
    g = spec.fine_cells
    for (gi, gj), c in membership.items():
        interior_v = gi % spec.M == 0 and 0 < gi < g
        interior_h = gj % spec.M == 0 and 0 < gj < g
        if interior_v and interior_h:
            assert c == 4
        elif interior_v or interior_h:
            assert c == 2


@given(data=st.data())
def test_global_index_round_trip(data):
    spec = GridSpec(d=2, N=4, M=5)
    g = spec.fine_cells
    gi = data.draw(st.integers(0, g))
    gj = data.draw(st.integers(0, g))
    node = node_at_global(spec, gi, gj)
    # fine nodes in the last row/column belong to the previous subdomain
    if node.family == "fine" and (node.i > spec.N - 1 or node.j > spec.N - 1):
        return
    assert global_index(spec, node) == (gi, gj)
    x, y = coords(spec, node)
    assert x == pytest.approx(gi * spec.h, abs=1e-15)
    assert y == pytest.approx(gj * spec.h, abs=1e-15)
