import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twoscale_eikonal.sweep import (
    INF,
    Field,
    default_sweep_tol,
    fsm_solve,
    godunov_solve,
    local_update,
)


def test_godunov_symmetric_quadratic():
    assert godunov_solve(0.0, 0.0, 1.0, 1.0) == pytest.approx(
        math.sqrt(2.0) / 2.0, rel=1e-12)


def test_godunov_one_sided():
    assert godunov_solve(0.0, 5.0, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_godunov_hand_derived_quadratic():
    expected = 0.5 * (0.7 + math.sqrt(2 * (2 * 0.1) ** 2 - 0.01))
    assert godunov_solve(0.3, 0.4, 2.0, 0.1) == pytest.approx(expected,
                                                              rel=1e-12)


def test_godunov_unreached_inputs():
    assert godunov_solve(INF, INF, 1.0, 0.1) == INF
    assert godunov_solve(INF, 0.5, 1.0, 0.1) == pytest.approx(0.6)
    assert godunov_solve(0.5, INF, 2.0, 0.1) == pytest.approx(0.7)


@given(a=st.floats(0, 10), b=st.floats(0, 10),
       r=st.floats(0.01, 100), s=st.floats(1e-4, 1))
def test_godunov_exceeds_upwind_value(a, b, r, s):
    out = godunov_solve(a, b, r, s)
    assert out > min(a, b)
    assert out == godunov_solve(b, a, r, s)


@given(a=st.floats(0, 10), a2=st.floats(0, 10), b=st.floats(0, 10),
       r=st.floats(0.01, 100), s=st.floats(1e-4, 1))
def test_godunov_monotone_in_inputs(a, a2, b, r, s):
    lo, hi = min(a, a2), max(a, a2)
    assert godunov_solve(lo, b, r, s) <= godunov_solve(hi, b, r, s)


def test_local_update_single_neighbor():
    value, wind = local_update((0.0, INF, INF, INF), INF, 1.0, 0.1)
    assert value == pytest.approx(0.1, rel=1e-12)
    assert wind == (1, 0)


def test_local_update_diagonal():
    value, wind = local_update((0.0, INF, 0.0, INF), INF, 1.0, 1.0)
    assert value == pytest.approx(math.sqrt(2) / 2, rel=1e-12)
    assert wind == (1, 1)


def test_local_update_keeps_smaller_current():
    value, wind = local_update((0.0, INF, INF, INF), 0.05, 1.0, 0.1,
                               wind=(0, -1))
    assert value == 0.05
    assert wind == (0, -1)


def _point_source_field(n, h):
    f = Field.fresh((n, n))
    xs = np.arange(n) * h
    dist = np.sqrt(xs[:, None] ** 2 + xs[None, :] ** 2)
    mask = dist <= h + 1e-12
    f.fix(mask, dist)
    return f, dist


def test_fsm_1d_linear_ramp_one_round():
    n = 51
    h = 1.0 / (n - 1)
    f = Field.fresh((n,))
    mask = np.zeros(n, dtype=bool)
    mask[0] = True
    f.fix(mask, 0.0)
    rounds = fsm_solve(f, np.ones(n), h)
    xs = np.arange(n) * h
    assert np.allclose(f.values, xs, atol=1e-13)
    assert rounds <= 2
    assert np.all(f.wx[1:] == 1)


def test_fsm_2d_point_source_first_order():
    errs = {}
    for n in (51, 101):
        h = 1.0 / (n - 1)
        f, dist = _point_source_field(n, h)
        fsm_solve(f, np.ones((n, n)), h)
        errs[n] = np.abs(f.values - dist).mean()
    # max error also shrinks with h
    assert errs[101] < errs[51]
    assert 1.5 <= errs[51] / errs[101] <= 2.7


def test_fsm_2d_full_boundary_exact_data_single_round():
    n = 41
    h = 1.0 / (n - 1)
    f = Field.fresh((n, n))
    xs = np.arange(n) * h
    dist = np.sqrt(xs[:, None] ** 2 + xs[None, :] ** 2)
    mask = np.zeros((n, n), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    f.fix(mask, dist)
    rounds = fsm_solve(f, np.ones((n, n)), h)
    assert rounds <= 2
    assert np.abs(f.values - dist).max() < 1.5 * h


def test_fsm_monotone_nonincreasing_between_rounds():
    n = 41
    h = 1.0 / (n - 1)
    f, _ = _point_source_field(n, h)
    r = np.ones((n, n))
    fsm_solve(f, r, h, max_rounds=1)
    snap = f.values.copy()
    fsm_solve(f, r, h, max_rounds=1)
    assert np.all(f.values <= snap + 1e-15)


def test_fsm_fixed_point_after_convergence():
    n = 41
    h = 1.0 / (n - 1)
    rng = np.random.default_rng(7)
    r = 0.5 + rng.random((n, n))
    f, _ = _point_source_field(n, h)
    fsm_solve(f, r, h)
    snap = f.values.copy()
    fsm_solve(f, r, h, max_rounds=1)
    assert np.abs(f.values - snap).max() <= default_sweep_tol(2, r)


def test_fsm_causality_at_convergence():
    n = 31
    h = 1.0 / (n - 1)
    rng = np.random.default_rng(3)
    r = 0.5 + rng.random((n, n))
    f, _ = _point_source_field(n, h)
    fsm_solve(f, r, h)
    u, wx, wy = f.values, f.wx, f.wy
    for i in range(n):
        for j in range(n):
            if f.fixed[i, j] or u[i, j] >= INF:
                continue
            if wx[i, j] == 1:
                assert u[i, j] > u[i - 1, j]
            elif wx[i, j] == -1:
                assert u[i, j] > u[i + 1, j]
            if wy[i, j] == 1:
                assert u[i, j] > u[i, j - 1]
            elif wy[i, j] == -1:
                assert u[i, j] > u[i, j + 1]


def test_fsm_fixed_nodes_never_move():
    n = 21
    h = 1.0 / (n - 1)
    f, dist = _point_source_field(n, h)
    pinned = f.values[f.fixed].copy()
    fsm_solve(f, np.ones((n, n)), h)
    assert np.array_equal(f.values[f.fixed], pinned)


def test_fsm_shape_mismatch():
    f = Field.fresh((5, 5))
    with pytest.raises(ValueError):
        fsm_solve(f, np.ones((4, 5)), 0.1)
