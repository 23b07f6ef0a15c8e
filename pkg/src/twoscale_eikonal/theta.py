"""Correction-weight machinery and the analysis strip problem.

The two-scale coarse update weights its correction term by a per-node
theta.  This module provides the history-based estimator for theta (ratio
of the latest fine-solution increment to a weighted average of recent
coarse-solver increments), the sigmoid damping that tames large estimates,
and a thin strip problem with known fine solution on which the admissible
theta window (m_tilde, M_bar) can be computed exactly and the update's
exactness and monotonicity properties verified.

Strip problem
-------------
Solve |grad u| = 1 on [0,1] x [0,H] with u = sqrt(x^2 + y^2) given on the
bottom and left edges.  The coarse nodes form the set {(iH, jh)}; the
coarse solver advances the full step H from the left for rows below the
top and applies the two-sided Godunov form on the top row (left neighbor
at distance H and the bottom boundary row).  All characteristics point up
and to the right, so a single ascending sweep captures them and the
weighted correction applies at every coarse node with no wind gating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .sweep import Field, fsm_solve, godunov_solve

__all__ = ["ThetaParams", "estimate_theta", "damp_theta", "ModelProblem",
           "ModelIterRecord", "ModelRunResult", "model_run", "oracle_bounds"]


@dataclass(frozen=True)
class ThetaParams:
    """Estimator and damping parameters for the correction weight.

    x0, gamma, delta shape the sigmoid damping; omega weights the three
    most recent coarse-solver increments in the estimator denominator;
    bootstrap is the fixed weight used while history is too short or the
    denominator is guarded; denom_guard (absolute) rejects denominators
    smaller than it, defaulting to 1e-14 times the solution scale.
    """

    x0: float = 0.9
    gamma: float = 0.75
    delta: float = 0.01
    omega: tuple[float, float, float] = (4.0, 2.0, 1.0)
    bootstrap: float = 0.01
    denom_guard: float | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must be in (0, 1]")
        if len(self.omega) != 3 or any(w < 0 for w in self.omega):
            raise ValueError("omega must be three nonnegative weights")
        if sum(self.omega) <= 0:
            raise ValueError("omega must not be all zero")
        if self.bootstrap < 0:
            raise ValueError("bootstrap must be nonnegative")

    def resolve_guard(self, scale: float) -> float:
        if self.denom_guard is not None:
            return float(self.denom_guard)
        return 1e-14 * max(float(scale), 1.0)


@nb.njit(cache=True, nogil=True)
def _theta_estimate(num, d0, d1, d2, nterms, w0, w1, w2, guard, bootstrap):
    """Scalar estimator: num / (omega-weighted mean of available diffs).

    nterms in {0,1,2,3} says how many of d0..d2 exist; the weight sum is
    renormalized to the available terms.  Falls back to bootstrap when
    history is missing, any input is not finite, or the denominator is
    within guard of zero.
    """
    if nterms <= 0 or not np.isfinite(num):
        return bootstrap
    acc = w0 * d0
    wsum = w0
    if nterms >= 2:
        acc += w1 * d1
        wsum += w1
    if nterms >= 3:
        acc += w2 * d2
        wsum += w2
    if wsum <= 0.0 or not np.isfinite(acc):
        return bootstrap
    denom = acc / wsum
    if abs(denom) < guard:
        return bootstrap
    return num / denom


@nb.njit(cache=True, nogil=True)
def _theta_damp(tb, x0, gamma, delta):
    """Sigmoid-damped, positive-part weight from a raw estimate."""
    arg = (tb - x0) / gamma
    if arg > 700.0:
        sig = 0.0
    elif arg < -700.0:
        sig = 1.0
    else:
        sig = 1.0 / (1.0 + math.exp(arg))
    v = sig * tb + (1.0 - sig) * delta * tb
    return v if v > 0.0 else 0.0


def estimate_theta(u_prev, u_prev2, ch_current, ch_history,
                   params: ThetaParams, scale: float | None = None):
    """Per-node raw weight estimate from solution and coarse-solver history.

    u_prev and u_prev2 are the two most recent fine solutions at the nodes;
    ch_current is the coarse-solver evaluation at the current iteration and
    ch_history the up-to-three most recent previous evaluations (newest
    first).  The denominator averages the available consecutive differences
    with weights omega, renormalized when history is shorter than three
    differences.  Nodes with missing history, nonfinite inputs or a guarded
    denominator get params.bootstrap.
    """
    cur = np.asarray(ch_current, dtype=np.float64)
    if u_prev is None or u_prev2 is None:
        return np.full(cur.shape, params.bootstrap, dtype=np.float64)
    num = np.asarray(u_prev, dtype=np.float64) - np.asarray(u_prev2,
                                                            dtype=np.float64)
    hist = [np.asarray(c, dtype=np.float64) for c in ch_history]
    nterms = min(3, len(hist))
    if nterms == 0:
        return np.full(cur.shape, params.bootstrap, dtype=np.float64)
    zeros = np.zeros(cur.shape, dtype=np.float64)
    d0 = cur - hist[0]
    d1 = hist[0] - hist[1] if nterms >= 2 else zeros
    d2 = hist[1] - hist[2] if nterms >= 3 else zeros
    if scale is None:
        finite = num[np.isfinite(num)]
        scale = float(np.max(np.abs(finite))) if finite.size else 1.0
    guard = params.resolve_guard(scale)
    w0, w1, w2 = (float(w) for w in params.omega)
    out = np.empty(cur.shape, dtype=np.float64)
    it = np.nditer([num, d0, d1, d2], flags=["multi_index"])
    for vnum, vd0, vd1, vd2 in it:
        out[it.multi_index] = _theta_estimate(
            float(vnum), float(vd0), float(vd1), float(vd2), nterms,
            w0, w1, w2, guard, params.bootstrap)
    return out


def damp_theta(theta_bar, params: ThetaParams):
    """Sigmoid-damped nonnegative weight; accepts scalars or arrays.

    Delegates elementwise to the same kernel the solvers use, so the
    public surface and the in-sweep weights agree bit for bit.
    """
    tb = np.asarray(theta_bar, dtype=np.float64)
    out = np.empty(tb.shape, dtype=np.float64)
    flat_in = tb.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        flat_out[i] = _theta_damp(flat_in[i], params.x0, params.gamma,
                                  params.delta)
    return float(out) if np.isscalar(theta_bar) else out


@nb.njit(cache=True, nogil=True)
def _model_ch(a, b, topmost, H):
    # Coarse solver on the strip: 1-D advance from the left except on the
    # top row, where the two-sided Godunov form couples the left neighbor
    # and the bottom boundary value.
    if topmost:
        return godunov_solve(a, b, 1.0, H)
    return a + H


@dataclass
class ModelProblem:
    """Strip geometry with its fine solution and the exact solution."""

    N: int
    M: int
    u_fine: np.ndarray       # (N*M+1, M+1) fine solution on the strip
    u_exact: np.ndarray      # sqrt(x^2 + y^2) at the same nodes
    uf_coarse: np.ndarray    # fine solution restricted to the coarse set

    @property
    def H(self) -> float:
        return 1.0 / self.N

    @property
    def h(self) -> float:
        return 1.0 / (self.N * self.M)

    @classmethod
    def build(cls, N: int, M: int, max_rounds: int = 50) -> "ModelProblem":
        h = 1.0 / (N * M)
        xs = np.arange(N * M + 1, dtype=np.float64) * h
        ys = np.arange(M + 1, dtype=np.float64) * h
        exact = np.sqrt(xs[:, None] ** 2 + ys[None, :] ** 2)
        f = Field.fresh((N * M + 1, M + 1))
        mask = np.zeros_like(f.fixed)
        mask[:, 0] = True
        mask[0, :] = True
        f.fix(mask, exact)
        fsm_solve(f, np.ones_like(exact), h, max_rounds=max_rounds)
        return cls(N=N, M=M, u_fine=f.values, u_exact=exact,
                   uf_coarse=f.values[::M, :].copy())

    def fine_solution_errors(self) -> dict:
        """Error of the strip fine solution against the exact solution."""
        diff = np.abs(self.u_fine - self.u_exact)
        return {
            "linf": float(diff.max()),
            "l1_abs": float(self.h ** 2 * diff.sum()),
            "l1_mean": float(diff.mean()),
        }

    def solve_subdomains(self, U: np.ndarray,
                         max_rounds: int = 50) -> np.ndarray:
        """Fine solves on the N strip subdomains with coarse-column data.

        Subdomain i fixes its left column to U[i, :] and its bottom row to
        the boundary data; the returned (N+1, M+1) array holds the fine
        values on the coarse columns (column 0 is the exact boundary
        column, column i+1 comes from subdomain i's right edge).
        """
        N, M, h = self.N, self.M, self.h
        u_cols = np.empty((N + 1, M + 1), dtype=np.float64)
        u_cols[0, :] = self.uf_coarse[0, :]
        ones = np.ones((M + 1, M + 1), dtype=np.float64)
        for i in range(N):
            f = Field.fresh((M + 1, M + 1))
            mask = np.zeros_like(f.fixed)
            mask[0, :] = True
            f.fix(mask, np.broadcast_to(U[i, :], (M + 1, M + 1)).copy())
            mask2 = np.zeros_like(f.fixed)
            mask2[:, 0] = True
            bottom = np.broadcast_to(
                self.u_fine[i * M:(i + 1) * M + 1, 0][:, None],
                (M + 1, M + 1)).copy()
            f.fix(mask2, bottom)
            fsm_solve(f, ones, h, max_rounds=max_rounds)
            u_cols[i + 1, :] = f.values[M, :]
        return u_cols

    def ch_eval(self, U: np.ndarray) -> np.ndarray:
        """Coarse-solver evaluation at every interior coarse node of U."""
        N, M = self.N, self.M
        out = np.full_like(U, np.nan)
        for i in range(1, N + 1):
            for j in range(1, M + 1):
                out[i, j] = _model_ch(U[i - 1, j], U[i, 0], j == M, self.H)
        return out


def oracle_bounds(mp: ModelProblem, U_next: np.ndarray, U_curr: np.ndarray,
                  u_curr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-node admissible window (m_tilde, M_bar) for one update.

    U_next is the coarse iterate produced by the update, U_curr the one it
    started from and u_curr the subdomain fine values used; all on the
    (N+1, M+1) coarse set.  The denominator is the coarse-solver increment
    between the two iterates.  A zero numerator gives a zero bound (the
    node is already exact, so no positive weight is admissible); otherwise
    a zero denominator reports +inf (no constraint).  m_tilde clamps the
    lower bound at zero.
    """
    N, M = mp.N, mp.M
    m_tilde = np.zeros((N + 1, M + 1), dtype=np.float64)
    M_bar = np.zeros((N + 1, M + 1), dtype=np.float64)
    for i in range(1, N + 1):
        for j in range(1, M + 1):
            d = (_model_ch(U_next[i - 1, j], U_next[i, 0], j == M, mp.H)
                 - _model_ch(U_curr[i - 1, j], U_curr[i, 0], j == M, mp.H))
            num_m = U_curr[i, j] - u_curr[i, j]
            num_M = mp.uf_coarse[i, j] - u_curr[i, j]
            if num_m == 0.0:
                mbar = 0.0
            elif d == 0.0:
                mbar = math.inf
            else:
                mbar = num_m / d
            if num_M == 0.0:
                Mbar = 0.0
            elif d == 0.0:
                Mbar = math.inf
            else:
                Mbar = num_M / d
            m_tilde[i, j] = max(mbar, 0.0) if math.isfinite(mbar) else 0.0
            M_bar[i, j] = Mbar
    return m_tilde, M_bar


@dataclass
class ModelIterRecord:
    k: int
    linf: float
    l1_abs: float
    l1_rel: float
    min_Mbar: float
    max_theta_used: float


@dataclass
class ModelRunResult:
    problem: ModelProblem
    records: list[ModelIterRecord]
    U_history: list[np.ndarray] | None = None


def _policy_spec(policy) -> tuple[str, object]:
    if isinstance(policy, (int, float)):
        return "fixed", float(policy)
    if isinstance(policy, ThetaParams):
        return "estimated", policy
    if isinstance(policy, tuple) and len(policy) == 2:
        return policy[0], policy[1]
    if policy == "oracle":
        return "oracle", 0.5
    if policy == "estimated":
        return "estimated", ThetaParams()
    raise ValueError(f"unrecognized theta policy {policy!r}")


def model_run(N: int, M: int, policy, max_k: int,
              record_solutions: bool = False,
              mp: ModelProblem | None = None) -> ModelRunResult:
    """Run the strip iteration under a theta policy and record errors.

    policy is a fixed float, a ThetaParams (history estimator), "oracle"
    or ("oracle", frac) drawing theta at frac of the admissible window.
    Errors are measured against the strip fine solution on the coarse set;
    each record also carries the smallest positive finite upper bound of
    the admissible window and the largest weight actually applied.
    """
    mode, arg = _policy_spec(policy)
    if mp is None:
        mp = ModelProblem.build(N, M)
    N, M, H = mp.N, mp.M, mp.H
    measure = mp.H * mp.h
    ref_mass = float(np.abs(mp.uf_coarse).sum())

    U = np.empty((N + 1, M + 1), dtype=np.float64)
    U[0, :] = mp.uf_coarse[0, :]
    U[:, 0] = mp.uf_coarse[:, 0]
    for i in range(1, N + 1):
        for j in range(1, M + 1):
            U[i, j] = _model_ch(U[i - 1, j], U[i, 0], j == M, H)

    records: list[ModelIterRecord] = []
    history: list[np.ndarray] = [U.copy()] if record_solutions else []

    def record(k, Uk, min_mbar, max_used):
        diff = np.abs(Uk - mp.uf_coarse)
        records.append(ModelIterRecord(
            k=k, linf=float(diff.max()),
            l1_abs=float(measure * diff.sum()),
            l1_rel=float(diff.sum() / ref_mass),
            min_Mbar=min_mbar, max_theta_used=max_used))

    record(0, U, math.nan, math.nan)

    u_curr = mp.solve_subdomains(U)
    u_prev: np.ndarray | None = None
    ch_hist: list[np.ndarray] = [mp.ch_eval(U)]

    if mode == "estimated":
        params: ThetaParams = arg
        w0, w1, w2 = (float(w) for w in params.omega)

    for k in range(1, max_k + 1):
        U_new = U.copy()
        min_mbar = math.inf
        max_used = 0.0
        scale = float(np.max(np.abs(u_curr)))
        if mode == "estimated":
            guard = params.resolve_guard(scale)
        for i in range(1, N + 1):
            for j in range(1, M + 1):
                ch_new = _model_ch(U_new[i - 1, j], U_new[i, 0], j == M, H)
                ch_old = _model_ch(U[i - 1, j], U[i, 0], j == M, H)
                d = ch_new - ch_old
                if mode == "fixed":
                    theta = arg
                elif mode == "estimated":
                    if u_prev is None:
                        theta = params.bootstrap
                    else:
                        nterms = min(3, len(ch_hist))
                        d0 = ch_new - ch_hist[0][i, j]
                        d1 = (ch_hist[0][i, j] - ch_hist[1][i, j]
                              if nterms >= 2 else 0.0)
                        d2 = (ch_hist[1][i, j] - ch_hist[2][i, j]
                              if nterms >= 3 else 0.0)
                        tb = _theta_estimate(
                            u_curr[i, j] - u_prev[i, j], d0, d1, d2,
                            nterms, w0, w1, w2, guard, params.bootstrap)
                        theta = _theta_damp(tb, params.x0, params.gamma,
                                            params.delta)
                else:  # oracle
                    frac = float(arg)
                    num_M = mp.uf_coarse[i, j] - u_curr[i, j]
                    if d == 0.0 or num_M == 0.0:
                        theta = 0.0
                    else:
                        Mbar = num_M / d
                        mbar = (U[i, j] - u_curr[i, j]) / d
                        mt = max(mbar, 0.0)
                        theta = mt + frac * (Mbar - mt)
                        if 0.0 < Mbar < min_mbar:
                            min_mbar = Mbar
                U_new[i, j] = theta * d + u_curr[i, j]
                if theta > max_used:
                    max_used = theta
        if mode != "oracle":
            _, M_bar = oracle_bounds(mp, U_new, U, u_curr)
            finite_pos = M_bar[(M_bar > 0) & np.isfinite(M_bar)]
            min_mbar = float(finite_pos.min()) if finite_pos.size else math.inf
        ch_hist.insert(0, mp.ch_eval(U_new))
        del ch_hist[3:]
        U = U_new
        if record_solutions:
            history.append(U.copy())
        record(k, U, min_mbar, max_used)
        u_prev = u_curr
        u_curr = mp.solve_subdomains(U)

    return ModelRunResult(problem=mp, records=records,
                          U_history=history if record_solutions else None)
