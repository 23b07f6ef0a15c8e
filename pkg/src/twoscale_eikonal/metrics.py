"""Error norms and the flop-count speedup model.

The relative L1 error normalizes by the reference mass (sum of |ref| over
nodes), so grid spacing cancels; the absolute L1 carries the cell measure
s^d explicitly so absolute error levels stay comparable across grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["l1_relative", "l1_absolute", "linf", "FlopModel",
           "SpeedupEstimate", "speedup_threshold"]


def _check_shapes(u: np.ndarray, ref: np.ndarray) -> None:
    if np.shape(u) != np.shape(ref):
        raise ValueError(
            f"field shapes differ: {np.shape(u)} vs {np.shape(ref)}")


def l1_relative(u: np.ndarray, ref: np.ndarray) -> float:
    """sum |u - ref| / sum |ref| over the common node set."""
    _check_shapes(u, ref)
    denom = float(np.sum(np.abs(ref)))
    if denom == 0.0:
        raise ValueError("reference field is identically zero")
    return float(np.sum(np.abs(np.asarray(u) - np.asarray(ref)))) / denom


def l1_absolute(u: np.ndarray, ref: np.ndarray, spacing: float) -> float:
    """Cell-measure L1 error: spacing^d * sum |u - ref|."""
    _check_shapes(u, ref)
    d = np.ndim(u)
    return float(spacing ** d * np.sum(np.abs(np.asarray(u) - np.asarray(ref))))


def linf(u: np.ndarray, ref: np.ndarray) -> float:
    """max |u - ref| over the common node set."""
    _check_shapes(u, ref)
    return float(np.max(np.abs(np.asarray(u) - np.asarray(ref))))


@dataclass(frozen=True)
class FlopModel:
    """Cost model: C * 2^d * (n+1)^d flops per fast-sweeping solve.

    C is the sweep-round constant (how many 2^d-orderings rounds the
    characteristics demand), N the coarse cells per axis, M the fine cells
    per coarse cell, k the number of two-scale iterations.
    """

    N: int
    M: int
    d: int
    C: int
    k: int = 1

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        for name in ("N", "M", "C", "k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")

    def sweep_flops(self, n: int) -> float:
        return float(self.C * 2 ** self.d * (n + 1) ** self.d)


@dataclass(frozen=True)
class SpeedupEstimate:
    threshold: float
    serial_flops: float
    coarse_flops_per_iter: float
    fine_flops_per_iter: float
    parallel_flops_per_iter: float


def speedup_threshold(model: FlopModel) -> SpeedupEstimate:
    """Iteration budget below which the parallel two-scale method wins.

    With one processor per coarse grid and per subdomain, an iteration
    costs one coarse solve plus one subdomain solve plus the sequential
    causal sweep (2^d * M * (N+1)^2 flops); the threshold is the serial
    whole-grid cost divided by that per-iteration cost.  Also reports the
    aggregate (non-parallel) per-iteration phase costs.
    """
    N, M, d = model.N, model.M, model.d
    causal = float(2 ** d * M * (N + 1) ** 2)
    serial = model.sweep_flops(N * M)
    coarse_phase = d * M * model.sweep_flops(N) + causal
    fine_phase = N ** d * model.sweep_flops(M)
    per_iter = model.sweep_flops(N) + model.sweep_flops(M) + causal
    return SpeedupEstimate(
        threshold=serial / per_iter,
        serial_flops=serial,
        coarse_flops_per_iter=coarse_phase,
        fine_flops_per_iter=fine_phase,
        parallel_flops_per_iter=per_iter,
    )
