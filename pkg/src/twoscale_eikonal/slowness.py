"""Catalog of slowness functions evaluated pointwise on [0,1]^d.

Every field is strictly positive and deterministic: the random checkerboard
draws each cell value from a counter-based hash of (cell index, seed), so
evaluation order and vectorization never change the values.  Fields are
immutable after construction and safe to evaluate concurrently.

Catalog kinds
-------------
constant        r = value
gauss1d         r(x) = 1 + 10 exp(-(x-0.75)^2 / (2 * 0.01^2))        (1-D)
sine2d          r = 1 + amplitude * sin(f pi x) * sin(f pi y)
varsine         r = 1 + 0.5 sin(pi x / e) sin(pi y / e),
                e(x, y) = (|x| + |y| + 0.001) / 50
obstacles       rectangles / disks / annular arcs with per-shape values
                over a constant background
squares         periodic cell of size eps: r = 1 on the cell's axis lines
                (within line_tol of a multiple of eps), r = 2 elsewhere
checkerboard    per eps-cell value drawn from {1, 2} with probability 1/2

Presets ``maze`` (two annular-arc barriers at slowness 1000 plus a fast
disk at 0.01, approximating a curved-barrier maze) and ``fast_channel``
(a thin vertical strip at 0.01) expand to ``obstacles`` instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = ["SlownessField", "make_catalog_field", "MAZE_SHAPES",
           "FAST_CHANNEL_SHAPES"]


def _splitmix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64."""
    z = (z + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _cell_bits(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """One deterministic bit per (cell, seed), order-independent."""
    s = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
                    * np.ones(1, dtype=np.uint64))[0]
    k = _splitmix64(s ^ ix.astype(np.uint64))
    k = _splitmix64(k ^ (iy.astype(np.uint64) * np.uint64(0xD1342543DE82EF95)))
    return (k >> np.uint64(63)).astype(np.float64)


# Axis-aligned rectangle, disk, and annular arc primitives for obstacles.
def _shape_contains(shape: dict, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    kind = shape["type"]
    if kind == "rect":
        return ((x >= shape["x0"]) & (x <= shape["x1"])
                & (y >= shape["y0"]) & (y <= shape["y1"]))
    if kind == "disk":
        return ((x - shape["cx"]) ** 2 + (y - shape["cy"]) ** 2
                <= shape["radius"] ** 2)
    if kind == "arc":
        dx, dy = x - shape["cx"], y - shape["cy"]
        rr = np.sqrt(dx * dx + dy * dy)
        ang = np.degrees(np.arctan2(dy, dx)) % 360.0
        rel = (ang - shape["start_deg"]) % 360.0
        return ((rr >= shape["r_inner"]) & (rr <= shape["r_outer"])
                & (rel <= shape["extent_deg"]))
    raise ConfigurationError(f"unknown obstacle shape type {kind!r}")


#: Maze preset: an annular-arc barrier enclosing the subdomain
#: [0.4, 0.5] x [0.5, 0.6] and a second arc, both at slowness 1000, plus a
#: fast disk (slowness 0.01) contained in the subdomain [0.7, 0.8]^2.
#: A documented approximation of a hand-drawn curved-barrier maze; nothing
#: numeric is pinned to its exact geometry.
MAZE_SHAPES = (
    {"type": "arc", "cx": 0.45, "cy": 0.55, "r_inner": 0.08, "r_outer": 0.10,
     "start_deg": 80.0, "extent_deg": 300.0, "value": 1000.0},
    {"type": "arc", "cx": 0.75, "cy": 0.35, "r_inner": 0.10, "r_outer": 0.12,
     "start_deg": 160.0, "extent_deg": 290.0, "value": 1000.0},
    {"type": "disk", "cx": 0.75, "cy": 0.75, "radius": 0.04, "value": 0.01},
)

#: Fast-obstacle preset: a thin vertical strip the optimal paths cut through.
FAST_CHANNEL_SHAPES = (
    {"type": "rect", "x0": 0.26, "x1": 0.27, "y0": 0.0, "y1": 0.6,
     "value": 0.01},
)


@dataclass(frozen=True)
class SlownessField:
    """A positive slowness function r on [0,1]^d with catalog provenance."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def sample(self, x, y=None) -> np.ndarray:
        """Evaluate r at the given points (vectorized); checks positivity."""
        x = np.asarray(x, dtype=np.float64)
        if y is not None:
            y = np.asarray(y, dtype=np.float64)
        vals = _EVALUATORS[self.kind](self.params, self.seed, x, y)
        if np.any(vals <= 0.0):
            raise ConfigurationError(
                f"slowness kind {self.kind!r} produced a nonpositive value")
        return vals

    def __call__(self, x, y=None) -> float:
        return float(self.sample(np.float64(x),
                                 None if y is None else np.float64(y)))


def _eval_constant(params, seed, x, y):
    return np.full(np.shape(x), params["value"], dtype=np.float64)


def _eval_gauss1d(params, seed, x, y):
    return 1.0 + 10.0 * np.exp(-((x - 0.75) ** 2) / (2.0 * 0.01 ** 2))


def _eval_sine2d(params, seed, x, y):
    a, f = params["amplitude"], params["frequency"]
    return 1.0 + a * np.sin(f * np.pi * x) * np.sin(f * np.pi * y)


def _eval_varsine(params, seed, x, y):
    eps = (np.abs(x) + np.abs(y) + 0.001) / 50.0
    return 1.0 + 0.5 * np.sin(np.pi * x / eps) * np.sin(np.pi * y / eps)


def _eval_obstacles(params, seed, x, y):
    out = np.full(np.shape(x), params.get("outside", 1.0), dtype=np.float64)
    placed = np.zeros(np.shape(x), dtype=np.bool_)
    for shape in params["shapes"]:
        inside = _shape_contains(shape, np.atleast_1d(x), np.atleast_1d(y))
        inside = inside.reshape(np.shape(out)) & ~placed
        out[inside] = shape["value"]
        placed |= inside
    return out


def _eval_squares(params, seed, x, y):
    eps, tol = params["eps"], params["line_tol"]
    dx = np.abs(x / eps - np.round(x / eps)) * eps
    dy = np.abs(y / eps - np.round(y / eps)) * eps
    return np.where((dx <= tol) | (dy <= tol), 1.0, 2.0)


def _eval_checkerboard(params, seed, x, y):
    eps = params["eps"]
    ix = np.floor(np.atleast_1d(x) / eps).astype(np.int64)
    iy = np.floor(np.atleast_1d(y) / eps).astype(np.int64)
    vals = 1.0 + _cell_bits(ix, iy, seed)
    return vals.reshape(np.shape(x))


_EVALUATORS = {
    "constant": _eval_constant,
    "gauss1d": _eval_gauss1d,
    "sine2d": _eval_sine2d,
    "varsine": _eval_varsine,
    "obstacles": _eval_obstacles,
    "squares": _eval_squares,
    "checkerboard": _eval_checkerboard,
}

_REQUIRED = {
    "constant": {"value"},
    "gauss1d": set(),
    "sine2d": {"amplitude", "frequency"},
    "varsine": set(),
    "obstacles": {"shapes"},
    "squares": {"eps", "line_tol"},
    "checkerboard": {"eps"},
}
_OPTIONAL = {"obstacles": {"outside"}}

_SHAPE_KEYS = {
    "rect": {"x0", "x1", "y0", "y1", "value"},
    "disk": {"cx", "cy", "radius", "value"},
    "arc": {"cx", "cy", "r_inner", "r_outer", "start_deg", "extent_deg",
            "value"},
}


def make_catalog_field(kind: str, params: dict | None = None,
                       seed: int = 0) -> SlownessField:
    """Construct a catalog slowness field, validating its parameters.

    Raises ConfigurationError for unknown kinds, missing or extra
    parameters, and parameter values that would make the field nonpositive.
    """
    params = dict(params or {})
    if kind == "maze":
        kind, params = "obstacles", {"shapes": [dict(s) for s in MAZE_SHAPES],
                                     "outside": params.get("outside", 1.0)}
    elif kind == "fast_channel":
        kind, params = "obstacles", {
            "shapes": [dict(s) for s in FAST_CHANNEL_SHAPES],
            "outside": params.get("outside", 1.0)}
    if kind not in _EVALUATORS:
        raise ConfigurationError(f"unknown slowness kind {kind!r}")
    required = _REQUIRED[kind]
    allowed = required | _OPTIONAL.get(kind, set())
    missing = required - params.keys()
    extra = params.keys() - allowed
    if missing:
        raise ConfigurationError(
            f"slowness kind {kind!r} missing params {sorted(missing)}")
    if extra:
        raise ConfigurationError(
            f"slowness kind {kind!r} got unknown params {sorted(extra)}")
    if kind == "constant" and params["value"] <= 0:
        raise ConfigurationError("constant slowness must be positive")
    if kind == "sine2d" and abs(params["amplitude"]) >= 1.0:
        raise ConfigurationError(
            "sine2d amplitude must satisfy |amplitude| < 1 for positivity")
    if kind in ("squares", "checkerboard") and params["eps"] <= 0:
        raise ConfigurationError("eps must be positive")
    if kind == "obstacles":
        for shape in params["shapes"]:
            keys = _SHAPE_KEYS.get(shape.get("type"))
            if keys is None:
                raise ConfigurationError(
                    f"unknown obstacle shape type {shape.get('type')!r}")
            missing = keys - shape.keys()
            if missing:
                raise ConfigurationError(
                    f"obstacle shape {shape['type']!r} missing "
                    f"{sorted(missing)}")
            if shape["value"] <= 0:
                raise ConfigurationError("obstacle value must be positive")
        if params.get("outside", 1.0) <= 0:
            raise ConfigurationError("outside value must be positive")
    return SlownessField(kind=kind, params=params, seed=int(seed))
