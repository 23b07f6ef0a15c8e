"""Two-scale domain-decomposition solver for static Eikonal equations.

Solves |grad u| = r(x) on the unit interval/square with a fast-sweeping
Godunov core, wind-direction tracking, wind-gated subdomain boundary
conditions, parallel subdomain fine solves, and weighted coarse
corrections with a per-node estimated weight.
"""

from .errors import ConfigurationError
from .grid import GridSpec, NodeId, SubdomainBoundary, boundary_of, coords
from .metrics import FlopModel, l1_absolute, l1_relative, linf, speedup_threshold
from .slowness import SlownessField, make_catalog_field
from .sweep import INF, Field, fsm_solve, godunov_solve, local_update
from .theta import ModelProblem, ThetaParams, damp_theta, estimate_theta, model_run, oracle_bounds
from .twoscale import (
    CoarseState,
    DomainBoundary,
    FineState,
    PointSources,
    RunResult,
    causal_sweep,
    coarse_update,
    initialize_coarse,
    reference_solution,
    run,
    solve_fine,
    subdomain_bcs,
)

__version__ = "0.1.0"
