"""Minimum time functions of linear control systems via reachable sets."""

from .geometry import (Ball, ConvexPolytope, DirectionGrid, contains,
                       convex_hull, hausdorff, linear_image, minkowski_sum,
                       scale, support_value, supporting_point, unit_directions)
from .linsys import (LinearProblem, NonlinearProblem, Propagator,
                     ReversedProblem, expm_2x2, kalman_rank, phi_step, reverse)
from .reach import (BlowupError, ReachFlow, ReachRing, SchemeSpec,
                    check_strict_expansion, discretize_set, ring_gaps,
                    run_algorithm, step_euler_rk, step_heun_rk,
                    step_nonlinear, step_ring)
from .field import (UNREACHED, ErrorReport, MinTimeField, Triangulation,
                    error_norm, fit_order, make_grid, triangulate)
from .controls import (AdjointPath, ControlSequence, DiscreteTrajectory,
                       l1_distance, maximum_condition, reconstruct_control,
                       simulate, solve_adjoint, terminal_normal)
from .examples import (EXAMPLES, UnknownExampleError, UnsupportedOracleError,
                       bench_table, build_field, build_flow, gap_series,
                       oracle, run_table, union_convexity, validate_oracle)

__version__ = "0.1.0"
