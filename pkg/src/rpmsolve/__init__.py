"""Randomized rank-one projection solvers with optional orthogonalization."""
from .diagnostics import (AdaptiveEpochTracker, SubspaceBasis, StoppingTimeLog,
                          adaptive_stopping_times,
                          epoch_rate_check, finite_population_R, meany_gamma,
                          product_projection_norm, restricted_row_space, row_space,
                          stopping_times, verify_limit_point)
from .distributed import (CommLedger, Partition, iteration_comm_cost, overlap_stats,
                          partition_banded, sim_solve, support_bound_check)
from .errors import (CapacityError, DegenerateDistributionError, DegenerateRowError,
                     DimensionError, IncompleteLogError, InfeasibleSystemError,
                     MatrixMarketError, PreconditionError, ProtocolViolationError)
from .mtx import load_matrix_market, write_matrix_market
from .sketches import SketchContext, SketchSource, make_source
from .solvers import (SolverState, StepKind, StepOutcome, TerminationCriteria,
                      base_column_step, base_row_step, full_ortho_step,
                      general_rpm_step, modified_gram_schmidt, partial_ortho_step,
                      solve, twice_iterated_gram_schmidt)
from .system import (LinearSystem, SpectrumSpec, gen_banded, gen_prescribed_svd,
                     make_consistent_system, min_norm_solution, residual,
                     signed_residual)

__version__ = "0.1.0"
