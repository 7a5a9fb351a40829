"""Evolutionary design and verification of Runge-Kutta methods.

The pipeline: enumerate the rooted trees indexing the order conditions
(``trees``), evaluate condition residuals and fitness for Butcher
tableaux (``tableau``, ``conditions``), minimize the staged residual
system with a covariance-adapting evolution strategy (``es``,
``solver``), and confirm orders empirically on test ODEs (``odecheck``).
"""

from .conditions import (ConditionSystem, FeasibilityReport, default_thresholds,
                         elementary_weights, error_coefficient, fitness,
                         is_feasible_to_order, order_metric)
from .es import ESConfig, ESRun, minimize
from .odecheck import (PROBLEMS, OrderEstimate, StageIterationError, TestProblem,
                       global_order, local_order, rk_step,
                       stability_coefficients)
from .solver import (Archive, ArchiveRecord, EvolveResult, ParetoSet,
                     StagedProblem, StagedResult, cycle, dominates,
                     evolve_runge_kutta, non_dominated, pareto_front,
                     read_archives, solve_staged, write_archives)
from .tableau import (ButcherTableau, DimensionError, TableauFormatError,
                      classical_rk4, euler, fixture_path, from_vector, heun,
                      load_fixture, load_tableau, midpoint, save_tableau,
                      to_vector)
from .trees import (MAX_ORDER, RootedTree, TreeInvariants, alpha,
                    cumulative_counts, enumerate_trees, from_encoding, gamma,
                    invariants, sigma, tree, tree_counts, trees_of_order)

__version__ = "0.1.0"
