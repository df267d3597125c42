"""sandlab: divisible sandpiles, optimal stopping, and Green functions on graphs."""

from .graphs import (Graph, GadgetSchedule, PipeTreeParams, ParamRejection,
                     UNREACHABLE, ball, build_comb_gadget, build_comb_window,
                     build_cubed_tree, build_gasket, build_lattice_window,
                     build_pipe_tree, build_recurrent_gadget_graph,
                     graph_distance, validate_pipe_params)
from .scenery import LAW_CATALOG, LawSpec, MassConfig, coboundary, resample_one, sample, spike, truncate
from .toppling import ToppleEngine, ToppleState, recursion_check, run, step
from .green import (FiniteTimeGreen, GreenVector, finite_time_green,
                    finite_volume_value, killed_green, nested_volume_search,
                    short_clock_total, theta, vK_exhaustive, voltage_payoff)
from .stopping import (ValueTable, WalkPayoff, brute_force_value, run_optimal_rule,
                       simulate_walk, trap_strategy, value_iteration)

__version__ = "0.1.0"
