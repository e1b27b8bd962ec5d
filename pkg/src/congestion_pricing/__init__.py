"""Congestion pricing for populations of online-mirror-descent agents."""

from .engine import SimConfig, Trajectory, energy_diagnostic, noise_accumulators, run, step
from .errors import (CongestionPricingError, ConvergenceError, DimensionError, DomainError,
                     HypothesisError, SimulationError)
from .game import (ActionSet, GameSpec, NoiseModel, ResourceConstraints, congestion,
                   game_from_dict, game_from_json, game_to_dict, game_to_json, make_game,
                   noisy_gradient)
from .metrics import (MetricSeries, anccvc, anccvc_series, decay_fit, ergodic_average,
                      ergodic_series, ergodic_violation, weighted_ccv)
from .mirror import Regularizer, fenchel_coupling, mirror_map, total_fenchel, total_mirror
from .pricing import PriceState, Schedule, ScheduleSet, score_update, update_price
from .quadgame import QuadGameParams, make_quadratic_game, quad_cost, quad_gradient
from .theory import (GameConstants, KKTResidual, VISolution, compute_constants, eta_interval,
                     kkt_residual, solve_constrained_vi, theorem1_bound, trackability_check)

__version__ = "0.1.0"
