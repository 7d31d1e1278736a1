"""Pareto front identification under a polyhedral preference cone."""

__version__ = "0.1.0"

from .errors import (ConeError, DegenerateError, InputError, NumericalError,
                     PrepexError, SingularityError)
from .geometry import (PreferenceCone, PreferenceVector, angle_cone, build_cone,
                       cone_contains, dominates, load_cone, orthant, project)
from .divergence import RewardFamily, gaussian, kl_scalar, kl_scalarized
from .pareto import ParetoFront, arm_front_distance, front_metric, pareto_set
from .oracle import (Instance, characteristic_time, confusing_instance_gaussian,
                     convex_hull_rep, gaussian_closed_form_inverse_time,
                     in_alternating_set, inner_value, load_instance)
from .concentration import (ThresholdParams, coverage_check_thm6, pairwise_radius,
                            tail_bound_check_thm5, threshold_beta)
from .prets import Environment, run_prets
from .seeding import derive_seed

__all__ = [name for name in dir() if not name.startswith("_")]
