"""Critical l1-recovery densities for concatenated random orthogonal
dictionaries: replica-theory solvers plus a Monte Carlo basis-pursuit lab."""

from .errors import (DegenerateHessian, IllConditioned, InfeasibleNorms,
                     InvalidProfile, NonConvergence, OrthocsError, SolverFailure)
from .free_energy import (MultiplierSolution, free_energy_gradient,
                          free_energy_hessian, solve_multipliers)
from .kernels import (BlockPrior, overshoot_moment, prior_average, q_tail,
                      soft_threshold)
from .lp import BpSolution, active_backend, available_backends, solve_bp
from .profiles import DensityProfile
from .replica import (CriticalPoint, SaddleState, at_stability, critical_point,
                      critical_point_T2, critical_point_general,
                      critical_point_uniform, rs_fixed_point)
from .sensing import (Dictionary, SparseInstance, build_dictionary,
                      haar_orthogonal, recovery_success)

__version__ = "0.1.0"
