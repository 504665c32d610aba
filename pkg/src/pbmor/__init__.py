"""Structure-preserving interpolatory model reduction of parametric bilinear systems.

The package evaluates structured multivariate transfer-function kernels,
builds two-sided projection bases that interpolate kernel values,
frequency derivatives and parameter gradients at chosen data, projects the
affine system members so the reduced model keeps the exact structure and
parameter dependence of the original, and verifies every enforced condition
numerically.  Desk-scale delay and mass-spring benchmarks plus fixed-step
time integrators round out the toolbox; the ``pbmor`` CLI ties it together.
"""

__version__ = "0.1.0"

from .scalarfun import ScalarFn, parse_scalar
from .matfun import (AffineMatrixFn, StructuredSystem, SolveCache,
                     SingularMatrixError, solve_shifted, solve_deriv_action)
from .tf import (TransferRequest, eval_transfer, eval_transfer_siso,
                 eval_transfer_deriv, eval_transfer_param_grad)
from .mor import (Chain, InterpolationSpec, ReducedSystem, assemble_basis,
                  build_V_hermite, build_V_lagrange, build_W_hermite,
                  build_W_lagrange, project, reduce_system)
from .bench import (BenchmarkConfig, gen_heated_rod_delay, gen_msd_chain,
                    gen_random_structured, make_benchmark)
from .sim import (SimProblem, SimResult, parse_signal, simulate,
                  simulate_delay, simulate_first_order, simulate_second_order)
from .verify import (VerificationReport, check_hermite, check_lagrange,
                     check_param_gradient, error_sweep_freq, error_sweep_time)

__all__ = [
    "ScalarFn", "parse_scalar",
    "AffineMatrixFn", "StructuredSystem", "SolveCache", "SingularMatrixError",
    "solve_shifted", "solve_deriv_action",
    "TransferRequest", "eval_transfer", "eval_transfer_siso",
    "eval_transfer_deriv", "eval_transfer_param_grad",
    "Chain", "InterpolationSpec", "ReducedSystem", "assemble_basis",
    "build_V_hermite", "build_V_lagrange", "build_W_hermite", "build_W_lagrange",
    "project", "reduce_system",
    "BenchmarkConfig", "gen_heated_rod_delay", "gen_msd_chain",
    "gen_random_structured", "make_benchmark",
    "SimProblem", "SimResult", "parse_signal", "simulate", "simulate_delay",
    "simulate_first_order", "simulate_second_order",
    "VerificationReport", "check_hermite", "check_lagrange",
    "check_param_gradient", "error_sweep_freq", "error_sweep_time",
]
