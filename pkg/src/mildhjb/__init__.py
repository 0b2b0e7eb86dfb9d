"""Mild solutions of non-autonomous semilinear Hamilton-Jacobi equations.

Submodules
----------
evolution
    Sine-basis Galerkin operators and their evolution family.
gaussian
    Finite-dimensional Gaussian measures, RKHS coordinates and smoothing.
ou
    Gramians, minimal-energy maps and Ornstein-Uhlenbeck transition operators.
hjb
    Weighted solution space, the mild-form map and the Picard solver.
cli
    ``mildhjb run`` / ``mildhjb diagnose``.
"""
__version__ = "0.1.0"

from .errors import (AssumptionError, CoefficientError, ConfigError, DegenerateWindowError,
                     EllipticityError, FitSpanError, MildHJBError, NonContractionError,
                     NotConvergedError, NullControllabilityFailure, OutsideRange,
                     RankDeficiencyError)
from .evolution import (CoefficientField, Propagator, SpectralBasis, assemble_operator,
                        galerkin_multiplication, propagate, smoothing_exponent_probe)
from .gaussian import (Cubature, GaussianState, RkhsVector, cameron_martin_density,
                       gamma_series_diagnostic, isometry_phi, rkhs_embed, smooth_convolve,
                       smooth_gradient, smooth_hessian)
from .ou import (Gramian, OUEngine, SigmaMap, embedding_norm, gramian, ou_apply, ou_gradient,
                 ou_hessian, sigma_map, smoothing_alpha_fit)
from .hjb import (HJBProblem, Hamiltonian, SolveReport, SolverConfig, ValueIterate,
                  contraction_probe, finite_control, gamma_map, picard_solve, schedule_beta,
                  weighted_norm)
