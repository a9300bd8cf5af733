"""Adaptive exponential time integration for zero-D chemical kinetics."""

from .kinetics import (EXP_ARG_MAX, P_STANDARD, R_GAS, InvalidStateError,
                       KineticsError, Mechanism, RateTelemetry, Reaction,
                       Species, ThermoRangeError, ThermoState, concentrations,
                       density, equilibrium_constant, fd_jacobian, forward_rate,
                       jacobian_fd, production_rates, reaction_rates,
                       reverse_rate, rhs, rhs_vector, thermo_props)
from .phikrylov import (PhiConvergenceError, PhiRequest, PhiResult, arnoldi,
                        dense_phi_oracle, expm, kiops_eval, phi_combination,
                        phi_scalar)
from .integrator import (ControllerConfig, IntegrationError, OdeProblem,
                         SolverOutput, StepRecord, controller_update,
                         epi3v_step, exp_euler_step, integrate_adaptive,
                         integrate_fixed, integrate_mechanism,
                         problem_from_mechanism, scaled_error_norm)
from .diagnostics import (EigensolverError, SpectrumStats, eigenvalues_dense,
                          jacobian_spectrum, normalized_step_cost,
                          spectrum_bounds)
from .mechio import (MechIoError, RunConfig, parse_config, parse_mechanism,
                     read_csv, serialize_mechanism, write_csv)

__version__ = "0.1.0"
