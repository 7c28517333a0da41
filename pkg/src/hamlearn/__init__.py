"""Bayesian Hamiltonian learning from steady-state measurements."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .bhl import (ApproxErrorCov, EstimateReport, GaussianBelief, approx_error_covariance,
                  baseline_estimate, cor1_bound, fidelity, map_estimate, online_bhl,
                  online_update, posterior, posterior_covariance, thm3_infidelity_bound,
                  thm5_sample_budget)
from .errors import (ConfigError, HamLearnError, InvalidInputError, NumericalError,
                     ResourceLimitError)
from .forward import (ConstraintMatrix, ForwardOperator, Layout, correlation_matrix,
                      k_matrix, kernel_estimate, spectral_gap, spectral_report,
                      stack_controls, stack_states)
from .meas import (EstimateBatch, NoiseSpec, ShotRecord, apply_readout_flip,
                   measure_setting, noisy_k_matrix, pauli_shadow_estimate,
                   sample_random_setting, thm4_shot_count)
from .pauli import (PauliBasis, PauliString, ScaledPauli, commutes, enumerate_k_body,
                    enumerate_k_local_chain, hermitian_commutator, multiply)
from .qsim import (DensityState, HamiltonianSpec, QuadratureRule, commutator_trace_norm,
                   eigenstates, evolve, gauss_legendre_rule, time_averaged_state,
                   time_averaged_state_exact)

__all__ = [name for name in dir() if not name.startswith("_")]
