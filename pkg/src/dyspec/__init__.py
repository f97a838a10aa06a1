"""Dynamical spectra of transport cocycles over steady flows on tori."""

from .errors import (ConditioningError, InputError, IntegrationError,
                     UnsupportedOracleError)
from .flows import (FLOW_CATALOG, FlowField, SteadyReport, abc_flow,
                    cellular_flow, check_steady_euler, counterexample_flow,
                    eval_jacobian, eval_velocity, make_flow, shear_flow,
                    wrap_torus)
from .bichar import (PhasePoint, TrajectorySample, advance, advance_point,
                     flow_jacobian, samples_to_csv)
from .cocycle import (CocycleHandle, adjoint, amplitude_cocycle,
                      amplitude_generator, custom_cocycle, orthonormal_frame,
                      product, propagate, rescaled, restrict_to_orthogonal,
                      restricted, scalar_stretch)
from .spectrum import (BilateralManeReport, GapBoundsReport, HypoCertificate,
                       ManeCertificate, SpectrumEstimate,
                       algebraic_rate_floor, build_ensemble,
                       connectedness_threshold, distinguished_seeds,
                       effective_window, essential_spectrum_annulus,
                       gap_bounds_check, halton_ensemble, hypo_certificate,
                       lyapunov_exponents, mane_search, mane_search_bilateral,
                       merge_intervals, minkowski_sum, sacker_sell_estimate)
from .oracle import (Oracle, brute_force_propagator, constant_oracle,
                     diagonal_oracle, exact_propagator, exact_sacker_sell,
                     exact_state, floquet_oracle, generic_oracle,
                     oracle_cocycle_handle, shear_oracle)

__version__ = "0.1.0"
