"""Nonlinear interference estimation for wideband links with inter-channel
stimulated Raman scattering.

Integral models (general power profile, closed-form triangular-gain kernel,
effective attenuation), closed-form approximations, a split-step Fourier
reference simulator and a comparison/report front end.
"""

__version__ = "0.1.0"

from .closedform import (
    ClosedFormTerms,
    coherence_epsilon,
    effective_attenuation_cf_all,
    eta_effective_attenuation_cf,
    eta_isrs_gn_cf,
    isrs_gn_cf_all,
)
from .core import (
    ChannelPlan,
    DispersionCoeffs,
    FiberParams,
    LinkConfig,
    ModelOptions,
    Span,
    betas_to_dispersion,
    build_nyquist_plan,
    dispersion_to_betas,
)
from .integral import (
    ChannelEta,
    NliResult,
    conventional_gn,
    eta_effective_attenuation_integral,
    eta_isrs_gn_analytic,
    eta_isrs_gn_general,
    nli_power,
    phase_mismatch,
)
from .raman import (
    EffectiveAttenuation,
    NoBracketError,
    PowerProfile,
    RamanSolverError,
    analytic_triangular_profile,
    exponential_profile,
    fit_effective_attenuation,
    isrs_power_transfer_db,
    solve_raman_ode,
)

__all__ = [
    "ChannelEta", "ChannelPlan", "ClosedFormTerms", "DispersionCoeffs", "EffectiveAttenuation", "FiberParams",
    "LinkConfig", "ModelOptions", "NliResult", "NoBracketError", "PowerProfile", "RamanSolverError", "Span",
    "analytic_triangular_profile", "betas_to_dispersion", "build_nyquist_plan", "coherence_epsilon",
    "conventional_gn", "dispersion_to_betas", "effective_attenuation_cf_all", "eta_effective_attenuation_cf",
    "eta_effective_attenuation_integral", "eta_isrs_gn_analytic", "eta_isrs_gn_cf", "eta_isrs_gn_general",
    "exponential_profile", "fit_effective_attenuation", "isrs_gn_cf_all", "isrs_power_transfer_db", "nli_power",
    "phase_mismatch", "solve_raman_ode",
]
