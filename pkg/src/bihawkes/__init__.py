"""Simulation, Bayesian fitting and residual analysis of multivariate
exponential-kernel Hawkes processes."""
from bihawkes.core import (
    BranchingSummary,
    EventSequence,
    HawkesModel,
    InstabilityError,
    branching_summary,
    intensities_at_events,
    intensity,
    intensity_trace,
    param_names,
)
from bihawkes.gof import gof_report, ks_band, rescale_times
from bihawkes.inference import (
    FitOptions,
    PosteriorChain,
    SamplerOptions,
    fit_map,
    sample_posterior,
    summarize,
)
from bihawkes.likelihood import (
    PriorSpec,
    grad_log_posterior,
    log_likelihood,
    log_likelihood_exact,
    log_likelihood_facilitated,
    log_posterior,
    log_prior,
)
from bihawkes.simulate import SimulationConfig, simulate, simulate_branching, simulate_thinning

__version__ = "0.1.0"

__all__ = [
    "BranchingSummary", "EventSequence", "HawkesModel", "InstabilityError",
    "branching_summary", "intensities_at_events", "intensity", "intensity_trace",
    "param_names", "gof_report", "ks_band", "rescale_times", "FitOptions",
    "PosteriorChain", "SamplerOptions", "fit_map", "sample_posterior", "summarize",
    "PriorSpec", "grad_log_posterior", "log_likelihood", "log_likelihood_exact",
    "log_likelihood_facilitated", "log_posterior", "log_prior", "SimulationConfig",
    "simulate", "simulate_branching", "simulate_thinning",
]
