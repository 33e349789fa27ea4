"""Log-likelihood, priors and log-posterior for exponential Hawkes models.

Two likelihoods are available:

``exact``
    closed-form compensator with the boundary factors
    ``1 - exp(-beta_ij (T - t_k))``.
``facilitated``
    long-window approximation where every such factor is replaced by 1,
    so the kernel part of the compensator becomes ``sum_ij alpha_ij n^j``.

Samplers and optimisers work in the unconstrained coordinates
``(log mu, logit alpha, log beta)``; :func:`log_posterior_unconstrained`
returns the density of those coordinates, log-Jacobian included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

from bihawkes import _kernels
from bihawkes.core import EventSequence, HawkesModel, spectral_radius

Mode = Literal["exact", "facilitated"]
MODES = ("exact", "facilitated")

_LOG_HALF_NORMAL_CONST = math.log(2.0 / math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors per parameter block.

    beta ~ half-normal(0, beta_scale); alpha ~ uniform(0, 1) (beta(1,1));
    mu ~ half-Cauchy(0, mu_scale).

    ``mu_max`` truncates the mu prior (renormalised); ``max_spectral_radius``
    restricts alpha to a stable region (unnormalised). Both default to off
    and exist for simulation-based calibration, where proposals drawn from
    the prior must be simulable.
    """

    beta_scale: float = 1.0
    mu_scale: float = 5.0
    mu_max: float | None = None
    max_spectral_radius: float | None = None

    def __post_init__(self):
        if not (self.beta_scale > 0 and self.mu_scale > 0):
            raise ValueError("prior scales must be > 0")
        if self.mu_max is not None and not self.mu_max > 0:
            raise ValueError("mu_max must be > 0")

    def sample(self, rng: np.random.Generator, k: int = 2) -> HawkesModel:
        """One draw from the prior (rejection for the optional truncations)."""
        for _ in range(100_000):
            mu = self.mu_scale * np.abs(rng.standard_cauchy(k))
            alpha = rng.uniform(0.0, 1.0, (k, k))
            beta = self.beta_scale * np.abs(rng.standard_normal((k, k)))
            if self.mu_max is not None and np.any(mu > self.mu_max):
                continue
            if (
                self.max_spectral_radius is not None
                and spectral_radius(alpha) >= self.max_spectral_radius
            ):
                continue
            if np.any(mu <= 0) or np.any(beta <= 0):
                continue
            return HawkesModel(mu, alpha, beta)
        raise RuntimeError("prior rejection sampler failed to produce a draw")


def half_normal_logpdf(x, scale: float = 1.0):
    x = np.asarray(x, float)
    out = _LOG_HALF_NORMAL_CONST - math.log(scale) - 0.5 * (x / scale) ** 2
    return np.where(x >= 0, out, -np.inf)


def half_cauchy_logpdf(x, scale: float = 5.0):
    x = np.asarray(x, float)
    out = math.log(2.0 / (math.pi * scale)) - np.log1p((x / scale) ** 2)
    return np.where(x >= 0, out, -np.inf)


def _split(theta, k: int):
    theta = np.asarray(theta, float)
    return theta[:k], theta[k : k + k * k].reshape(k, k), theta[k + k * k :].reshape(k, k)


def _as_vector(params) -> tuple[np.ndarray, int]:
    if isinstance(params, HawkesModel):
        return params.to_vector(), params.k
    theta = np.asarray(params, float).ravel()
    # n = k + 2k^2
    k = int(round((-1 + math.sqrt(1 + 8 * theta.size)) / 4))
    if k + 2 * k * k != theta.size:
        raise ValueError(f"cannot infer K from a vector of length {theta.size}")
    return theta, k


def log_prior(params, priors: PriorSpec = PriorSpec()) -> float:
    """Sum of prior log-densities; ``-inf`` outside the support.

    ``params`` is a :class:`HawkesModel` or a flat natural-scale vector.
    """
    theta, k = _as_vector(params)
    mu, alpha, beta = _split(theta, k)
    if not np.all(np.isfinite(theta)):
        return -np.inf
    if np.any(alpha < 0) or np.any(alpha >= 1):
        return -np.inf
    if priors.mu_max is not None and np.any(mu > priors.mu_max):
        return -np.inf
    if priors.max_spectral_radius is not None and (
        spectral_radius(alpha) >= priors.max_spectral_radius
    ):
        return -np.inf
    lp = float(np.sum(half_cauchy_logpdf(mu, priors.mu_scale)))
    if priors.mu_max is not None:
        lp -= k * math.log((2.0 / math.pi) * math.atan(priors.mu_max / priors.mu_scale))
    lp += float(np.sum(half_normal_logpdf(beta, priors.beta_scale)))
    return lp


def _grad_log_prior(mu, alpha, beta, priors: PriorSpec):
    g_mu = -2.0 * mu / (priors.mu_scale**2 + mu**2)
    g_alpha = np.zeros_like(alpha)
    g_beta = -beta / priors.beta_scale**2
    return g_mu, g_alpha, g_beta


def _loglik(mu, alpha, beta, seq: EventSequence, mode: str, grad: bool):
    """Log-likelihood (and optionally its gradient) from raw arrays."""
    if mode not in MODES:
        raise ValueError(f"unknown likelihood mode {mode!r}")
    k = mu.size
    T = seq.horizon
    counts = seq.counts.astype(float)
    n = len(seq)

    ll = -T * float(np.sum(mu))
    if n:
        m = seq.types
        S, D, _ = _kernels.event_sums(seq.times, m, beta)
        a_rows, b_rows = alpha[m], beta[m]
        lam = mu[m] + np.sum(a_rows * b_rows * S, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ll += float(np.sum(np.log(lam)))
        if mode == "exact":
            # F[e, i] = 1 - exp(-beta[i, m_e] (T - t_e))
            gaps = T - seq.times
            bcol = beta[:, m].T
            E = np.exp(-bcol * gaps[:, None])
            F = -np.expm1(-bcol * gaps[:, None])
            comp = np.zeros((k, k))
            for j in range(k):
                comp[:, j] = F[m == j].sum(axis=0)
            ll -= float(np.sum(alpha * comp))
        else:
            ll -= float(np.sum(alpha * counts[None, :]))

    if not np.isfinite(ll):
        raise FloatingPointError("log-likelihood is not finite; parameters are degenerate")
    if not grad:
        return ll, None

    g_mu = -T * np.ones(k)
    g_alpha = np.zeros((k, k))
    g_beta = np.zeros((k, k))
    if n:
        inv = 1.0 / lam
        for i in range(k):
            sel = m == i
            if not np.any(sel):
                continue
            w = inv[sel]
            g_mu[i] += w.sum()
            g_alpha[i] += beta[i] * (w @ S[sel])
            g_beta[i] += alpha[i] * (w @ (S[sel] - beta[i] * D[sel]))
        if mode == "exact":
            g_alpha -= comp
            gE = np.zeros((k, k))
            for j in range(k):
                sel = m == j
                gE[:, j] = (gaps[sel, None] * E[sel]).sum(axis=0)
            g_beta -= alpha * gE
        else:
            g_alpha -= counts[None, :]
    return ll, (g_mu, g_alpha, g_beta)


def log_likelihood(model: HawkesModel, seq: EventSequence, mode: Mode = "facilitated") -> float:
    if seq.k != model.k:
        raise ValueError(f"sequence has {seq.k} types but model has {model.k}")
    ll, _ = _loglik(model.mu, model.alpha, model.beta, seq, mode, grad=False)
    return ll


def log_likelihood_exact(model: HawkesModel, seq: EventSequence) -> float:
    """Sum of log-intensities at events minus the closed-form compensator on [0, T]."""
    return log_likelihood(model, seq, "exact")


def log_likelihood_facilitated(model: HawkesModel, seq: EventSequence) -> float:
    """Long-window approximation: each event contributes its full offspring mass to the compensator."""
    return log_likelihood(model, seq, "facilitated")


def compensator_exact(model: HawkesModel, seq: EventSequence) -> float:
    """Closed-form ``sum_i int_0^T lambda_i(s) ds``."""
    m = seq.types
    gaps = seq.horizon - seq.times
    kern = model.alpha[:, m] * -np.expm1(-model.beta[:, m] * gaps[None, :])
    return float(seq.horizon * model.mu.sum() + kern.sum())


def log_posterior(
    params, priors: PriorSpec, seq: EventSequence, mode: Mode = "facilitated"
) -> float:
    """Log-likelihood plus log-prior; ``-inf`` outside the support."""
    theta, k = _as_vector(params)
    if seq.k != k:
        raise ValueError(f"sequence has {seq.k} types but parameters have {k}")
    lp = log_prior(theta, priors)
    if not np.isfinite(lp):
        return -np.inf
    mu, alpha, beta = _split(theta, k)
    if np.any(mu <= 0) or np.any(beta <= 0):
        return -np.inf
    ll, _ = _loglik(mu, alpha, beta, seq, mode, grad=False)
    return ll + lp


def grad_log_posterior(
    params, priors: PriorSpec, seq: EventSequence, mode: Mode = "facilitated"
) -> np.ndarray:
    """Analytic natural-scale gradient, flat in ``param_names`` order."""
    theta, k = _as_vector(params)
    model = params if isinstance(params, HawkesModel) else HawkesModel.from_vector(theta, k)
    if seq.k != k:
        raise ValueError(f"sequence has {seq.k} types but parameters have {k}")
    _, (g_mu, g_alpha, g_beta) = _loglik(
        model.mu, model.alpha, model.beta, seq, mode, grad=True
    )
    p_mu, p_alpha, p_beta = _grad_log_prior(model.mu, model.alpha, model.beta, priors)
    return np.concatenate(
        [g_mu + p_mu, (g_alpha + p_alpha).ravel(), (g_beta + p_beta).ravel()]
    )


# --- unconstrained coordinates -------------------------------------------------

def to_unconstrained(params) -> np.ndarray:
    theta, k = _as_vector(params)
    mu, alpha, beta = _split(theta, k)
    with np.errstate(divide="ignore"):
        return np.concatenate(
            [np.log(mu), (np.log(alpha) - np.log1p(-alpha)).ravel(), np.log(beta).ravel()]
        )


def from_unconstrained(z, k: int = 2) -> np.ndarray:
    """Natural-scale vector from ``(log mu, logit alpha, log beta)``."""
    z = np.asarray(z, float)
    zm, za, zb = z[:k], z[k : k + k * k], z[k + k * k :]
    with np.errstate(over="ignore"):
        return np.concatenate([np.exp(zm), special.expit(za), np.exp(zb)])


def log_posterior_unconstrained(
    z,
    priors: PriorSpec,
    seq: EventSequence,
    mode: Mode = "facilitated",
    grad: bool = True,
    jacobian: bool = True,
):
    """Log-density of the unconstrained coordinates and its gradient.

    With ``jacobian=True`` this is the density of ``z`` itself (what a
    sampler in ``z`` targets). With ``jacobian=False`` it is the natural-scale
    log-posterior evaluated at ``theta(z)``, whose maximiser is the MAP.

    Returns ``(value, gradient)``; gradient is ``None`` when ``grad=False``
    and ``value`` is ``-inf`` for points the transform maps outside the
    support (alpha rounding to 0 or 1, truncated priors).
    """
    z = np.asarray(z, float)
    k = seq.k
    theta = from_unconstrained(z, k)
    mu, alpha, beta = _split(theta, k)
    bad = (
        not np.all(np.isfinite(theta))
        or np.any(mu <= 0)
        or np.any(beta <= 0)
        or np.any(alpha <= 0)
        or np.any(alpha >= 1)
    )
    if bad:
        return -np.inf, (np.zeros_like(z) if grad else None)
    lp = log_prior(theta, priors)
    if not np.isfinite(lp):
        return -np.inf, (np.zeros_like(z) if grad else None)
    ll, g = _loglik(mu, alpha, beta, seq, mode, grad=grad)
    value = ll + lp
    if jacobian:
        value += (
            float(np.sum(np.log(mu)))
            + float(np.sum(np.log(alpha) + np.log1p(-alpha)))
            + float(np.sum(np.log(beta)))
        )
    if not grad:
        return value, None
    p_mu, p_alpha, p_beta = _grad_log_prior(mu, alpha, beta, priors)
    g_mu, g_alpha, g_beta = g
    j = 1.0 if jacobian else 0.0
    gz_mu = (g_mu + p_mu) * mu + j
    gz_alpha = (g_alpha + p_alpha) * alpha * (1.0 - alpha) + j * (1.0 - 2.0 * alpha)
    gz_beta = (g_beta + p_beta) * beta + j
    return value, np.concatenate([gz_mu, gz_alpha.ravel(), gz_beta.ravel()])
