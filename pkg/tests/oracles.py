"""Independent reference computations used only by the tests.

Nothing here calls the package's recursions or closed forms.
"""
import math

import numpy as np
from scipy import integrate


def naive_intensity(mu, alpha, beta, times, marks, t, i):
    """mu_i + sum over strictly earlier events, 0-based type i, 1-based marks."""
    total = mu[i]
    for tk, mk in zip(times, marks):
        if tk < t:
            j = mk - 1
            total += alpha[i][j] * beta[i][j] * math.exp(-beta[i][j] * (t - tk))
    return total


def _vector_intensity(mu, alpha, beta, times, types):
    def lam(s, i):
        past = times < s
        j = types[past]
        b = beta[i, j]
        return mu[i] + np.sum(alpha[i, j] * b * np.exp(-b * (s - times[past])))

    return lam


def quad_compensator(model, seq, upto=None, types=None):
    """Adaptive quadrature of sum_{i in types} lambda_i over [0, upto] (piecewise between events)."""
    upto = seq.horizon if upto is None else upto
    types = range(model.k) if types is None else types
    lam = _vector_intensity(
        np.asarray(model.mu), np.asarray(model.alpha), np.asarray(model.beta),
        np.asarray(seq.times), np.asarray(seq.marks) - 1,
    )
    knots = [0.0] + [t for t in seq.times if 0.0 < t < upto] + [upto]
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        if hi <= lo:
            continue
        for i in types:
            val, _ = integrate.quad(lambda s: lam(s, i), lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
            total += val
    return total


def poisson_loglik(mu, counts, T):
    return sum(n * math.log(m) - m * T for m, n in zip(mu, counts))


def expected_counts_ode(model, T):
    """E[N_i(T)] from the mean-intensity ODE, integrated with scipy (includes the start-up transient)."""
    from scipy.integrate import solve_ivp

    mu, a, b = np.asarray(model.mu), np.asarray(model.alpha), np.asarray(model.beta)
    k = mu.size

    def rhs(_, y):
        x = y[: k * k].reshape(k, k)
        m = mu + x.sum(axis=1)
        dx = -b * x + a * b * m[None, :]
        return np.concatenate([dx.ravel(), m])

    sol = solve_ivp(rhs, (0.0, T), np.zeros(k * k + k), rtol=1e-10, atol=1e-12)
    return sol.y[k * k :, -1]
