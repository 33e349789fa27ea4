"""Compiled recursions for exponential-kernel excitation sums.

All kernels take 0-based integer types and strictly increasing times.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def event_sums(times, types, beta):
    """Per-event excitation sums seen by the type of each event.

    Returns ``(S, D, C)``, each of shape (n, K):

    * ``S[n, j] = sum_{k<n, type j} exp(-beta[m_n, j] * (t_n - t_k))``
    * ``D[n, j] = sum_{k<n, type j} (t_n - t_k) exp(-beta[m_n, j] * (t_n - t_k))``
    * ``C[n, j]`` = number of type-j events before event n.

    Runs in O(n K^2) by carrying a decaying state per (i, j) channel.
    """
    n = times.shape[0]
    K = beta.shape[0]
    state = np.zeros((K, K))
    lag = np.zeros((K, K))
    count = np.zeros(K)
    S = np.empty((n, K))
    D = np.empty((n, K))
    C = np.empty((n, K))
    prev = 0.0
    for e in range(n):
        t = times[e]
        if e > 0:
            dt = t - prev
            for i in range(K):
                for j in range(K):
                    decay = np.exp(-beta[i, j] * dt)
                    lag[i, j] = decay * (lag[i, j] + dt * state[i, j])
                    state[i, j] = decay * state[i, j]
        m = types[e]
        for j in range(K):
            S[e, j] = state[m, j]
            D[e, j] = lag[m, j]
            C[e, j] = count[j]
        for i in range(K):
            state[i, m] += 1.0
        count[m] += 1.0
        prev = t
    return S, D, C


@njit(cache=True, nogil=True)
def grid_intensity(grid, times, types, mu, alpha, beta):
    """Intensity of every type on an ascending grid (events at a grid point are excluded)."""
    g = grid.shape[0]
    n = times.shape[0]
    K = mu.shape[0]
    out = np.empty((g, K))
    state = np.zeros((K, K))  # weighted by alpha * beta
    clock = 0.0
    e = 0
    for q in range(g):
        t = grid[q]
        while e < n and times[e] < t:
            dt = times[e] - clock
            for i in range(K):
                for j in range(K):
                    state[i, j] *= np.exp(-beta[i, j] * dt)
            m = types[e]
            for i in range(K):
                state[i, m] += alpha[i, m] * beta[i, m]
            clock = times[e]
            e += 1
        dt = t - clock
        for i in range(K):
            total = mu[i]
            for j in range(K):
                total += state[i, j] * np.exp(-beta[i, j] * dt)
            out[q, i] = total
    return out
