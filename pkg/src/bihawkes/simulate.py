"""Exact simulation of K-type exponential Hawkes processes.

Two independent constructions are provided so that each can check the other:

* :func:`simulate_thinning` -- Ogata thinning with the current total
  intensity as dominating rate (valid because intensities only decay
  between events);
* :func:`simulate_branching` -- Poisson immigrants plus recursive
  Poisson(alpha_ij) offspring at exponential(beta_ij) lags.

Random streams are PCG64 generators seeded from ``SeedSequence([seed,
replicate])``, so replicate ``r`` of a batch is reproducible on its own.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from bihawkes.core import EventSequence, HawkesModel, check_stable

RNG_ALGORITHM = "PCG64"


class RunawayError(RuntimeError):
    """The simulated cascade exceeded ``max_events``."""


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float
    seed: int = 0
    max_events: int = 10_000_000

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if not self.max_events > 0:
            raise ValueError("max_events must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 stream for ``(seed, *keys)``; ``make_rng(seed, r)`` is replicate r."""
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _after(prev: float, t: float) -> float:
    # collision at floating-point resolution: move one ulp past the previous event
    return t if t > prev else float(np.nextafter(prev, np.inf))


def simulate_thinning(
    model: HawkesModel, config: SimulationConfig, replicate: int = 0
) -> EventSequence:
    check_stable(model)
    rng = make_rng(config.seed, replicate)
    K, T = model.k, config.horizon
    mu, alpha, beta = model.mu, model.alpha, model.beta
    jump = alpha * beta
    state = np.zeros((K, K))  # excitation of channel (i, j) at the current time
    times: list[float] = []
    marks: list[int] = []
    t = 0.0
    lam_bar = float(mu.sum())
    while True:
        w = rng.exponential(1.0 / lam_bar)
        t_new = t + w
        if t_new > T:
            break
        state *= np.exp(-beta * w)
        lam = mu + state.sum(axis=1)
        total = float(lam.sum())
        if rng.uniform() * lam_bar <= total:
            i = int(np.searchsorted(np.cumsum(lam), rng.uniform() * total, side="right"))
            i = min(i, K - 1)
            if times:
                t_new = _after(times[-1], t_new)
            times.append(t_new)
            marks.append(i + 1)
            if len(times) > config.max_events:
                raise RunawayError(f"more than {config.max_events} events before t={t_new:.6g}")
            state[:, i] += jump[:, i]
            lam_bar = total + float(jump[:, i].sum())
        else:
            lam_bar = total
        t = t_new
    return EventSequence(np.array(times), np.array(marks, dtype=np.int64), T, K)


@dataclass(frozen=True, eq=False)
class BranchingCluster:
    """Cluster realisation: ``parent[e] == -1`` marks an immigrant."""

    sequence: EventSequence
    parent: np.ndarray
    generation: np.ndarray


def branching_cluster(
    model: HawkesModel, config: SimulationConfig, replicate: int = 0, truncate: bool = True
) -> BranchingCluster:
    """Immigrant/offspring construction; with ``truncate=False`` children born
    after the horizon are kept (useful to check lag distributions)."""
    check_stable(model)
    rng = make_rng(config.seed, replicate)
    K, T = model.k, config.horizon

    t_parts, m_parts, p_parts, g_parts = [], [], [], []
    n_imm = rng.poisson(model.mu * T)
    gen_t = np.concatenate([rng.uniform(0.0, T, n) for n in n_imm])
    gen_m = np.repeat(np.arange(K), n_imm)
    gen_p = np.full(gen_t.size, -1)
    offset = 0
    generation = 0
    while gen_t.size:
        t_parts.append(gen_t)
        m_parts.append(gen_m)
        p_parts.append(gen_p)
        g_parts.append(np.full(gen_t.size, generation))
        ids = np.arange(offset, offset + gen_t.size)
        offset += gen_t.size
        if offset > config.max_events:
            raise RunawayError(f"more than {config.max_events} events in generation {generation}")
        kids_t, kids_m, kids_p = [], [], []
        for i in range(K):
            n_kids = rng.poisson(model.alpha[i, gen_m])
            parents = np.repeat(np.arange(gen_t.size), n_kids)
            lags = rng.exponential(1.0 / model.beta[i, gen_m[parents]])
            kids_t.append(gen_t[parents] + lags)
            kids_m.append(np.full(parents.size, i))
            kids_p.append(ids[parents])
        gen_t = np.concatenate(kids_t)
        gen_m = np.concatenate(kids_m)
        gen_p = np.concatenate(kids_p)
        if truncate:
            keep = gen_t <= T
            gen_t, gen_m, gen_p = gen_t[keep], gen_m[keep], gen_p[keep]
        generation += 1

    if t_parts:
        times = np.concatenate(t_parts)
        types = np.concatenate(m_parts)
        parent = np.concatenate(p_parts)
        gens = np.concatenate(g_parts)
    else:
        times, types = np.empty(0), np.empty(0, dtype=np.int64)
        parent, gens = np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    order = np.argsort(times, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    times, types, gens = times[order], types[order], gens[order]
    parent = parent[order]
    parent = np.where(parent >= 0, rank[np.maximum(parent, 0)], -1)
    for e in range(1, times.size):
        times[e] = _after(times[e - 1], times[e])
    horizon = max(T, float(times[-1])) if times.size else T
    seq = EventSequence(times, types + 1, horizon, K)
    return BranchingCluster(seq, parent, gens)


def simulate_branching(
    model: HawkesModel, config: SimulationConfig, replicate: int = 0
) -> EventSequence:
    return branching_cluster(model, config, replicate).sequence


SIMULATORS = {"thinning": simulate_thinning, "branching": simulate_branching}


def simulate(
    model: HawkesModel, config: SimulationConfig, method: str = "thinning", replicate: int = 0
) -> EventSequence:
    try:
        fn = SIMULATORS[method]
    except KeyError:
        raise ValueError(f"unknown simulation method {method!r}") from None
    return fn(model, config, replicate)


def replicate_counts(
    model: HawkesModel, config: SimulationConfig, n_replicates: int, method: str = "thinning"
) -> np.ndarray:
    """Per-type event counts, shape (n_replicates, K)."""
    return np.array(
        [simulate(model, config, method, r).counts for r in range(n_replicates)]
    )


def write_intensity_trace(path, grid: np.ndarray, lam: np.ndarray, header_comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"lambda{i + 1}" for i in range(lam.shape[1])])
        for t, row in zip(grid, lam):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
