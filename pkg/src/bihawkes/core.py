"""Domain types and conditional intensity of K-type exponential Hawkes processes.

Time is measured in days throughout. Type indices exposed to callers are
1-based (type 1 = "die at the scene", type 2 = "live" for the two-type
incident model); arrays are indexed 0-based internally.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field

import numpy as np

from bihawkes import _kernels

TYPE_LABELS = {1: "die_at_scene", 2: "live"}


class InstabilityError(ValueError):
    """Raised when the reproduction matrix has spectral radius >= 1."""

    def __init__(self, spectral_radius: float):
        self.spectral_radius = float(spectral_radius)
        super().__init__(
            f"unstable model: spectral radius of alpha is {self.spectral_radius:.6g} (must be < 1)"
        )


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Ordered, typed event times on the observation window ``[0, horizon]``.

    ``marks`` hold 1-based type indices. ``origin_date`` is the calendar date
    mapped to ``t = 0`` and is only metadata; ``source_ids`` is optional.
    """

    times: np.ndarray
    marks: np.ndarray
    horizon: float
    k: int = 2
    origin_date: _dt.date | None = None
    source_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        times = _frozen_array(self.times, float).reshape(-1)
        marks = _frozen_array(self.marks, np.int64).reshape(-1)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "horizon", float(self.horizon))
        if times.shape != marks.shape:
            raise ValueError("times and marks must have the same length")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not np.all(np.isfinite(times)) or not np.isfinite(self.horizon):
            raise ValueError("event times and horizon must be finite")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("event times must be strictly increasing")
            if times[0] < 0:
                raise ValueError("event times must be >= 0")
            if times[-1] > self.horizon:
                raise ValueError(
                    f"last event time {times[-1]} exceeds horizon {self.horizon}"
                )
            if marks.min() < 1 or marks.max() > self.k:
                raise ValueError(f"marks must lie in 1..{self.k}")
        elif self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.source_ids is not None:
            ids = tuple(str(s) for s in self.source_ids)
            if len(ids) != times.size:
                raise ValueError("source_ids must match the number of events")
            object.__setattr__(self, "source_ids", ids)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def types(self) -> np.ndarray:
        """0-based type of each event."""
        return self.marks - 1

    @property
    def counts(self) -> np.ndarray:
        """Number of events of each type (n^1, ..., n^K)."""
        return np.bincount(self.types, minlength=self.k)[: self.k]

    def times_of(self, i: int) -> np.ndarray:
        return self.times[self.marks == i]

    def event_dates(self) -> list[_dt.date]:
        """Calendar date of each event; tie-break offsets stay within the day."""
        if self.origin_date is None:
            if len(self) == 0:
                return []
            raise ValueError("sequence has no origin_date")
        return [self.origin_date + _dt.timedelta(days=int(np.floor(t))) for t in self.times]

    def with_horizon(self, horizon: float) -> "EventSequence":
        return EventSequence(
            self.times, self.marks, horizon, self.k, self.origin_date, self.source_ids
        )


@dataclass(frozen=True, eq=False)
class HawkesModel:
    """Baseline rates ``mu`` (events/day), reproduction matrix ``alpha`` and
    decay matrix ``beta`` (1/day).

    ``alpha[i, j]`` is the expected number of type-(i+1) children of one
    type-(j+1) event; the kernel for that channel is
    ``alpha[i, j] * beta[i, j] * exp(-beta[i, j] * lag)``.

    Stability is not enforced at construction since posterior draws may be
    supercritical; see :attr:`spectral_radius` and :func:`check_stable`.
    """

    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    k: int = field(init=False)

    def __post_init__(self):
        mu = _frozen_array(self.mu, float).reshape(-1)
        k = mu.size
        alpha = _frozen_array(self.alpha, float).reshape(k, k)
        beta = _frozen_array(self.beta, float).reshape(k, k)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "k", k)
        if k < 1:
            raise ValueError("model needs at least one type")
        for name, arr in (("mu", mu), ("alpha", alpha), ("beta", beta)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(mu <= 0):
            raise ValueError("all mu must be > 0")
        if np.any(beta <= 0):
            raise ValueError("all beta must be > 0")
        if np.any(alpha < 0) or np.any(alpha >= 1):
            raise ValueError("all alpha must lie in [0, 1)")

    @classmethod
    def from_vector(cls, theta, k: int = 2) -> "HawkesModel":
        """Build from the flat natural-scale vector ``(mu, alpha row-major, beta row-major)``."""
        theta = np.asarray(theta, float)
        if theta.size != k + 2 * k * k:
            raise ValueError(f"expected {k + 2 * k * k} parameters, got {theta.size}")
        return cls(theta[:k], theta[k : k + k * k], theta[k + k * k :])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.mu, self.alpha.ravel(), self.beta.ravel()])

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.alpha)

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HawkesModel":
        missing = {"mu", "alpha", "beta"} - set(d)
        if missing:
            raise ValueError(f"parameter mapping lacks keys: {sorted(missing)}")
        return cls(d["mu"], d["alpha"], d["beta"])


def param_names(k: int = 2) -> list[str]:
    """Flat parameter names in vector order: mu1.., a11, a12, .., b11, ..."""
    idx = [f"{i}{j}" for i in range(1, k + 1) for j in range(1, k + 1)]
    return [f"mu{i}" for i in range(1, k + 1)] + [f"a{s}" for s in idx] + [f"b{s}" for s in idx]


@dataclass(frozen=True)
class BranchingSummary:
    spectral_radius: float
    expected_rates: np.ndarray
    timescales: np.ndarray


def spectral_radius(alpha) -> float:
    """Largest eigenvalue modulus; closed form for K <= 2."""
    a = np.asarray(alpha, float)
    k = a.shape[0]
    if k == 1:
        return abs(float(a[0, 0]))
    if k == 2:
        tr = a[0, 0] + a[1, 1]
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        disc = tr * tr / 4.0 - det
        if disc >= 0:
            r = np.sqrt(disc)
            return float(max(abs(tr / 2 + r), abs(tr / 2 - r)))
        return float(np.sqrt(det))  # complex pair: |z|^2 = det
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def check_stable(model: HawkesModel) -> float:
    rho = model.spectral_radius
    if not rho < 1.0:
        raise InstabilityError(rho)
    return rho


def branching_summary(model: HawkesModel) -> BranchingSummary:
    """Spectral radius, stationary rates ``(I - alpha)^{-1} mu`` and contagion timescales ``1/beta``."""
    rho = check_stable(model)
    rates = np.linalg.solve(np.eye(model.k) - model.alpha, model.mu)
    return BranchingSummary(rho, rates, 1.0 / model.beta)


def _check_compatible(model: HawkesModel, seq: EventSequence) -> None:
    if seq.k != model.k:
        raise ValueError(f"sequence has {seq.k} types but model has {model.k}")


def intensity(model: HawkesModel, seq: EventSequence, t: float, i: int) -> float:
    """Conditional intensity of type ``i`` (1-based) at time ``t``.

    Direct double sum over the history; events at exactly ``t`` are excluded.
    """
    _check_compatible(model, seq)
    if not 1 <= i <= model.k:
        raise ValueError(f"type index {i} outside 1..{model.k}")
    t = float(t)
    if not (np.isfinite(t) and 0.0 <= t <= seq.horizon):
        raise ValueError(f"t={t} outside [0, {seq.horizon}]")
    past = seq.times < t
    lags = t - seq.times[past]
    j = seq.types[past]
    a = model.alpha[i - 1, j]
    b = model.beta[i - 1, j]
    return float(model.mu[i - 1] + np.sum(a * b * np.exp(-b * lags)))


def intensities_at_events(model: HawkesModel, seq: EventSequence) -> np.ndarray:
    """Intensity of each event's own type just before that event (O(n K^2) recursion)."""
    _check_compatible(model, seq)
    if len(seq) == 0:
        return np.empty(0)
    m = seq.types
    S, _, _ = _kernels.event_sums(seq.times, m, model.beta)
    return model.mu[m] + np.sum(model.alpha[m] * model.beta[m] * S, axis=1)


def intensity_trace(
    model: HawkesModel, seq: EventSequence, step: float = 0.1
) -> tuple[np.ndarray, np.ndarray]:
    """All-type intensities on the uniform grid ``0, step, 2 step, ... <= horizon``.

    Returns ``(grid, lam)`` with ``lam`` of shape (len(grid), K).
    """
    _check_compatible(model, seq)
    if not step > 0:
        raise ValueError("grid step must be > 0")
    n_steps = int(np.floor(seq.horizon / step + 1e-9))
    grid = np.arange(n_steps + 1) * step
    lam = _kernels.grid_intensity(
        grid, seq.times, seq.types, model.mu, model.alpha, model.beta
    )
    return grid, lam
