"""Time-rescaling residual analysis with Kolmogorov-Smirnov bands.

Each type is checked on its own: the events of type ``i`` are mapped through
the type-``i`` compensator, ``tau_k = int_0^{t_k} lambda_i(s) ds``. Under the
true model the ``tau_k`` form a unit-rate Poisson process, so ``u_k =
tau_k / tau_max`` should look like sorted uniforms.

Deviation curve convention: the raw curve is ``N(tau) - tau``; the
normalised curve is ``N(tau)/n - tau/tau_max`` evaluated just before and at
each jump, so its largest absolute value equals the one-sample KS statistic
against the uniform distribution and is directly comparable with the band
``+/- c(level)/sqrt(n)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from bihawkes import _kernels
from bihawkes.core import EventSequence, HawkesModel

# below this n the exact finite-sample KS distribution is used
SMALL_SAMPLE_N = 35


def rescale_times(model: HawkesModel, seq: EventSequence, i: int) -> np.ndarray:
    """Compensator of type ``i`` (1-based) evaluated at each type-``i`` event.

    Closed form: ``mu_i t + sum_j alpha_ij * sum_{t_k^j < t} (1 - exp(-beta_ij (t - t_k^j)))``.
    """
    if not 1 <= i <= model.k:
        raise ValueError(f"type index {i} outside 1..{model.k}")
    if seq.k != model.k:
        raise ValueError(f"sequence has {seq.k} types but model has {model.k}")
    if len(seq) == 0:
        return np.empty(0)
    m = seq.types
    S, _, C = _kernels.event_sums(seq.times, m, model.beta)
    sel = m == (i - 1)
    a = model.alpha[i - 1]
    return model.mu[i - 1] * seq.times[sel] + (C[sel] - S[sel]) @ a


def ks_band(n: int, level: float = 0.95) -> float:
    """Half-width of the two-sided KS band for ``n`` uniform points.

    Asymptotic ``c(level)/sqrt(n)`` (c(0.95) = 1.358, c(0.99) = 1.628) for
    ``n >= 35``; the exact finite-``n`` quantile (scipy ``kstwo``) below that.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n < SMALL_SAMPLE_N:
        return float(stats.kstwo.ppf(level, n))
    return float(stats.kstwobign.ppf(level) / np.sqrt(n))


@dataclass
class TypeGof:
    type_index: int
    n: int
    tau: np.ndarray
    tau_max: float
    ks_statistic: float
    band_halfwidth: float
    within_band: bool
    curve_tau: np.ndarray = field(repr=False)
    curve_raw: np.ndarray = field(repr=False)
    curve_normalized: np.ndarray = field(repr=False)
    gap_ks_pvalue: float = float("nan")

    @property
    def empty(self) -> bool:
        return self.n == 0


@dataclass
class GofReport:
    level: float
    types: list[TypeGof]

    def __getitem__(self, i: int) -> TypeGof:
        """Report of type ``i`` (1-based)."""
        return self.types[i - 1]

    @property
    def all_within_band(self) -> bool:
        return all(t.within_band for t in self.types if not t.empty)


def type_gof(model: HawkesModel, seq: EventSequence, i: int, level: float = 0.95) -> TypeGof:
    tau = rescale_times(model, seq, i)
    n = tau.size
    if n == 0:
        e = np.empty(0)
        return TypeGof(i, 0, e, 0.0, float("nan"), float("nan"), True, e, e, e)
    tau_max = float(tau[-1])
    u = tau / tau_max
    k = np.arange(1, n + 1)
    before = (k - 1) / n - u
    after = k / n - u
    curve_tau = np.repeat(tau, 2)
    curve_norm = np.empty(2 * n)
    curve_norm[0::2] = before
    curve_norm[1::2] = after
    curve_raw = np.empty(2 * n)
    curve_raw[0::2] = (k - 1) - tau
    curve_raw[1::2] = k - tau
    d = float(np.max(np.abs(curve_norm)))
    band = ks_band(n, level)
    gaps = np.diff(tau, prepend=0.0)
    pval = float(stats.kstest(gaps, "expon").pvalue)
    return TypeGof(i, n, tau, tau_max, d, band, d <= band, curve_tau, curve_raw, curve_norm, pval)


def gof_report(model: HawkesModel, seq: EventSequence, level: float = 0.95) -> GofReport:
    """Residual analysis of every type; a type without events is reported as empty."""
    return GofReport(level, [type_gof(model, seq, i, level) for i in range(1, model.k + 1)])


def write_gof_csv(path, report: TypeGof, header_comment: str | None = None) -> None:
    """Plot data: tau, normalised deviation, band limits, plus the raw ``N(tau) - tau``."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "deviation", "band_upper", "band_lower", "raw_deviation"])
        b = report.band_halfwidth
        for t, dn, dr in zip(report.curve_tau, report.curve_normalized, report.curve_raw):
            w.writerow([repr(float(t)), repr(float(dn)), repr(b), repr(-b), repr(float(dr))])
