"""MAP estimation, adaptive Metropolis posterior sampling and posterior summaries.

Both the optimiser and the sampler run on ``z = (log mu, logit alpha, log
beta)`` and target the density of ``z`` (log-Jacobian included). The MAP
returned is therefore the mode in these coordinates, which always lies in
the interior of the support.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from bihawkes.core import EventSequence, HawkesModel, param_names
from bihawkes.likelihood import (
    MODES,
    PriorSpec,
    from_unconstrained,
    log_posterior_unconstrained,
    to_unconstrained,
)
from bihawkes.simulate import make_rng

log = logging.getLogger(__name__)

QUANTILE_METHOD = "linear"  # Hyndman-Fan type 7
# source types with fewer events than this get a low-information warning
MIN_EVENTS_IDENTIFIABLE = 5
# 2.5% quantiles below this are "not statistically significant" at 3-decimal reporting precision
SIGNIFICANCE_THRESHOLD = 5e-4  # below this the 2.5% quantile prints as 0.000
ACCEPTANCE_BOUNDS = (0.05, 0.6)

_START_STREAM = 0
_CHAIN_STREAM = 1


class FitError(RuntimeError):
    def __init__(self, msg, traces=()):
        super().__init__(msg)
        self.traces = list(traces)


@dataclass(frozen=True)
class FitOptions:
    n_starts: int = 8
    seed: int = 0
    mode: str = "facilitated"
    maxiter: int = 5000
    gtol: float = 1e-5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown likelihood mode {self.mode!r}")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


@dataclass
class StartTrace:
    start: np.ndarray
    value: float
    grad_norm: float
    n_iter: int
    message: str


@dataclass
class MapResult:
    model: HawkesModel
    z: np.ndarray
    log_density: float
    grad_norm: float
    neg_hessian: np.ndarray
    traces: list[StartTrace]
    best_start: int
    warnings: list[str] = field(default_factory=list)
    low_information: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.grad_norm < 1e-5


def _identifiability_warnings(seq: EventSequence) -> tuple[list[str], list[str]]:
    warnings, flagged = [], []
    names = param_names(seq.k)
    for j, n_j in enumerate(seq.counts):
        if n_j == 0:
            warnings.append(
                f"type {j + 1} has no events; mu{j + 1} is driven by the prior"
            )
        if n_j < MIN_EVENTS_IDENTIFIABLE:
            col = [f"a{i + 1}{j + 1}" for i in range(seq.k)]
            flagged.extend(c for c in col if c in names)
            warnings.append(
                f"type {j + 1} has {n_j} events (< {MIN_EVENTS_IDENTIFIABLE}); "
                f"excitation from type {j + 1} ({', '.join(col)}) is weakly identified"
            )
    return warnings, flagged


Z_BOX = 20.0  # |z| bound for the optimiser: alpha in [2e-9, 1 - 2e-9], mu and beta within e^+-20


def _objective(seq, priors, mode):
    def f(z):
        v, g = log_posterior_unconstrained(z, priors, seq, mode, jacobian=False)
        if not np.isfinite(v):
            return 1e300, np.zeros_like(z)
        return -v, -g

    return f


def numerical_neg_hessian(
    z, seq, priors, mode, h: float = 1e-5, jacobian: bool = True
) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrised."""
    d = z.size
    H = np.empty((d, d))
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        _, gp = log_posterior_unconstrained(z + e, priors, seq, mode, jacobian=jacobian)
        _, gm = log_posterior_unconstrained(z - e, priors, seq, mode, jacobian=jacobian)
        H[a] = -(gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def _newton_polish(z, seq, priors, mode, tol=1e-9, max_iter=30):
    """Damped Newton on the coordinates not pinned at the box."""

    def evaluate(x):
        return log_posterior_unconstrained(x, priors, seq, mode, jacobian=False)

    v, g = evaluate(z)
    for _ in range(max_iter):
        free = np.abs(z) < Z_BOX - 1e-9
        if not np.any(free) or np.linalg.norm(g[free]) < tol:
            break
        H = numerical_neg_hessian(z, seq, priors, mode, jacobian=False)[np.ix_(free, free)]
        damp = 0.0
        w_min = np.linalg.eigvalsh(H).min()
        if w_min <= 1e-10:
            damp = 1e-6 - w_min
        step = np.zeros_like(z)
        step[free] = np.linalg.solve(H + damp * np.eye(H.shape[0]), g[free])
        t = 1.0
        while t > 1e-8:
            z_new = np.clip(z + t * step, -Z_BOX, Z_BOX)
            v_new, g_new = evaluate(z_new)
            if np.isfinite(v_new) and (
                v_new >= v - 1e-12 * abs(v) or np.linalg.norm(g_new[free]) < np.linalg.norm(g[free])
            ):
                break
            t *= 0.5
        else:
            break
        z, v, g = z_new, v_new, g_new
    return z, v, g


def fit_map(
    seq: EventSequence, priors: PriorSpec = PriorSpec(), opts: FitOptions = FitOptions()
) -> MapResult:
    """Multi-start posterior mode, searched in unconstrained coordinates.

    The objective is the natural-scale log-posterior at ``theta(z)`` (no
    Jacobian), so the optimum is the MAP of ``(mu, alpha, beta)``; ``z`` is
    confined to ``[-20, 20]`` so boundary modes (alpha -> 0) stay finite.
    Start ``s`` is a prior draw from the stream ``(seed, 0, s)``; each start
    is optimised with L-BFGS-B and then polished by damped Newton steps on a
    finite-difference Hessian of the analytic gradient. The best local
    optimum wins. ``neg_hessian`` is taken of the ``z``-density (Jacobian
    included) and seeds the sampler's proposal covariance.
    """
    warnings, flagged = _identifiability_warnings(seq)
    for w in warnings:
        log.warning(w)
    f = _objective(seq, priors, opts.mode)
    traces: list[StartTrace] = []
    best = None
    bounds = [(-Z_BOX, Z_BOX)] * (seq.k + 2 * seq.k * seq.k)
    for s in range(opts.n_starts):
        rng = make_rng(opts.seed, _START_STREAM, s)
        start = priors.sample(rng, seq.k).to_vector()
        z0 = np.clip(to_unconstrained(start), -Z_BOX, Z_BOX)
        res = optimize.minimize(
            f, z0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": opts.maxiter, "gtol": 1e-10, "ftol": 1e-15, "maxcor": 20},
        )
        z, v, g = res.x, -res.fun, -res.jac
        if np.isfinite(v) and v > -1e299:
            z, v, g = _newton_polish(z, seq, priors, opts.mode)
        gn = float(np.linalg.norm(g)) if np.isfinite(v) else float("inf")
        traces.append(StartTrace(start, float(v), gn, int(res.nit), str(res.message)))
        if np.isfinite(v) and v > -1e299 and (best is None or v > best[1]):
            best = (z, v, gn, s)
    if best is None:
        raise FitError("all MAP starts diverged", traces)
    z, v, gn, s = best
    if gn >= opts.gtol:
        msg = f"MAP gradient norm {gn:.3g} above tolerance {opts.gtol:g}"
        log.warning(msg)
        warnings.append(msg)
    H = numerical_neg_hessian(z, seq, priors, opts.mode, jacobian=True)
    model = HawkesModel.from_vector(from_unconstrained(z, seq.k), seq.k)
    return MapResult(model, z, v, gn, H, traces, s, warnings, flagged)


# --- sampling ------------------------------------------------------------------

@dataclass(frozen=True)
class SamplerOptions:
    n_warmup: int = 5000
    n_chains: int = 4
    seed: int = 0
    mode: str = "facilitated"
    target_accept: float = 0.234
    n_jobs: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown likelihood mode {self.mode!r}")
        if self.n_chains < 1 or self.n_warmup < 0:
            raise ValueError("need n_chains >= 1 and n_warmup >= 0")


@dataclass
class PosteriorChain:
    """Kept draws (natural scale, ``param_names`` order) of one or more merged chains."""

    draws: np.ndarray
    log_posts: np.ndarray
    acceptance_rate: float
    n_warmup: int = 0
    mode: str = "facilitated"
    k: int = 2
    chain_index: np.ndarray | None = None
    chain_acceptance: list[float] = field(default_factory=list)
    counts: list[int] | None = None
    seed: int | None = None
    messages: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, float))
        self.log_posts = np.asarray(self.log_posts, float)
        if self.chain_index is None:
            self.chain_index = np.zeros(len(self.draws), dtype=int)

    @property
    def n_kept(self) -> int:
        return int(self.draws.shape[0])

    @property
    def names(self) -> list[str]:
        return param_names(self.k)

    @property
    def diagnostics_ok(self) -> bool:
        lo, hi = ACCEPTANCE_BOUNDS
        rates = self.chain_acceptance or [self.acceptance_rate]
        return all(lo <= r <= hi for r in rates)

    def chain(self, c: int) -> "PosteriorChain":
        sel = self.chain_index == c
        acc = self.chain_acceptance[c] if self.chain_acceptance else self.acceptance_rate
        return PosteriorChain(
            self.draws[sel], self.log_posts[sel], acc, self.n_warmup, self.mode, self.k,
            None, [acc], self.counts, self.seed,
        )

    def mean_model(self) -> HawkesModel:
        return HawkesModel.from_vector(self.draws.mean(axis=0), self.k)


def _log_jacobian(theta, k):
    mu, a, b = theta[:k], theta[k : k + k * k], theta[k + k * k :]
    return float(np.sum(np.log(mu)) + np.sum(np.log(a) + np.log1p(-a)) + np.sum(np.log(b)))


def _psd_cov(H: np.ndarray, d: int) -> np.ndarray:
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError:
        return 0.01 * np.eye(d)
    if not np.all(np.isfinite(w)):
        return 0.01 * np.eye(d)
    w = np.clip(w, 1e-2, 1e8)
    return (V / w) @ V.T


def _run_chain(args):
    seq, priors, mode, z0, cov0, n_warmup, n_kept, seed, c, target = args
    rng = make_rng(seed, _CHAIN_STREAM, c)
    d = z0.size
    k = seq.k

    def f(z):
        return log_posterior_unconstrained(z, priors, seq, mode, grad=False)[0]

    z = z0.copy()
    v = f(z)
    cov = cov0.copy()
    L = np.linalg.cholesky(cov)
    log_s = math.log(2.38**2 / d)
    mean = np.zeros(d)
    m2 = np.zeros((d, d))
    n_seen = 0
    adapt_from = n_warmup // 10

    draws = np.empty((n_kept, d))
    vals = np.empty(n_kept)
    accepted = 0
    for it in range(n_warmup + n_kept):
        prop = z + math.exp(0.5 * log_s) * (L @ rng.standard_normal(d))
        vp = f(prop)
        log_a = vp - v if np.isfinite(vp) else -np.inf
        if math.log(rng.uniform()) < log_a:
            z, v = prop, vp
            if it >= n_warmup:
                accepted += 1
        if it < n_warmup:
            a = math.exp(min(0.0, log_a))
            log_s += (it + 1) ** -0.6 * (a - target)
            if it >= adapt_from:
                n_seen += 1
                delta = z - mean
                mean += delta / n_seen
                m2 += np.outer(delta, z - mean)
                if n_seen >= 200 and n_seen % 100 == 0:
                    emp = m2 / (n_seen - 1) + 1e-10 * np.eye(d)
                    try:
                        L = np.linalg.cholesky(emp)
                    except np.linalg.LinAlgError:
                        pass
        else:
            draws[it - n_warmup] = z
            vals[it - n_warmup] = v
    theta = np.array([from_unconstrained(zz, k) for zz in draws]).reshape(n_kept, d)
    log_posts = np.array([vv - _log_jacobian(t, k) for vv, t in zip(vals, theta)])
    rate = accepted / n_kept if n_kept else float("nan")
    return theta, log_posts, rate


def sample_posterior(
    seq: EventSequence,
    priors: PriorSpec = PriorSpec(),
    n_samples: int = 5000,
    opts: SamplerOptions = SamplerOptions(),
    map_result: MapResult | None = None,
) -> PosteriorChain:
    """Adaptive random-walk Metropolis, all parameters updated jointly.

    Each chain starts at the MAP point with the inverse negative Hessian as
    proposal covariance. During warmup the proposal scale follows a
    Robbins-Monro recursion toward ``target_accept`` and the covariance is
    replaced by the running covariance of the warmup draws; the kernel is
    frozen for the ``n_samples`` kept draws. Chain ``c`` uses the stream
    ``(seed, 1, c)``; chains are merged in index order.
    """
    if map_result is None:
        map_result = fit_map(seq, priors, FitOptions(seed=opts.seed, mode=opts.mode))
    d = map_result.z.size
    cov0 = _psd_cov(map_result.neg_hessian, d)
    jobs = [
        (seq, priors, opts.mode, map_result.z, cov0, opts.n_warmup, n_samples, opts.seed, c,
         opts.target_accept)
        for c in range(opts.n_chains)
    ]
    if opts.n_jobs > 1 and opts.n_chains > 1:
        with ProcessPoolExecutor(max_workers=opts.n_jobs) as ex:
            results = list(ex.map(_run_chain, jobs))
    else:
        results = [_run_chain(j) for j in jobs]

    draws = np.concatenate([r[0] for r in results])
    log_posts = np.concatenate([r[1] for r in results])
    rates = [float(r[2]) for r in results]
    index = np.repeat(np.arange(opts.n_chains), n_samples)
    chain = PosteriorChain(
        draws, log_posts, float(np.mean(rates)), opts.n_warmup, opts.mode, seq.k,
        index, rates, seq.counts.tolist(), opts.seed, list(map_result.warnings),
    )
    lo, hi = ACCEPTANCE_BOUNDS
    for c, r in enumerate(rates):
        if not lo <= r <= hi:
            msg = f"chain {c}: acceptance rate {r:.3f} outside [{lo}, {hi}]"
            log.warning(msg)
            chain.messages.append(msg)
    return chain


def batch_means_mcse(x: np.ndarray, n_batches: int = 50) -> float:
    """Monte Carlo standard error of the mean by non-overlapping batch means."""
    x = np.asarray(x, float)
    b = len(x) // n_batches
    if b < 1:
        raise ValueError("chain too short for batch means")
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


# --- summaries -----------------------------------------------------------------

@dataclass(frozen=True)
class ParamRow:
    name: str
    mean: float
    q025: float
    q975: float
    sd: float


@dataclass(frozen=True)
class TimescaleRow:
    """Contagion timescale ``1/beta`` of one channel, in days."""

    name: str
    of_mean: float
    mean: float
    q025: float
    q975: float


@dataclass
class ParamSummary:
    rows: dict[str, ParamRow]
    timescales: dict[str, TimescaleRow]
    significant: dict[str, bool]
    n_draws: int
    warnings: list[str] = field(default_factory=list)
    quantile_method: str = QUANTILE_METHOD

    def __getitem__(self, name: str) -> ParamRow:
        return self.rows[name]

    def records(self) -> list[dict]:
        out = []
        for name, r in self.rows.items():
            rec = {"parameter": name, "mean": r.mean, "q2.5": r.q025, "q97.5": r.q975,
                   "sd": r.sd, "timescale_days": None, "timescale_days_mean": None,
                   "significant": None}
            if name in self.timescales:
                ts = self.timescales[name]
                rec["timescale_days"] = ts.of_mean
                rec["timescale_days_mean"] = ts.mean
            if name in self.significant:
                rec["significant"] = self.significant[name]
            out.append(rec)
        return out


def summarize(
    chain: PosteriorChain,
    min_draws: int = 100,
    significance_threshold: float = SIGNIFICANCE_THRESHOLD,
) -> ParamSummary:
    """Posterior means and central 95% intervals (type-7 quantiles).

    Timescales are reported both as ``1/mean(beta)`` (``of_mean``) and as the
    posterior mean of ``1/beta``; their interval is the 95% interval of
    ``1/beta``. An alpha is flagged not significant when its 2.5% quantile
    is below ``significance_threshold``.
    """
    if chain.n_kept < min_draws:
        raise ValueError(f"chain has {chain.n_kept} draws, need at least {min_draws}")
    names = chain.names
    X = chain.draws
    q = np.quantile(X, [0.025, 0.975], axis=0, method=QUANTILE_METHOD)
    means = X.mean(axis=0)
    const = np.ptp(X, axis=0) == 0
    means[const] = X[0, const]  # exact for constant columns
    sds = X.std(axis=0, ddof=1) if chain.n_kept > 1 else np.zeros(X.shape[1])
    rows = {
        n: ParamRow(n, float(means[c]), float(q[0, c]), float(q[1, c]), float(sds[c]))
        for c, n in enumerate(names)
    }
    timescales, significant = {}, {}
    for c, n in enumerate(names):
        if n.startswith("b"):
            inv = 1.0 / X[:, c]
            iq = np.quantile(inv, [0.025, 0.975], method=QUANTILE_METHOD)
            timescales[n] = TimescaleRow(n, 1.0 / float(means[c]), float(inv.mean()), float(iq[0]), float(iq[1]))
        elif n.startswith("a"):
            significant[n] = bool(rows[n].q025 >= significance_threshold)
    warnings = []
    if chain.counts is not None:
        for j, n_j in enumerate(chain.counts):
            if n_j < MIN_EVENTS_IDENTIFIABLE:
                warnings.append(
                    f"type {j + 1} has {n_j} events; alpha column {j + 1} is low-information"
                )
    return ParamSummary(rows, timescales, significant, chain.n_kept, warnings)


# --- export --------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_chain_csv(path, chain: PosteriorChain, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(chain.names + ["log_post"])
        for row, lp in zip(chain.draws, chain.log_posts):
            w.writerow([_fmt(x) for x in row] + [_fmt(lp)])


def read_chain_csv(path, k: int = 2) -> PosteriorChain:
    rows = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.DictReader(lines)
        names = param_names(k)
        for r in reader:
            rows.append([float(r[n]) for n in names] + [float(r["log_post"])])
    arr = np.array(rows)
    return PosteriorChain(arr[:, :-1], arr[:, -1], float("nan"), k=k)


def write_summary_csv(path, summary: ParamSummary, header_comment: str | None = None) -> None:
    cols = ["parameter", "mean", "q2.5", "q97.5", "sd", "timescale_days", "timescale_days_mean", "significant"]
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in summary.records():
            w.writerow(["" if rec[c] is None else (_fmt(rec[c]) if isinstance(rec[c], float) else rec[c]) for c in cols])


def summary_json(summary: ParamSummary, extra: dict | None = None) -> str:
    doc = {
        "quantile_method": summary.quantile_method,
        "interval": "central 95% credible interval",
        "n_draws": summary.n_draws,
        "parameters": summary.records(),
        "warnings": summary.warnings,
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
