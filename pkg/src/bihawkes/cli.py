"""Command-line front end: ``bihawkes {simulate,fit,gof,split,report}``.

Exit codes: 0 success, 1 input error, 2 sampler diagnostic failure.
Every CSV output starts with a ``# run_id=... seed=... version=...`` line
referencing ``manifest.json`` in the same directory.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from bihawkes import __version__
from bihawkes.core import InstabilityError, HawkesModel, intensity_trace
from bihawkes.gof import gof_report, write_gof_csv
from bihawkes.inference import (
    FitError,
    FitOptions,
    SamplerOptions,
    fit_map,
    sample_posterior,
    summarize,
    summary_json,
    write_chain_csv,
    write_summary_csv,
)
from bihawkes.ingest import (
    DEFAULT_CUTOFF,
    IngestError,
    load_events,
    load_mapping,
    select_period,
    split_period,
    write_events_csv,
)
from bihawkes.likelihood import PriorSpec
from bihawkes.simulate import (
    RNG_ALGORITHM,
    RunawayError,
    SimulationConfig,
    simulate,
    write_intensity_trace,
)

log = logging.getLogger("bihawkes")

EXIT_OK, EXIT_INPUT, EXIT_DIAGNOSTIC = 0, 1, 2
VERSION = f"v{__version__}"


class InputError(Exception):
    pass


def _run_id(command: str, args: argparse.Namespace, inputs: list[Path]) -> str:
    h = hashlib.sha256()
    h.update(command.encode())
    for key in sorted(vars(args)):
        if key in ("out_dir", "func", "verbose"):
            continue
        h.update(f"{key}={getattr(args, key)!r};".encode())
    for p in inputs:
        h.update(Path(p).read_bytes())
    return h.hexdigest()[:16]


def _ref(run_id: str, seed) -> str:
    return f"run_id={run_id} seed={seed} version={VERSION} manifest=manifest.json"


def _write_manifest(out: Path, doc: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_params(args) -> HawkesModel:
    if args.params:
        try:
            doc = json.loads(Path(args.params).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.params}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
        except OSError as exc:
            raise InputError(f"cannot read parameter file: {exc}")
        if not isinstance(doc, dict):
            raise InputError(f"{args.params}: expected a JSON object with keys mu, alpha, beta")
    else:
        if args.mu is None or args.alpha is None or args.beta is None:
            raise InputError("give --params FILE or all of --mu, --alpha, --beta")
        k = len(args.mu)
        if len(args.alpha) != k * k or len(args.beta) != k * k:
            raise InputError(f"--alpha and --beta need {k * k} values (row-major) for {k} types")
        doc = {"mu": args.mu, "alpha": args.alpha, "beta": args.beta}
    try:
        return HawkesModel.from_dict(doc)
    except ValueError as exc:
        raise InputError(f"invalid model parameters: {exc}")


def _load_data(args):
    mapping = load_mapping(args.mapping) if getattr(args, "mapping", None) else None
    end_date = dt.date.fromisoformat(args.end_date) if getattr(args, "end_date", None) else None
    kwargs = {"mapping": mapping, "end_date": end_date} if mapping or end_date else {}
    seq, ilog = load_events(args.data, horizon=args.horizon, **kwargs)
    if ilog is not None and ilog.rejected:
        for row_no, reason in ilog.rejected:
            log.warning("%s:%d rejected: %s", args.data, row_no, reason)
    return seq, ilog


# --- rendering -----------------------------------------------------------------

def _render_trace(path, grid, lam):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 3))
    for i in range(lam.shape[1]):
        ax.plot(grid, lam[:, i], lw=0.8, label=f"type {i + 1}")
    ax.set_xlabel("t (days)")
    ax.set_ylabel("intensity (events/day)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_gof(path, rep):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(rep.curve_tau, rep.curve_normalized, color="red", lw=0.8)
    for s in (1, -1):
        ax.axhline(s * rep.band_halfwidth, color="blue", ls=":")
    ax.set_xlabel("rescaled time")
    ax.set_ylabel("normalized N(tau) - tau")
    ax.set_title(f"type {rep.type_index}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _write_gof(out: Path, rep_all, ref: str, render: bool, prefix: str = "gof") -> list[dict]:
    rows = []
    for rep in rep_all.types:
        write_gof_csv(out / f"{prefix}_type{rep.type_index}.csv", rep, ref)
        if render and not rep.empty:
            _render_gof(out / f"{prefix}_type{rep.type_index}.png", rep)
        rows.append({
            "type": rep.type_index, "n": rep.n, "empty": rep.empty,
            "tau_max": rep.tau_max, "ks_statistic": rep.ks_statistic,
            "band_halfwidth": rep.band_halfwidth, "within_band": rep.within_band,
            "gap_ks_pvalue": rep.gap_ks_pvalue,
        })
    return rows


# --- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    model = _load_params(args)
    try:
        config = SimulationConfig(args.horizon, args.seed, args.max_events)
    except ValueError as exc:
        raise InputError(str(exc))
    inputs = [Path(args.params)] if args.params else []
    run_id = _run_id("simulate", args, inputs)
    ref = _ref(run_id, args.seed)
    out = _out_dir(args.out_dir)

    seq = simulate(model, config, args.method, 0)
    write_events_csv(out / "events.csv", seq, ref)
    grid, lam = intensity_trace(model, seq, args.grid_step)
    write_intensity_trace(out / "trace.csv", grid, lam, ref)
    if args.render:
        _render_trace(out / "trace.png", grid, lam)

    counts = [seq.counts.tolist()]
    for r in range(1, args.replicates):
        counts.append(simulate(model, config, args.method, r).counts.tolist())
    counts = np.array(counts)
    if args.replicates > 1:
        with open(out / "counts.csv", "w") as fh:
            fh.write(f"# {ref}\n")
            fh.write("replicate," + ",".join(f"n{i + 1}" for i in range(model.k)) + "\n")
            for r, row in enumerate(counts):
                fh.write(f"{r}," + ",".join(str(int(x)) for x in row) + "\n")

    manifest = {
        "run_id": run_id, "version": VERSION, "command": "simulate", "seed": args.seed,
        "rng": RNG_ALGORITHM, "method": args.method, "horizon": args.horizon,
        "replicates": args.replicates, "grid_step": args.grid_step,
        "model": model.to_dict(), "spectral_radius": model.spectral_radius,
        "counts_replicate0": counts[0].tolist(),
        "mean_counts": counts.mean(axis=0).tolist(),
    }
    _write_manifest(out, manifest)
    print(f"simulated {len(seq)} events {seq.counts.tolist()} on [0, {args.horizon}]")
    if args.replicates > 1:
        print(f"mean counts over {args.replicates} replicates: {np.round(counts.mean(axis=0), 3).tolist()}")
    return EXIT_OK


def cmd_fit(args) -> int:
    seq_all, ilog = _load_data(args)
    seq = select_period(seq_all, args.period, dt.date.fromisoformat(args.cutoff))
    inputs = [Path(args.data)] + ([Path(args.mapping)] if args.mapping else [])
    run_id = _run_id("fit", args, inputs)
    ref = _ref(run_id, args.seed)
    out = _out_dir(args.out_dir)
    priors = PriorSpec(beta_scale=args.beta_prior_scale, mu_scale=args.mu_prior_scale)

    mp = fit_map(seq, priors, FitOptions(n_starts=args.starts, seed=args.seed, mode=args.mode))
    chain = sample_posterior(
        seq, priors, args.samples,
        SamplerOptions(n_warmup=args.warmup, n_chains=args.chains, seed=args.seed,
                       mode=args.mode, n_jobs=args.jobs),
        mp,
    )
    summary = summarize(chain, min_draws=min(100, chain.n_kept))
    write_chain_csv(out / "chain.csv", chain, ref)
    if args.json:
        (out / "summary.json").write_text(summary_json(summary, {"run_id": run_id, "version": VERSION}))
    else:
        write_summary_csv(out / "summary.csv", summary, ref)

    mean_model = chain.mean_model()
    gof_model = mean_model if args.gof_at == "mean" else mp.model
    gof_rows = _write_gof(out, gof_report(gof_model, seq), ref, args.render)
    (out / "posterior_mean.json").write_text(json.dumps(mean_model.to_dict(), indent=2) + "\n")
    (out / "map.json").write_text(json.dumps(mp.model.to_dict(), indent=2) + "\n")

    ok = chain.diagnostics_ok
    manifest = {
        "run_id": run_id, "version": VERSION, "command": "fit", "seed": args.seed,
        "rng": RNG_ALGORITHM, "mode": args.mode, "period": args.period,
        "cutoff": args.cutoff, "horizon": seq.horizon,
        "origin_date": seq.origin_date.isoformat() if seq.origin_date else None,
        "n_events": len(seq), "counts": seq.counts.tolist(),
        "priors": {"beta": f"half-normal(0, {priors.beta_scale})", "alpha": "uniform(0, 1)",
                   "mu": f"half-Cauchy(0, {priors.mu_scale})"},
        "sampler": {
            "algorithm": "adaptive random-walk Metropolis (unconstrained coordinates)",
            "n_chains": args.chains, "n_warmup": args.warmup, "n_kept_per_chain": args.samples,
            "acceptance_rates": chain.chain_acceptance, "diagnostics_ok": ok,
            "messages": chain.messages,
        },
        "map": {"model": mp.model.to_dict(), "grad_norm": mp.grad_norm,
                "n_starts": args.starts, "best_start": mp.best_start},
        "quantile_method": summary.quantile_method,
        "gof_at": args.gof_at, "gof": gof_rows,
        "warnings": mp.warnings + summary.warnings + (ilog.warnings if ilog else []),
        "rejected_rows": [list(r) for r in ilog.rejected] if ilog else [],
    }
    _write_manifest(out, manifest)
    c = seq.counts.tolist()
    print(f"counts: {len(seq)}; {'/'.join(str(x) for x in c)}  (period {args.period}, T={seq.horizon:g} days)")
    print(format_table(summary.records()))
    if not ok:
        print("sampler diagnostics FAILED: " + "; ".join(chain.messages), file=sys.stderr)
        return EXIT_DIAGNOSTIC
    return EXIT_OK


def cmd_gof(args) -> int:
    model = _load_params(args)
    seq_all, _ = _load_data(args)
    seq = select_period(seq_all, args.period, dt.date.fromisoformat(args.cutoff))
    run_id = _run_id("gof", args, [Path(args.data)] + ([Path(args.params)] if args.params else []))
    ref = _ref(run_id, None)
    out = _out_dir(args.out_dir)
    rows = _write_gof(out, gof_report(model, seq, args.level), ref, args.render)
    _write_manifest(out, {
        "run_id": run_id, "version": VERSION, "command": "gof", "level": args.level,
        "period": args.period, "horizon": seq.horizon, "counts": seq.counts.tolist(),
        "model": model.to_dict(), "gof": rows,
    })
    for r in rows:
        verdict = "empty" if r["empty"] else ("inside band" if r["within_band"] else "OUTSIDE band")
        print(f"type {r['type']}: n={r['n']} KS={r['ks_statistic']:.4f} band={r['band_halfwidth']:.4f} {verdict}")
    return EXIT_OK


def cmd_split(args) -> int:
    seq, _ = _load_data(args)
    cutoff = dt.date.fromisoformat(args.cutoff)
    pre, post = split_period(seq, cutoff)
    run_id = _run_id("split", args, [Path(args.data)])
    ref = _ref(run_id, None)
    out = _out_dir(args.out_dir)
    write_events_csv(out / "pre.csv", pre, ref)
    write_events_csv(out / "post.csv", post, ref)
    doc = {"run_id": run_id, "version": VERSION, "command": "split", "cutoff": args.cutoff}
    for name, s in (("all", seq), ("pre", pre), ("post", post)):
        doc[name] = {"n_events": len(s), "counts": s.counts.tolist(), "horizon": s.horizon,
                     "origin_date": s.origin_date.isoformat() if s.origin_date else None}
        print(f"{name}: {len(s)}; {'/'.join(str(x) for x in s.counts.tolist())}  T={s.horizon:g}")
    _write_manifest(out, doc)
    return EXIT_OK


def _num(x) -> str:
    # three decimals, more digits for small rates
    x = float(x)
    return f"{x:.3f}" if x == 0 or abs(x) >= 0.01 else f"{x:.2e}"


def format_table(records: list[dict]) -> str:
    lines = [f"{'parameter':<10} {'mean (95% interval)':<32} {'timescale (days)':>16}  note"]
    for r in records:
        cell = f"{_num(r['mean'])} ({_num(r['q2.5'])}, {_num(r['q97.5'])})"
        ts = "" if r.get("timescale_days") in (None, "") else f"{float(r['timescale_days']):.3f}"
        sig = r.get("significant")
        note = "not significant" if sig in (False, "False") else ""
        lines.append(f"{r['parameter']:<10} {cell:<32} {ts:>16}  {note}".rstrip())
    return "\n".join(lines)


def _read_summary(run_dir: Path) -> list[dict]:
    if (run_dir / "summary.json").exists():
        return json.loads((run_dir / "summary.json").read_text())["parameters"]
    path = run_dir / "summary.csv"
    if not path.exists():
        raise InputError(f"{run_dir}: no summary.json or summary.csv")
    import csv

    with open(path) as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    out = []
    for r in rows:
        rec = dict(r)
        for key in ("mean", "q2.5", "q97.5"):
            rec[key] = float(r[key])
        rec["timescale_days"] = r["timescale_days"] or None
        rec["significant"] = r["significant"] or None
        out.append(rec)
    return out


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    records = _read_summary(run_dir)
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        man = json.loads(manifest_path.read_text())
        counts = man.get("counts")
        if counts is not None:
            print(f"period {man.get('period')}: {sum(counts)} events; {'/'.join(str(c) for c in counts)}"
                  f"  T={man.get('horizon'):g} days  mode={man.get('mode')}")
    print(format_table(records))
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def _add_data_args(p, with_period=True):
    p.add_argument("data", help="incident CSV (source_id,date,outcome) or canonical event CSV")
    p.add_argument("--horizon", type=float, default=None, help="observation window in days (default: last event)")
    p.add_argument("--end-date", default=None, help="ISO date ending the observation window")
    p.add_argument("--mapping", default=None, help="label,class outcome mapping CSV")
    if with_period:
        p.add_argument("--period", choices=["all", "pre2000", "post2000"], default="all")
        p.add_argument("--cutoff", default=DEFAULT_CUTOFF.isoformat())


def _add_model_args(p):
    p.add_argument("--params", default=None, help="JSON file with keys mu, alpha, beta")
    p.add_argument("--mu", type=float, nargs="+")
    p.add_argument("--alpha", type=float, nargs="+", help="row-major K*K values")
    p.add_argument("--beta", type=float, nargs="+", help="row-major K*K values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bihawkes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate events and an intensity trace")
    _add_model_args(p)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["thinning", "branching"], default="thinning")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--max-events", type=int, default=10_000_000)
    p.add_argument("--render", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="MAP + posterior sampling + summaries + GOF")
    _add_data_args(p)
    p.add_argument("--samples", type=int, default=5000, help="kept draws per chain")
    p.add_argument("--warmup", type=int, default=5000)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["facilitated", "exact"], default="facilitated")
    p.add_argument("--mu-prior-scale", type=float, default=5.0)
    p.add_argument("--beta-prior-scale", type=float, default=1.0)
    p.add_argument("--gof-at", choices=["mean", "map"], default="mean")
    p.add_argument("--json", action="store_true", help="write summary.json instead of summary.csv")
    p.add_argument("--render", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gof", help="time-rescaling residual analysis for a given model")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--render", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("split", help="split at a cutoff date into re-anchored subsets")
    _add_data_args(p, with_period=False)
    p.add_argument("--cutoff", default=DEFAULT_CUTOFF.isoformat())
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("report", help="print the summary table of a fit run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, IngestError, FitError, RunawayError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
