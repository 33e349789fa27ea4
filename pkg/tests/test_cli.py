import csv
import json
import time
from importlib import resources

import numpy as np
import pytest

from bihawkes.cli import format_table, main
from conftest import DEMO_PARAMS

FIXTURE = str(resources.files("bihawkes").joinpath("data/synthetic_incidents.csv"))
FAST_FIT = ["--samples", "400", "--warmup", "400", "--chains", "2", "--starts", "2"]


def data_rows(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


@pytest.fixture
def params_file(tmp_path):
    p = tmp_path / "demo.json"
    p.write_text(json.dumps(DEMO_PARAMS))
    return str(p)


def test_simulate_outputs(tmp_path, params_file):
    out = tmp_path / "sim"
    assert main(["simulate", "--params", params_file, "--horizon", "300", "--seed", "1", "--out-dir", str(out)]) == 0
    for name in ("events.csv", "trace.csv", "manifest.json"):
        assert (out / name).exists()
    man = json.loads((out / "manifest.json").read_text())
    head, rows = data_rows(out / "events.csv")
    assert head.startswith(f"# run_id={man['run_id']} seed=1 version=v")
    assert list(rows[0]) == ["t_days", "mark", "source_id", "date"]
    assert man["rng"] == "PCG64" and man["counts_replicate0"] == [
        sum(r["mark"] == "1" for r in rows), sum(r["mark"] == "2" for r in rows)]
    head, trace = data_rows(out / "trace.csv")
    assert list(trace[0]) == ["t", "lambda1", "lambda2"]
    assert float(trace[1]["t"]) == pytest.approx(0.1)


def test_simulate_replicate_means(tmp_path, params_file):
    out = tmp_path / "sim"
    main(["simulate", "--params", params_file, "--horizon", "300", "--replicates", "500", "--seed", "3", "--out-dir", str(out)])
    _, rows = data_rows(out / "counts.csv")
    counts = np.array([[int(r["n1"]), int(r["n2"])] for r in rows])
    assert counts.shape == (500, 2)
    se = counts.std(axis=0, ddof=1) / np.sqrt(500)
    # finite-window mean, start-up transient included
    assert np.all(np.abs(counts.mean(axis=0) - [97.756, 197.670]) < 3 * se)


def test_simulate_inline_alpha_zero_trace_is_flat(tmp_path):
    out = tmp_path / "pois"
    rc = main(["simulate", "--mu", "0.2", "0.5", "--alpha", "0", "0", "0", "0", "--beta", "1", "1", "1", "1",
               "--horizon", "50", "--out-dir", str(out)])
    assert rc == 0
    _, trace = data_rows(out / "trace.csv")
    assert {r["lambda1"] for r in trace} == {"0.2"}
    assert {r["lambda2"] for r in trace} == {"0.5"}


def test_unstable_model_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"mu": [0.1, 0.1], "alpha": [[0.6, 0.6], [0.6, 0.6]], "beta": [[1, 1], [1, 1]]}))
    assert main(["simulate", "--params", str(p), "--horizon", "10", "--out-dir", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "spectral radius" in err and "1.2" in err


def test_malformed_json_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"mu": [0.1, 0.2], "alpha": ')
    assert main(["simulate", "--params", str(p), "--horizon", "10", "--out-dir", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "malformed JSON" in err and "line 1" in err


def test_missing_input_exit_1(tmp_path):
    assert main(["fit", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path / "o")]) == 1


def test_bad_rows_reported_not_fatal(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("source_id,date,outcome\na,2001-01-01,fled\nb,bad,fled\nc,2001-02-01,arrested\n"
                    "d,2001-03-01,suicide at scene\ne,2001-05-01,fled\n")
    out = tmp_path / "o"
    rc = main(["fit", str(data), *FAST_FIT, "--out-dir", str(out)])
    assert rc in (0, 2)
    man = json.loads((out / "manifest.json").read_text())
    assert man["rejected_rows"] == [[3, "unparseable date 'bad'"]]


def test_fit_fixture_smoke(tmp_path, capsys):
    out = tmp_path / "fit"
    t0 = time.perf_counter()
    rc = main(["fit", FIXTURE, "--seed", "7", "--out-dir", str(out)])
    elapsed = time.perf_counter() - t0
    assert elapsed < 60
    man = json.loads((out / "manifest.json").read_text())
    assert rc == (0 if man["sampler"]["diagnostics_ok"] else 2)
    for name in ("chain.csv", "summary.csv", "gof_type1.csv", "gof_type2.csv", "posterior_mean.json", "map.json"):
        assert (out / name).exists(), name
        if name.endswith(".csv"):
            assert (out / name).read_text().startswith(f"# run_id={man['run_id']}")
    assert man["counts"] == [12, 8] and man["n_events"] == 20 and man["horizon"] == 21219
    _, chain = data_rows(out / "chain.csv")
    assert len(chain) == 4 * 5000
    assert list(chain[0])[-1] == "log_post"
    printed = capsys.readouterr().out
    assert "counts: 20; 12/8" in printed


def test_fit_period_and_json(tmp_path):
    out = tmp_path / "post"
    main(["fit", FIXTURE, "--period", "post2000", "--json", *FAST_FIT, "--out-dir", str(out)])
    man = json.loads((out / "manifest.json").read_text())
    assert man["counts"] == [5, 4] and man["period"] == "post2000"
    doc = json.loads((out / "summary.json").read_text())
    assert doc["run_id"] == man["run_id"]
    assert not (out / "summary.csv").exists()


def test_fit_diagnostic_exit_2(tmp_path, monkeypatch):
    import bihawkes.inference as inf

    monkeypatch.setattr(inf, "ACCEPTANCE_BOUNDS", (0.99, 1.0))
    out = tmp_path / "o"
    assert main(["fit", FIXTURE, *FAST_FIT, "--out-dir", str(out)]) == 2
    assert (out / "chain.csv").exists() and (out / "summary.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["sampler"]["diagnostics_ok"] is False


def test_fit_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        main(["fit", FIXTURE, "--seed", "5", *FAST_FIT, "--out-dir", str(out)])
        outs.append(out)
    for name in ("chain.csv", "summary.csv", "gof_type1.csv", "manifest.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_split_command(tmp_path, capsys):
    out = tmp_path / "split"
    assert main(["split", FIXTURE, "--out-dir", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert (man["pre"]["n_events"], man["pre"]["counts"]) == (11, [7, 4])
    assert (man["post"]["n_events"], man["post"]["counts"]) == (9, [5, 4])
    _, rows = data_rows(out / "post.csv")
    assert rows[0]["date"] == "2000-01-01" and rows[0]["t_days"] == "0.0"
    assert "pre: 11; 7/4" in capsys.readouterr().out


def test_gof_command(tmp_path, params_file):
    sim = tmp_path / "sim"
    main(["simulate", "--params", params_file, "--horizon", "300", "--out-dir", str(sim)])
    out = tmp_path / "gof"
    assert main(["gof", str(sim / "events.csv"), "--horizon", "300", "--params", params_file, "--out-dir", str(out)]) == 0
    for i in (1, 2):
        _, rows = data_rows(out / f"gof_type{i}.csv")
        assert list(rows[0])[:4] == ["tau", "deviation", "band_upper", "band_lower"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["horizon"] == 300 and len(man["gof"]) == 2


def test_report_command(tmp_path, capsys):
    out = tmp_path / "fit"
    main(["fit", FIXTURE, *FAST_FIT, "--out-dir", str(out)])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "20 events; 12/8" in text
    for name in ("mu1", "a12", "b22"):
        assert name in text
    assert main(["report", str(tmp_path / "missing")]) == 1


def test_format_table_small_values():
    rec = [{"parameter": "mu1", "mean": 0.00046, "q2.5": 0.0001, "q97.5": 0.001, "timescale_days": None,
            "significant": None},
           {"parameter": "a12", "mean": 0.343, "q2.5": 0.0002, "q97.5": 0.806, "timescale_days": None,
            "significant": False}]
    text = format_table(rec)
    assert "4.60e-04" in text and "0.343" in text and "not significant" in text


def test_render_optional(tmp_path, params_file):
    pytest.importorskip("matplotlib")
    out = tmp_path / "r"
    main(["simulate", "--params", params_file, "--horizon", "50", "--render", "--out-dir", str(out)])
    assert (out / "trace.png").stat().st_size > 0
