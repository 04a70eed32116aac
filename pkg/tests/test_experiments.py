"""Experiment runners: CSV/manifest output, determinism, selfcheck, CLI."""

import json
import subprocess
import sys

import numpy as np
import pytest

from stein_sense.cli import main
from stein_sense.config import parse_config
from stein_sense.experiments import _fmt, _write_csv, run


def _read_csv(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestCsvWriting:
    def test_full_precision(self, tmp_path):
        path = tmp_path / "t.csv"
        _write_csv(path, ["a"], [[1.0 / 3.0]])
        header, rows = _read_csv(path)
        assert float(rows[0][0]) == 1.0 / 3.0
        assert rows[0][0] == "0.33333333333333331"

    def test_integer_column_plain(self, tmp_path):
        path = tmp_path / "t.csv"
        _write_csv(path, ["N", "x"], [[8, 0.5]])
        assert path.read_text() == "N,x\n8,0.5\n"

    def test_non_finite_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="bad_col"):
            _write_csv(tmp_path / "t.csv", ["bad_col"], [[float("nan")]])

    def test_fmt_round_trips(self):
        gen = np.random.default_rng(100)
        for x in gen.standard_normal(50) * 10.0 ** gen.integers(-8, 8, 50):
            assert float(_fmt(float(x))) == float(x)


class TestRunFig1:
    def test_outputs_and_schema(self, tmp_path):
        config = parse_config(
            ["fig1", "--reps", "500", "--seed", "1", "--out", str(tmp_path),
             "--n-min", "8", "--n-max", "32", "--n-points", "3"]
        )
        paths = run(config)
        names = {p.name for p in paths}
        assert names == {"fig1.csv", "manifest.json"}
        header, rows = _read_csv(tmp_path / "fig1.csv")
        assert header == [
            "N",
            "ad_sep_noisy_js",
            "ad_seq_noisy_js",
            "ad_seq_noiseless_js",
            "ad_seq_vs_sep_js",
            "ad_sep_noisy_js_se",
            "ad_seq_noisy_js_se",
            "ad_seq_noiseless_js_se",
            "ad_seq_vs_sep_js_se",
        ]
        assert [r[0] for r in rows] == ["8", "16", "32"]
        for row in rows:
            assert all(np.isfinite(float(v)) for v in row)

    def test_manifest_keys_and_echo(self, tmp_path):
        config = parse_config(
            ["fig1", "--reps", "500", "--seed", "7", "--out", str(tmp_path),
             "--n-min", "8", "--n-max", "16", "--n-points", "2"]
        )
        run(config)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert list(manifest) == ["config", "seed", "version", "started_at", "duration_s", "outputs"]
        assert manifest["seed"] == 7
        assert manifest["outputs"] == ["fig1.csv"]
        assert manifest["config"]["theta"] == [0.5, -0.2, 0.3, 0.1]
        assert manifest["config"]["sigma"][0][0] == 4.0

    def test_determinism_and_thread_invariance(self, tmp_path):
        base = ["fig1", "--reps", "500", "--seed", "5",
                "--n-min", "8", "--n-max", "16", "--n-points", "2"]
        run(parse_config(base + ["--out", str(tmp_path / "a")]))
        run(parse_config(base + ["--out", str(tmp_path / "b")]))
        run(parse_config(base + ["--out", str(tmp_path / "c"), "--threads", "4"]))
        a = (tmp_path / "a" / "fig1.csv").read_bytes()
        assert a == (tmp_path / "b" / "fig1.csv").read_bytes()
        assert a == (tmp_path / "c" / "fig1.csv").read_bytes()

    def test_manifest_round_trip(self, tmp_path):
        config = parse_config(
            ["fig1", "--reps", "500", "--seed", "2", "--out", str(tmp_path / "a"),
             "--n-min", "8", "--n-max", "16", "--n-points", "2"]
        )
        run(config)
        rerun = parse_config(
            ["fig1", "--config", str(tmp_path / "a" / "manifest.json"),
             "--out", str(tmp_path / "b")]
        )
        run(rerun)
        assert (tmp_path / "a" / "fig1.csv").read_bytes() == (
            tmp_path / "b" / "fig1.csv"
        ).read_bytes()


class TestRunOtherExperiments:
    def test_risk_schema(self, tmp_path):
        config = parse_config(
            ["risk", "--reps", "500", "--out", str(tmp_path),
             "--n-min", "8", "--n-max", "16", "--n-points", "2"]
        )
        run(config)
        header, rows = _read_csv(tmp_path / "risk.csv")
        assert header[0] == "N"
        assert "risk_mle_sep" in header and "risk_mjs_seq_noisy" in header
        value_cols = [h for h in header[1:] if not h.endswith("_se")]
        assert [f"{h}_se" for h in value_cols] == header[1 + len(value_cols):]

    def test_bayes_schema_and_exact_rows(self, tmp_path):
        config = parse_config(
            ["bayes", "--xi", "1*I(4)", "--reps", "500", "--out", str(tmp_path),
             "--n-min", "8", "--n-max", "8", "--n-points", "1"]
        )
        run(config)
        header, rows = _read_csv(tmp_path / "bayes.csv")
        row = dict(zip(header, rows[0]))
        assert float(row["br_mle"]) == 2.0
        assert float(row["br_mle_se"]) == 0.0
        assert float(row["br_bayes"]) == pytest.approx(4.0 / 3.0)
        assert float(row["br_bayes"]) < float(row["br_mjs"]) < float(row["br_mle"])

    def test_fig2a_schema(self, tmp_path):
        config = parse_config(
            ["fig2a", "--reps", "100", "--out", str(tmp_path),
             "--n-min", "5", "--n-max", "10", "--n-points", "2"]
        )
        run(config)
        header, rows = _read_csv(tmp_path / "fig2a.csv")
        assert header[:7] == [
            "N", "risk_pmle", "risk_pmjs", "risk_mle", "risk_mjs", "ad_pmjs_pmle", "ad_mjs_mle"
        ]
        row = dict(zip(header, rows[0]))
        assert float(row["risk_mle"]) == pytest.approx(4.0 * 0.25 / 5.0)
        assert float(row["risk_mle_se"]) == 0.0

    def test_fig2b_columns_span_isotropy(self, tmp_path):
        config = parse_config(
            ["fig2b", "--reps", "100", "--out", str(tmp_path),
             "--n-min", "5", "--n-max", "5", "--n-points", "1"]
        )
        run(config)
        header, _ = _read_csv(tmp_path / "fig2b.csv")
        assert header[0] == "N"
        pads = [h for h in header if h.startswith("pad_v") and not h.endswith("_se")]
        assert len(pads) == 4
        assert pads == ["pad_v0p00132", "pad_v0p0147", "pad_v0p132", "pad_v1p47"]


class TestSelfcheck:
    def test_passes_and_writes_table(self, tmp_path):
        config = parse_config(["selfcheck", "--reps", "10000", "--out", str(tmp_path)])
        run(config)
        header, rows = _read_csv(tmp_path / "selfcheck.csv")
        assert header == ["check", "value", "bound", "status"]
        assert {row[3] for row in rows} == {"ok"}
        checks = [row[0] for row in rows]
        assert "lemma1_max_abs_dev" in checks
        assert "bayes_order_min_margin_sigmas" in checks
        assert sum(c.startswith("accept_rate_case") for c in checks) == 5


class TestCliEntry:
    def test_config_error_exit_code(self, capsys):
        assert main(["bayes"]) == 2
        assert "--xi" in capsys.readouterr().err

    def test_successful_run_prints_outputs(self, tmp_path, capsys):
        code = main(
            ["fig1", "--reps", "500", "--seed", "1", "--out", str(tmp_path),
             "--n-min", "8", "--n-max", "16", "--n-points", "2"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "fig1.csv" in out and "manifest.json" in out

    def test_console_subprocess(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "stein_sense", "fig1", "--reps", "500", "--seed", "1",
             "--out", str(tmp_path), "--n-min", "8", "--n-max", "16", "--n-points", "2"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert (tmp_path / "fig1.csv").exists()
