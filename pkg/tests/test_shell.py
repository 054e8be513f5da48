import json
import os

import numpy as np
import pytest

from jjtune import cli, svgplot
from jjtune.config import parse_config
from jjtune.errors import ConfigError, TraceFormatError
from jjtune.report import build_report, format_report, write_text_atomic
from jjtune.trace import (ResistanceTrace, format_trace, ingest_trace,
                          parse_trace)


class TestTraceIO:
    def test_minimal_two_rows(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("time_s,resistance_ohm,temperature_K,phase\n"
                        "0.0,5000.0,297.0,idle\n"
                        "1.0,5001.0,297.0,active\n")
        trace = ingest_trace(path)
        assert len(trace) == 2
        assert trace.samples[1].r == 5001.0

    def test_phase_labels_preserved(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("time_s,resistance_ohm,temperature_K,phase\n"
                        "0.0,5000.0,297.0,drop\n"
                        "1.0,5001.0,297.0,active\n"
                        "2.0,5002.0,297.0,relax\n")
        assert ingest_trace(path).phases == ["drop", "active", "relax"]

    def test_roundtrip_identity(self, tmp_path):
        trace = ResistanceTrace(meta={"variant": "x", "seed": "3"})
        rng = np.random.default_rng(0)
        t = 0.0
        for _ in range(50):
            t += float(rng.uniform(0.1, 5.0))
            trace.append(t, float(rng.uniform(5e3, 6e3)), 297.0, "active")
        path = tmp_path / "t.csv"
        write_text_atomic(path, format_trace(trace))
        back = ingest_trace(path)
        assert back.samples == trace.samples
        assert back.meta == trace.meta

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("time_s,resistance_ohm,temperature_K,phase\n"
                        "0.0,5000.0,297.0,idle\n"
                        "oops,not_a_number,297.0,idle\n")
        with pytest.raises(TraceFormatError) as excinfo:
            ingest_trace(path)
        assert "line 3" in str(excinfo.value)

    def test_non_monotone_time_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("time_s,resistance_ohm,temperature_K,phase\n"
                        "1.0,5000.0,297.0,idle\n"
                        "0.5,5001.0,297.0,idle\n")
        with pytest.raises(TraceFormatError):
            ingest_trace(path)

    def test_column_mapping_and_fills(self):
        text = "t,R\n0.0,5000.0\n1.0,5001.0\n"
        trace = parse_trace(text,
                            column_map={"time_s": "t", "resistance_ohm": "R"},
                            fill_temperature=296.0)
        assert trace.samples[0].temperature == 296.0
        assert trace.samples[0].phase == "idle"

    def test_unknown_phase_rejected(self):
        text = ("time_s,resistance_ohm,temperature_K,phase\n"
                "0.0,5000.0,297.0,melting\n")
        with pytest.raises(TraceFormatError):
            parse_trace(text)


class TestConfig:
    def test_packaged_defaults(self, default_config):
        assert set(default_config.variants) == {
            "low_dose_1", "low_dose_2", "medium_dose_1",
            "high_dose_1", "high_dose_2"}
        ld1 = default_config.variant("low_dose_1")
        assert ld1.r_w == 11662.0
        assert ld1.v0 == pytest.approx(0.0725)
        assert ld1.relaxation.slope(1800.0) == pytest.approx(1.13, abs=1e-6)
        assert ld1.relaxation.offset(1800.0) == pytest.approx(0.0329, abs=1e-6)
        hd2 = default_config.variant("high_dose_2")
        assert hd2.relaxation.slope(1800.0) == pytest.approx(1.04, abs=1e-6)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[global]\nwarp_factor = 9\n")

    def test_constant_override_forbidden(self):
        with pytest.raises(ConfigError):
            parse_config("[global]\nh = 1.0\n")

    def test_unknown_variant_lookup(self, default_config):
        with pytest.raises(ConfigError):
            default_config.variant("no_such_wafer")

    def test_invariant_violation_rejected(self):
        text = """
[variant.bad]
r_w = -5.0
alpha0 = 1e-9
v0 = 0.07
beta_table = [[0.8, -1e-7]]
[variant.bad.relaxation]
slope_a = 1.0
slope_b = 0.01
slope_tau = 60.0
offset_a = 0.0
offset_b = 0.01
offset_tau = 60.0
"""
        with pytest.raises(ConfigError):
            parse_config(text)


class TestReports:
    def test_deterministic_serialization(self):
        doc1 = build_report("convert", {"b": 2.0, "a": float("nan")},
                            inputs={"x": "abc"})
        doc2 = build_report("convert", {"a": float("nan"), "b": 2.0},
                            inputs={"x": "abc"})
        assert format_report(doc1) == format_report(doc2)
        parsed = json.loads(format_report(doc1))
        assert parsed["schema_version"] == "1"
        assert parsed["payload"]["a"] == "nan"


class TestSvg:
    def test_renders_polyline_and_labels(self):
        chart = svgplot.Chart(title="demo", xlabel="x", ylabel="y",
                              series=[svgplot.Series("s", [0, 1, 2],
                                                     [1.0, 4.0, 9.0])])
        text = svgplot.render(chart)
        assert text.startswith("<svg")
        assert "polyline" in text and "demo" in text

    def test_log_axis(self):
        chart = svgplot.Chart(title="log", xlabel="x", ylabel="y", logy=True,
                              series=[svgplot.Series("s", [1, 2, 3],
                                                     [1e-6, 1e-4, 1e-2])])
        text = svgplot.render(chart)
        assert "1e-06" in text or "1e-6" in text


def run_cli(args):
    return cli.main(args)


class TestCli:
    def test_help_exits_zero(self, capsys):
        for args in (["--help"], ["simulate", "--help"], ["fit", "--help"],
                     ["plan", "--help"], ["convert", "--help"],
                     ["sweep", "--help"]):
            with pytest.raises(SystemExit) as excinfo:
                cli.main(args)
            assert excinfo.value.code == 0
            assert "usage" in capsys.readouterr().out

    def test_invalid_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["simulate", "--bogus"])
        assert excinfo.value.code == 2

    def test_convert_golden_stable(self, tmp_path):
        out1 = tmp_path / "a.json"
        out2 = tmp_path / "b.json"
        for out in (out1, out2):
            assert run_cli(["convert", "--r", "5521.4",
                            "--out", str(out)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        doc = json.loads(out1.read_text())
        assert doc["payload"]["f01_Hz"] == pytest.approx(5.4910e9, abs=1e6)
        assert doc["payload"]["precision_bound_Hz"] == pytest.approx(
            11.3e6, abs=0.1e6)

    def test_convert_inverse_solve(self, tmp_path):
        out = tmp_path / "inv.json"
        assert run_cli(["convert", "--target-f", "5.4910e9",
                        "--eta=-203.0e6", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["payload"]["solved"]["r_ohm"] == pytest.approx(5521.4,
                                                                  abs=0.5)

    def test_simulate_deterministic(self, tmp_path):
        args = ["simulate", "--variant", "low_dose_1", "--seed", "11",
                "--amplitude", "0.85", "--target-dr", "0.05",
                "--t-relax", "300", "--noise", "1e-3"]
        t1 = tmp_path / "t1.csv"
        t2 = tmp_path / "t2.csv"
        assert run_cli(args + ["--out", str(t1)]) == 0
        assert run_cli(args + ["--out", str(t2)]) == 0
        assert t1.read_bytes() == t2.read_bytes()

    def test_simulate_then_fit_pipeline(self, tmp_path):
        trace = tmp_path / "t.csv"
        report = tmp_path / "fit.json"
        overlay = tmp_path / "fit.svg"
        assert run_cli(["simulate", "--variant", "low_dose_1", "--seed", "4",
                        "--amplitude", "0.85", "--target-dr", "0.10",
                        "--t-relax", "600", "--out", str(trace),
                        "--plot", str(tmp_path / "trace.svg")]) == 0
        assert run_cli(["fit", "--in", str(trace), "--kind", "manipulation",
                        "--out", str(report), "--plot", str(overlay)]) == 0
        doc = json.loads(report.read_text())
        assert doc["payload"]["comparison"]["preferred"] == "poly2"
        alpha = doc["payload"]["fits"][0]["params"]["alpha"]
        assert alpha > 0
        assert overlay.exists() and (tmp_path / "trace.svg").exists()

    def test_plan_and_infeasible_exit_codes(self, tmp_path):
        ok = tmp_path / "plan.json"
        assert run_cli(["plan", "--variant", "low_dose_1", "--r0", "5521.4",
                        "--target-f", "4.5e9", "--t-relax", "1800",
                        "--out", str(ok)]) == 0
        doc = json.loads(ok.read_text())
        assert doc["flags"]["feasible"] is True
        assert doc["payload"]["plan"]["steps"]

        bad = tmp_path / "bad.json"
        code = run_cli(["plan", "--variant", "low_dose_1", "--r0", "5521.4",
                        "--target-f", "1.5e9", "--t-relax", "1800",
                        "--out", str(bad)])
        assert code == 3
        doc = json.loads(bad.read_text())
        assert doc["flags"]["feasible"] is False

    def test_validation_exit_code(self, tmp_path):
        code = run_cli(["fit", "--in", str(tmp_path / "missing.csv"),
                        "--out", str(tmp_path / "r.json")])
        assert code == 2

    def test_failure_outcome_exit_code(self, tmp_path):
        # drive straight into breakdown
        code = run_cli(["simulate", "--variant", "low_dose_1", "--seed", "1",
                        "--amplitude", "1.2", "--target-dr", "0.5",
                        "--t-relax", "0",
                        "--out", str(tmp_path / "f.csv")])
        assert code == 4

    def test_sweep_deterministic(self, tmp_path):
        args = ["sweep", "--variant", "low_dose_1", "--seed", "5",
                "--amplitudes", "0.80,0.85", "--duration", "60",
                "--no-hazard", "--no-drop"]
        r1 = tmp_path / "s1.json"
        r2 = tmp_path / "s2.json"
        assert run_cli(args + ["--out", str(r1),
                               "--out-dir", str(tmp_path / "d1")]) == 0
        assert run_cli(args + ["--out", str(r2),
                               "--out-dir", str(tmp_path / "d2")]) == 0
        body1 = json.loads(r1.read_text())
        body2 = json.loads(r2.read_text())
        assert body1["payload"]["rows"][0]["alpha"] == \
            body2["payload"]["rows"][0]["alpha"]
        csvs1 = sorted(os.listdir(tmp_path / "d1"))
        assert csvs1 == sorted(os.listdir(tmp_path / "d2"))
        for name in csvs1:
            assert (tmp_path / "d1" / name).read_bytes() == \
                (tmp_path / "d2" / name).read_bytes()

    def test_format_variants(self, tmp_path):
        csv_out = tmp_path / "conv.csv"
        assert run_cli(["convert", "--r", "5521.4", "--format", "csv",
                        "--out", str(csv_out)]) == 0
        lines = csv_out.read_text().splitlines()
        assert lines[0] == "key,value"
        assert any(line.startswith("f01_Hz,") for line in lines)

        trace = tmp_path / "t.csv"
        run_cli(["simulate", "--variant", "low_dose_1", "--seed", "4",
                 "--amplitude", "0.85", "--target-dr", "0.08",
                 "--t-relax", "0", "--out", str(trace)])
        svg_out = tmp_path / "fit.svg"
        assert run_cli(["fit", "--in", str(trace), "--kind", "manipulation",
                        "--format", "svg", "--out", str(svg_out)]) == 0
        assert svg_out.read_text().startswith("<svg")

    def test_fit_exponential_kind(self, tmp_path):
        data = tmp_path / "rate.csv"
        data.write_text("v,alpha\n0.75,2.93\n0.80,6.42\n0.85,12.1\n"
                        "0.90,22.6\n0.95,50.3\n")
        out = tmp_path / "exp.json"
        assert run_cli(["fit", "--in", str(data), "--kind", "exponential",
                        "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["payload"]["fit"]["params"]["v0"] == pytest.approx(
            0.0725, rel=0.05)
