"""Config-driven runner: artifacts, determinism, exit codes, diagnostics."""

import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

import oracles
from adiapath.cli import main

runner = CliRunner()


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def read_rows(out_dir):
    lines = (out_dir / "results.csv").read_text().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def qd_config(out_dir, **extra_params):
    return {
        "experiment": "qd_sweep",
        "model": {"kind": "three_level", "params": {"gap": 1.0, "tau": 1.0}},
        "output_dir": str(out_dir),
        "jobs": 1,
        "params": {"slowdowns": [1.0, 2.0], "s_lo": 0.0, "s_hi": 2.0,
                   "n_profile": 33, **extra_params},
    }


def test_path_length_run_writes_exact_row(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, {
        "experiment": "path_length",
        "model": {"kind": "three_level", "params": {"gap": 1.0, "tau": 1.0}},
        "output_dir": str(out),
        "params": {"s_lo": 0.0, "s_hi": 2.0},
    })
    result = runner.invoke(main, ["run", cfg])
    assert result.exit_code == 0, result.output
    header, rows = read_rows(out)
    assert header == ["s_lo", "s_hi", "arc_length"]
    assert len(rows) == 1
    assert float(rows[0]["arc_length"]) == pytest.approx(4.0, rel=1e-9)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["arc_length"] == pytest.approx(4.0, rel=1e-9)


def test_qd_sweep_matches_closed_form_and_manifest(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, qd_config(out))
    result = runner.invoke(main, ["run", cfg])
    assert result.exit_code == 0, result.output
    header, rows = read_rows(out)
    assert header[:2] == ["slowdown", "transit_time"]
    for row in rows:
        s_c = float(row["slowdown"])
        expected = oracles.three_level_qd_natural(4.0, 1.0, 1.0, s_c)
        assert float(row["cost_mean"]) == pytest.approx(expected, rel=1e-6)
        assert float(row["cost_rms"]) == pytest.approx(expected, rel=1e-6)
        assert float(row["transit_time"]) == pytest.approx(2.0 * s_c, rel=1e-9)
        assert float(row["cost_mean"]) >= float(row["delta_t_bound"]) * (1 - 1e-8)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["backend"] in ("compiled", "pure")
    assert manifest["config"]["experiment"] == "qd_sweep"
    assert manifest["config"]["tolerances"]["quadrature_rel_tol"] == 1e-8
    assert "timestamp" not in json.dumps(manifest).lower()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["bounds_satisfied"] is True


def test_float_cells_round_trip_17_digits(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, qd_config(out))
    runner.invoke(main, ["run", cfg])
    text = (out / "results.csv").read_text()
    row = text.splitlines()[1].split(",")
    # repr round-trip: parsing the cell and reformatting reproduces it
    for cell in row[1:]:
        assert format(float(cell), ".17g") == cell


def test_runs_are_deterministic_across_jobs(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cfg_a = write_config(tmp_path, qd_config(out_a), "a.json")
    cfg_b = write_config(tmp_path, qd_config(out_b), "b.json")
    assert runner.invoke(main, ["run", cfg_a, "--jobs", "1"]).exit_code == 0
    assert runner.invoke(main, ["run", cfg_b, "--jobs", "2"]).exit_code == 0
    assert (out_a / "results.csv").read_bytes() == (out_b / "results.csv").read_bytes()
    assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()


def test_out_override_redirects_artifacts(tmp_path):
    configured = tmp_path / "ignored"
    actual = tmp_path / "actual"
    cfg = write_config(tmp_path, qd_config(configured))
    result = runner.invoke(main, ["run", cfg, "--out", str(actual)])
    assert result.exit_code == 0
    assert (actual / "results.csv").exists()
    assert not configured.exists()


def test_b1_run_reproduces_envelope(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, {
        "experiment": "b1",
        "model": {"kind": "three_level", "params": {"gap": 1.0, "tau": 1.0}},
        "output_dir": str(out),
        "params": {"s_lo": 0.0, "s_hi": 2.0, "slowdown": 6.0, "n_frame": 513},
    })
    result = runner.invoke(main, ["run", cfg])
    assert result.exit_code == 0, result.output
    _, rows = read_rows(out)
    lam_total = 2.0 + 2.0
    expected = oracles.three_level_eps_times_t_envelope(lam_total, 1.0)
    assert float(rows[0]["envelope_times_t"]) == pytest.approx(expected, rel=2e-3)
    assert rows[0]["parameter"] == "arc"


def test_counterexample_rows_hit_ceiling(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, {
        "experiment": "counterexample_scaling",
        "model": {"kind": "three_level", "params": {"gap": 1.0, "tau": 1.0}},
        "output_dir": str(out),
        "params": {"l_list": [5.0, 8.0, 12.0, 20.0]},
    })
    result = runner.invoke(main, ["run", cfg])
    assert result.exit_code == 0, result.output
    _, rows = read_rows(out)
    ceiling = oracles.three_level_eps_ceiling(1.0, 1.0)
    for row in rows:
        assert float(row["eps_max"]) == pytest.approx(ceiling, rel=0.02)
        L = float(row["arc_length"])
        assert float(row["analytic_time"]) == pytest.approx(
            oracles.three_level_time_of_arc(L, 1.0), rel=1e-9
        )
    summary = json.loads((out / "summary.json").read_text())
    assert summary["fit"]["exponent"] == pytest.approx(
        oracles.loglog_slope(
            [float(r["arc_length"]) for r in rows],
            [float(r["transit_time"]) for r in rows],
        ),
        abs=1e-9,
    )


def test_malformed_json_exits_2_without_artifacts(tmp_path):
    out = tmp_path / "out"
    bad = tmp_path / "broken.json"
    bad.write_text('{"experiment": "qd_sweep",')
    result = runner.invoke(main, ["run", str(bad), "--out", str(out)])
    assert result.exit_code == 2
    assert not out.exists()


def test_missing_config_file_exits_2(tmp_path):
    result = runner.invoke(main, ["run", str(tmp_path / "nope.json")])
    assert result.exit_code == 2


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda c: c.update(comment="hi"), "comment"),
        (lambda c: c["params"].update(batch=3), "batch"),
        (lambda c: c.update(tolerances={"quadrature_rel_tol": 1e-2}), "tolerance"),
        (lambda c: c["params"].update(slowdowns=[-1.0]), "positive"),
    ],
)
def test_config_violations_exit_2(tmp_path, mutate, fragment):
    out = tmp_path / "out"
    payload = qd_config(out)
    mutate(payload)
    cfg = write_config(tmp_path, payload)
    result = runner.invoke(main, ["run", cfg])
    assert result.exit_code == 2
    assert fragment in result.output.lower()
    assert not out.exists()


def test_fixed_family_experiments_reject_other_models(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, {
        "experiment": "counterexample_scaling",
        "model": {"kind": "rotating_two_level", "params": {"gap": 1.0, "tau": 6.28}},
        "output_dir": str(out),
        "params": {},
    })
    result = runner.invoke(main, ["run", cfg])
    assert result.exit_code == 2
    assert "three_level" in result.output
    assert not out.exists()


def test_schedule_field_rejected_when_experiment_owns_the_clock(tmp_path):
    out = tmp_path / "out"
    payload = {
        "experiment": "counterexample_scaling",
        "model": {"kind": "three_level", "params": {"gap": 1.0, "tau": 1.0}},
        "schedule": {"kind": "constant", "value": 1.0},
        "output_dir": str(out),
        "params": {},
    }
    cfg = write_config(tmp_path, payload)
    result = runner.invoke(main, ["run", cfg])
    assert result.exit_code == 2
    assert "schedule" in result.output.lower()


def test_numerical_failure_exits_3_with_flagged_summary(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, {
        "experiment": "b1",
        "model": {"kind": "rotating_two_level", "params": {"gap": 0.0, "tau": 6.28}},
        "output_dir": str(out),
        "params": {"s_lo": 0.0, "s_hi": 6.28},
    })
    result = runner.invoke(main, ["run", cfg])
    assert result.exit_code == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "numerical_failure"
    assert "Degenerate" in summary["error_type"]
    assert (out / "manifest.json").exists()
    assert not (out / "results.csv").exists()


def test_validate_passes_clean_config(tmp_path):
    cfg = write_config(tmp_path, qd_config(tmp_path / "out"))
    result = runner.invoke(main, ["validate", cfg])
    assert result.exit_code == 0
    assert result.output.strip() == ""


def test_validate_reports_degenerate_spectrum(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "b1",
        "model": {"kind": "rotating_two_level", "params": {"gap": 0.0, "tau": 6.28}},
        "output_dir": str(tmp_path / "out"),
        "params": {"s_lo": 0.0, "s_hi": 6.28},
    })
    result = runner.invoke(main, ["validate", cfg])
    assert result.exit_code == 0
    assert "degenerate" in result.output.lower()


def test_validate_reports_pin_monotonicity(tmp_path):
    cfg = write_config(tmp_path, {
        "experiment": "qd_sweep",
        "model": {
            "kind": "rescaled",
            "params": {
                "base": {"kind": "three_level", "params": {"gap": 1.0, "tau": 1.0}},
                "arc_span": 2.0,
                "factor": {"kind": "polynomial", "coeffs": [2.0, -0.45]},
                "n_nodes": 513,
            },
        },
        "output_dir": str(tmp_path / "out"),
        "params": {"slowdowns": [1.0], "pin": 0.25, "n_profile": 33},
    })
    result = runner.invoke(main, ["validate", cfg])
    assert result.exit_code == 0
    assert "monotonicity" in result.output.lower()


def test_validate_rejects_malformed_json(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text("not json")
    result = runner.invoke(main, ["validate", str(bad)])
    assert result.exit_code == 2


def test_version_flag():
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output
