"""CLI: end-to-end flows, manifests/replay, exit codes, output pins."""

import shutil
import subprocess

import numpy as np
import pytest

from nglf import _io
from nglf.cli import EXIT_INVALID_INPUT, EXIT_NUMERIC, EXIT_OK, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def synth_args(out, p=12, m=3, n=120, snr=3.0, seed=0):
    return (
        "synth", "--p", str(p), "--m", str(m), "--n", str(n),
        "--snr", str(snr), "--seed", str(seed), "--out-dir", str(out),
    )


class TestSynthFitEvalFlow:
    def test_full_pipeline(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, *synth_args(tmp_path))
        assert code == EXIT_OK
        assert "data.csv" in out
        assert (tmp_path / "labels.json").exists()
        assert (tmp_path / "spec.json").exists()

        code, out, _ = run_cli(
            capsys, "fit", "--data", str(tmp_path / "data.csv"), "--m", "3",
            "--out-dir", str(tmp_path),
        )
        assert code == EXIT_OK
        assert out.startswith("objective=")
        assert "stalled=False" in out

        code, out, _ = run_cli(
            capsys, "eval", "nmi", "--model", str(tmp_path / "model.json"),
            "--labels", str(tmp_path / "labels.json"),
        )
        assert code == EXIT_OK
        score = float(out.split()[1])
        assert score > 0.9  # strong factors: clustering should be clean

        for est_args in (
            ("--estimator", "factor", "--model", str(tmp_path / "model.json")),
            ("--estimator", "diagonal", "--train", str(tmp_path / "data.csv")),
            ("--estimator", "shrinkage:0.5", "--train", str(tmp_path / "data.csv")),
            ("--estimator", "empirical", "--train", str(tmp_path / "data.csv")),
        ):
            code, out, _ = run_cli(
                capsys, "eval", "nll", "--test", str(tmp_path / "data.csv"), *est_args
            )
            assert code == EXIT_OK
            assert np.isfinite(float(out.split()[1]))

    def test_fit_writes_trace_and_is_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli(capsys, *synth_args(tmp_path))
        for d in (a, b):
            code, _, _ = run_cli(
                capsys, "fit", "--data", str(tmp_path / "data.csv"), "--m", "3",
                "--seed", "4", "--out-dir", str(d),
            )
            assert code == EXIT_OK
        assert (a / "model.json").read_bytes() == (b / "model.json").read_bytes()
        assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
        header, rows = _io.read_csv(a / "trace.csv")
        assert header == ["stage", "iter", "objective", "alpha"]
        assert len(rows) > 6

    def test_custom_schedule_and_partition(self, capsys, tmp_path):
        code, _, _ = run_cli(
            capsys, "synth", "--p", "4", "--m", "2", "--n", "50",
            "--partition", "0,0,0,1", "--out-dir", str(tmp_path),
        )
        assert code == EXIT_OK
        assert _io.read_json(tmp_path / "labels.json") == [0, 0, 0, 1]
        code, _, _ = run_cli(
            capsys, "fit", "--data", str(tmp_path / "data.csv"), "--m", "2",
            "--schedule", "0.5,0", "--out-dir", str(tmp_path),
        )
        assert code == EXIT_OK
        model = _io.read_json(tmp_path / "model.json")
        assert model["config"]["anneal_schedule"] == [0.5, 0.0]


class TestBoundCommand:
    def test_budget_report_pins(self, capsys):
        code, out, _ = run_cli(
            capsys, "bound", "--m", "64", "--snr", "0.1", "--n-budget", "300"
        )
        assert code == EXIT_OK
        assert "crossing=584.02295607463577" in out
        assert "floor=584" in out
        assert "smallest_recoverable_p=585" in out
        assert "next_multiple_of_m=640" in out
        assert "forbidden_region=(64, 584.02295607463577)" in out

    def test_single_p_value(self, capsys):
        code, out, _ = run_cli(capsys, "bound", "--p", "640", "--m", "64", "--snr", "0.1")
        assert code == EXIT_OK
        n_min = float(out.split("n_min=")[1].split()[0])
        assert 0 < n_min < 300

    def test_single_factor_is_vacuous(self, capsys):
        code, out, _ = run_cli(capsys, "bound", "--p", "10", "--m", "1", "--snr", "1.0")
        assert code == EXIT_OK
        assert "n_min=-inf" in out
        assert "vacuous" in out

    def test_sweep_csv(self, capsys, tmp_path):
        code, out, _ = run_cli(
            capsys, "bound", "--m", "64", "--snr", "0.1",
            "--p-list", "128,640,4096", "--out-dir", str(tmp_path),
        )
        assert code == EXIT_OK
        header, rows = _io.read_csv(tmp_path / "bound.csv")
        assert header == ["p", "n_min"]
        assert [int(r[0]) for r in rows] == [128, 640, 4096]
        assert (tmp_path / "manifest_bound.json").exists()

    def test_requires_some_request(self, capsys):
        code, _, err = run_cli(capsys, "bound", "--m", "4", "--snr", "1.0")
        assert code == EXIT_INVALID_INPUT
        assert "error:" in err


class TestManifests:
    def test_replay_reproduces_bytes_and_overrides_flags(self, capsys, tmp_path):
        run_cli(capsys, *synth_args(tmp_path, p=8, m=2, n=40, seed=11))
        data_before = (tmp_path / "data.csv").read_bytes()
        manifest = tmp_path / "manifest_synth.json"
        manifest_before = manifest.read_bytes()

        (tmp_path / "data.csv").unlink()
        # Contradictory flags: the config must win on every one of them.
        code, _, _ = run_cli(
            capsys, "synth", "--p", "4", "--m", "1", "--n", "5", "--seed", "99",
            "--out-dir", str(tmp_path / "ignored"), "--config", str(manifest),
        )
        assert code == EXIT_OK
        assert (tmp_path / "data.csv").read_bytes() == data_before
        assert manifest.read_bytes() == manifest_before
        assert not (tmp_path / "ignored").exists()

    def test_unknown_config_key_rejected(self, capsys, tmp_path):
        cfg = tmp_path / "bad.json"
        _io.write_json(cfg, {"command": "synth", "turbo": True})
        code, _, err = run_cli(
            capsys, "synth", "--p", "4", "--m", "2", "--n", "10",
            "--out-dir", str(tmp_path), "--config", str(cfg),
        )
        assert code == EXIT_INVALID_INPUT
        assert "unknown config key 'turbo'" in err

    def test_command_mismatch_rejected(self, capsys, tmp_path):
        run_cli(capsys, *synth_args(tmp_path, p=4, m=2, n=10))
        code, _, err = run_cli(
            capsys, "fit", "--data", str(tmp_path / "data.csv"), "--m", "2",
            "--out-dir", str(tmp_path),
            "--config", str(tmp_path / "manifest_synth.json"),
        )
        assert code == EXIT_INVALID_INPUT
        assert "written by 'synth'" in err

    def test_env_var_output_dir(self, capsys, tmp_path, monkeypatch):
        target = tmp_path / "from_env"
        monkeypatch.setenv("NGLF_OUT_DIR", str(target))
        code, _, _ = run_cli(
            capsys, "synth", "--p", "4", "--m", "2", "--n", "10"
        )
        assert code == EXIT_OK
        assert (target / "data.csv").exists()
        manifest = _io.read_json(target / "manifest_synth.json")
        assert manifest["out_dir"] == str(target)


class TestExitCodes:
    def test_invalid_model_spec(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, *synth_args(tmp_path, p=10, m=3))
        assert code == EXIT_INVALID_INPUT
        assert "does not divide" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "fit", "--data", str(tmp_path / "nope.csv"), "--m", "2",
            "--out-dir", str(tmp_path),
        )
        assert code == EXIT_INVALID_INPUT

    def test_singular_estimate_is_numeric_error(self, capsys, tmp_path, rng):
        train = tmp_path / "train.csv"
        test = tmp_path / "test.csv"
        _io.write_matrix_csv(train, rng.standard_normal((5, 8)))
        _io.write_matrix_csv(test, rng.standard_normal((3, 8)))
        code, _, err = run_cli(
            capsys, "eval", "nll", "--test", str(test),
            "--estimator", "empirical", "--train", str(train),
        )
        assert code == EXIT_NUMERIC
        assert "numeric error" in err

    def test_constant_column_rejected(self, capsys, tmp_path):
        bad = tmp_path / "const.csv"
        data = np.ones((20, 3))
        data[:, 0] = np.arange(20)
        data[:, 2] = np.arange(20) ** 2
        _io.write_matrix_csv(bad, data)
        code, _, err = run_cli(
            capsys, "fit", "--data", str(bad), "--m", "1", "--out-dir", str(tmp_path)
        )
        assert code == EXIT_INVALID_INPUT
        assert "column 1" in err


def test_console_script_installed(tmp_path):
    exe = shutil.which("nglf")
    assert exe is not None, "console script 'nglf' not on PATH (editable install)"
    proc = subprocess.run(
        ["nglf", "bound", "--m", "64", "--snr", "0.1", "--n-budget", "300"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    assert "smallest_recoverable_p=585" in proc.stdout
