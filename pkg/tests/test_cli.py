"""CLI tests: subcommands, outputs, and exit-code mapping."""

import json

import pytest

from dystress.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, main

TINY_CONFIG = {
    "config_version": 1,
    "seed": 2,
    "synthetic": {
        "num_classes": 3,
        "samples_per_class": 8,
        "ambient_dim": 6,
        "intra_class_sigma": 0.2,
        "augment_sigma": 0.1,
    },
    "encoder": {"layer_widths": [6, 8, 4]},
    "batch_size": 8,
    "epochs": 2,
    "eval_every": 1,
    "knn_k": 2,
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


class TestTempProfile:
    def test_csv_output(self, tmp_path, capsys):
        out = tmp_path / "profile.csv"
        code = main(
            [
                "temp-profile",
                "--variant", "cosine",
                "--tmin", "0.1",
                "--tmax", "0.2",
                "--samples", "5",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "s,tau"
        assert len(lines) == 6
        first = lines[1].split(",")
        assert float(first[0]) == -1.0 and abs(float(first[1]) - 0.2) < 1e-12

    def test_shifted_arguments(self, tmp_path):
        out = tmp_path / "p.csv"
        code = main(
            [
                "temp-profile",
                "--variant", "shifted",
                "--tmin", "0.1",
                "--tmax", "0.2",
                "--shift", "-0.4",
                "--scale", "0.7",
                "--samples", "11",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK

    def test_invalid_range_exit_1(self, tmp_path):
        code = main(
            [
                "temp-profile",
                "--variant", "cosine",
                "--tmin", "0.3",
                "--tmax", "0.2",
                "--samples", "5",
                "--out", str(tmp_path / "x.csv"),
            ]
        )
        assert code == EXIT_VALIDATION


class TestOdeVerify:
    def test_small_grid_passes(self, tmp_path, capsys):
        out = tmp_path / "ode.csv"
        code = main(
            [
                "ode-verify",
                "--delta", "1.0",
                "--bigk", "10.0",
                "--tau-max", "0.2",
                "--c-count", "4",
                "--s-count", "501",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        assert "summary: PASS" in capsys.readouterr().out
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "delta,bigk,c,frac_correct_sign,valid_points"
        assert len(lines) == 5


    def test_insufficient_grid_exit_2(self, tmp_path, capsys):
        # a 2-point s grid cannot support central differences: every cell is
        # flagged insufficient and the verification cannot pass
        code = main(
            [
                "ode-verify",
                "--delta", "1.0",
                "--bigk", "10.0",
                "--tau-max", "0.2",
                "--c-count", "2",
                "--s-count", "2",
                "--out", str(tmp_path / "ode.csv"),
            ]
        )
        assert code == EXIT_NUMERIC
        assert "FAIL" in capsys.readouterr().out


class TestGradcheck:
    @pytest.mark.parametrize("mode", ["detached", "coupled"])
    def test_passes(self, mode, capsys):
        code = main(
            ["gradcheck", "--n", "3", "--d", "5", "--mode", mode, "--trials", "3", "--seed", "1"]
        )
        assert code == EXIT_OK
        assert "PASS" in capsys.readouterr().out

    def test_bad_arguments_exit_1(self):
        assert main(["gradcheck", "--n", "1"]) == EXIT_VALIDATION


class TestSimulateAndMetrics:
    def test_simulate_writes_artifacts(self, tmp_path, capsys):
        config_path = write_config(tmp_path, TINY_CONFIG)
        out_dir = tmp_path / "run"
        code = main(["simulate", "--config", str(config_path), "--out-dir", str(out_dir)])
        assert code == EXIT_OK
        assert (out_dir / "metrics.csv").exists()
        assert "final epoch 2" in capsys.readouterr().out

    def test_simulate_determinism_byte_identical(self, tmp_path):
        config_path = write_config(tmp_path, TINY_CONFIG)
        main(["simulate", "--config", str(config_path), "--out-dir", str(tmp_path / "r1")])
        main(["simulate", "--config", str(config_path), "--out-dir", str(tmp_path / "r2")])
        assert (tmp_path / "r1" / "metrics.csv").read_bytes() == (
            tmp_path / "r2" / "metrics.csv"
        ).read_bytes()

    def test_simulate_with_dataset_file(self, tmp_path):
        from dystress.harness import config_from_dict
        from dystress.synthetic import generate, write_dataset

        config = config_from_dict(TINY_CONFIG)
        data_path = tmp_path / "data.jsonl"
        write_dataset(data_path, generate(config.synthetic))
        config_path = write_config(tmp_path, TINY_CONFIG)
        code = main(
            [
                "simulate",
                "--config", str(config_path),
                "--out-dir", str(tmp_path / "run"),
                "--data", str(data_path),
            ]
        )
        assert code == EXIT_OK

    def test_metrics_recompute(self, tmp_path, capsys):
        config_path = write_config(tmp_path, TINY_CONFIG)
        out_dir = tmp_path / "run"
        main(["simulate", "--config", str(config_path), "--out-dir", str(out_dir)])
        code = main(["metrics", "--embeddings", str(out_dir / "embeddings.jsonl"), "--k", "2"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        for key in ("uniformity", "alignment", "tolerance", "interclass_uniformity", "knn_top1"):
            assert key in out

    def test_unknown_config_field_exit_1(self, tmp_path):
        config_path = write_config(tmp_path, {**TINY_CONFIG, "typo_field": 1})
        code = main(["simulate", "--config", str(config_path), "--out-dir", str(tmp_path / "x")])
        assert code == EXIT_VALIDATION

    def test_missing_config_exit_3(self, tmp_path):
        code = main(["simulate", "--config", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)])
        assert code == EXIT_IO

    def test_missing_out_dir_exit_1(self, tmp_path):
        config_path = write_config(tmp_path, TINY_CONFIG)
        assert main(["simulate", "--config", str(config_path)]) == EXIT_VALIDATION


class TestSweepCommand:
    def test_sweep_runs_and_writes_csv(self, tmp_path, capsys):
        sweep_config = {
            "config_version": 1,
            "base": {**TINY_CONFIG, "epochs": 1},
            "overrides": {
                "profiles": [
                    {"variant": "constant", "tau_min": 0.1, "tau_max": 0.1},
                    {"variant": "cosine_vanilla", "tau_min": 0.1, "tau_max": 0.2},
                ]
            },
        }
        config_path = write_config(tmp_path, sweep_config, "sweep.json")
        out_dir = tmp_path / "sweep"
        code = main(["sweep", "--config", str(config_path), "--out-dir", str(out_dir)])
        assert code == EXIT_OK
        lines = (out_dir / "sweep.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 2  # header + 2 configs x 2 eval epochs
        assert (out_dir / "run_000" / "metrics.csv").exists()
        assert (out_dir / "run_001" / "metrics.csv").exists()
