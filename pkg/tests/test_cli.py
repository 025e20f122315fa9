import json

import numpy as np
import pytest

from peginsert import io
from peginsert.cli import main

SMALL = "policy.max_attempts = 2\ncollect.chunk = 50\n"


def run(argv, capsys):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:  # argparse errors
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workflow(tmp_path_factory):
    """collect -> train -> insert on a small run, shared by several tests."""
    root = tmp_path_factory.mktemp("flow")
    (root / "small.toml").write_text(SMALL)
    common = ["--config", root / "small.toml", "--seed", 5, "--out", root]
    codes = [
        main([str(a) for a in ["collect", "-n", 24, "--trace", 3, *common]]),
        main([str(a) for a in ["train", root / "dataset.csv", "--splits", 2, *common]]),
        main([str(a) for a in ["insert", root / "models.json", "-n", 2, *common]]),
    ]
    return root, codes


class TestDemo:
    def test_default_has_8400_rows(self, tmp_path, capsys):
        code, out, _ = run(["demo", "--seed", 0, "--out", tmp_path], capsys)
        assert code == 0
        demo = io.read_demo(tmp_path / "demo.csv")
        assert len(demo) == 8400

    def test_custom_goal_is_last_row(self, tmp_path, capsys):
        code, _, _ = run(["demo", "--goal", 1.5, -2.0, 3.0, "--seed", 0, "--out", tmp_path], capsys)
        assert code == 0
        np.testing.assert_array_equal(io.read_demo(tmp_path / "demo.csv").positions[-1], [1.5, -2.0, 3.0])

    def test_zero_duration_is_usage_error(self, tmp_path, capsys):
        code, _, err = run(["demo", "--duration", 0, "--seed", 0, "--out", tmp_path], capsys)
        assert code == 1
        assert "duration" in err

    def test_missing_seed_prints_entropy_seed(self, tmp_path, capsys):
        code, out, _ = run(["demo", "--out", tmp_path], capsys)
        assert code == 0
        assert out.startswith("seed: ")


class TestCollect:
    def test_fixed_seed_is_byte_identical(self, tmp_path, capsys):
        for sub in ("a", "b"):
            assert run(["collect", "-n", 10, "--seed", 42, "--out", tmp_path / sub], capsys)[0] == 0
        a = (tmp_path / "a" / "dataset.csv").read_bytes()
        assert a == (tmp_path / "b" / "dataset.csv").read_bytes()
        assert len(a.splitlines()) == 11

    def test_zero_trials_rejected(self, tmp_path, capsys):
        assert run(["collect", "-n", 0, "--seed", 1, "--out", tmp_path], capsys)[0] == 1

    def test_forced_misalignment_inside_clearance_rejected(self, tmp_path, capsys):
        code, _, err = run(["collect", "-n", 1, "--force-d", 0.5, 0.0, "--seed", 1, "--out", tmp_path], capsys)
        assert code == 1
        assert "outside" in err


class TestWorkflow:
    def test_all_stages_succeed(self, workflow):
        root, codes = workflow
        assert codes == [0, 0, 0]
        for name in ("dataset.csv", "trace_3.csv", "models.json", "train_report.json",
                     "campaign.json", "episodes.csv"):
            assert (root / name).exists()

    def test_reports(self, workflow):
        root, _ = workflow
        report = json.loads((root / "campaign.json").read_text())
        assert report["lfd_sl"]["n_episodes"] == report["lfd"]["n_episodes"] == 2
        assert report["lfd_sl"]["successes"] >= report["lfd"]["successes"]
        assert report["seed"] == 5
        train = json.loads((root / "train_report.json").read_text())
        assert len(train["rmse_by_bucket"]) == 5
        assert len(io.read_episodes(root / "episodes.csv")) == 4

    @pytest.mark.parametrize("name,expected", [
        ("trace_3.csv", "wrench_vs_time.png"),
        ("dataset.csv", "wrench_vs_misalignment.png"),
        ("train_report.json", "rmse_by_bucket.png"),
        ("campaign.json", "campaign_outcomes.png"),
    ])
    def test_plotdata(self, workflow, name, expected, capsys):
        root, _ = workflow
        code, _, _ = run(["plotdata", root / name, "--seed", 0, "--out", root / "plots"], capsys)
        assert code == 0
        png = root / "plots" / expected
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert png.with_suffix(".csv").exists()

    def test_corrupt_dataset_reports_row(self, workflow, tmp_path, capsys):
        root, _ = workflow
        lines = (root / "dataset.csv").read_text().splitlines()
        lines[7] = lines[7].replace(",", ";", 1)
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join(lines) + "\n")
        code, _, err = run(["train", bad, "--seed", 1, "--out", tmp_path], capsys)
        assert code == 2
        assert "row 8" in err

    def test_too_few_rows_is_runtime_failure(self, workflow, tmp_path, capsys):
        root, _ = workflow
        lines = (root / "dataset.csv").read_text().splitlines()[:10]
        small = tmp_path / "small.csv"
        small.write_text("\n".join(lines) + "\n")
        code, _, err = run(["train", small, "--seed", 1, "--out", tmp_path], capsys)
        assert code == 2
        assert "20" in err


class TestSweep:
    def test_grid_within_two_percent(self, tmp_path, capsys):
        code, _, _ = run(["sweep", "--gammas", "0.3,0.5,0.65", "--seed", 0, "--out", tmp_path], capsys)
        assert code == 0
        rows = list(io.read_rows(tmp_path / "sweep.csv", io.SWEEP_HEADER))
        assert len(rows) == 18
        for _, r in rows:
            rec = dict(zip(io.SWEEP_HEADER, r))
            assert abs(float(rec["rel_error"])) < 0.02

    def test_empty_grid(self, tmp_path, capsys):
        code, _, err = run(["sweep", "--gammas", "", "--seed", 0, "--out", tmp_path], capsys)
        assert code == 1
        assert "empty" in err


class TestErrors:
    def test_unknown_subcommand(self, capsys):
        assert run(["fly"], capsys)[0] == 1

    def test_bad_config_key(self, tmp_path, capsys):
        (tmp_path / "c.toml").write_text("policy.speed = 3\n")
        code, _, err = run(["demo", "--config", tmp_path / "c.toml", "--out", tmp_path], capsys)
        assert code == 1
        assert "policy.speed" in err

    def test_missing_input_is_runtime_failure(self, tmp_path, capsys):
        assert run(["train", tmp_path / "none.csv", "--seed", 1, "--out", tmp_path], capsys)[0] == 2
