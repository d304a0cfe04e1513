import csv
from pathlib import Path

import numpy as np
import pytest

from earid.cli import main


def run_cli(*args):
    return main([str(a) for a in args])


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-data")
    code = main([
        "gen", "--out", str(out), "--seed", "5", "--subjects", "3", "--imposters", "2",
        "--duration", "45", "--fs", "200", "--artifact-rate", "0.02",
    ])
    assert code == 0
    return out


class TestGen:
    def test_generates_and_reports(self, tmp_path, capfd):
        code = run_cli(
            "gen", "--out", tmp_path / "d", "--seed", "1", "--subjects", "2",
            "--imposters", "1", "--duration", "20", "--fs", "128",
        )
        out = capfd.readouterr().out
        assert code == 0
        assert "recordings 15" in out
        assert "checksum " in out
        assert (tmp_path / "d" / "manifest.csv").exists()

    def test_same_seed_same_checksum(self, tmp_path, capfd):
        args = ["--seed", "9", "--subjects", "2", "--imposters", "1",
                "--duration", "20", "--fs", "128"]
        run_cli("gen", "--out", tmp_path / "a", *args)
        first = capfd.readouterr().out
        run_cli("gen", "--out", tmp_path / "b", *args)
        second = capfd.readouterr().out
        checksum = lambda text: [l for l in text.splitlines() if l.startswith("checksum")]
        assert checksum(first) == checksum(second)

    def test_zero_subjects_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("gen", "--out", tmp_path, "--subjects", "0")
        assert exc.value.code == 2


class TestFeatures:
    def test_writes_feature_csv(self, cli_dataset, tmp_path):
        out = tmp_path / "features"
        assert run_cli("features", "--data", cli_dataset, "--out", out, "--seg-len", "10") == 0
        path = out / "features_10s.csv"
        lines = path.read_text().splitlines()
        assert lines[0] == "subject,day,trial,segment," + ",".join(
            f"f{i}" for i in range(1, 27)
        )
        assert len(lines) > 1


class TestEval:
    def _eval(self, cli_dataset, out, *extra):
        return run_cli(
            "eval", "--data", cli_dataset, "--out", out,
            "--setup", "r", "--seg-len", "10", "--classifier", "cos",
            "--features", "psd+ar", *extra,
        )

    def test_outputs_exist(self, cli_dataset, tmp_path):
        out = tmp_path / "eval"
        assert self._eval(cli_dataset, out) == 0
        cell = out / "ver_R_L10_cos_psd+ar"
        assert (cell / "predictions.csv").exists()
        assert (cell / "counts.csv").exists()
        assert (cell / "metrics.csv").exists()
        assert (out / "id_R_L10_psd+ar" / "confusion.csv").exists()
        assert (out / "eval_cells.csv").exists()
        assert (out / "summary.txt").exists()

    def test_counts_have_expected_totals(self, cli_dataset, tmp_path):
        out = tmp_path / "eval-counts"
        self._eval(cli_dataset, out)
        with open(out / "ver_R_L10_cos_psd+ar" / "counts.csv", newline="") as fh:
            rows = {r["slice"]: r for r in csv.DictReader(fh)}
        overall = sum(int(rows["overall"][k]) for k in ("tp", "fn", "fp", "tn"))
        n, runs = 4, 3 * 2 * 3  # floor(40/10) segments, 18 validation runs
        assert overall == runs * n * (3 + 2)  # 3 S_R subjects + 2 S_N per run

    def test_deterministic_outputs(self, cli_dataset, tmp_path):
        a, b = tmp_path / "eval-a", tmp_path / "eval-b"
        self._eval(cli_dataset, a)
        self._eval(cli_dataset, b)
        assert tree_bytes(a) == tree_bytes(b)

    def test_parallel_matches_serial(self, cli_dataset, tmp_path, monkeypatch):
        serial, parallel = tmp_path / "eval-s", tmp_path / "eval-p"
        monkeypatch.setenv("EARID_THREADS", "1")
        self._eval(cli_dataset, serial)
        monkeypatch.setenv("EARID_THREADS", "2")
        self._eval(cli_dataset, parallel, "--threads", "2")
        assert tree_bytes(serial) == tree_bytes(parallel)

    def test_audit_plans_flag(self, cli_dataset, tmp_path):
        out = tmp_path / "eval-audit"
        self._eval(cli_dataset, out, "--audit-plans")
        assert (out / "ver_R_L10_cos_psd+ar" / "plans.csv").exists()

    def test_feature_set_comparison_produces_one_row_each(self, cli_dataset, tmp_path):
        out = tmp_path / "eval-features"
        code = run_cli(
            "eval", "--data", cli_dataset, "--out", out, "--setup", "r",
            "--seg-len", "10", "--classifier", "cos", "--features", "ar,psd,psd+ar",
        )
        assert code == 0
        for token in ("ar", "psd", "psd+ar"):
            assert (out / f"ver_R_L10_cos_{token}" / "metrics.csv").exists()

    def test_config_file_with_flag_override(self, cli_dataset, tmp_path):
        config = tmp_path / "eval.cfg"
        config.write_text(
            "# evaluation configuration\n"
            f"data = {cli_dataset}\n"
            f"out = {tmp_path / 'from-config'}\n"
            "setups = r\n"
            "seg_lens = 20\n"
            "classifiers = cos\n"
            "features = psd\n"
            "include_sn = false\n"
        )
        assert run_cli("eval", "--config", config, "--seg-len", "10") == 0
        out = tmp_path / "from-config"
        assert (out / "ver_R_L10_cos_psd").exists()  # flag overrode seg_lens
        echo = (out / "eval_config.txt").read_text()
        assert "include_sn = false" in echo

    def test_bad_segment_length_is_usage_error(self, cli_dataset, tmp_path):
        with pytest.raises(SystemExit) as exc:
            self._eval(cli_dataset, tmp_path / "x", "--seg-len", "500")
        assert exc.value.code == 2

    def test_bad_classifier_is_usage_error(self, cli_dataset, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("eval", "--data", cli_dataset, "--out", tmp_path / "x",
                    "--classifier", "forest")
        assert exc.value.code == 2

    def test_missing_dataset_is_runtime_error(self, tmp_path):
        code = run_cli("eval", "--data", tmp_path / "nope", "--out", tmp_path / "x",
                       "--seg-len", "10")
        assert code == 1

    def test_failed_run_flags_partial_outputs(self, tmp_path):
        data = tmp_path / "bad-data"
        run_cli("gen", "--out", data, "--seed", "2", "--subjects", "2",
                "--imposters", "1", "--duration", "20", "--fs", "128")
        from earid.dataset import load_dataset

        victim = data / load_dataset(data).entries[0].ch1_file
        n = victim.stat().st_size // 4
        t = np.arange(n) / 128.0
        # in-band square wave far over the artifact threshold: the whole
        # trial is rejected and feature extraction fails
        (500.0 * np.sign(np.sin(2 * np.pi * 10 * t))).astype("<f4").tofile(victim)
        out = tmp_path / "bad-eval"
        code = run_cli("eval", "--data", data, "--out", out, "--seg-len", "10",
                       "--classifier", "cos", "--setup", "r")
        assert code == 1
        assert "aborted" in (out / "FAILED.txt").read_text()


@pytest.fixture(scope="module")
def eval_dir(cli_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval-for-report")
    code = run_cli(
        "eval", "--data", cli_dataset, "--out", out,
        "--setup", "r,b", "--seg-len", "10,20", "--classifier", "cos",
    )
    assert code == 0
    return out


class TestReport:
    def test_report_outputs(self, cli_dataset, eval_dir, tmp_path):
        out = tmp_path / "report"
        assert run_cli("report", "--eval-dir", eval_dir, "--data", cli_dataset,
                       "--out", out) == 0
        with open(out / "verification_table.csv", newline="") as fh:
            ver = list(csv.DictReader(fh))
        assert {(r["setup"], r["l_seg"]) for r in ver} == {
            ("R", "10"), ("R", "20"), ("B", "10"), ("B", "20")
        }
        with open(out / "identification_table.csv", newline="") as fh:
            ident = list(csv.DictReader(fh))
        assert len(ident) == 4  # one row per setup x seg-len
        assert (out / "summary.txt").exists()

    def test_psd_plot_data_grid(self, cli_dataset, eval_dir, tmp_path):
        out = tmp_path / "report-psd"
        run_cli("report", "--eval-dir", eval_dir, "--data", cli_dataset, "--out", out)
        with open(out / "psd_curves.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        one_curve = [
            float(r["freq_hz"])
            for r in rows
            if r["subject"] == rows[0]["subject"] and r["channel"] == "1"
            and r["day"] == "1" and r["trial"] == "1"
        ]
        assert one_curve[0] == 0.0
        assert one_curve[-1] == 30.0
        spacing = np.diff(one_curve)
        assert np.allclose(spacing, 0.05)

    def test_report_on_empty_dir_lists_expected_files(self, cli_dataset, tmp_path, capfd):
        code = run_cli("report", "--eval-dir", tmp_path / "empty", "--data", cli_dataset,
                       "--out", tmp_path / "r")
        err = capfd.readouterr().err
        assert code == 1
        assert "eval_cells.csv" in err


def test_usage_error_on_unknown_command():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
