import csv

import numpy as np
import pytest

from earid.dataset import (
    MANIFEST_NAME,
    DatasetManifest,
    GeneratorConfig,
    generate_dataset,
    load_dataset,
    subject_profile,
    synthesize_trial,
)
from earid.errors import (
    CohortStructureError,
    DuplicateTrialError,
    MissingSampleFileError,
    SampleSizeMismatchError,
)
from earid.features import welch_series
from earid.signal import preprocess

FAST = GeneratorConfig(n_clients=2, n_imposters=1, duration_s=20.0, fs=128.0)


def file_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


class TestGenerate:
    def test_recording_count_matches_cohorts(self, tmp_path):
        cfg = GeneratorConfig(n_clients=15, n_imposters=5, duration_s=4.0, fs=64.0)
        manifest = generate_dataset(tmp_path, seed=0, config=cfg)
        assert len(manifest.entries) == 15 * 6 + 5 * 3 == 105
        assert len(manifest.clients) == 15 and len(manifest.imposters) == 5

    def test_sample_count_arithmetic(self, tmp_path):
        cfg = GeneratorConfig(n_clients=1, n_imposters=1, duration_s=190.0, fs=250.0)
        manifest = generate_dataset(tmp_path, seed=0, config=cfg)
        rec = manifest.load_recording(manifest.clients[0], 1, 1)
        assert rec.n_samples == 47500
        assert (tmp_path / manifest.entries[0].ch1_file).stat().st_size == 47500 * 4

    def test_same_seed_is_byte_identical(self, tmp_path):
        a = generate_dataset(tmp_path / "a", seed=42, config=FAST)
        b = generate_dataset(tmp_path / "b", seed=42, config=FAST)
        assert file_bytes(a.root) == file_bytes(b.root)

    def test_different_seeds_differ(self, tmp_path):
        a = generate_dataset(tmp_path / "a", seed=1, config=FAST)
        b = generate_dataset(tmp_path / "b", seed=2, config=FAST)
        assert file_bytes(a.root) != file_bytes(b.root)

    def test_subject_stream_independent_of_cohort_size(self):
        cfg_small = FAST
        cfg_large = GeneratorConfig(n_clients=5, n_imposters=2, duration_s=20.0, fs=128.0)
        prof_small = subject_profile(9, "R", 1, cfg_small)
        prof_large = subject_profile(9, "R", 1, cfg_large)
        assert prof_small.alpha_peak_hz == prof_large.alpha_peak_hz
        a = synthesize_trial(prof_small, 1, 1, cfg_small, 9)
        b = synthesize_trial(prof_large, 1, 1, cfg_large, 9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_intruders_have_single_day(self, tmp_path):
        manifest = generate_dataset(tmp_path, seed=0, config=FAST)
        days = {e.day for e in manifest.entries if e.cohort == "N"}
        assert days == {1}

    def test_invalid_config_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_dataset(tmp_path, seed=0, config=GeneratorConfig(n_clients=0))

    def test_channels_are_correlated(self, tmp_path):
        manifest = generate_dataset(tmp_path, seed=5, config=FAST)
        rec = manifest.load_recording(manifest.clients[0], 1, 1)
        r = np.corrcoef(rec.ch1, rec.ch2)[0, 1]
        assert 0.4 < r < 0.99

    def test_artifact_rate_produces_large_amplitudes(self, tmp_path):
        cfg = GeneratorConfig(
            n_clients=1, n_imposters=1, duration_s=60.0, fs=128.0, artifact_rate=0.2
        )
        manifest = generate_dataset(tmp_path, seed=3, config=cfg)
        rec = manifest.load_recording(manifest.clients[0], 1, 1)
        assert max(np.abs(rec.ch1).max(), np.abs(rec.ch2).max()) > 50.0


class TestLoad:
    def test_round_trip(self, tmp_path):
        generated = generate_dataset(tmp_path, seed=0, config=FAST)
        loaded = load_dataset(tmp_path)
        assert loaded.clients == generated.clients
        assert loaded.imposters == generated.imposters
        rec = loaded.load_recording(loaded.clients[1], 2, 3)
        assert rec.n_samples == FAST.n_samples
        assert rec.fs == FAST.fs

    def _rows(self, root):
        with open(root / MANIFEST_NAME, newline="") as fh:
            return list(csv.reader(fh))

    def _write(self, root, rows):
        with open(root / MANIFEST_NAME, "w", newline="\n") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)

    def test_duplicate_entry(self, tmp_path):
        generate_dataset(tmp_path, seed=0, config=FAST)
        rows = self._rows(tmp_path)
        rows.append(rows[1])
        self._write(tmp_path, rows)
        with pytest.raises(DuplicateTrialError):
            load_dataset(tmp_path)

    def test_missing_trial_names_subject(self, tmp_path):
        generate_dataset(tmp_path, seed=0, config=FAST)
        rows = self._rows(tmp_path)
        removed = rows.pop(3)
        self._write(tmp_path, rows)
        with pytest.raises(CohortStructureError) as err:
            load_dataset(tmp_path)
        assert removed[0] in str(err.value)

    def test_truncated_file_names_file(self, tmp_path):
        manifest = generate_dataset(tmp_path, seed=0, config=FAST)
        victim = tmp_path / manifest.entries[2].ch2_file
        victim.write_bytes(victim.read_bytes()[:-8])
        with pytest.raises(SampleSizeMismatchError) as err:
            load_dataset(tmp_path)
        assert victim.name in str(err.value)

    def test_missing_file(self, tmp_path):
        manifest = generate_dataset(tmp_path, seed=0, config=FAST)
        (tmp_path / manifest.entries[0].ch1_file).unlink()
        with pytest.raises(MissingSampleFileError):
            load_dataset(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingSampleFileError):
            load_dataset(tmp_path)

    def test_subject_in_two_cohorts(self, tmp_path):
        generate_dataset(tmp_path, seed=0, config=FAST)
        rows = self._rows(tmp_path)
        # relabel one of n01's trials as cohort R
        for row in rows[1:]:
            if row[0] == "n01":
                row[1] = "R"
                break
        self._write(tmp_path, rows)
        with pytest.raises(CohortStructureError):
            load_dataset(tmp_path)


def _mean_alpha_peak(manifest, subject, day):
    peaks = []
    for trial in (1, 2, 3):
        rec = preprocess(manifest.load_recording(subject, day, trial))
        freqs, power = welch_series(rec.ch1, rec.fs, 20.0, 0.5)
        band = (freqs >= 8.0) & (freqs <= 13.5)
        peaks.append(freqs[band][np.argmax(power[band])])
    return float(np.mean(peaks))


class TestDriftKnob:
    def test_zero_drift_days_indistinguishable(self, tmp_path):
        cfg = GeneratorConfig(
            n_clients=3, n_imposters=1, drift_peak_hz=0.0,
            drift_gain_low=1.0, drift_gain_high=1.0, artifact_rate=0.0,
        )
        manifest = generate_dataset(tmp_path, seed=11, config=cfg)
        for subject in manifest.clients:
            d1 = _mean_alpha_peak(manifest, subject, 1)
            d2 = _mean_alpha_peak(manifest, subject, 2)
            assert abs(d2 - d1) <= 0.2

    def test_nonzero_drift_shifts_day2_peak(self, tmp_path):
        cfg = GeneratorConfig(n_clients=3, n_imposters=1, drift_peak_hz=0.5, artifact_rate=0.0)
        manifest = generate_dataset(tmp_path, seed=11, config=cfg)
        for index, subject in enumerate(manifest.clients, start=1):
            profile = subject_profile(11, "R", index, cfg)
            configured = profile.day_drift[1][0]
            measured = _mean_alpha_peak(manifest, subject, 2) - _mean_alpha_peak(
                manifest, subject, 1
            )
            assert measured == pytest.approx(configured, abs=0.2)
