from fractions import Fraction

import numpy as np
import pytest

from earid.errors import EaridError, UndefinedMetricError
from earid.metrics import (
    CLIENT,
    COHORT_VC,
    COHORT_VI,
    COHORT_VI_N,
    IMPOSTER,
    BinaryCounts,
    MultiConfusion,
    Prediction,
    RunKey,
    aggregate_verification,
    display_verification,
    identification_metrics,
    percent,
    verification_metrics,
)


class TestVerificationMetrics:
    def test_exact_fractions_for_published_style_counts(self):
        m = verification_metrics(BinaryCounts(183, 87, 87, 3693))
        assert m.far == Fraction(87, 3780)
        assert m.frr == Fraction(87, 270)
        assert m.ac == Fraction(183 + 3693, 4050)
        assert m.tpr == Fraction(183, 270)
        assert 2 * m.hter == m.far + m.frr  # exact identity

    def test_display_follows_table_convention(self):
        disp = display_verification(BinaryCounts(183, 87, 87, 3693))
        assert disp["far"] == Fraction(23, 10)
        assert disp["frr"] == Fraction(322, 10)
        # displayed HTER is the mean of the displayed FAR and FRR
        assert disp["hter"] == Fraction(1725, 100)
        assert disp["ac"] == Fraction(957, 10)

    def test_zero_imposter_denominator(self):
        with pytest.raises(UndefinedMetricError):
            verification_metrics(BinaryCounts(5, 5, 0, 0))

    def test_zero_client_denominator(self):
        with pytest.raises(UndefinedMetricError):
            verification_metrics(BinaryCounts(0, 0, 5, 5))

    def test_counts_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            BinaryCounts(-1, 0, 0, 0)

    def test_counts_addition(self):
        total = BinaryCounts(1, 2, 3, 4) + BinaryCounts(10, 20, 30, 40)
        assert total == BinaryCounts(11, 22, 33, 44)

    def test_percent_rounds_half_up(self):
        assert percent(Fraction(1725, 10000)) == Fraction(173, 10)
        assert percent(Fraction(1724, 10000)) == Fraction(172, 10)
        assert percent(Fraction(0)) == 0


class TestIdentificationMetrics:
    def test_perfect_diagonal(self):
        m = MultiConfusion(labels=("a", "b", "c"), counts=np.diag([5, 6, 7]))
        ident = identification_metrics(m)
        assert ident.ir == 1
        assert ident.kappa == 1
        assert all(se == 1 for se in ident.sensitivity.values())

    def test_two_class_toy(self):
        m = MultiConfusion(labels=(0, 1), counts=np.array([[8, 2], [3, 7]]))
        ident = identification_metrics(m)
        assert ident.ir == Fraction(3, 4)
        assert ident.pi_e == Fraction(1, 2)
        assert ident.kappa == Fraction(1, 2)

    def test_uniform_random_confusion_near_chance(self):
        rng = np.random.default_rng(0)
        labels = tuple(range(15))
        truths = rng.integers(0, 15, size=100_000)
        predictions = rng.integers(0, 15, size=100_000)
        m = MultiConfusion.from_records(truths.tolist(), predictions.tolist(), labels)
        ident = identification_metrics(m)
        assert float(ident.ir) == pytest.approx(1 / 15, abs=0.01)
        assert float(ident.kappa) == pytest.approx(0.0, abs=0.01)

    def test_kappa_undefined_when_expected_agreement_is_one(self):
        m = MultiConfusion(labels=("only",), counts=np.array([[9]]))
        with pytest.raises(UndefinedMetricError):
            identification_metrics(m)

    def test_kappa_below_one_with_any_confusion(self):
        m = MultiConfusion(labels=(0, 1), counts=np.array([[9, 1], [0, 10]]))
        ident = identification_metrics(m)
        assert ident.kappa < 1

    def test_kappa_at_most_one_and_one_only_when_diagonal(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            counts = rng.integers(0, 20, size=(4, 4))
            if counts.sum() == 0:
                continue
            m = MultiConfusion(labels=tuple(range(4)), counts=counts)
            try:
                ident = identification_metrics(m)
            except UndefinedMetricError:
                continue
            assert ident.kappa <= 1
            off_diagonal = counts.sum() - np.trace(counts)
            assert (ident.kappa == 1) == (off_diagonal == 0)

    def test_empty_confusion(self):
        m = MultiConfusion(labels=(0, 1), counts=np.zeros((2, 2)))
        with pytest.raises(UndefinedMetricError):
            identification_metrics(m)


def _prediction(cohort, truth, predicted, subject="x"):
    return Prediction(
        cohort=cohort, subject=subject, day=1, trial=1, segment=0,
        truth=truth, predicted=predicted,
    )


class TestAggregate:
    def _runs(self):
        key_a = RunKey("R", "r01", 1, 1)
        key_b = RunKey("R", "r02", 2, 1)
        runs = {
            key_a: [
                _prediction(COHORT_VC, CLIENT, CLIENT),
                _prediction(COHORT_VI, IMPOSTER, IMPOSTER),
                _prediction(COHORT_VI_N, IMPOSTER, CLIENT),
            ],
            key_b: [
                _prediction(COHORT_VC, CLIENT, IMPOSTER),
                _prediction(COHORT_VI, IMPOSTER, CLIENT),
                _prediction(COHORT_VI_N, IMPOSTER, IMPOSTER),
            ],
        }
        return runs, [key_a, key_b]

    def test_slices_add_up(self):
        runs, expected = self._runs()
        slices = aggregate_verification(runs, expected)
        overall = slices["overall"]
        assert overall == BinaryCounts(1, 1, 2, 2)
        cohort_sum = slices[COHORT_VC] + slices[COHORT_VI] + slices[COHORT_VI_N]
        assert cohort_sum == overall
        assert slices["S_R"] == slices[COHORT_VC] + slices[COHORT_VI]
        client_sum = slices["client:r01"] + slices["client:r02"]
        assert client_sum == overall
        assert slices["day:1"] + slices["day:2"] == overall

    def test_missing_run_detected(self):
        runs, expected = self._runs()
        expected.append(RunKey("R", "r03", 1, 1))
        with pytest.raises(EaridError, match="r03"):
            aggregate_verification(runs, expected)

    def test_extra_run_detected(self):
        runs, expected = self._runs()
        with pytest.raises(EaridError, match="r02"):
            aggregate_verification(runs, expected[:1])

    def test_single_run_slice_sizes(self):
        key = RunKey("B", "r01", 1, 1)
        n, subjects = 3, 15
        rows = [_prediction(COHORT_VC, CLIENT, CLIENT) for _ in range(n)]
        rows += [_prediction(COHORT_VI, IMPOSTER, IMPOSTER) for _ in range(14 * n)]
        rows += [_prediction(COHORT_VI_N, IMPOSTER, IMPOSTER) for _ in range(5 * n)]
        slices = aggregate_verification({key: rows}, [key])
        assert slices["overall"].total == 20 * n
        assert slices["S_R"].total == 15 * n
