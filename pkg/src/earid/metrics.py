"""Confusion accounting and verification/identification rates.

Rates are kept as exact rationals (``fractions.Fraction``) and rounded only
when rendered, so identities such as ``2 * HTER == FAR + FRR`` hold exactly
and repeated aggregation cannot drift.  The client class is the positive
class everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EaridError, UndefinedMetricError

#: Verification labels; the client is the positive class.
CLIENT, IMPOSTER = 1, 0

#: Validation-row cohorts: the client's own trial, registered imposters,
#: and never-enrolled imposters.
COHORT_VC, COHORT_VI, COHORT_VI_N = "VC", "VI", "VI_N"


@dataclass(frozen=True)
class BinaryCounts:
    """Client-vs-imposter confusion counts (client = positive)."""

    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fn", "fp", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __add__(self, other: "BinaryCounts") -> "BinaryCounts":
        return BinaryCounts(
            self.tp + other.tp, self.fn + other.fn, self.fp + other.fp, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def n_clients(self) -> int:
        return self.tp + self.fn

    @property
    def n_imposters(self) -> int:
        return self.fp + self.tn


@dataclass(frozen=True)
class VerificationMetrics:
    """Exact verification rates; values are Fractions in [0, 1]."""

    far: Fraction
    frr: Fraction
    hter: Fraction
    ac: Fraction
    tpr: Fraction


def verification_metrics(c: BinaryCounts) -> VerificationMetrics:
    """FAR, FRR, HTER, AC, and TPR from binary counts.

    A zero denominator raises :class:`UndefinedMetricError`; rates are
    never silently reported as zero.
    """
    if c.n_imposters == 0:
        raise UndefinedMetricError("FAR undefined: no imposter rows (FP + TN = 0)")
    if c.n_clients == 0:
        raise UndefinedMetricError("FRR undefined: no client rows (TP + FN = 0)")
    far = Fraction(c.fp, c.n_imposters)
    frr = Fraction(c.fn, c.n_clients)
    return VerificationMetrics(
        far=far,
        frr=frr,
        hter=(far + frr) / 2,
        ac=Fraction(c.tp + c.tn, c.total),
        tpr=Fraction(c.tp, c.n_clients),
    )


def percent(value: Fraction, decimals: int = 1) -> Fraction:
    """``value`` as a percentage rounded half-up to ``decimals`` places."""
    scale = 10**decimals
    shifted = value * 100 * scale
    return Fraction(int(shifted + Fraction(1, 2)) if shifted >= 0 else -int(-shifted + Fraction(1, 2)), scale)


def display_verification(c: BinaryCounts) -> dict[str, Fraction]:
    """Percentages the way published verification tables carry them.

    FAR, FRR, AC, and TPR are rounded half-up to 0.1 %.  The displayed HTER
    is the mean of the displayed FAR and FRR — the convention such tables
    follow — so it may sit on a 0.05 grid point; the exact rational HTER
    remains available from :func:`verification_metrics`.
    """
    m = verification_metrics(c)
    far, frr = percent(m.far), percent(m.frr)
    return {
        "far": far,
        "frr": frr,
        "hter": (far + frr) / 2,
        "ac": percent(m.ac),
        "tpr": percent(m.tpr),
    }


@dataclass(frozen=True, eq=False)
class MultiConfusion:
    """M-class confusion matrix; rows are true labels, columns predictions."""

    labels: tuple
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        m = len(self.labels)
        if counts.shape != (m, m):
            raise ValueError(f"counts must be ({m}, {m}), got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_records(cls, truths: Sequence, predictions: Sequence, labels: Sequence) -> "MultiConfusion":
        index = {label: i for i, label in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for truth, pred in zip(truths, predictions, strict=True):
            counts[index[truth], index[pred]] += 1
        return cls(labels=tuple(labels), counts=counts)

    @property
    def n_segments(self) -> int:
        return int(self.counts.sum())

    def class_counts(self, label) -> tuple[int, int, int]:
        """(TP, FN, FP) of one class."""
        i = self.labels.index(label)
        tp = int(self.counts[i, i])
        fn = int(self.counts[i, :].sum()) - tp
        fp = int(self.counts[:, i].sum()) - tp
        return tp, fn, fp


@dataclass(frozen=True)
class IdentificationMetrics:
    """Subject-wise sensitivity, identification rate, and Cohen's kappa."""

    sensitivity: Mapping
    ir: Fraction
    pi_e: Fraction
    kappa: Fraction


def identification_metrics(m: MultiConfusion) -> IdentificationMetrics:
    """SE per subject, IR, and chance-corrected agreement kappa.

    ``pi_e`` is the expected agreement ``sum((TP_i + FP_i)(TP_i + FN_i)) /
    N^2``; ``kappa = (IR - pi_e) / (1 - pi_e)`` and is undefined when the
    expected agreement is 1.
    """
    n = m.n_segments
    if n == 0:
        raise UndefinedMetricError("identification metrics undefined: no segments")
    tp_total = 0
    pe_num = 0
    sensitivity = {}
    for label in m.labels:
        tp, fn, fp = m.class_counts(label)
        tp_total += tp
        pe_num += (tp + fp) * (tp + fn)
        if tp + fn > 0:
            sensitivity[label] = Fraction(tp, tp + fn)
    ir = Fraction(tp_total, n)
    pi_e = Fraction(pe_num, n * n)
    if pi_e == 1:
        raise UndefinedMetricError("kappa undefined: expected agreement is 1")
    kappa = (ir - pi_e) / (1 - pi_e)
    return IdentificationMetrics(sensitivity=sensitivity, ir=ir, pi_e=pi_e, kappa=kappa)


@dataclass(frozen=True)
class RunKey:
    """Identity of one validation run: the chosen client trial."""

    setup: str
    client: str
    day: int
    trial: int


@dataclass(frozen=True)
class Prediction:
    """One classified validation row with its provenance."""

    cohort: str
    subject: str
    day: int
    trial: int
    segment: int
    truth: int
    predicted: int


def _counts(predictions: Iterable[Prediction]) -> BinaryCounts:
    tp = fn = fp = tn = 0
    for p in predictions:
        if p.truth == CLIENT:
            if p.predicted == CLIENT:
                tp += 1
            else:
                fn += 1
        else:
            if p.predicted == CLIENT:
                fp += 1
            else:
                tn += 1
    return BinaryCounts(tp, fn, fp, tn)


def aggregate_verification(
    runs: Mapping[RunKey, Sequence[Prediction]],
    expected_runs: Iterable[RunKey] | None = None,
) -> dict[str, BinaryCounts]:
    """Fold per-run predictions into sliced confusion counts.

    Slices: ``overall`` (every row), ``S_R`` (client + registered-imposter
    rows, the published-table convention), per-cohort ``VC``/``VI``/``VI_N``,
    ``client:<subject>`` per validation client, and ``day:<j>`` per
    validation day.  Slice totals add up to the overall totals.
    """
    if expected_runs is not None:
        expected = set(expected_runs)
        have = set(runs)
        if have != expected:
            missing = sorted((k.client, k.day, k.trial) for k in expected - have)
            extra = sorted((k.client, k.day, k.trial) for k in have - expected)
            raise EaridError(f"run coverage mismatch: missing={missing} extra={extra}")
    slices: dict[str, BinaryCounts] = {}

    def add(name: str, counts: BinaryCounts):
        slices[name] = slices.get(name, BinaryCounts()) + counts

    for key, predictions in runs.items():
        by_cohort: dict[str, list[Prediction]] = {}
        for p in predictions:
            by_cohort.setdefault(p.cohort, []).append(p)
        run_total = BinaryCounts()
        for cohort, rows in by_cohort.items():
            counts = _counts(rows)
            add(cohort, counts)
            run_total += counts
            if cohort in (COHORT_VC, COHORT_VI):
                add("S_R", counts)
        add("overall", run_total)
        add(f"client:{key.client}", run_total)
        add(f"day:{key.day}", run_total)
    return slices
