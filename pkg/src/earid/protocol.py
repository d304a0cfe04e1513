"""Training/validation assembly for the rigorous and biased protocols.

Setup-R (rigorous) trains on the recording day the validation trial does
not come from, so training and validation never share a day.  Setup-B
(biased) additionally trains on the validation day's other trials.  For a
client trial ``(i, j, k)`` with per-trial feature matrices of N rows:

==========  =========================  =========================
matrix      Setup-R                    Setup-B
==========  =========================  =========================
Y_TC        client, other day, 3N      + same-day non-k, 5N
Y_TI        14 subjects ditto, 42N     ditto, 70N
Y_VC        the trial itself, N        same
Y_VI        14 subjects' (j, k), 14N   same
Y_VI_N      5 intruders' trial k, 5N   same
==========  =========================  =========================

For a fixed (day, trial) the multiset of training rows is the same for all
client choices — only the client/imposter labelling changes — which is what
makes nearest-neighbour behaviour on intruder rows label-symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import DatasetManifest
from .errors import CohortStructureError, ProtocolError
from .features import FeatureMatrix
from .metrics import CLIENT, COHORT_VC, COHORT_VI, COHORT_VI_N, IMPOSTER, RunKey

SETUP_RIGOROUS = "R"
SETUP_BIASED = "B"
DAYS = (1, 2)
TRIALS = (1, 2, 3)


class TrialRef(NamedTuple):
    subject: str
    day: int
    trial: int


@dataclass(frozen=True)
class SplitPlan:
    """Row sources of one validation run (values, not data)."""

    setup: str
    client: str
    day: int
    trial: int
    train_client: tuple[TrialRef, ...]
    train_imposter: tuple[TrialRef, ...]
    val_client: tuple[TrialRef, ...]
    val_imposter: tuple[TrialRef, ...]
    val_imposter_n: tuple[TrialRef, ...]

    @property
    def run_key(self) -> RunKey:
        return RunKey(setup=self.setup, client=self.client, day=self.day, trial=self.trial)

    @property
    def train_sources(self) -> tuple[tuple[TrialRef, int], ...]:
        """(source, label) pairs, client block first."""
        return tuple((ref, CLIENT) for ref in self.train_client) + tuple(
            (ref, IMPOSTER) for ref in self.train_imposter
        )

    def to_rows(self) -> list[dict]:
        """Flat audit rows (role, subject, day, trial, label)."""
        rows = []
        blocks = [
            ("TC", self.train_client, "client"),
            ("TI", self.train_imposter, "imposter"),
            ("VC", self.val_client, "client"),
            ("VI", self.val_imposter, "imposter"),
            ("VI_N", self.val_imposter_n, "imposter"),
        ]
        for role, refs, label in blocks:
            for ref in refs:
                rows.append(
                    {"role": role, "subject": ref.subject, "day": ref.day,
                     "trial": ref.trial, "label": label}
                )
        return rows


def _normalize_setup(setup: str) -> str:
    token = str(setup).upper()
    if token not in (SETUP_RIGOROUS, SETUP_BIASED):
        raise ValueError(f"setup must be 'R' or 'B', got {setup!r}")
    return token


def make_split(manifest: DatasetManifest, setup: str, i, j: int, k: int) -> SplitPlan:
    """Plan the run that validates client ``i``'s trial ``(j, k)``.

    ``i`` may be a 1-based index into the sorted client list or a client
    subject id.  Intruder (cohort N) subjects cannot be clients.
    """
    setup = _normalize_setup(setup)
    clients = manifest.clients
    if isinstance(i, str):
        if i in manifest.imposters:
            raise CohortStructureError(
                f"{i} belongs to the imposter-only cohort and cannot be a client"
            )
        if i not in clients:
            raise ValueError(f"unknown client subject {i!r}")
        subject = i
    else:
        if not 1 <= i <= len(clients):
            raise ValueError(f"client index {i} outside 1..{len(clients)}")
        subject = clients[i - 1]
    if j not in DAYS:
        raise ValueError(f"day {j} outside {DAYS}")
    if k not in TRIALS:
        raise ValueError(f"trial {k} outside {TRIALS}")
    other_day = DAYS[1] if j == DAYS[0] else DAYS[0]

    def training_trials(s: str) -> list[TrialRef]:
        refs = [TrialRef(s, other_day, t) for t in TRIALS]
        if setup == SETUP_BIASED:
            refs += [TrialRef(s, j, t) for t in TRIALS if t != k]
        return refs

    return SplitPlan(
        setup=setup,
        client=subject,
        day=j,
        trial=k,
        train_client=tuple(training_trials(subject)),
        train_imposter=tuple(
            ref for s in clients if s != subject for ref in training_trials(s)
        ),
        val_client=(TrialRef(subject, j, k),),
        val_imposter=tuple(TrialRef(s, j, k) for s in clients if s != subject),
        val_imposter_n=tuple(TrialRef(s, 1, k) for s in manifest.imposters),
    )


def enumerate_runs(manifest: DatasetManifest, setup: str) -> list[SplitPlan]:
    """One plan per (client, day, trial); 90 plans for the full cohort."""
    setup = _normalize_setup(setup)
    if not manifest.clients:
        raise CohortStructureError("manifest has no client cohort")
    return [
        make_split(manifest, setup, i, j, k)
        for i in range(1, len(manifest.clients) + 1)
        for j in DAYS
        for k in TRIALS
    ]


def identification_sources(
    manifest: DatasetManifest, setup: str, j: int, k: int
) -> tuple[list[TrialRef], list[TrialRef]]:
    """(training, validation) trial sources for one-to-many identification.

    The training multiset equals the verification training matrix for any
    client choice at ``(j, k)``; rows are labelled by subject instead of
    client/imposter.  Validation covers every client's trial ``(j, k)``.
    """
    setup = _normalize_setup(setup)
    other_day = DAYS[1] if j == DAYS[0] else DAYS[0]
    train: list[TrialRef] = []
    for s in manifest.clients:
        train.extend(TrialRef(s, other_day, t) for t in TRIALS)
        if setup == SETUP_BIASED:
            train.extend(TrialRef(s, j, t) for t in TRIALS if t != k)
    validation = [TrialRef(s, j, k) for s in manifest.clients]
    return train, validation


@dataclass(frozen=True)
class NormalizationBounds:
    """Per-column minima and maxima learned from a training matrix."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        if self.minimum.shape != self.maximum.shape or self.minimum.ndim != 1:
            raise ValueError("bounds must be matching one-dimensional arrays")
        if np.any(self.minimum > self.maximum):
            raise ValueError("column minimum exceeds maximum")


def fit_bounds(matrix: np.ndarray) -> NormalizationBounds:
    """Column-wise min and max of a non-empty training matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise ValueError("training matrix must be 2-D and non-empty")
    return NormalizationBounds(minimum=matrix.min(axis=0), maximum=matrix.max(axis=0))


def apply_bounds(matrix: np.ndarray, bounds: NormalizationBounds) -> np.ndarray:
    """Map columns through ``(x - min) / (max - min)``.

    Training columns land in [0, 1]; validation values are deliberately not
    clamped, so they may fall outside that range.  A constant training
    column (min == max) maps everything to 0.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    span = bounds.maximum - bounds.minimum
    safe = np.where(span > 0, span, 1.0)
    out = (matrix - bounds.minimum) / safe
    return np.where(span > 0, out, 0.0)


class MinMaxNormalizer(BaseEstimator, TransformerMixin):
    """Min-max scaler matching the protocol's normalisation rule.

    Unlike generic scalers this never clips and sends constant training
    columns to 0, so the estimator can stand in anywhere a transformer is
    expected while staying faithful to the evaluation pipeline.
    """

    def fit(self, X, y=None):
        X = check_array(X)
        self.bounds_ = fit_bounds(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "bounds_")
        X = check_array(X)
        return apply_bounds(X, self.bounds_)


@dataclass(frozen=True, eq=False)
class MaterializedSplit:
    """A plan joined with actual feature rows."""

    plan: SplitPlan
    train_values: np.ndarray
    train_labels: np.ndarray
    train_rows: tuple
    val_values: np.ndarray
    val_truth: np.ndarray
    val_cohorts: tuple[str, ...]
    val_rows: tuple


def materialize(
    plan: SplitPlan,
    store: Mapping[tuple[str, int, int], FeatureMatrix],
    include_sn: bool = True,
) -> MaterializedSplit:
    """Stack the plan's row sources out of a per-trial feature store."""

    def block(refs: Sequence[TrialRef]):
        values, rows = [], []
        for ref in refs:
            try:
                fm = store[tuple(ref)]
            except KeyError:
                raise ProtocolError(f"no features for trial {tuple(ref)}") from None
            values.append(fm.values)
            rows.extend(fm.rows)
        return np.vstack(values), rows

    train_blocks = []
    train_labels = []
    train_rows = []
    for refs, label in ((plan.train_client, CLIENT), (plan.train_imposter, IMPOSTER)):
        values, rows = block(refs)
        train_blocks.append(values)
        train_labels.append(np.full(values.shape[0], label, dtype=np.int64))
        train_rows.extend(rows)

    val_parts = [(plan.val_client, CLIENT, COHORT_VC), (plan.val_imposter, IMPOSTER, COHORT_VI)]
    if include_sn:
        val_parts.append((plan.val_imposter_n, IMPOSTER, COHORT_VI_N))
    val_blocks, val_truth, val_cohorts, val_rows = [], [], [], []
    for refs, label, cohort in val_parts:
        values, rows = block(refs)
        val_blocks.append(values)
        val_truth.append(np.full(values.shape[0], label, dtype=np.int64))
        val_cohorts.extend([cohort] * values.shape[0])
        val_rows.extend(rows)

    return MaterializedSplit(
        plan=plan,
        train_values=np.vstack(train_blocks),
        train_labels=np.concatenate(train_labels),
        train_rows=tuple(train_rows),
        val_values=np.vstack(val_blocks),
        val_truth=np.concatenate(val_truth),
        val_cohorts=tuple(val_cohorts),
        val_rows=tuple(val_rows),
    )
