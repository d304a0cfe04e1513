"""End-to-end evaluation: features -> splits -> classifiers -> counts.

Verification runs one classifier over every enumerated split plan,
normalising each validation matrix with the bounds of its training matrix.
Identification reuses the same training multisets with subject labels and
the cosine classifier.  Runs are independent, so a worker pool may fan
them out; results are reduced in plan order either way, which keeps
outputs deterministic.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .classifiers import CosineNearestClassifier, SMOSVC, ShrinkageLDA, tune_svm
from .dataset import DatasetManifest
from .features import FeatureMatrix, build_feature_matrix, feature_columns
from .metrics import (
    CLIENT,
    IMPOSTER,
    BinaryCounts,
    MultiConfusion,
    Prediction,
    RunKey,
    aggregate_verification,
)
from .protocol import SplitPlan, enumerate_runs, identification_sources, materialize
from .protocol import apply_bounds, fit_bounds
from .signal import DEFAULT_TRIM_SECONDS, FilterSpec, Recording, preprocess

CLASSIFIERS = ("cos", "lda", "svm")
#: Client-cost multiplier countering the 1:14 client:imposter imbalance.
CLIENT_COST_WEIGHT = 14.0

FeatureStore = Mapping[tuple[str, int, int], FeatureMatrix]


def worker_count(requested: int | None = None) -> int:
    """Resolve the worker count, honouring the EARID_THREADS cap."""
    workers = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("EARID_THREADS")
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, workers)


def condition_recordings(
    manifest: DatasetManifest,
    *,
    trim_seconds: float = DEFAULT_TRIM_SECONDS,
    filter_spec: FilterSpec = FilterSpec(),
) -> dict[tuple[str, int, int], Recording]:
    """Load and condition every recording once; keyed by (subject, day, trial)."""
    return {
        entry.key: preprocess(
            manifest.load_recording(*entry.key),
            trim_seconds=trim_seconds,
            filter_spec=filter_spec,
        )
        for entry in manifest.entries
    }


def extract_features(
    conditioned: Mapping[tuple[str, int, int], Recording],
    l_seg: float,
    *,
    artifact_threshold_uv: float = 50.0,
) -> dict[tuple[str, int, int], FeatureMatrix]:
    """Per-trial feature matrices for one segment length."""
    store = {}
    for key, rec in conditioned.items():
        store[key] = build_feature_matrix(
            rec, l_seg, artifact_threshold_uv=artifact_threshold_uv
        )
    return store


def _fit_classifier(name: str, X: np.ndarray, y: np.ndarray, svm_grid, reject_distance):
    if name == "cos":
        if reject_distance is not None:
            return CosineNearestClassifier(
                reject_distance=reject_distance, reject_label=IMPOSTER
            ).fit(X, y)
        return CosineNearestClassifier().fit(X, y)
    if name == "lda":
        return ShrinkageLDA().fit(X, y)
    if name == "svm":
        weight = {CLIENT: CLIENT_COST_WEIGHT}
        params = tune_svm(X, y, grid=svm_grid, class_weight=weight)
        return SMOSVC(**params, class_weight=weight).fit(X, y)
    raise ValueError(f"unknown classifier {name!r}; expected one of {CLASSIFIERS}")


def run_split(
    plan: SplitPlan,
    store: FeatureStore,
    *,
    classifier: str = "cos",
    feature_set: str = "psd+ar",
    include_sn: bool = True,
    svm_grid=None,
    reject_distance: float | None = None,
) -> tuple[RunKey, list[Prediction]]:
    """Execute one validation run and return its row-level predictions."""
    split = materialize(plan, store, include_sn=include_sn)
    cols = list(feature_columns(feature_set))
    train = split.train_values[:, cols]
    val = split.val_values[:, cols]
    bounds = fit_bounds(train)
    train = apply_bounds(train, bounds)
    val = apply_bounds(val, bounds)
    model = _fit_classifier(classifier, train, split.train_labels, svm_grid, reject_distance)
    predicted = model.predict(val)
    records = [
        Prediction(
            cohort=cohort,
            subject=row.subject,
            day=row.day,
            trial=row.trial,
            segment=row.segment,
            truth=int(truth),
            predicted=int(pred),
        )
        for cohort, row, truth, pred in zip(
            split.val_cohorts, split.val_rows, split.val_truth, predicted
        )
    ]
    return plan.run_key, records


@dataclass(frozen=True)
class VerificationResult:
    setup: str
    classifier: str
    feature_set: str
    include_sn: bool
    runs: dict[RunKey, list[Prediction]]
    slices: dict[str, BinaryCounts]

    @property
    def overall(self) -> BinaryCounts:
        return self.slices["overall"]


_POOL_STATE: dict = {}


def _pool_init(store, options):
    _POOL_STATE["store"] = store
    _POOL_STATE["options"] = options


def _pool_run(plan):
    return run_split(plan, _POOL_STATE["store"], **_POOL_STATE["options"])


def run_verification(
    manifest: DatasetManifest,
    store: FeatureStore,
    *,
    setup: str,
    classifier: str = "cos",
    feature_set: str = "psd+ar",
    include_sn: bool = True,
    svm_grid=None,
    workers: int = 1,
    reject_distance: float | None = None,
) -> VerificationResult:
    """All validation runs of one (setup, classifier, feature set) cell."""
    plans = enumerate_runs(manifest, setup)
    options = dict(
        classifier=classifier,
        feature_set=feature_set,
        include_sn=include_sn,
        svm_grid=svm_grid,
        reject_distance=reject_distance,
    )
    if workers > 1 and len(plans) > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_pool_init, initargs=(store, options)
        ) as pool:
            results = list(pool.map(_pool_run, plans))
    else:
        results = [run_split(plan, store, **options) for plan in plans]
    runs = dict(results)
    slices = aggregate_verification(runs, expected_runs=[p.run_key for p in plans])
    return VerificationResult(
        setup=plans[0].setup,
        classifier=classifier,
        feature_set=feature_set,
        include_sn=include_sn,
        runs=runs,
        slices=slices,
    )


@dataclass(frozen=True)
class IdentificationRecord:
    day: int
    trial: int
    subject: str
    segment_key: tuple
    predicted: str


@dataclass(frozen=True)
class IdentificationResult:
    setup: str
    feature_set: str
    confusion: MultiConfusion
    records: tuple[IdentificationRecord, ...]


def run_identification(
    manifest: DatasetManifest,
    store: FeatureStore,
    *,
    setup: str,
    feature_set: str = "psd+ar",
) -> IdentificationResult:
    """One-to-many subject matching with the cosine classifier.

    For each (day, trial) the training matrix is the setup's usual training
    multiset with rows labelled by subject; every client's matching trial
    is classified against it.
    """
    records: list[IdentificationRecord] = []
    cols = list(feature_columns(feature_set))
    setup_token = None
    for j in (1, 2):
        for k in (1, 2, 3):
            train_refs, val_refs = identification_sources(manifest, setup, j, k)
            setup_token = setup_token or (str(setup).upper())
            train_blocks, train_labels = [], []
            for ref in train_refs:
                fm = store[tuple(ref)]
                train_blocks.append(fm.values[:, cols])
                train_labels.extend([ref.subject] * fm.n_rows)
            train = np.vstack(train_blocks)
            bounds = fit_bounds(train)
            model = CosineNearestClassifier().fit(
                apply_bounds(train, bounds), np.array(train_labels)
            )
            for ref in val_refs:
                fm = store[tuple(ref)]
                predicted = model.predict(apply_bounds(fm.values[:, cols], bounds))
                records.extend(
                    IdentificationRecord(
                        day=j,
                        trial=k,
                        subject=ref.subject,
                        segment_key=tuple(key),
                        predicted=str(pred),
                    )
                    for key, pred in zip(fm.rows, predicted)
                )
    confusion = MultiConfusion.from_records(
        [r.subject for r in records],
        [r.predicted for r in records],
        labels=manifest.clients,
    )
    return IdentificationResult(
        setup=setup_token,
        feature_set=feature_set,
        confusion=confusion,
        records=tuple(records),
    )
