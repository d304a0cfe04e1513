"""On-disk dataset format and a seeded synthetic multi-day EEG generator.

The original recordings are private, so experiments run on synthetic
subjects.  Each subject is a stationary process: background coloured noise
(an AR-shaped spectrum), a narrowband alpha resonator whose centre
frequency and gain are the subject's identity, and white sensor noise.
Ch2 is a correlated copy of Ch1 (mixing coefficient 0.7) plus independent
noise, mimicking two nearby in-ear electrodes.  Day-to-day drift shifts
the alpha peak and scales its gain, identically for all trials of a day.

Randomness derives from one master seed.  The stream for any draw is
``SeedSequence((seed, cohort_code, subject_index, stream_tag, ...))``, so
serial and parallel generation agree and a subject's data does not depend
on how many other subjects are generated.

Files: ``manifest.csv`` with header
``subject,cohort,day,trial,fs,duration_s,ch1_file,ch2_file`` plus one raw
little-endian float32 file per channel (microvolts), extension ``.f32le``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import (
    CohortStructureError,
    DatasetError,
    DuplicateTrialError,
    MissingSampleFileError,
    SampleSizeMismatchError,
)
from .signal import Recording

COHORT_CLIENT = "R"
COHORT_INTRUDER = "N"
MANIFEST_NAME = "manifest.csv"
MANIFEST_HEADER = ["subject", "cohort", "day", "trial", "fs", "duration_s", "ch1_file", "ch2_file"]

_MASK64 = (1 << 64) - 1
_COHORT_CODE = {COHORT_CLIENT: 0, COHORT_INTRUDER: 1}
_STREAM_PROFILE = 0
_STREAM_TRIAL = 1


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic cohort; defaults mirror the evaluation setup."""

    n_clients: int = 15
    n_imposters: int = 5
    days: int = 2
    trials: int = 3
    duration_s: float = 190.0
    fs: float = 250.0
    #: Largest per-subject day-2 alpha peak shift in Hz (sampled uniformly in +-).
    drift_peak_hz: float = 0.3
    #: Range of the per-subject day-2 alpha gain factor.
    drift_gain_low: float = 0.8
    drift_gain_high: float = 1.25
    #: Fraction of 2 s epochs that receive a 60-120 uV in-band artifact burst.
    artifact_rate: float = 0.03

    def validate(self):
        if min(self.n_clients, self.n_imposters) < 1 or min(self.days, self.trials) < 1:
            raise ValueError("subject, day, and trial counts must all be >= 1")
        if self.duration_s <= 0 or self.fs <= 0:
            raise ValueError("duration and sampling rate must be positive")
        if not 0.0 <= self.artifact_rate <= 1.0:
            raise ValueError("artifact_rate must lie in [0, 1]")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.fs))


@dataclass(frozen=True)
class SubjectProfile:
    """Stationary per-subject synthesis parameters (drawn from the seed)."""

    subject_id: str
    cohort: str
    index: int
    alpha_peak_hz: float
    alpha_bandwidth_hz: float
    alpha_rms_uv: float
    background_pole: float
    background_pair_radius: float
    background_pair_hz: float
    background_rms_uv: float
    noise_rms_uv: float
    #: Per-day (peak shift Hz, gain factor); day 1 is always (0, 1).
    day_drift: tuple[tuple[float, float], ...]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed & _MASK64, *key))))


def _subject_id(cohort: str, index: int, count: int) -> str:
    width = max(2, len(str(count)))
    return f"{cohort.lower()}{index:0{width}d}"


def subject_profile(seed: int, cohort: str, index: int, config: GeneratorConfig) -> SubjectProfile:
    """Deterministic subject parameters for ``(seed, cohort, index)``."""
    rng = _rng(seed, _COHORT_CODE[cohort], index, _STREAM_PROFILE)
    alpha_peak = rng.uniform(8.5, 12.5)
    bandwidth = rng.uniform(0.8, 2.0)
    alpha_rms = rng.uniform(2.0, 4.0)
    pole = rng.uniform(0.92, 0.97)
    pair_radius = rng.uniform(0.5, 0.7)
    pair_hz = rng.uniform(3.0, 7.0)
    background_rms = rng.uniform(2.5, 4.0)
    noise_rms = rng.uniform(0.8, 1.5)
    days = config.days if cohort == COHORT_CLIENT else 1
    drift = [(0.0, 1.0)]
    for _ in range(1, days):
        shift = rng.uniform(-config.drift_peak_hz, config.drift_peak_hz)
        gain = rng.uniform(config.drift_gain_low, config.drift_gain_high)
        drift.append((shift, gain))
    count = config.n_clients if cohort == COHORT_CLIENT else config.n_imposters
    return SubjectProfile(
        subject_id=_subject_id(cohort, index, count),
        cohort=cohort,
        index=index,
        alpha_peak_hz=alpha_peak,
        alpha_bandwidth_hz=bandwidth,
        alpha_rms_uv=alpha_rms,
        background_pole=pole,
        background_pair_radius=pair_radius,
        background_pair_hz=pair_hz,
        background_rms_uv=background_rms,
        noise_rms_uv=noise_rms,
        day_drift=tuple(drift),
    )


def _resonator_denominator(f0: float, bandwidth: float, fs: float) -> np.ndarray:
    r = np.exp(-np.pi * bandwidth / fs)
    return np.array([1.0, -2.0 * r * np.cos(2.0 * np.pi * f0 / fs), r * r])


def _shaped_noise(rng: np.random.Generator, denom: np.ndarray, n: int, burn: int, rms: float):
    raw = sps.lfilter([1.0], denom, rng.standard_normal(n + burn))[burn:]
    return raw * (rms / np.std(raw))


def synthesize_trial(
    profile: SubjectProfile, day: int, trial: int, config: GeneratorConfig, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Both channels of one trial, microvolts, float64."""
    rng = _rng(seed, _COHORT_CODE[profile.cohort], profile.index, _STREAM_TRIAL, day, trial)
    n = config.n_samples
    burn = int(round(5.0 * config.fs))
    fs = config.fs

    pair_angle = 2.0 * np.pi * profile.background_pair_hz / fs
    poles = [
        profile.background_pole,
        profile.background_pair_radius * np.exp(1j * pair_angle),
        profile.background_pair_radius * np.exp(-1j * pair_angle),
    ]
    background = _shaped_noise(
        rng, np.real(np.poly(poles)), n, burn, profile.background_rms_uv
    )

    shift, gain = profile.day_drift[day - 1]
    alpha_denom = _resonator_denominator(
        profile.alpha_peak_hz + shift, profile.alpha_bandwidth_hz, fs
    )
    alpha = _shaped_noise(rng, alpha_denom, n, burn, profile.alpha_rms_uv * gain)

    core = background + alpha
    ch1 = core + profile.noise_rms_uv * rng.standard_normal(n)
    ch2 = 0.7 * ch1 + profile.noise_rms_uv * rng.standard_normal(n)

    if config.artifact_rate > 0.0:
        _inject_artifacts(rng, (ch1, ch2), config)
    return ch1, ch2


def _inject_artifacts(rng, channels, config: GeneratorConfig):
    epoch_samples = int(round(2.0 * config.fs))
    n_epochs = config.n_samples // epoch_samples
    burst_len = int(round(0.25 * config.fs))
    t = np.arange(burst_len) / config.fs
    taper = np.hanning(burst_len)
    for e in np.flatnonzero(rng.random(n_epochs) < config.artifact_rate):
        channel = channels[int(rng.integers(0, 2))]
        offset = int(e) * epoch_samples + int(rng.integers(0, epoch_samples - burst_len))
        amp = rng.uniform(60.0, 120.0) * (1.0 if rng.integers(0, 2) else -1.0)
        f_burst = rng.uniform(5.0, 15.0)
        channel[offset : offset + burst_len] += amp * np.sin(2 * np.pi * f_burst * t) * taper


@dataclass(frozen=True)
class ManifestEntry:
    subject: str
    cohort: str
    day: int
    trial: int
    fs: float
    duration_s: float
    ch1_file: str
    ch2_file: str

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.subject, self.day, self.trial)


@dataclass(frozen=True)
class DatasetManifest:
    """Validated manifest with lazy access to the sample files."""

    root: Path
    entries: tuple[ManifestEntry, ...]
    clients: tuple[str, ...] = field(init=False)
    imposters: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        by_key = {}
        for entry in self.entries:
            if entry.key in by_key:
                raise DuplicateTrialError(
                    f"duplicate manifest entry for {entry.key}"
                )
            by_key[entry.key] = entry
        object.__setattr__(self, "_by_key", by_key)
        cohorts = {}
        for entry in self.entries:
            cohorts.setdefault(entry.subject, set()).add(entry.cohort)
        for subject, seen in cohorts.items():
            if len(seen) > 1:
                raise CohortStructureError(f"subject {subject} appears in two cohorts")
        clients = sorted(s for s, c in cohorts.items() if c == {COHORT_CLIENT})
        imposters = sorted(s for s, c in cohorts.items() if c == {COHORT_INTRUDER})
        expected_client = {(d, t) for d in (1, 2) for t in (1, 2, 3)}
        expected_intruder = {(1, t) for t in (1, 2, 3)}
        for subject, expected in [(s, expected_client) for s in clients] + [
            (s, expected_intruder) for s in imposters
        ]:
            have = {(e.day, e.trial) for e in self.entries if e.subject == subject}
            if have != expected:
                raise CohortStructureError(
                    f"subject {subject}: expected trials {sorted(expected)}, "
                    f"found {sorted(have)}"
                )
        rates = {(e.fs, e.duration_s) for e in self.entries}
        if len(rates) > 1:
            raise DatasetError(f"mixed sampling configurations in manifest: {rates}")
        object.__setattr__(self, "clients", tuple(clients))
        object.__setattr__(self, "imposters", tuple(imposters))

    @property
    def fs(self) -> float:
        return self.entries[0].fs

    @property
    def duration_s(self) -> float:
        return self.entries[0].duration_s

    def entry(self, subject: str, day: int, trial: int) -> ManifestEntry:
        try:
            return self._by_key[(subject, day, trial)]
        except KeyError:
            raise KeyError(f"no manifest entry for {(subject, day, trial)}") from None

    def load_recording(self, subject: str, day: int, trial: int) -> Recording:
        entry = self.entry(subject, day, trial)
        channels = []
        for name in (entry.ch1_file, entry.ch2_file):
            path = self.root / name
            channels.append(np.fromfile(path, dtype="<f4").astype(np.float64))
        return Recording(
            subject_id=subject, day=day, trial=trial, fs=entry.fs,
            ch1=channels[0], ch2=channels[1],
        )

    def validate_files(self):
        for entry in self.entries:
            expected = int(round(entry.duration_s * entry.fs)) * 4
            for name in (entry.ch1_file, entry.ch2_file):
                path = self.root / name
                if not path.exists():
                    raise MissingSampleFileError(f"missing sample file {path}")
                size = path.stat().st_size
                if size != expected:
                    raise SampleSizeMismatchError(
                        f"{path}: expected {expected} bytes "
                        f"({entry.duration_s} s at {entry.fs} Hz), found {size}"
                    )


def generate_dataset(
    out_dir, *, seed: int = 0, config: GeneratorConfig = GeneratorConfig()
) -> DatasetManifest:
    """Write a synthetic dataset and return its validated manifest.

    The output is a deterministic function of ``(seed, config)``; imposter
    (cohort N) subjects get a single recording day labelled 1.
    """
    config.validate()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    plans = [(COHORT_CLIENT, config.n_clients, config.days), (COHORT_INTRUDER, config.n_imposters, 1)]
    for cohort, count, days in plans:
        for index in range(1, count + 1):
            profile = subject_profile(seed, cohort, index, config)
            for day in range(1, days + 1):
                for trial in range(1, config.trials + 1):
                    ch1, ch2 = synthesize_trial(profile, day, trial, config, seed)
                    stem = f"{profile.subject_id}_d{day}_t{trial}"
                    names = (f"{stem}_ch1.f32le", f"{stem}_ch2.f32le")
                    for samples, name in zip((ch1, ch2), names):
                        samples.astype("<f4").tofile(root / name)
                    entries.append(
                        ManifestEntry(
                            subject=profile.subject_id, cohort=cohort, day=day,
                            trial=trial, fs=config.fs, duration_s=config.duration_s,
                            ch1_file=names[0], ch2_file=names[1],
                        )
                    )
    with open(root / MANIFEST_NAME, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for e in entries:
            writer.writerow(
                [e.subject, e.cohort, e.day, e.trial, repr(e.fs), repr(e.duration_s),
                 e.ch1_file, e.ch2_file]
            )
    manifest = DatasetManifest(root=root, entries=tuple(entries))
    manifest.validate_files()
    return manifest


def load_dataset(path) -> DatasetManifest:
    """Parse and validate a dataset directory (or manifest file path)."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    if not manifest_path.exists():
        raise MissingSampleFileError(f"no manifest at {manifest_path}")
    entries = []
    with open(manifest_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DatasetError(
                f"unexpected manifest header {header!r}; expected {MANIFEST_HEADER!r}"
            )
        for row in reader:
            if not row:
                continue
            subject, cohort, day, trial, fs, duration, ch1_file, ch2_file = row
            if cohort not in _COHORT_CODE:
                raise CohortStructureError(f"unknown cohort {cohort!r} for {subject}")
            entries.append(
                ManifestEntry(
                    subject=subject, cohort=cohort, day=int(day), trial=int(trial),
                    fs=float(fs), duration_s=float(duration),
                    ch1_file=ch1_file, ch2_file=ch2_file,
                )
            )
    if not entries:
        raise DatasetError(f"empty manifest at {manifest_path}")
    manifest = DatasetManifest(root=manifest_path.parent, entries=tuple(entries))
    manifest.validate_files()
    return manifest
