"""Spectral and autoregressive features for conditioned EEG segments.

Each segment is summarised by 26 values, ordered Ch1 then Ch2 with the
per-channel layout::

    alpha_ratio, alpha_peak_power, alpha_peak_freq, ar_1, ..., ar_10

``alpha_ratio`` is the 8-13 Hz power over the 4-16 Hz power (band sums are
bin-inclusive at both edges), the peak features describe the largest PSD
bin inside 8-13 Hz, and ``ar_1..ar_10`` are Burg autoregressive predictor
coefficients of the 8-13 Hz bandpassed signal, estimated per 2 s epoch and
averaged element-wise across the segment's retained epochs.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import signal as sps

from .errors import FeatureExtractionError
from .signal import CH1, CH2, EPOCH_SECONDS, FilterSpec, Recording, Segment
from .signal import ARTIFACT_THRESHOLD_UV, design_bandpass, reject_artifacts, segmentize

log = logging.getLogger(__name__)

ALPHA_BAND = (8.0, 13.0)
BROAD_BAND = (4.0, 16.0)
AR_ORDER = 10
N_FEATURES = 26

_PSD_NAMES = ("alpha_ratio", "alpha_peak_power", "alpha_peak_freq")
_AR_NAMES = tuple(f"ar_{i}" for i in range(1, AR_ORDER + 1))

#: Column names of the feature matrix, fixed order.
FEATURE_NAMES = tuple(
    f"{ch}_{name}" for ch in ("ch1", "ch2") for name in (*_PSD_NAMES, *_AR_NAMES)
)

#: Column index sets for the selectable feature families.
FEATURE_SETS = {
    "psd": tuple(
        i for i, name in enumerate(FEATURE_NAMES) if name.split("_", 1)[1].startswith("alpha")
    ),
    "ar": tuple(
        i for i, name in enumerate(FEATURE_NAMES) if name.split("_", 1)[1].startswith("ar")
    ),
    "psd+ar": tuple(range(N_FEATURES)),
}


def feature_columns(feature_set: str) -> tuple[int, ...]:
    """Column indices for ``feature_set`` in {'psd', 'ar', 'psd+ar'}."""
    try:
        return FEATURE_SETS[feature_set]
    except KeyError:
        raise ValueError(
            f"unknown feature set {feature_set!r}; expected one of {sorted(FEATURE_SETS)}"
        ) from None


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    """Averaged-periodogram PSD for both channels of one segment.

    ``power`` has shape (2, n_bins) in units of amplitude^2/Hz; the
    frequency grid is uniform with spacing ``1 / window_seconds``.
    """

    frequencies: np.ndarray
    power: np.ndarray
    window_seconds: float
    overlap: float
    n_windows: int


class SegmentKey(NamedTuple):
    subject: str
    day: int
    trial: int
    segment: int


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Per-segment feature rows with provenance labels."""

    values: np.ndarray
    rows: tuple[SegmentKey, ...]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != N_FEATURES:
            raise ValueError(f"expected (n, {N_FEATURES}) values, got {self.values.shape}")
        if len(self.rows) != self.values.shape[0]:
            raise ValueError("row labels and values disagree in length")

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    def to_csv(self, path) -> None:
        """Write ``subject,day,trial,segment,f1..f26`` with round-trip floats."""
        lines = ["subject,day,trial,segment," + ",".join(f"f{i}" for i in range(1, 27))]
        for key, row in zip(self.rows, self.values):
            cells = [key.subject, str(key.day), str(key.trial), str(key.segment)]
            cells.extend(repr(float(v)) for v in row)
            lines.append(",".join(cells))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        text = Path(path).read_text().strip().splitlines()
        rows, values = [], []
        for line in text[1:]:
            cells = line.split(",")
            rows.append(SegmentKey(cells[0], int(cells[1]), int(cells[2]), int(cells[3])))
            values.append([float(v) for v in cells[4:]])
        values = np.array(values, dtype=np.float64).reshape(len(rows), N_FEATURES)
        return cls(values=values, rows=tuple(rows))


def welch_series(
    x: np.ndarray, fs: float, window_seconds: float, overlap: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Welch PSD of a plain sample vector (no epoch mask).

    Hann window with power normalisation; one-sided density so that the
    integral of the PSD over frequency approximates the signal variance.
    Used for diagnostics and report plot data; segment features go through
    :func:`welch_psd`.
    """
    x = np.asarray(x, dtype=np.float64)
    nperseg = int(round(window_seconds * fs))
    if nperseg < 2 or nperseg > x.size:
        raise ValueError(f"window of {window_seconds} s does not fit the input")
    hop = int(round(nperseg * (1.0 - overlap)))
    if hop < 1:
        raise ValueError(f"overlap {overlap} leaves no hop")
    starts = range(0, x.size - nperseg + 1, hop)
    windows = np.stack([x[s : s + nperseg] for s in starts])
    freqs, power = _averaged_periodogram(windows, fs)
    return freqs, power


def welch_psd(seg: Segment, window_seconds: float = 2.0, overlap: float = 0.0) -> PsdEstimate:
    """Averaged periodogram over the segment's retained epochs.

    Windows are laid out from the segment start with hop
    ``window_seconds * (1 - overlap)``; a window contributes only when every
    artifact-rejection epoch it touches is retained.  With the default 2 s
    non-overlapping configuration this is exactly the retained epochs, i.e.
    rejection and spectral estimation share one grid.
    """
    nperseg = int(round(window_seconds * seg.fs))
    if nperseg < 2 or nperseg > seg.n_samples:
        raise ValueError(f"window of {window_seconds} s does not fit the segment")
    hop = int(round(nperseg * (1.0 - overlap)))
    if hop < 1:
        raise ValueError(f"overlap {overlap} leaves no hop")
    step = seg.epoch_samples
    starts = [
        s
        for s in range(0, seg.n_samples - nperseg + 1, hop)
        if _window_is_clean(seg.epoch_mask, s, nperseg, step)
    ]
    if not starts:
        raise FeatureExtractionError(
            f"segment {seg.subject_id} d{seg.day} t{seg.trial} #{seg.index}: "
            "no retained epochs"
        )
    power = []
    freqs = None
    for ch in (CH1, CH2):
        samples = seg.channel(ch)
        windows = np.stack([samples[s : s + nperseg] for s in starts])
        freqs, p = _averaged_periodogram(windows, seg.fs)
        power.append(p)
    return PsdEstimate(
        frequencies=freqs,
        power=np.vstack(power),
        window_seconds=window_seconds,
        overlap=overlap,
        n_windows=len(starts),
    )


def _window_is_clean(mask: np.ndarray, start: int, length: int, epoch_samples: int) -> bool:
    first = start // epoch_samples
    last = (start + length - 1) // epoch_samples
    if last >= mask.size:
        return False
    return bool(np.all(mask[first : last + 1]))


def _averaged_periodogram(windows: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    nperseg = windows.shape[1]
    win = sps.get_window("hann", nperseg, fftbins=True)
    scale = 1.0 / (fs * np.sum(win * win))
    spectra = np.fft.rfft(windows * win, axis=1)
    psd = (spectra.real**2 + spectra.imag**2) * scale
    psd[:, 1:] *= 2.0
    if nperseg % 2 == 0:  # undo the doubling of the Nyquist bin
        psd[:, -1] /= 2.0
    freqs = np.fft.rfftfreq(nperseg, d=1.0 / fs)
    return freqs, psd.mean(axis=0)


def psd_features(psd: PsdEstimate, channel: int) -> tuple[float, float, float]:
    """(alpha_ratio, alpha_peak_power, alpha_peak_freq) for one channel.

    The ratio is the 8-13 Hz power over the 4-16 Hz power with bin-inclusive
    edges; the peak is taken over bins in 8-13 Hz, ties resolved to the
    lowest frequency.
    """
    f = psd.frequencies
    tol = 1e-9
    if f[-1] < BROAD_BAND[1] - tol or f[0] > BROAD_BAND[0] + tol:
        raise ValueError(
            f"PSD grid [{f[0]}, {f[-1]}] Hz does not cover {BROAD_BAND} Hz"
        )
    p = psd.power[channel]
    in_alpha = (f >= ALPHA_BAND[0] - tol) & (f <= ALPHA_BAND[1] + tol)
    in_broad = (f >= BROAD_BAND[0] - tol) & (f <= BROAD_BAND[1] + tol)
    denom = float(np.sum(p[in_broad]))
    if denom <= 0.0:
        raise FeatureExtractionError("all-zero power in the 4-16 Hz band")
    ratio = float(np.sum(p[in_alpha])) / denom
    alpha_p = p[in_alpha]
    alpha_f = f[in_alpha]
    peak = int(np.argmax(alpha_p))
    return ratio, float(alpha_p[peak]), float(alpha_f[peak])


def burg_ar(x: np.ndarray, order: int = AR_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Burg lattice estimate of autoregressive predictor coefficients.

    Returns ``(a, k)`` where ``a`` holds predictor coefficients in the
    convention ``x_t ~= a_1 x_{t-1} + ... + a_p x_{t-p}`` and ``k`` the
    reflection coefficients of the lattice recursion.  Minimising the
    combined forward/backward prediction error keeps ``|k_m| <= 1``, which
    guarantees a stable AR polynomial.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("input must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    if x.size <= 2 * order:
        raise ValueError(f"need more than {2 * order} samples, got {x.size}")
    f = x[1:].copy()
    b = x[:-1].copy()
    a = np.zeros(order + 1)
    a[0] = 1.0
    k = np.zeros(order)
    for m in range(order):
        den = np.dot(f, f) + np.dot(b, b)
        if den <= 0.0:
            raise FeatureExtractionError("zero-variance input to the Burg recursion")
        km = -2.0 * np.dot(f, b) / den
        k[m] = km
        a[1 : m + 2] += km * a[m::-1]
        f, b = f[1:] + km * b[1:], b[:-1] + km * f[:-1]
    return -a[1:], k


@functools.lru_cache(maxsize=32)
def _alpha_sos(fs: float) -> np.ndarray:
    return design_bandpass(FilterSpec(order=4, low_hz=ALPHA_BAND[0], high_hz=ALPHA_BAND[1]), fs)


def alpha_ar_features(seg: Segment, channel: int, order: int = AR_ORDER) -> np.ndarray:
    """Averaged Burg coefficients of the alpha-band signal.

    Every retained 2 s epoch is bandpass filtered to 8-13 Hz (order-4
    Butterworth, causal), Burg estimation of the given order runs per
    epoch, and the coefficient vectors are averaged element-wise.
    """
    retained = seg.retained_epochs()
    if retained.size == 0:
        raise FeatureExtractionError(
            f"segment {seg.subject_id} d{seg.day} t{seg.trial} #{seg.index}: "
            "no retained epochs"
        )
    sos = _alpha_sos(seg.fs)
    coeffs = np.empty((retained.size, order))
    for row, e in enumerate(retained):
        filtered = sps.sosfilt(sos, seg.epoch(channel, int(e)))
        coeffs[row], _ = burg_ar(filtered, order)
    return coeffs.mean(axis=0)


def segment_features(seg: Segment) -> np.ndarray:
    """The 26-value feature vector of one segment (see module docstring)."""
    psd = welch_psd(seg, window_seconds=EPOCH_SECONDS, overlap=0.0)
    row = np.empty(N_FEATURES)
    offset = 0
    for ch in (CH1, CH2):
        ratio, peak_power, peak_freq = psd_features(psd, ch)
        row[offset : offset + 3] = (ratio, peak_power, peak_freq)
        row[offset + 3 : offset + 3 + AR_ORDER] = alpha_ar_features(seg, ch)
        offset += 3 + AR_ORDER
    if not np.all(np.isfinite(row)):
        raise FeatureExtractionError("non-finite feature value")
    return row


def build_feature_matrix(
    rec: Recording,
    l_seg: float,
    *,
    artifact_threshold_uv: float = ARTIFACT_THRESHOLD_UV,
) -> FeatureMatrix:
    """Feature matrix of one conditioned trial, one row per surviving segment.

    Segments whose epochs are all rejected are dropped with a log message;
    a trial with no surviving segments raises
    :class:`~earid.errors.FeatureExtractionError`.
    """
    rows, values = [], []
    for seg in segmentize(rec, l_seg):
        seg = reject_artifacts(seg, artifact_threshold_uv)
        try:
            values.append(segment_features(seg))
        except FeatureExtractionError as exc:
            log.warning("dropping segment: %s", exc)
            continue
        rows.append(SegmentKey(rec.subject_id, rec.day, rec.trial, seg.index))
    if not rows:
        raise FeatureExtractionError(
            f"trial {rec.subject_id} d{rec.day} t{rec.trial}: no usable segments"
        )
    return FeatureMatrix(values=np.vstack(values), rows=tuple(rows))
