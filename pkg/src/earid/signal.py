"""Time-series containers and conditioning for two-channel in-ear EEG.

The conditioning chain mirrors a real-time acquisition pipeline: drop the
startup transient, bandpass causally to the band of interest, cut the
recording into fixed-length analysis segments, and flag 2 s epochs whose
amplitude exceeds an artifact threshold on either channel.  All operations
are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sps

#: Default analysis band in Hz.
DEFAULT_BAND = (0.5, 30.0)
#: Seconds removed from the head of every recording before analysis.
DEFAULT_TRIM_SECONDS = 5.0
#: Length of an artifact-rejection epoch in seconds.
EPOCH_SECONDS = 2.0
#: Peak-amplitude rejection threshold in microvolts.
ARTIFACT_THRESHOLD_UV = 50.0

CH1, CH2 = 0, 1


@dataclass(frozen=True, eq=False)
class Recording:
    """One trial of a two-channel recording, samples in microvolts.

    Both channels must have the same length and the sampling rate must be
    positive; violations raise ``ValueError`` at construction.
    """

    subject_id: str
    day: int
    trial: int
    fs: float
    ch1: np.ndarray
    ch2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ch1", np.asarray(self.ch1, dtype=np.float64))
        object.__setattr__(self, "ch2", np.asarray(self.ch2, dtype=np.float64))
        if self.fs <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if self.ch1.ndim != 1 or self.ch2.ndim != 1:
            raise ValueError("channels must be one-dimensional sample vectors")
        if self.ch1.shape != self.ch2.shape:
            raise ValueError(
                f"channel lengths differ: {self.ch1.size} vs {self.ch2.size}"
            )

    @property
    def n_samples(self) -> int:
        return int(self.ch1.size)

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def channels(self) -> np.ndarray:
        """Return samples as a (2, n) array, Ch1 first."""
        return np.vstack([self.ch1, self.ch2])


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth bandpass specification.

    ``order`` is the prototype (per-edge) order, following the convention of
    the usual ``butter(order, [low, high])`` design call; the realized
    bandpass has ``2 * order`` poles.  It must be even and at least 2.
    """

    order: int = 4
    low_hz: float = DEFAULT_BAND[0]
    high_hz: float = DEFAULT_BAND[1]

    def validate(self, fs: float):
        if self.order < 2 or self.order % 2 != 0:
            raise ValueError(f"filter order must be even and >= 2, got {self.order}")
        if not (0.0 < self.low_hz < self.high_hz < fs / 2.0):
            raise ValueError(
                f"band edges must satisfy 0 < {self.low_hz} < {self.high_hz} "
                f"< fs/2 = {fs / 2.0}"
            )


@dataclass(frozen=True, eq=False)
class Segment:
    """A contiguous analysis window cut from a conditioned recording.

    ``epoch_mask`` marks which 2 s epochs are retained for feature
    estimation; entry ``e`` covers samples ``[e * epoch_samples,
    (e + 1) * epoch_samples)`` relative to the segment start.
    """

    subject_id: str
    day: int
    trial: int
    index: int
    fs: float
    ch1: np.ndarray
    ch2: np.ndarray
    epoch_mask: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.ch1.size)

    @property
    def n_epochs(self) -> int:
        return int(self.epoch_mask.size)

    @property
    def epoch_samples(self) -> int:
        return int(round(EPOCH_SECONDS * self.fs))

    def channel(self, index: int) -> np.ndarray:
        if index == CH1:
            return self.ch1
        if index == CH2:
            return self.ch2
        raise ValueError(f"channel index must be 0 or 1, got {index}")

    def epoch(self, channel: int, e: int) -> np.ndarray:
        step = self.epoch_samples
        return self.channel(channel)[e * step : (e + 1) * step]

    def retained_epochs(self) -> np.ndarray:
        return np.flatnonzero(self.epoch_mask)


def design_bandpass(spec: FilterSpec, fs: float) -> np.ndarray:
    """Design a Butterworth bandpass as cascaded second-order sections.

    The design uses the bilinear transform with pre-warped band edges, so
    the magnitude response is exactly -3 dB at ``low_hz`` and ``high_hz``.
    Returns the ``(n_sections, 6)`` SOS array; every pole lies strictly
    inside the unit circle.
    """
    spec.validate(fs)
    sos = sps.butter(
        spec.order, [spec.low_hz, spec.high_hz], btype="bandpass", output="sos", fs=fs
    )
    if not sos_is_stable(sos):
        raise ValueError(f"unstable filter design for {spec} at fs={fs}")
    return sos


def sos_is_stable(sos: np.ndarray) -> bool:
    """True when all section poles have modulus strictly below one."""
    for section in np.atleast_2d(sos):
        poles = np.roots(section[3:])
        if poles.size and np.max(np.abs(poles)) >= 1.0:
            return False
    return True


def filter_recording(rec: Recording, sos: np.ndarray) -> Recording:
    """Filter both channels causally (single forward pass).

    Identity metadata is preserved.  Zero-phase (forward-backward) filtering
    is deliberately not used: a deployed pipeline sees samples once.
    """
    if rec.n_samples == 0:
        raise ValueError("cannot filter an empty recording")
    return replace(
        rec,
        ch1=sps.sosfilt(sos, rec.ch1),
        ch2=sps.sosfilt(sos, rec.ch2),
    )


def trim_head(rec: Recording, seconds: float) -> Recording:
    """Drop the first ``floor(seconds * fs)`` samples from both channels."""
    if seconds < 0:
        raise ValueError(f"trim duration must be non-negative, got {seconds}")
    n_trim = int(np.floor(seconds * rec.fs))
    if n_trim >= rec.n_samples:
        raise ValueError(
            f"cannot trim {seconds} s from a {rec.duration_s:.3f} s recording"
        )
    return replace(rec, ch1=rec.ch1[n_trim:].copy(), ch2=rec.ch2[n_trim:].copy())


def segmentize(rec: Recording, l_seg: float) -> list[Segment]:
    """Cut a conditioned recording into non-overlapping ``l_seg`` s segments.

    Returns ``floor(duration / l_seg)`` contiguous segments anchored at the
    start of the recording; the trailing remainder is discarded.  A segment
    length longer than the recording yields an empty list.  Each segment
    starts with an all-retained epoch mask of ``floor(l_seg / 2)`` epochs.
    """
    if l_seg <= 0:
        raise ValueError(f"segment length must be positive, got {l_seg}")
    seg_samples = int(np.floor(l_seg * rec.fs))
    epoch_samples = int(round(EPOCH_SECONDS * rec.fs))
    n_segments = rec.n_samples // seg_samples if seg_samples > 0 else 0
    segments = []
    for i in range(n_segments):
        lo, hi = i * seg_samples, (i + 1) * seg_samples
        n_epochs = seg_samples // epoch_samples
        segments.append(
            Segment(
                subject_id=rec.subject_id,
                day=rec.day,
                trial=rec.trial,
                index=i,
                fs=rec.fs,
                ch1=rec.ch1[lo:hi].copy(),
                ch2=rec.ch2[lo:hi].copy(),
                epoch_mask=np.ones(n_epochs, dtype=bool),
            )
        )
    return segments


def reject_artifacts(seg: Segment, threshold_uv: float = ARTIFACT_THRESHOLD_UV) -> Segment:
    """Return a copy of ``seg`` with its epoch mask updated.

    A 2 s epoch is retained iff the peak absolute amplitude stays at or
    below ``threshold_uv`` on both channels.  Epochs already rejected stay
    rejected.
    """
    if threshold_uv <= 0:
        raise ValueError(f"threshold must be positive, got {threshold_uv}")
    step = seg.epoch_samples
    n = seg.n_epochs
    usable = seg.ch1[: n * step].reshape(n, step), seg.ch2[: n * step].reshape(n, step)
    peaks = np.maximum(
        np.max(np.abs(usable[0]), axis=1), np.max(np.abs(usable[1]), axis=1)
    )
    mask = seg.epoch_mask & (peaks <= threshold_uv)
    return replace(seg, epoch_mask=mask)


def preprocess(
    rec: Recording,
    *,
    trim_seconds: float = DEFAULT_TRIM_SECONDS,
    filter_spec: FilterSpec = FilterSpec(),
) -> Recording:
    """Standard conditioning: trim the head, then bandpass causally."""
    sos = design_bandpass(filter_spec, rec.fs)
    return filter_recording(trim_head(rec, trim_seconds), sos)
