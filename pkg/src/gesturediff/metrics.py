"""Objective gesture metrics and synthesis timing.

Position inputs are ``T x J x 3`` arrays (or :class:`PositionSequence`).
"""

import time
from dataclasses import dataclass

import numpy as np

from .audio import stft_power

__all__ = [
    "MetricError", "BeatList", "MetricReport", "Timing", "l1_distance", "pck",
    "pck_threshold", "motion_speed", "detect_motion_beats", "onset_strength",
    "detect_audio_beats", "bcs", "split_clips", "diversity", "time_synthesis",
]


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BeatList:
    frames: np.ndarray
    fps: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.intp).reshape(-1)
        if np.any(np.diff(frames) <= 0):
            raise MetricError("beat frames must be strictly increasing")
        object.__setattr__(self, "frames", frames)

    @property
    def times(self):
        return self.frames / self.fps

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class Timing:
    mean: float
    half_width: float = None  # None when only one repeat was run
    repeats: int = 1

    def __str__(self):
        if self.half_width is None:
            return f"{self.mean:.4g}"
        return f"{self.mean:.4g}±{self.half_width:.2g}"


@dataclass
class MetricReport:
    l1: float
    pck: float
    bcs: float
    diversity: float
    timing: Timing = None

    def to_text(self, prefix=""):
        lines = [f"{prefix}l1={self.l1:.6g}", f"{prefix}pck={self.pck:.6g}",
                 f"{prefix}bcs={self.bcs:.6g}", f"{prefix}diversity={self.diversity:.6g}"]
        if self.timing is not None:
            lines.append(f"{prefix}synth_time_per_frame={self.timing}")
        return "\n".join(lines) + "\n"


def _positions(x):
    return np.asarray(getattr(x, "frames", x), dtype=np.float64)


def _pair(gen, ref):
    g, r = _positions(gen), _positions(ref)
    if g.shape != r.shape:
        raise MetricError(f"shape mismatch: {g.shape} vs {r.shape}")
    return g, r


def l1_distance(gen, ref):
    """Mean over frames and joints of the L1 norm of the position error."""
    g, r = _pair(gen, ref)
    return float(np.abs(g - r).sum(axis=-1).mean())


def pck(gen, ref, delta):
    """Fraction of (frame, joint) pairs whose Euclidean error is below ``delta``."""
    if not delta > 0:
        raise MetricError("PCK threshold must be positive")
    g, r = _pair(gen, ref)
    return float((np.linalg.norm(g - r, axis=-1) < delta).mean())


def pck_threshold(ref, left, right, fraction=0.1):
    """``fraction`` of the mean distance between joints ``left`` and ``right``."""
    r = _positions(ref)
    return float(fraction * np.linalg.norm(r[:, left] - r[:, right], axis=-1).mean())


def motion_speed(positions, fps=20.0):
    """Joint-averaged central-difference speed at frames ``1 .. T-2``."""
    p = _positions(positions)
    return np.linalg.norm(p[2:] - p[:-2], axis=-1).mean(axis=-1) * (fps / 2.0)


def detect_motion_beats(positions, fps=None):
    """Frames where mean joint speed is a strict local minimum below its median."""
    if fps is None:
        fps = getattr(positions, "fps", 20.0)
    p = _positions(positions)
    if len(p) < 3:
        raise MetricError("need at least 3 frames to detect motion beats")
    speed = motion_speed(p, fps)
    if len(speed) < 3:
        return BeatList([], fps)
    med = np.median(speed)
    mid = speed[1:-1]
    is_min = (mid < speed[:-2]) & (mid < speed[2:]) & (mid < med)
    # speed[k] belongs to frame k + 1, and mid[k] is speed[k + 1]
    return BeatList(np.nonzero(is_min)[0] + 2, fps)


def onset_strength(clip, fps=20, n_fft=1024):
    """Spectral flux of the log-compressed magnitude spectrum, one value per frame."""
    rate = clip.sample_rate
    hop = rate / fps
    if hop != int(hop):
        raise MetricError(f"fps {fps} does not divide sample rate {rate}")
    hop = int(hop)
    n_frames = len(clip.samples) // hop
    if n_frames < 2 or len(clip.samples) <= n_fft // 2:
        return np.zeros(max(n_frames, 0))
    mag = np.log1p(1e3 * np.sqrt(stft_power(clip.samples, hop, n_fft, n_frames)))
    flux = np.zeros(n_frames)
    flux[1:] = np.maximum(0.0, np.diff(mag, axis=0)).sum(axis=1)
    return flux


def detect_audio_beats(clip, fps=20, n_fft=1024):
    """Onset peaks above mean + 1 std of the spectral flux, as pose-frame indices."""
    flux = onset_strength(clip, fps, n_fft)
    if len(flux) < 3 or not np.any(flux > 0):
        return BeatList([], fps)
    thresh = flux.mean() + flux.std()
    padded = np.concatenate([[-np.inf], flux, [-np.inf]])
    peak = (flux > padded[:-2]) & (flux >= padded[2:]) & (flux > thresh)
    return BeatList(np.nonzero(peak)[0], fps)


def bcs(audio_beats, motion_beats, sigma=0.1):
    """Mean over audio beats of exp(-d^2 / (2 sigma^2)), d = distance (s) to the
    nearest motion beat."""
    if len(audio_beats) == 0:
        raise MetricError("BCS needs at least one audio beat")
    if len(motion_beats) == 0:
        return 0.0
    ta = audio_beats.times
    tm = motion_beats.times
    d2 = ((ta[:, None] - tm[None, :]) ** 2).min(axis=1)
    return float(np.exp(-d2 / (2.0 * sigma * sigma)).mean())


def split_clips(sequence, clip_len):
    """Non-overlapping ``clip_len`` clips; a trailing remainder is dropped."""
    p = _positions(sequence)
    k = len(p) // clip_len
    return p[:k * clip_len].reshape((k, clip_len) + p.shape[1:])


def diversity(sequences, clip_len):
    """Mean L1 distance over all unordered pairs of clips pooled from ``sequences``."""
    if clip_len < 1:
        raise MetricError("clip_len must be positive")
    clips = np.concatenate([split_clips(s, clip_len) for s in sequences])
    P = len(clips)
    if P < 2:
        raise MetricError(f"diversity needs at least 2 clips, got {P}")
    flat = clips.reshape(P, -1, 3)
    total = 0.0
    for i in range(P - 1):
        total += np.abs(flat[i + 1:] - flat[i]).sum(axis=-1).mean(axis=-1).sum()
    return float(total / (P * (P - 1) / 2))


def time_synthesis(synthesize, frames, repeats=20):
    """Wall-clock seconds per frame of ``synthesize(frames)``: mean and the
    normal-approximation 95% half-width over ``repeats`` runs."""
    per_frame = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        synthesize(frames)
        per_frame.append((time.perf_counter() - t0) / frames)
    per_frame = np.array(per_frame)
    if repeats < 2:
        return Timing(float(per_frame.mean()), None, repeats)
    hw = 1.96 * per_frame.std(ddof=1) / np.sqrt(repeats)
    return Timing(float(per_frame.mean()), float(hw), repeats)
