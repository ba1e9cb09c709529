"""WAV input and per-frame mel power spectrogram features.

Features are aligned one-to-one with pose frames: the hop between analysis
frames is exactly ``sample_rate / fps`` samples and frame ``t`` is centred
on sample ``t * hop``.
"""

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "WavError", "FeatureError", "AudioClip", "AcousticFeatureSequence",
    "load_wav", "read_wav", "encode_wav", "hz_to_mel", "mel_to_hz",
    "mel_filterbank", "stft_power", "mfps", "LOG_EPS",
]

LOG_EPS = 1e-10
N_MELS = 27


class WavError(ValueError):
    pass


class FeatureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample rate must be positive")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or not np.all(np.isfinite(samples)):
            raise ValueError("samples must be a finite mono array")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True, eq=False)
class AcousticFeatureSequence:
    frames: np.ndarray  # T x n_mels, log mel power
    fps: float

    def __len__(self):
        return len(self.frames)


_PCM, _FLOAT, _EXTENSIBLE = 1, 3, 0xFFFE


def load_wav(data):
    """Decode RIFF/WAVE bytes (PCM 8/16/24/32-bit or IEEE float) to a mono clip."""
    data = bytes(data)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError("not a RIFF/WAVE file")
    pos, fmt, pcm = 12, None, None
    while pos + 8 <= len(data):
        cid, size = data[pos:pos + 4], struct.unpack("<I", data[pos + 4:pos + 8])[0]
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavError("truncated fmt chunk")
            tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _EXTENSIBLE:
                if len(body) < 26:
                    raise WavError("truncated extensible fmt chunk")
                tag = struct.unpack("<H", body[24:26])[0]
            fmt = (tag, channels, rate, bits)
        elif cid == b"data":
            if len(body) < size:
                raise WavError(f"truncated data chunk: header declares {size} bytes, "
                               f"{len(body)} present")
            pcm = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavError("missing fmt chunk")
    if pcm is None:
        raise WavError("missing data chunk")
    tag, channels, rate, bits = fmt
    if channels < 1:
        raise WavError("zero channels")
    if tag == _PCM and bits in (8, 16, 24, 32):
        width = bits // 8
        usable = len(pcm) - len(pcm) % (width * channels)
        raw = np.frombuffer(pcm[:usable], dtype=np.uint8)
        if bits == 8:
            x = (raw.astype(np.float64) - 128.0) / 128.0
        elif bits == 24:
            b = raw.reshape(-1, 3).astype(np.int32)
            v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
            v = np.where(v >= 1 << 23, v - (1 << 24), v)
            x = v / float(1 << 23)
        else:
            x = np.frombuffer(pcm[:usable], dtype=f"<i{width}") / float(1 << (bits - 1))
    elif tag == _FLOAT and bits in (32, 64):
        width = bits // 8
        usable = len(pcm) - len(pcm) % (width * channels)
        x = np.frombuffer(pcm[:usable], dtype=f"<f{width}").astype(np.float64)
    else:
        raise WavError(f"unsupported encoding: format tag {tag}, {bits} bits")
    x = x.reshape(-1, channels).mean(axis=1)
    return AudioClip(x, rate)


def read_wav(path):
    with open(path, "rb") as fh:
        return load_wav(fh.read())


def encode_wav(samples, sample_rate, encoding="pcm16"):
    """Encode ``samples`` (``T`` or ``T x channels``) as WAV bytes."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]
    if encoding == "pcm16":
        body = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = _PCM, 16
    elif encoding == "float32":
        body = x.astype("<f4").tobytes()
        tag, bits = _FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(body)) + body
    if len(body) & 1:
        chunks += b"\0"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels, n_fft, sample_rate, f_min=20.0, f_max=None):
    """Triangular filters, peak weight 1, centres equally spaced in mel.

    Returns an ``n_mels x (n_fft // 2 + 1)`` matrix acting on power spectra.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if not 0 <= f_min < f_max <= sample_rate / 2.0:
        raise FeatureError(f"invalid mel range [{f_min}, {f_max}] for rate {sample_rate}")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    if np.any(fb.sum(axis=1) == 0):
        raise FeatureError("empty mel filter; raise n_fft or narrow the mel range")
    return fb


def stft_power(samples, hop, n_fft, n_frames):
    """Hann-windowed power spectra of ``n_frames`` frames centred on ``t * hop``."""
    pad = n_fft // 2
    x = np.pad(np.asarray(samples, dtype=np.float64), pad, mode="reflect")
    idx = np.arange(n_frames)[:, None] * hop + np.arange(n_fft)[None, :]
    window = np.hanning(n_fft + 1)[:-1]
    spec = np.fft.rfft(x[idx] * window, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def mfps(clip, fps=20, n_mels=N_MELS, n_fft=1024, f_min=20.0, f_max=None):
    """Log mel power spectrogram with one row per pose frame."""
    rate = clip.sample_rate
    hop = rate / fps
    if hop != int(hop):
        raise FeatureError(f"fps {fps} does not divide sample rate {rate}")
    hop = int(hop)
    n = len(clip.samples)
    if n < n_fft:
        raise FeatureError(f"clip of {n} samples is shorter than one {n_fft}-sample window")
    n_frames = n // hop
    power = stft_power(clip.samples, hop, n_fft, n_frames)
    mel = power @ mel_filterbank(n_mels, n_fft, rate, f_min, f_max).T
    return AcousticFeatureSequence(np.log(mel + LOG_EPS), float(fps))
