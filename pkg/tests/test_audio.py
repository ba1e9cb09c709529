import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gesturediff.audio import (LOG_EPS, AudioClip, FeatureError, WavError, encode_wav, hz_to_mel,
                               load_wav, mel_filterbank, mel_to_hz, mfps)


def raw_wav(payload, tag, channels, rate, bits, extensible=False):
    block = channels * bits // 8
    if extensible:
        fmt = struct.pack("<HHIIHH", 0xFFFE, channels, rate, rate * block, block, bits)
        fmt += struct.pack("<HHI", 22, bits, 0) + struct.pack("<H", tag) + b"\0" * 14
    else:
        fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * block, block, bits)
    body = b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload))
    body += payload + (b"\0" if len(payload) & 1 else b"")
    return b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body


def test_silence_one_second():
    clip = load_wav(encode_wav(np.zeros(16000), 16000))
    assert clip.sample_rate == 16000 and len(clip.samples) == 16000
    assert np.all(clip.samples == 0)


def test_stereo_identical_equals_mono(rng):
    x = rng.uniform(-0.5, 0.5, 1000)
    mono = load_wav(encode_wav(x, 8000))
    stereo = load_wav(encode_wav(np.stack([x, x], axis=1), 8000))
    np.testing.assert_array_equal(mono.samples, stereo.samples)


def test_stereo_is_averaged():
    x = np.stack([np.full(10, 0.5), np.full(10, -0.25)], axis=1)
    clip = load_wav(encode_wav(x, 8000, "float32"))
    np.testing.assert_allclose(clip.samples, 0.125)


def test_truncated_data_chunk():
    data = encode_wav(np.zeros(100), 8000)
    with pytest.raises(WavError, match="truncated"):
        load_wav(data[:-50])


@pytest.mark.parametrize("data,msg", [
    (b"RIFX" + b"\0" * 40, "RIFF"),
    (raw_wav(b"\0" * 4, 2, 1, 8000, 16), "unsupported"),
    (raw_wav(b"\0" * 4, 1, 1, 8000, 12), "unsupported"),
])
def test_bad_files(data, msg):
    with pytest.raises(WavError, match=msg):
        load_wav(data)


def test_missing_chunks():
    no_data = encode_wav(np.zeros(4), 8000)
    no_data = no_data[:no_data.index(b"data")]
    with pytest.raises(WavError, match="data"):
        load_wav(b"RIFF" + struct.pack("<I", len(no_data) - 8) + no_data[8:])


def test_float32_round_trip(rng):
    x = rng.uniform(-1, 1, 500)
    np.testing.assert_allclose(load_wav(encode_wav(x, 16000, "float32")).samples, x, atol=1e-7)


def test_pcm_widths():
    vals = np.array([0.0, 0.5, -0.5, -1.0])
    p8 = np.round(vals * 128 + 128).clip(0, 255).astype(np.uint8).tobytes()
    np.testing.assert_allclose(load_wav(raw_wav(p8, 1, 1, 8000, 8)).samples, vals)
    i24 = np.round(vals * 2 ** 23).astype(np.int64)
    p24 = b"".join(int(v).to_bytes(3, "little", signed=True) for v in i24)
    np.testing.assert_allclose(load_wav(raw_wav(p24, 1, 1, 8000, 24)).samples, vals)
    p32 = np.round(vals * 2 ** 31).clip(-2 ** 31, 2 ** 31 - 1).astype("<i4").tobytes()
    np.testing.assert_allclose(load_wav(raw_wav(p32, 1, 1, 8000, 32)).samples, vals, atol=1e-9)
    f64 = vals.astype("<f8").tobytes()
    np.testing.assert_array_equal(
        load_wav(raw_wav(f64, 3, 1, 8000, 64, extensible=True)).samples, vals)


def test_clip_validation():
    with pytest.raises(ValueError):
        AudioClip(np.array([np.nan]), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.zeros(3), 0)


# features ---------------------------------------------------------------------


def test_four_seconds_80_by_27(rng):
    clip = AudioClip(rng.uniform(-0.1, 0.1, 64000), 16000)
    f = mfps(clip, 20)
    assert f.frames.shape == (80, 27) and f.fps == 20


def test_silence_is_log_eps():
    f = mfps(AudioClip(np.zeros(16000), 16000), 20)
    assert np.all(f.frames == np.log(LOG_EPS))


def test_tone_peak_bin():
    sr, n_fft = 16000, 1024
    t = np.arange(2 * sr) / sr
    f = mfps(AudioClip(0.5 * np.sin(2 * np.pi * 440 * t), sr), 20).frames
    fb = mel_filterbank(27, n_fft, sr, 20.0)
    expected = np.argmax(fb[:, int(round(440 * n_fft / sr))])
    assert np.all(np.argmax(f, axis=1) == expected)


def test_fps_must_divide_rate_and_min_length():
    with pytest.raises(FeatureError, match="divide"):
        mfps(AudioClip(np.zeros(16000), 16000), 30)
    with pytest.raises(FeatureError, match="shorter"):
        mfps(AudioClip(np.zeros(500), 16000), 20)


@given(T=st.integers(2, 200), rate=st.sampled_from([16000, 24000, 48000]))
def test_frame_alignment(T, rate):
    n = T * rate // 20
    if n < 1024:
        return
    assert len(mfps(AudioClip(np.zeros(n), rate), 20)) == T


@given(c=st.floats(1.0, 20.0), seed=st.integers(0, 1000))
def test_energy_monotone(c, seed):
    x = np.random.default_rng(seed).uniform(-0.05, 0.05, 4000)
    a = mfps(AudioClip(x, 16000), 20).frames
    b = mfps(AudioClip(c * x, 16000), 20).frames
    assert np.all(b >= a - 1e-12)


def test_deterministic(rng):
    data = encode_wav(rng.uniform(-0.3, 0.3, 16000), 16000)
    a = mfps(load_wav(data)).frames
    b = mfps(load_wav(data)).frames
    assert a.tobytes() == b.tobytes()


def test_filterbank_shape_and_rows():
    fb = mel_filterbank(27, 1024, 16000)
    assert fb.shape == (27, 513)
    assert np.all(fb >= 0) and np.all(fb.sum(axis=1) > 0)


def test_filterbank_peaks_increase():
    fb = mel_filterbank(27, 2048, 16000)
    assert np.all(np.diff(np.argmax(fb, axis=1)) > 0)


def test_filterbank_delta_spectrum():
    sr, n_fft, n_mels = 16000, 1024, 27
    fb = mel_filterbank(n_mels, n_fft, sr, 20.0)
    edges = mel_to_hz(np.linspace(hz_to_mel(20.0), hz_to_mel(sr / 2), n_mels + 2))
    for k in (5, 40, 200, 511):
        delta = np.zeros(n_fft // 2 + 1)
        delta[k] = 1.0
        f = k * sr / n_fft
        for m in range(n_mels):
            lo, mid, hi = edges[m:m + 3]
            w = (f - lo) / (mid - lo) if f <= mid else (hi - f) / (hi - mid)
            assert (fb @ delta)[m] == pytest.approx(max(0.0, w), abs=1e-12)


def test_mel_scale():
    assert hz_to_mel(0.0) == 0.0
    assert hz_to_mel(700.0) == pytest.approx(2595 * np.log10(2))
    np.testing.assert_allclose(mel_to_hz(hz_to_mel([10.0, 440.0, 8000.0])), [10, 440, 8000])


@pytest.mark.parametrize("fmin,fmax", [(500, 100), (-1, 100), (20, 9000)])
def test_filterbank_invalid_range(fmin, fmax):
    with pytest.raises(FeatureError):
        mel_filterbank(27, 1024, 16000, fmin, fmax)
