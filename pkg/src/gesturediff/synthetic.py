"""Synthetic stand-ins for motion-capture takes and speech recordings.

The real training corpus is license-gated, so tests and demos run on data
with the same structure: a 69-joint skeleton whose joint names follow the
Trinity convention, 60 fps Euler-angle motion, and speech-like audio whose
syllable envelope also drives the arm motion.
"""

import numpy as np

from .motion import EulerMotion, Skeleton

__all__ = ["trinity_like_skeleton", "speech_like_audio", "synthetic_take", "click_track",
           "write_synthetic_take"]

_ZXY = ("Zrotation", "Xrotation", "Yrotation")
_ROOT = ("Xposition", "Yposition", "Zposition") + _ZXY


def trinity_like_skeleton():
    """A 69-joint humanoid: spine, neck/head, arms with five 4-joint fingers, legs."""
    names, parents, offsets = [], [], []

    def add(name, parent, offset):
        names.append(name)
        parents.append(-1 if parent is None else names.index(parent))
        offsets.append(offset)

    add("Hips", None, (0.0, 95.0, 0.0))
    add("Spine", "Hips", (0.0, 8.0, 0.0))
    add("Spine1", "Spine", (0.0, 9.0, 0.0))
    add("Spine2", "Spine1", (0.0, 9.0, 0.0))
    add("Spine3", "Spine2", (0.0, 9.0, 0.0))
    add("Neck", "Spine3", (0.0, 12.0, 0.0))
    add("Neck1", "Neck", (0.0, 4.0, 0.0))
    add("Head", "Neck1", (0.0, 6.0, 0.0))
    add("Jaw", "Head", (0.0, -2.0, 5.0))
    add("LeftEye", "Head", (3.0, 5.0, 8.0))
    add("RightEye", "Head", (-3.0, 5.0, 8.0))
    for side, sx in (("Right", -1.0), ("Left", 1.0)):
        add(f"{side}Shoulder", "Spine3", (sx * 4.0, 10.0, 0.0))
        add(f"{side}Arm", f"{side}Shoulder", (sx * 14.0, 0.0, 0.0))
        add(f"{side}ForeArm", f"{side}Arm", (sx * 28.0, 0.0, 0.0))
        add(f"{side}Hand", f"{side}ForeArm", (sx * 25.0, 0.0, 0.0))
        for k, finger in enumerate(("Thumb", "Index", "Middle", "Ring", "Pinky")):
            parent = f"{side}Hand"
            for seg in range(4):
                name = f"{side}Hand{finger}{seg}"
                add(name, parent, (sx * (3.0 if seg == 0 else 2.5), 0.0, 2.0 - k))
                parent = name
    for side, sx in (("Right", -1.0), ("Left", 1.0)):
        add(f"{side}UpLeg", "Hips", (sx * 9.0, 0.0, 0.0))
        add(f"{side}Leg", f"{side}UpLeg", (0.0, -43.0, 0.0))
        add(f"{side}Foot", f"{side}Leg", (0.0, -42.0, 0.0))
        add(f"{side}ForeFoot", f"{side}Foot", (0.0, -6.0, 10.0))
        add(f"{side}ToeBase", f"{side}ForeFoot", (0.0, 0.0, 5.0))
    channels = tuple(_ROOT if p < 0 else _ZXY for p in parents)
    end_sites = tuple((names.index(n), off) for n, off in (
        ("Head", (0.0, 12.0, 0.0)), ("LeftToeBase", (0.0, 0.0, 4.0)),
        ("RightToeBase", (0.0, 0.0, 4.0))))
    return Skeleton(tuple(names), tuple(parents), np.array(offsets), channels, end_sites)


def speech_like_audio(seconds, sample_rate=16000, seed=0, syllable_rate=4.0):
    """Harmonic voice with a random syllable envelope; returns ``(samples, envelope_fn)``.

    ``envelope_fn(t)`` evaluates the syllable envelope at times ``t`` (s).
    """
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    n_syll = max(1, int(seconds * syllable_rate))
    centres = np.sort(rng.uniform(0, seconds, n_syll))
    widths = rng.uniform(0.05, 0.12, n_syll)
    gains = rng.uniform(0.3, 1.0, n_syll)

    def envelope(tt):
        tt = np.asarray(tt, dtype=np.float64)[..., None]
        return (gains * np.exp(-0.5 * ((tt - centres) / widths) ** 2)).sum(axis=-1)

    f0 = 120.0 + 20.0 * np.sin(2 * np.pi * 0.3 * t)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    voice = sum(np.sin(k * phase) / k for k in range(1, 8))
    x = 0.25 * envelope(t) * voice + 0.002 * rng.standard_normal(n)
    return np.clip(x, -1.0, 1.0), envelope


def synthetic_take(skeleton, seconds, fps=60.0, seed=0, envelope=None):
    """Smooth Euler-angle motion (degrees) for every joint of ``skeleton``.

    Each rotation channel is a sum of slow sinusoids with random phases;
    when ``envelope`` is given the arm channels additionally follow its
    half-second moving average (gestures move slower than syllables).
    """
    rng = np.random.default_rng(seed)
    T = int(round(seconds * fps))
    t = np.arange(T) / fps
    frames = np.zeros((T, skeleton.n_channels))
    if envelope is not None:
        drive = envelope(t[:, None] + np.linspace(-0.25, 0.25, 11)).mean(axis=1)
    for j, sl in enumerate(skeleton.channel_slices()):
        for k, ch in enumerate(skeleton.channels[j]):
            col = sl.start + k
            if ch.endswith("position"):
                frames[:, col] = skeleton.offsets[0]["XYZ".index(ch[0])] if j == 0 else 0.0
                continue
            amp = rng.uniform(2.0, 12.0)
            freq = rng.uniform(0.15, 0.8, size=2)
            ph = rng.uniform(0, 2 * np.pi, size=2)
            v = amp * (np.sin(2 * np.pi * freq[0] * t + ph[0])
                       + 0.5 * np.sin(2 * np.pi * freq[1] * t + ph[1]))
            if envelope is not None and "Arm" in skeleton.names[j]:
                v = v + 40.0 * drive
            frames[:, col] = v
    return EulerMotion(frames, 1.0 / fps)


def click_track(seconds, click_times, sample_rate=16000, amplitude=0.9):
    x = np.zeros(int(round(seconds * sample_rate)))
    for c in click_times:
        i = int(round(c * sample_rate))
        x[i:i + 8] = amplitude
    return x


def write_synthetic_take(directory, name, seconds, seed=0, sample_rate=16000, fps=60.0):
    """Write ``name.bvh`` and ``name.wav`` into ``directory``; returns the take entry."""
    import os
    from .audio import encode_wav
    from .motion import write_bvh

    skel = trinity_like_skeleton()
    audio, env = speech_like_audio(seconds, sample_rate, seed)
    motion = synthetic_take(skel, seconds, fps, seed, env)
    bvh = os.path.join(directory, f"{name}.bvh")
    wav = os.path.join(directory, f"{name}.wav")
    with open(bvh, "w") as fh:
        fh.write(write_bvh(skel, motion))
    with open(wav, "wb") as fh:
        fh.write(encode_wav(audio, sample_rate))
    return {"name": name, "bvh": bvh, "wav": wav}
