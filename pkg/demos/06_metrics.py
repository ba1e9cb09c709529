"""The objective metrics on hand-made inputs whose answers are obvious."""
# %%
import numpy as np

from gesturediff.audio import AudioClip
from gesturediff.metrics import (BeatList, bcs, detect_audio_beats, detect_motion_beats,
                                 diversity, l1_distance, pck)
from gesturediff.synthetic import click_track

rng = np.random.default_rng(0)
ref = rng.standard_normal((100, 15, 3))
print("L1 / PCK of the reference against itself:", l1_distance(ref, ref), pck(ref, ref, 0.1))
print("with 0.05 noise:", round(l1_distance(ref + 0.05 * rng.standard_normal(ref.shape), ref), 4))

# %% Beats: clicks every 0.5 s, and a hand that pauses every 0.5 s
clip = AudioClip(click_track(4.0, np.arange(0.5, 4.0, 0.5)), 16000)
audio_beats = detect_audio_beats(clip, fps=20)
t = np.arange(80) / 20.0
hand = np.zeros((80, 1, 3))
hand[:, 0, 0] = t - np.sin(4 * np.pi * t) / (4 * np.pi)     # speed 1 - cos: zero every 0.5 s
motion_beats = detect_motion_beats(hand, fps=20)
print("audio beats (s):", audio_beats.times)
print("motion beats (s):", motion_beats.times)
print("BCS aligned:", round(bcs(audio_beats, motion_beats), 3))
print("BCS shifted 0.25 s:", round(bcs(audio_beats, BeatList(motion_beats.frames + 5, 20.0)), 3))

# %% Diversity: identical clips score 0
still = np.zeros((80, 15, 3))
print("diversity of a frozen pose:", diversity([still, still], 40))
print("diversity of noise:", round(diversity([ref[:80], ref[20:]], 40), 3))
