"""Audio features: WAV bytes to 27 log-mel channels per 20 fps pose frame."""
# %%
import numpy as np

from gesturediff.audio import encode_wav, load_wav, mel_filterbank, mfps
from gesturediff.synthetic import speech_like_audio

samples, envelope = speech_like_audio(3.0, sample_rate=16000, seed=2)
clip = load_wav(encode_wav(samples, 16000))
print(f"{clip.duration:.2f} s at {clip.sample_rate} Hz")

# %% One feature row per pose frame
feats = mfps(clip, fps=20, n_mels=27)
print("features:", feats.frames.shape, "at", feats.fps, "fps")

# %% Loudness follows the syllable envelope
loud = feats.frames.mean(axis=1)
env = envelope(np.arange(len(loud)) / 20.0)
print("correlation of mean log-mel with the envelope:", round(np.corrcoef(loud, env)[0, 1], 3))

# %% The filterbank: triangular, unit peak, one row per mel band
fb = mel_filterbank(27, 1024, 16000)
print("filterbank", fb.shape, "peak", fb.max())
