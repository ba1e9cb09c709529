"""Learnable components: the recurrent context encoder, the noise-prediction
network, Adam, and the checkpoint container.

Shapes: ``B`` batch, ``D`` pose channels, ``A`` acoustic channels, ``H``
encoder width, ``tau`` past-pose frames, ``r`` acoustic lookahead frames.
"""

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .diffusion import diffusion_loss

__all__ = [
    "ModelConfig", "LSTMEncoder", "Denoiser", "GestureModel", "Adam", "adam_update",
    "step_embedding", "conditioning_windows", "save_checkpoint", "load_checkpoint",
    "CheckpointError", "config_hash",
]

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_CKPT_MAGIC = b"GDCK"


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    pose_dim: int = 45
    audio_dim: int = 27
    tau: int = 10
    lookahead: int = 20
    hidden: int = 512
    layers: int = 2
    width: int = 256
    blocks: int = 4
    emb_dim: int = 64

    @property
    def acoustic_frames(self):
        return self.tau + 1 + self.lookahead

    @property
    def cond_input_dim(self):
        return self.tau * self.pose_dim + self.acoustic_frames * self.audio_dim


def _uniform(rng, fan_in, shape):
    k = 1.0 / np.sqrt(fan_in)
    return ad.Tensor(rng.uniform(-k, k, size=shape), requires_grad=True)


class LSTMEncoder:
    """Stacked LSTM; gate order along the 4H axis is input, forget, cell, output."""

    def __init__(self, input_dim, hidden=512, layers=2, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.input_dim, self.hidden, self.layers = input_dim, hidden, layers
        self.params = {}
        for l in range(layers):
            d_in = input_dim if l == 0 else hidden
            self.params[f"lstm{l}.w_x"] = _uniform(rng, hidden, (d_in, 4 * hidden))
            self.params[f"lstm{l}.w_h"] = _uniform(rng, hidden, (hidden, 4 * hidden))
            self.params[f"lstm{l}.b"] = _uniform(rng, hidden, (4 * hidden,))

    def initial_state(self, batch=None):
        shape = (2 * self.hidden,) if batch is None else (batch, 2 * self.hidden)
        return tuple(np.zeros(shape) for _ in range(self.layers))

    def step(self, x, state):
        """One time step for ``x`` of shape ``(B, input_dim)``.

        Returns ``(h_top, new_state)``; ``state`` is not modified.
        """
        H = self.hidden
        inp = x
        new_state = []
        for l in range(self.layers):
            hc = ad.as_tensor(state[l])
            p = self.params
            z = inp @ p[f"lstm{l}.w_x"] + hc[..., :H] @ p[f"lstm{l}.w_h"] + p[f"lstm{l}.b"]
            hc = ad.lstm_cell(z, hc[..., H:])
            new_state.append(hc)
            inp = hc[..., :H]
        return inp, tuple(new_state)

    def steps(self, x, state=None):
        """Thread :meth:`step` over ``x`` ``(B, F, input_dim)``; returns ``(B, F, H)``
        and the final state.  Bit-identical to calling ``step`` in a loop."""
        x = ad.as_tensor(x)
        state = self.initial_state(x.shape[0]) if state is None else state
        outs = []
        for t in range(x.shape[1]):
            h, state = self.step(x[:, t], state)
            outs.append(h)
        return ad.stack(outs, axis=1), state

    def sequence(self, x):
        """Run from a zero state over ``x`` of shape ``(B, F, input_dim)``.

        Returns the top-layer hidden states ``(B, F, H)``.  Input projections
        for all steps are computed in one matrix product per layer, which
        roughly halves training time; results agree with :meth:`steps` to
        rounding (BLAS blocks the larger product differently).
        """
        H = self.hidden
        x = ad.as_tensor(x)
        B, F = x.shape[:2]
        for l in range(self.layers):
            p = self.params
            proj = (x.reshape(B * F, -1) @ p[f"lstm{l}.w_x"] + p[f"lstm{l}.b"]).reshape(B, F, 4 * H)
            h = ad.Tensor(np.zeros((B, H)))
            c = ad.Tensor(np.zeros((B, H)))
            outs = []
            for t in range(F):
                hc = ad.lstm_cell(proj[:, t] + h @ p[f"lstm{l}.w_h"], c)
                h, c = hc[:, :H], hc[:, H:]
                outs.append(h)
            x = ad.stack(outs, axis=1)
        return x


def step_embedding(n, dim=64):
    """Sinusoidal features of the diffusion step, ``(..., dim)``."""
    n = np.asarray(n, dtype=np.float64)
    half = dim // 2
    freqs = 10.0 ** (-4.0 * np.arange(half) / max(half - 1, 1))
    arg = n[..., None] * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1)


class Denoiser:
    """Residual network predicting the diffusion noise from ``(x^n, h, n)``.

    Each block adds a projection of the step embedding to its input, adds
    an affine projection of the conditioning vector after a linear layer,
    and passes the result through a tanh * sigmoid gate.  The gate output
    feeds a residual path and a skip path; the summed skips are projected
    back to ``dim`` channels.
    """

    def __init__(self, dim, cond_dim, width=256, blocks=4, emb_dim=64, rng=None):
        rng = np.random.default_rng(1) if rng is None else rng
        self.dim, self.cond_dim, self.width, self.blocks, self.emb_dim = (
            dim, cond_dim, width, blocks, emb_dim)
        W, K = width, blocks
        p = self.params = {}
        p["emb.w"] = _uniform(rng, emb_dim, (emb_dim, W))
        p["emb.b"] = _uniform(rng, emb_dim, (W,))
        p["in.w"] = _uniform(rng, dim, (dim, W))
        p["in.b"] = _uniform(rng, dim, (W,))
        p["step.w"] = _uniform(rng, W, (W, K * W))
        p["step.b"] = _uniform(rng, W, (K * W,))
        p["cond.w"] = _uniform(rng, cond_dim, (cond_dim, K * 2 * W))
        p["cond.b"] = _uniform(rng, cond_dim, (K * 2 * W,))
        for k in range(K):
            p[f"block{k}.w"] = _uniform(rng, W, (W, 2 * W))
            p[f"block{k}.b"] = _uniform(rng, W, (2 * W,))
            p[f"block{k}.w_out"] = _uniform(rng, W, (W, 2 * W))
            p[f"block{k}.b_out"] = _uniform(rng, W, (2 * W,))
        p["skip.w"] = _uniform(rng, W, (W, W))
        p["skip.b"] = _uniform(rng, W, (W,))
        p["out.w"] = _uniform(rng, W, (W, dim))
        p["out.b"] = _uniform(rng, W, (dim,))

    def __call__(self, xn, h, n):
        return self.conditioned(h)(xn, n)

    def conditioned(self, h):
        """Bind the conditioning rows ``h``; returns ``f(xn, n)``.

        The projection of ``h`` is computed once, which is what a reverse
        chain over fixed ``h`` wants.
        """
        p = self.params
        h_proj = ad.as_tensor(h) @ p["cond.w"] + p["cond.b"]
        W = self.width
        res_scale = 1.0 / np.sqrt(2.0)
        skip_scale = 1.0 / np.sqrt(self.blocks)

        def f(xn, n):
            xn = ad.as_tensor(xn)
            if xn.shape[-1] != self.dim:
                raise ValueError(f"denoiser expects {self.dim} channels, got {xn.shape[-1]}")
            n_arr = np.asarray(n)
            if n_arr.ndim == 0 and xn.ndim > 1:
                n_arr = np.full(xn.shape[:-1], n_arr)
            e = ad.silu(ad.Tensor(step_embedding(n_arr, self.emb_dim)) @ p["emb.w"] + p["emb.b"])
            e = e @ p["step.w"] + p["step.b"]
            y = ad.silu(xn @ p["in.w"] + p["in.b"])
            skip = None
            for k in range(self.blocks):
                z = (y + e[..., k * W:(k + 1) * W]) @ p[f"block{k}.w"] + p[f"block{k}.b"]
                z = z + h_proj[..., 2 * k * W:2 * (k + 1) * W]
                u = ad.sigmoid(z[..., :W]) * ad.tanh(z[..., W:])
                r = u @ p[f"block{k}.w_out"] + p[f"block{k}.b_out"]
                y = (y + r[..., :W]) * res_scale
                skip = r[..., W:] if skip is None else skip + r[..., W:]
            s = ad.silu((skip * skip_scale) @ p["skip.w"] + p["skip.b"])
            return s @ p["out.w"] + p["out.b"]

        return f


def conditioning_windows(poses, acoustics, tau, lookahead):
    """Conditioning vectors for every frame ``t`` in ``[tau, W - lookahead)``.

    ``poses`` ``(B, W, D)`` and ``acoustics`` ``(B, W, A)``.  Frame ``t``
    sees poses ``t - tau .. t - 1`` and acoustics ``t - tau .. t + lookahead``.
    Returns ``(B, F, tau*D + (tau+1+lookahead)*A)`` with ``F = W - tau - lookahead``.
    """
    poses = np.asarray(poses, dtype=np.float64)
    acoustics = np.asarray(acoustics, dtype=np.float64)
    B, W, D = poses.shape
    F = W - tau - lookahead
    if F < 1:
        raise ValueError(f"window {W} too short for tau={tau}, lookahead={lookahead}")
    pw = np.lib.stride_tricks.sliding_window_view(poses, tau, axis=1)[:, :F]
    aw = np.lib.stride_tricks.sliding_window_view(acoustics, tau + 1 + lookahead, axis=1)[:, :F]
    # sliding_window_view puts the window axis last: (B, F, C, win) -> (B, F, win*C)
    pw = np.swapaxes(pw, -1, -2).reshape(B, F, -1)
    aw = np.swapaxes(aw, -1, -2).reshape(B, F, -1)
    return np.concatenate([pw, aw], axis=-1)


class GestureModel:
    def __init__(self, config=ModelConfig(), seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.encoder = LSTMEncoder(config.cond_input_dim, config.hidden, config.layers, rng)
        self.denoiser = Denoiser(config.pose_dim, config.hidden, config.width, config.blocks,
                                 config.emb_dim, rng)

    def parameters(self):
        return {**self.encoder.params, **self.denoiser.params}

    @property
    def n_parameters(self):
        return sum(t.data.size for t in self.parameters().values())

    def zero_grad(self):
        for t in self.parameters().values():
            t.grad = None

    def initial_state(self, batch=None):
        return self.encoder.initial_state(batch)

    def encode_step(self, pose_window, acoustic_window, state):
        """Advance the encoder by one frame; returns ``(h, new_state)``.

        ``pose_window`` is ``(tau, D)`` or ``(B, tau, D)`` and
        ``acoustic_window`` is ``(tau+1+r, A)`` or batched likewise.
        """
        c = self.config
        pw = np.asarray(pose_window, dtype=np.float64)
        aw = np.asarray(acoustic_window, dtype=np.float64)
        if pw.shape[-2:] != (c.tau, c.pose_dim) or aw.shape[-2:] != (c.acoustic_frames, c.audio_dim):
            raise ValueError(
                f"windows {pw.shape[-2:]} / {aw.shape[-2:]} do not match expected "
                f"{(c.tau, c.pose_dim)} / {(c.acoustic_frames, c.audio_dim)}")
        x = np.concatenate([pw.reshape(pw.shape[:-2] + (-1,)), aw.reshape(aw.shape[:-2] + (-1,))],
                           axis=-1)
        h, state = self.encoder.step(x, state)
        return h, state

    def predict_noise(self, xn, h, n):
        return self.denoiser(xn, h, n)

    def sampling_denoiser(self, h):
        """Plain-array denoiser bound to fixed conditioning ``h`` (no graph)."""
        with ad.no_grad():
            f = self.denoiser.conditioned(ad.as_tensor(h).data)

        def denoise(xn, _h, n):
            with ad.no_grad():
                return f(xn, n).data
        return denoise

    def loss(self, poses, acoustics, schedule, rng):
        """Mean squared noise-prediction error over every trainable frame of a
        batch of standardized windows."""
        c = self.config
        poses = np.asarray(poses, dtype=np.float64)
        X = conditioning_windows(poses, acoustics, c.tau, c.lookahead)
        B, F = X.shape[:2]
        H = self.encoder.sequence(X).reshape(B * F, c.hidden)
        x0 = poses[:, c.tau:c.tau + F].reshape(B * F, c.pose_dim)
        n = rng.integers(1, schedule.n_steps + 1, size=B * F)
        eps = rng.standard_normal(x0.shape)
        return diffusion_loss(x0, H, n, eps, self.denoiser, schedule)


# --------------------------------------------------------------------------
# optimizer


def adam_update(params, grads, state, lr=1.5e-3, betas=(0.9, 0.999), eps=1e-8):
    """In-place Adam step on the arrays in ``params``.

    ``state`` holds ``"t"`` and per-name ``"m"``/``"v"`` dicts and is
    updated.  Returns ``False`` (and leaves everything untouched) when any
    gradient is non-finite.
    """
    for name, g in grads.items():
        if g is None:
            continue
        if np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient for {name} has shape {np.shape(g)}, "
                             f"parameter {np.shape(params[name])}")
        if not np.all(np.isfinite(g)):
            log.warning("non-finite gradient for %s; skipping optimizer step", name)
            return False
    b1, b2 = betas
    state["t"] = t = state.get("t", 0) + 1
    m_all, v_all = state.setdefault("m", {}), state.setdefault("v", {})
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for name, g in grads.items():
        if g is None:
            continue
        m = m_all.setdefault(name, np.zeros_like(params[name]))
        v = v_all.setdefault(name, np.zeros_like(params[name]))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return True


class Adam:
    def __init__(self, params, lr=1.5e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params  # name -> Tensor
        self.lr, self.betas, self.eps = lr, betas, eps
        self.state = {"t": 0, "m": {}, "v": {}}

    @property
    def step_count(self):
        return self.state["t"]

    def step(self):
        arrays = {k: t.data for k, t in self.params.items()}
        grads = {k: t.grad for k, t in self.params.items()}
        return adam_update(arrays, grads, self.state, self.lr, self.betas, self.eps)

    def state_tensors(self):
        out = {"adam.t": np.array([float(self.state["t"])])}
        for k in self.params:
            if k in self.state["m"]:
                out[f"adam.m.{k}"] = self.state["m"][k]
                out[f"adam.v.{k}"] = self.state["v"][k]
        return out

    def load_state_tensors(self, tensors):
        self.state = {"t": int(tensors["adam.t"][0]), "m": {}, "v": {}}
        for k in self.params:
            if f"adam.m.{k}" in tensors:
                self.state["m"][k] = tensors[f"adam.m.{k}"].copy()
                self.state["v"][k] = tensors[f"adam.v.{k}"].copy()


# --------------------------------------------------------------------------
# checkpoint container


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(path, tensors, meta):
    """Write named float64 tensors plus a JSON metadata header.

    Layout: ``b"GDCK"``, uint32 version, uint64 header length, UTF-8 JSON
    header (sorted keys), then each tensor's little-endian float64 bytes in
    header order.  Output bytes depend only on the inputs.
    """
    index, offset, blobs = [], 0, []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"version": CHECKPOINT_VERSION, "meta": meta, "tensors": index},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _CKPT_MAGIC or len(raw) < 16:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", raw[4:16])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    try:
        header = json.loads(raw[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    base = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"]))
        start = base + entry["offset"]
        if start + 8 * count > len(raw):
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(raw[start:start + 8 * count], dtype="<f8").reshape(
            entry["shape"]).astype(np.float64)
    return tensors, header["meta"]


def model_state(model):
    return {k: t.data for k, t in model.parameters().items()}


def load_model_state(model, tensors):
    for k, t in model.parameters().items():
        if k not in tensors:
            raise CheckpointError(f"checkpoint lacks parameter {k}")
        if tensors[k].shape != t.data.shape:
            raise CheckpointError(f"parameter {k}: checkpoint shape {tensors[k].shape}, "
                                  f"model {t.data.shape}")
        t.data = tensors[k].copy()


def model_config_dict(config):
    return asdict(config)
