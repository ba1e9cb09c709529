"""End-to-end orchestration: prepare, train, synthesize, evaluate, ablate.

Every ``cmd_*`` function writes into an output directory and drops a frozen
copy of the run configuration (``config.toml``) next to its artefacts.
"""

import logging
import os
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import savgol_filter

from . import autodiff as ad
from .audio import mfps, read_wav
from .config import ConfigError, RunConfig, parse_config, save_config
from .dataset import (Dataset, NormStats, assign_splits, fit_stats, load_dataset,
                      save_dataset, standardize, window_pairs)
from .diffusion import sample_frame
from .metrics import (MetricError, bcs, detect_audio_beats, detect_motion_beats, diversity,
                      l1_distance, pck, pck_threshold, time_synthesis)
from .model import (Adam, CheckpointError, GestureModel, ModelConfig, config_hash,
                    load_checkpoint, load_model_state, model_state, save_checkpoint)
from .motion import (EulerMotion, PoseSequence, forward_kinematics, parse_bvh, read_bvh,
                     resample, select_joints, to_pose_sequence, write_bvh)
from .schedule import build_schedule

__all__ = [
    "PipelineError", "AlignmentError", "TrainingError", "Bundle", "RolloutState",
    "TrainResult", "EvalItem", "model_hash", "prepare_take", "build_dataset", "cmd_prepare",
    "train", "cmd_train", "make_bundle", "save_bundle", "load_bundle", "sg_smooth",
    "quantile_sample", "rollout", "synthesize", "cmd_synthesize", "load_eval_item",
    "evaluate", "cmd_evaluate", "ablate", "cmd_ablate", "METRIC_NAMES",
]

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.gdck"
METRIC_NAMES = ("l1", "pck", "bcs", "diversity")


class PipelineError(RuntimeError):
    pass


class AlignmentError(PipelineError):
    pass


class TrainingError(PipelineError):
    pass


def model_hash(cfg):
    """Hash of every setting a trained checkpoint depends on."""
    d = cfg.to_dict()
    data = {k: d["data"][k] for k in ("joints", "fps", "window", "n_mels", "n_fft", "f_min")}
    return config_hash({"data": data, "model": d["model"], "schedule": d["schedule"]})


def _model_config(cfg, pose_dim, audio_dim):
    return ModelConfig(pose_dim=pose_dim, audio_dim=audio_dim, **asdict(cfg.model))


def _schedule(cfg):
    s = cfg.schedule
    return build_schedule(s.n_steps, s.beta_start, s.beta_end, s.shape)


# --------------------------------------------------------------------------
# prepare


def prepare_take(take, cfg):
    """Parse one BVH/WAV pair into ``(skeleton, poses T x D, log-mel T x A)``."""
    d = cfg.data
    try:
        skel, motion = read_bvh(take["bvh"])
        skel, motion = select_joints(skel, motion, d.joints)
        poses = resample(to_pose_sequence(skel, motion), d.fps)
    except (ValueError, OSError) as exc:
        raise PipelineError(f"{take['bvh']}: {exc}") from exc
    try:
        clip = read_wav(take["wav"])
        feats = mfps(clip, d.fps, d.n_mels, d.n_fft, d.f_min).frames
    except (ValueError, OSError) as exc:
        raise PipelineError(f"{take['wav']}: {exc}") from exc
    T = len(poses)
    if len(feats) < T:
        raise AlignmentError(
            f"audio {take['wav']} lasts {clip.duration:.3f} s but motion {take['bvh']} lasts "
            f"{T / d.fps:.3f} s")
    return skel, poses.frames, feats[:T]


def build_dataset(cfg, takes=None):
    """Windowed, split and standardized dataset from the configured takes."""
    takes = cfg.data.takes if takes is None else takes
    if not takes:
        raise ConfigError("no takes listed under [data].takes")
    skeleton, raw = None, []
    for take in takes:
        skel, poses, feats = prepare_take(take, cfg)
        if skeleton is not None and skel != skeleton:
            raise PipelineError(f"{take['bvh']}: skeleton differs from the first take")
        skeleton = skel
        raw.extend(window_pairs(poses, feats, cfg.data.window, cfg.data.stride, take["name"]))
    split_of = assign_splits([s.take for s in raw], cfg.data.val_fraction, cfg.seed)
    splits = [split_of[s.take] for s in raw]
    stats = fit_stats([s for s, sp in zip(raw, splits) if sp == "train"])
    samples = [standardize(s, stats) for s in raw]
    empty = EulerMotion(np.zeros((0, skeleton.n_channels)), 1.0 / cfg.data.fps)
    return Dataset(samples, splits, stats, cfg.data.fps, cfg.seed, cfg.data.val_fraction,
                   write_bvh(skeleton, empty), {"model_hash": model_hash(cfg)})


def cmd_prepare(cfg, out_dir):
    ds = build_dataset(cfg)
    save_dataset(ds, out_dir)
    save_config(cfg, os.path.join(out_dir, "config.toml"))
    log.info("prepared %d samples (%d train / %d val) in %s", len(ds.samples),
             len(ds.train), len(ds.val), out_dir)
    return out_dir


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: GestureModel
    optimizer: Adam
    history: list          # dicts: epoch, train_loss, val_loss, seconds
    best_epoch: int
    stats: NormStats

    @property
    def seconds(self):
        return sum(h["seconds"] for h in self.history)


def _stack(samples):
    return (np.stack([np.asarray(s.poses, dtype=np.float64) for s in samples]),
            np.stack([np.asarray(s.acoustics, dtype=np.float64) for s in samples]))


def _mean_loss(model, poses, audio, schedule, rng, batch):
    total = 0.0
    with ad.no_grad():
        for i in range(0, len(poses), batch):
            loss = model.loss(poses[i:i + batch], audio[i:i + batch], schedule, rng)
            total += float(loss.data) * len(poses[i:i + batch])
    return total / len(poses)


def train(cfg, dataset, epochs=None, early_stopping=True, on_epoch=None):
    """Fit a model on ``dataset.train``; the best-monitored parameters are
    restored into the returned model.

    The monitored loss is the validation loss when a validation split
    exists, otherwise the training loss.  Validation noise is redrawn from
    the same seed each epoch so losses are comparable across epochs.
    """
    train_set = dataset.train
    if not train_set:
        raise PipelineError("dataset has no training samples")
    poses, audio = _stack(train_set)
    val = _stack(dataset.val) if dataset.val else None
    mcfg = _model_config(cfg, poses.shape[-1], audio.shape[-1])
    schedule = _schedule(cfg)
    model = GestureModel(mcfg, seed=cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.train.lr)
    rng = np.random.default_rng([cfg.seed, 1])
    batch = cfg.train.batch_size
    max_epochs = cfg.train.max_epochs if epochs is None else epochs
    history, best, best_epoch, best_state, stale = [], np.inf, 0, None, 0
    last_finite = None
    for epoch in range(1, max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(poses))
        total = 0.0
        for b, i in enumerate(range(0, len(order), batch)):
            idx = order[i:i + batch]
            model.zero_grad()
            loss = model.loss(poses[idx], audio[idx], schedule, rng)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}, batch {b} "
                    f"(last finite batch loss {last_finite}, lr {cfg.train.lr}, "
                    f"N {schedule.n_steps})")
            last_finite = value
            loss.backward()
            opt.step()
            total += value * len(idx)
        train_loss = total / len(poses)
        val_loss = None
        if val is not None:
            val_loss = _mean_loss(model, val[0], val[1], schedule,
                                  np.random.default_rng([cfg.seed, 2]), batch)
        entry = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                 "seconds": time.perf_counter() - t0}
        history.append(entry)
        log.info("epoch %d train %.6f val %s (%.1fs)", epoch, train_loss,
                 "-" if val_loss is None else f"{val_loss:.6f}", entry["seconds"])
        if on_epoch is not None:
            on_epoch(entry)
        monitored = train_loss if val_loss is None else val_loss
        if monitored < best:
            best, best_epoch, stale = monitored, epoch, 0
            best_state = ({k: v.copy() for k, v in model_state(model).items()},
                          {k: v.copy() for k, v in opt.state_tensors().items()})
        else:
            stale += 1
            if early_stopping and stale >= cfg.train.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    load_model_state(model, best_state[0])
    opt.load_state_tensors(best_state[1])
    return TrainResult(model, opt, history, best_epoch, dataset.stats)


@dataclass
class Bundle:
    """A trained model with everything synthesis needs."""
    model: GestureModel
    stats: NormStats
    schedule: object
    config: RunConfig
    skeleton: object
    meta: dict

    @property
    def fps(self):
        return self.config.data.fps


def make_bundle(cfg, result, skeleton_bvh):
    skel = parse_bvh(skeleton_bvh)[0] if skeleton_bvh else None
    return Bundle(result.model, result.stats, _schedule(cfg), cfg, skel,
                  {"skeleton_bvh": skeleton_bvh, "best_epoch": result.best_epoch})


def save_bundle(path, cfg, result, skeleton_bvh):
    tensors = {f"param.{k}": v for k, v in model_state(result.model).items()}
    tensors.update(result.optimizer.state_tensors())
    tensors["stats"] = result.stats.to_array()
    meta = {
        "config": cfg.to_dict(),
        "model_hash": model_hash(cfg),
        "model_config": asdict(result.model.config),
        "skeleton_bvh": skeleton_bvh,
        "best_epoch": result.best_epoch,
        "history": [{k: v for k, v in h.items() if k != "seconds"} for h in result.history],
    }
    save_checkpoint(path, tensors, meta)
    return path


def load_bundle(path, cfg=None):
    """Load a checkpoint; ``cfg`` (if given) must agree on every model-relevant
    setting, and its sampler/smoothing/metrics sections take precedence."""
    tensors, meta = load_checkpoint(path)
    stored = parse_config(meta["config"])
    if cfg is not None:
        if model_hash(cfg) != meta["model_hash"]:
            raise CheckpointError(
                f"{path}: config does not match the checkpoint (model hash "
                f"{model_hash(cfg)[:12]} vs {meta['model_hash'][:12]})")
        stored = cfg
    mcfg = ModelConfig(**meta["model_config"])
    model = GestureModel(mcfg, seed=0)
    load_model_state(model, {k[len("param."):]: v for k, v in tensors.items()
                             if k.startswith("param.")})
    stats = NormStats.from_array(tensors["stats"], mcfg.pose_dim, mcfg.audio_dim)
    skel = parse_bvh(meta["skeleton_bvh"])[0] if meta.get("skeleton_bvh") else None
    return Bundle(model, stats, _schedule(stored), stored, skel, meta)


def _write_log(path, history):
    with open(path, "w") as fh:
        fh.write("epoch\ttrain_loss\tval_loss\n")
        for h in history:
            v = "" if h["val_loss"] is None else repr(h["val_loss"])
            fh.write(f"{h['epoch']}\t{h['train_loss']!r}\t{v}\n")


def cmd_train(cfg, dataset_dir, out_dir, epochs=None, early_stopping=True):
    """Train and write ``checkpoint.gdck``, ``train_log.tsv`` (losses only, so
    seed-fixed reruns match byte for byte) and ``timing.tsv``."""
    ds = load_dataset(dataset_dir) if isinstance(dataset_dir, (str, os.PathLike)) else dataset_dir
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.toml"))
    result = train(cfg, ds, epochs, early_stopping)
    _write_log(os.path.join(out_dir, "train_log.tsv"), result.history)
    with open(os.path.join(out_dir, "timing.tsv"), "w") as fh:
        fh.write("epoch\tseconds\n")
        for h in result.history:
            fh.write(f"{h['epoch']}\t{h['seconds']:.3f}\n")
    path = os.path.join(out_dir, CHECKPOINT_NAME)
    save_bundle(path, cfg, result, ds.skeleton_bvh)
    return path


# --------------------------------------------------------------------------
# synthesis


def sg_smooth(sequence, window=31, order=4):
    """Savitzky-Golay filter along the time axis of a ``T x D`` array.

    Edge frames use a polynomial fitted to the first/last ``window`` frames.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"Savitzky-Golay window must be odd and positive, got {window}")
    if not 0 <= order < window:
        raise ValueError(f"polynomial order {order} must be below the window {window}")
    x = np.asarray(sequence, dtype=np.float64)
    if len(x) < window:
        warnings.warn(f"sequence of {len(x)} frames is shorter than the smoothing window "
                      f"{window}; returned unchanged", stacklevel=2)
        return x.copy()
    return savgol_filter(x, window, order, axis=0, mode="interp")


def quantile_sample(h, denoiser, schedule, S=5, q=0.5, rng=None, dim=None,
                    sigma_mode="variance"):
    """Per-channel ``q``-quantile of ``S`` independent reverse-chain draws."""
    if S < 1:
        raise ValueError("need at least one candidate")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile q={q} outside [0, 1]")
    if S == 1:
        return sample_frame(h, denoiser, schedule, rng, dim, sigma_mode=sigma_mode)
    h = np.asarray(h)
    hs = np.broadcast_to(h, (S,) + h.shape)
    draws = sample_frame(hs, denoiser, schedule, rng, dim, batch=S, sigma_mode=sigma_mode)
    return np.quantile(draws, q, axis=0)


@dataclass
class RolloutState:
    buffer: np.ndarray   # the last tau generated poses, oldest first
    t: int               # index of the next frame to generate
    hidden: object       # encoder state


def rollout(encode, sample, acoustics, frames, initial, lookahead, hidden=None, rng=None):
    """Autoregressive generation of ``frames`` poses.

    ``encode(pose_window, acoustic_window, hidden) -> (h, hidden)`` and
    ``sample(h, rng) -> pose``.  Frames ``0 .. tau-1`` are ``initial``;
    frame ``t`` conditions on poses ``t-tau .. t-1`` and acoustics
    ``t-tau .. t+lookahead``, with acoustics past the end zero-padded.
    """
    initial = np.asarray(initial, dtype=np.float64)
    tau, D = initial.shape
    acoustics = np.asarray(acoustics, dtype=np.float64)
    if len(acoustics) < frames:
        raise PipelineError(f"{len(acoustics)} acoustic frames cannot drive {frames} poses")
    need = frames + lookahead
    if len(acoustics) < need:
        pad = np.zeros((need - len(acoustics), acoustics.shape[1]))
        acoustics = np.concatenate([acoustics, pad])
    out = np.zeros((max(frames, tau), D))
    out[:tau] = initial
    state = RolloutState(initial.copy(), tau, hidden)
    while state.t < frames:
        t = state.t
        h, state.hidden = encode(state.buffer, acoustics[t - tau:t + lookahead + 1], state.hidden)
        x = np.asarray(sample(h, rng), dtype=np.float64)
        out[t] = x
        state.buffer = np.concatenate([state.buffer[1:], x[None]])
        state.t = t + 1
    return out[:frames]


def _model_sampler(bundle, sampler_cfg):
    model, schedule = bundle.model, bundle.schedule
    D = model.config.pose_dim

    def sample(h, rng):
        if sampler_cfg.quantile:
            S = sampler_cfg.candidates
            hs = np.broadcast_to(h, (S,) + h.shape)
            return quantile_sample(h, model.sampling_denoiser(hs if S > 1 else h), schedule, S,
                                   sampler_cfg.q, rng, D, sampler_cfg.sigma_mode)
        return sample_frame(h, model.sampling_denoiser(h), schedule, rng, D,
                            sigma_mode=sampler_cfg.sigma_mode)
    return sample


def _model_encoder(model):
    def encode(pose_window, acoustic_window, hidden):
        with ad.no_grad():
            h, hidden = model.encode_step(pose_window, acoustic_window, hidden)
        return h.data, tuple(s.data for s in hidden)
    return encode


def synthesize_standardized(bundle, acoustics_std, frames, seed=0, initial=None, sampler=None):
    """Rollout in standardized units (no destandardization, no smoothing)."""
    c = bundle.model.config
    if initial is None:
        initial = np.zeros((c.tau, c.pose_dim))   # neutral (mean) pose after standardizing
    sampler = bundle.config.sampler if sampler is None else sampler
    rng = np.random.default_rng(seed)
    return rollout(_model_encoder(bundle.model), _model_sampler(bundle, sampler), acoustics_std,
                   frames, initial, c.lookahead, bundle.model.initial_state(), rng)


def synthesize(bundle, acoustics, frames=None, seed=0, initial=None, smoothing=None):
    """Poses (exponential-map radians) for raw log-mel ``acoustics``."""
    frames = len(acoustics) if frames is None else frames
    if len(acoustics) < frames:
        raise PipelineError(f"audio has {len(acoustics)} frames, {frames} requested "
                            f"({frames / bundle.fps:.2f} s)")
    a_std = bundle.stats.standardize_audio(acoustics)
    if initial is not None:
        initial = bundle.stats.standardize_poses(initial)
    poses = bundle.stats.destandardize_poses(
        synthesize_standardized(bundle, a_std, frames, seed, initial))
    smoothing = bundle.config.smoothing if smoothing is None else smoothing
    if smoothing.enabled:
        poses = sg_smooth(poses, smoothing.window, smoothing.order)
    return poses


def cmd_synthesize(checkpoint, wav_path, out_path, frames=None, seed=0, cfg=None):
    """Write a 20 fps BVH driven by ``wav_path``; returns the output path."""
    bundle = load_bundle(checkpoint, cfg)
    d = bundle.config.data
    try:
        feats = mfps(read_wav(wav_path), d.fps, d.n_mels, d.n_fft, d.f_min).frames
    except (ValueError, OSError) as exc:
        raise PipelineError(f"{wav_path}: {exc}") from exc
    if frames is not None and len(feats) < frames:
        raise PipelineError(f"{wav_path}: audio too short, {len(feats) / d.fps:.2f} s for "
                            f"{frames} frames ({frames / d.fps:.2f} s)")
    poses = synthesize(bundle, feats, frames, seed)
    text = write_bvh(bundle.skeleton, PoseSequence(poses, d.fps, bundle.skeleton))
    if os.path.isdir(out_path):
        out_path = os.path.join(out_path, "synth.bvh")
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    with open(out_path, "w") as fh:
        fh.write(text)
    return out_path


# --------------------------------------------------------------------------
# evaluation


@dataclass
class EvalItem:
    name: str
    poses: np.ndarray       # reference, T x D exponential maps
    acoustics: np.ndarray   # raw log-mel, T x A
    clip: object            # AudioClip for beat detection


def load_eval_item(take, cfg):
    _, poses, feats = prepare_take(take, cfg)
    return EvalItem(take["name"], poses, feats, read_wav(take["wav"]))


def evaluate(items, skeleton, generate, cfg, runs=None, seed=0):
    """Score ``generate(item, seed) -> poses`` against each item's reference.

    Returns ``(rows, per_run)``: one row per item and metric with the mean
    and best over ``runs`` generations (diversity pools all runs and has a
    single value), and the raw per-run scores.
    """
    m = cfg.metrics
    runs = m.runs if runs is None else runs
    left, right = (skeleton.index(n) for n in m.shoulders)
    rows, per_run = [], {}
    for item in items:
        ref = forward_kinematics(skeleton, item.poses).frames
        delta = pck_threshold(ref, left, right, m.pck_fraction)
        audio_beats = detect_audio_beats(item.clip, cfg.data.fps, cfg.data.n_fft)
        audio_beats = type(audio_beats)(audio_beats.frames[audio_beats.frames < len(ref)],
                                        audio_beats.fps)
        scores = {k: [] for k in ("l1", "pck", "bcs")}
        generated = []
        for k in range(runs):
            gen = forward_kinematics(skeleton, generate(item, seed + k)).frames
            if gen.shape != ref.shape:
                raise PipelineError(f"{item.name}: generated {gen.shape}, reference {ref.shape}")
            generated.append(gen)
            scores["l1"].append(l1_distance(gen, ref))
            scores["pck"].append(pck(gen, ref, delta) if delta > 0 else float("nan"))
            try:
                scores["bcs"].append(bcs(audio_beats, detect_motion_beats(gen, cfg.data.fps),
                                         m.bcs_sigma))
            except MetricError:
                scores["bcs"].append(float("nan"))
        try:
            div = diversity(generated, m.clip_frames)
        except MetricError:
            div = float("nan")
        per_run[item.name] = dict(scores, diversity=[div])
        best = {"l1": np.min, "pck": np.max, "bcs": np.max, "diversity": np.max}
        for metric in METRIC_NAMES:
            vals = np.array(per_run[item.name][metric])
            rows.append({"item": item.name, "metric": metric, "mean": float(np.mean(vals)),
                         "best": float(best[metric](vals)), "runs": len(vals)})
    return rows, per_run


def write_report(rows, out_dir, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.tsv"), "w") as fh:
        fh.write("item\tmetric\tmean\tbest\truns\n")
        for r in rows:
            fh.write(f"{r['item']}\t{r['metric']}\t{r['mean']!r}\t{r['best']!r}\t{r['runs']}\n")
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        for k, v in (extra or {}).items():
            fh.write(f"{k}={v}\n")
        for r in rows:
            fh.write(f"{r['item']}.{r['metric']}.mean={r['mean']:.6g}\n")
            fh.write(f"{r['item']}.{r['metric']}.best={r['best']:.6g}\n")
        for metric in METRIC_NAMES:
            vals = [r["mean"] for r in rows if r["metric"] == metric]
            if vals:
                fh.write(f"all.{metric}.mean={np.mean(vals):.6g}\n")


def cmd_evaluate(checkpoint, out_dir, cfg=None, items=None, runs=None, seed=0, generate=None):
    """Evaluate a checkpoint on ``items`` (default: the configured eval takes)."""
    bundle = load_bundle(checkpoint, cfg)
    cfg = bundle.config
    if items is None:
        if not cfg.data.eval_takes:
            raise ConfigError("no evaluation takes listed under [data].eval_takes")
        items = [load_eval_item(t, cfg) for t in cfg.data.eval_takes]
    if generate is None:
        def generate(item, s):
            return synthesize(bundle, item.acoustics, len(item.poses), s)
    rows, _ = evaluate(items, bundle.skeleton, generate, cfg, runs, seed)
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.toml"))
    write_report(rows, out_dir, {"smoothed": cfg.smoothing.enabled,
                                 "bcs_sigma": cfg.metrics.bcs_sigma,
                                 "pck_fraction": cfg.metrics.pck_fraction})
    return rows


# --------------------------------------------------------------------------
# ablation


def ablate(cfg, dataset, n_list, epochs, frames=40, repeats=5):
    """Train once per diffusion-step count and time synthesis; one dict per N."""
    rows = []
    sample = (dataset.val or dataset.train)[0]
    for N in n_list:
        cfg_n = cfg.with_updates(schedule={"n_steps": int(N)})
        result = train(cfg_n, dataset, epochs=epochs, early_stopping=False)
        bundle = make_bundle(cfg_n, result, dataset.skeleton_bvh)
        acoustics = np.asarray(sample.acoustics, dtype=np.float64)
        frames_n = min(frames, len(acoustics))
        timing = time_synthesis(
            lambda T: synthesize_standardized(bundle, acoustics, T, seed=cfg.seed),
            frames_n, repeats)
        last = result.history[-1]
        rows.append({"n_steps": int(N), "synth_time": timing.mean,
                     "synth_time_hw": timing.half_width, "train_time": result.seconds,
                     "train_loss": last["train_loss"], "val_loss": last["val_loss"]})
        log.info("N=%d: train loss %.4f, %.2fs training, %.4g s/frame", N,
                 last["train_loss"], result.seconds, timing.mean)
    return rows


def _fmt(v, spec=".4g"):
    return "-" if v is None else format(v, spec)


def write_ablation_table(rows, path):
    """Metrics as rows, one column per N."""
    lines = ["metric\t" + "\t".join(str(r["n_steps"]) for r in rows)]
    lines.append("synth_time_per_frame_s\t" + "\t".join(
        _fmt(r["synth_time"]) + ("" if r["synth_time_hw"] is None else f"±{r['synth_time_hw']:.2g}")
        for r in rows))
    lines.append("training_time_min\t" + "\t".join(_fmt(r["train_time"] / 60.0) for r in rows))
    lines.append("train_loss\t" + "\t".join(_fmt(r["train_loss"]) for r in rows))
    lines.append("val_loss\t" + "\t".join(_fmt(r["val_loss"]) for r in rows))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def cmd_ablate(cfg, dataset_dir, out_dir, n_list, epochs=None, frames=40, repeats=5):
    ds = load_dataset(dataset_dir) if isinstance(dataset_dir, (str, os.PathLike)) else dataset_dir
    epochs = cfg.train.max_epochs if epochs is None else epochs
    rows = ablate(cfg, ds, n_list, epochs, frames, repeats)
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.toml"))
    write_ablation_table(rows, os.path.join(out_dir, "ablation.tsv"))
    return rows
