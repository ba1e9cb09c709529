import dataclasses
import os
import warnings

import numpy as np
import pytest

from gesturediff import pipeline
from gesturediff.config import ConfigError, SamplerConfig
from gesturediff.dataset import Dataset, load_dataset
from gesturediff.diffusion import sample_frame
from gesturediff.model import CheckpointError
from gesturediff.motion import read_bvh
from gesturediff.schedule import build_schedule
from gesturediff.synthetic import write_synthetic_take

from conftest import tiny_config


# ---------------------------------------------------------------- prepare

def test_prepare_four_second_take(tmp_path):
    take = write_synthetic_take(str(tmp_path), "short", 4.0, seed=3)
    ds = pipeline.build_dataset(tiny_config([take]))
    assert len(ds.samples) == 1
    assert ds.samples[0].poses.shape == (80, 45)
    assert ds.samples[0].acoustics.shape == (80, 27)
    # a single take cannot be split, so it trains
    assert ds.splits == ["train"]


def test_prepare_written_layout(trained):
    _, root, _ = trained
    ds = load_dataset(str(root / "ds"))
    assert len(ds.samples) == 6 and sorted(set(ds.splits)) == ["train", "val"]
    assert os.path.exists(root / "ds" / "config.toml")
    # stats come from the training split only
    train = np.concatenate([s.poses for s in ds.train])
    assert np.allclose(train.mean(axis=0), 0.0, atol=1e-5)


def test_prepare_no_takes():
    with pytest.raises(ConfigError, match="no takes"):
        pipeline.build_dataset(tiny_config([]))


def test_prepare_audio_shorter(tmp_path):
    long_take = write_synthetic_take(str(tmp_path), "long", 6.0, seed=1)
    short = write_synthetic_take(str(tmp_path), "short", 3.0, seed=1)
    take = {"name": "mismatch", "bvh": long_take["bvh"], "wav": short["wav"]}
    with pytest.raises(pipeline.AlignmentError) as info:
        pipeline.prepare_take(take, tiny_config([take]))
    msg = str(info.value)
    assert "3.000 s" in msg and "6.000 s" in msg


def test_prepare_bad_file_named(tmp_path):
    bad = tmp_path / "bad.bvh"
    bad.write_text("HIERARCHY\nROOT Hips\n{\n")
    take = {"name": "x", "bvh": str(bad), "wav": str(bad)}
    with pytest.raises(pipeline.PipelineError, match="bad.bvh"):
        pipeline.prepare_take(take, tiny_config([take]))


# ---------------------------------------------------------------- training

def test_train_log_reproducible(trained, tmp_path):
    cfg, root, _ = trained
    pipeline.cmd_train(cfg, str(root / "ds"), str(tmp_path / "again"))
    first = (root / "train" / "train_log.tsv").read_bytes()
    assert first == (tmp_path / "again" / "train_log.tsv").read_bytes()
    assert first.count(b"\n") == 1 + cfg.train.max_epochs
    assert (root / "train" / "checkpoint.gdck").read_bytes() == \
        (tmp_path / "again" / "checkpoint.gdck").read_bytes()


def test_train_restores_best_epoch(trained):
    cfg, root, _ = trained
    ds = load_dataset(str(root / "ds"))
    result = pipeline.train(cfg.with_updates(train={"max_epochs": 4}), ds)
    vals = [h["val_loss"] for h in result.history]
    assert result.best_epoch == int(np.argmin(vals)) + 1
    # the restored parameters reproduce the best validation loss
    poses, audio = pipeline._stack(ds.val)
    again = pipeline._mean_loss(result.model, poses, audio, pipeline._schedule(cfg),
                                np.random.default_rng([cfg.seed, 2]), cfg.train.batch_size)
    assert again == pytest.approx(min(vals), rel=1e-12)


def test_train_early_stopping(trained):
    cfg, root, _ = trained
    ds = load_dataset(str(root / "ds"))
    seen = []
    c = cfg.with_updates(train={"max_epochs": 30, "patience": 1, "lr": 0.5})
    result = pipeline.train(c, ds, on_epoch=seen.append)
    assert len(seen) == len(result.history) < 30
    stale = len(result.history) - result.best_epoch
    assert stale == 1


def test_train_non_finite(trained):
    cfg, root, _ = trained
    ds = load_dataset(str(root / "ds"))
    poisoned = [dataclasses.replace(s, poses=np.full_like(s.poses, np.nan)) for s in ds.samples]
    bad = Dataset(poisoned, ds.splits, ds.stats, ds.fps, ds.seed, ds.val_fraction, ds.skeleton_bvh)
    with pytest.raises(pipeline.TrainingError, match="epoch 1, batch 0"):
        pipeline.train(cfg, bad)


def test_train_needs_train_split(trained):
    cfg, root, _ = trained
    ds = load_dataset(str(root / "ds"))
    only_val = Dataset(ds.samples, ["val"] * len(ds.samples), ds.stats)
    with pytest.raises(pipeline.PipelineError):
        pipeline.train(cfg, only_val)


# ---------------------------------------------------------------- checkpoints

def test_bundle_round_trip(trained):
    cfg, _, ckpt = trained
    b = pipeline.load_bundle(ckpt)
    assert b.config == cfg and b.fps == 20.0
    assert b.skeleton.n_joints == 15 and b.schedule.n_steps == 10
    b2 = pipeline.load_bundle(ckpt, cfg.with_updates(sampler={"quantile": True}))
    assert b2.config.sampler.quantile


@pytest.mark.parametrize("update", [{"model": {"hidden": 32}}, {"schedule": {"n_steps": 11}},
                                    {"data": {"n_mels": 20}}])
def test_bundle_hash_mismatch(trained, update):
    cfg, _, ckpt = trained
    with pytest.raises(CheckpointError, match="does not match"):
        pipeline.load_bundle(ckpt, cfg.with_updates(**update))


# ---------------------------------------------------------------- synthesis

def test_synthesize_bvh_seeded(trained, takes, tmp_path):
    _, _, ckpt = trained
    wav = takes[2]["wav"]
    a = pipeline.cmd_synthesize(ckpt, wav, str(tmp_path / "a.bvh"), frames=100, seed=0)
    b = pipeline.cmd_synthesize(ckpt, wav, str(tmp_path / "b.bvh"), frames=100, seed=0)
    c = pipeline.cmd_synthesize(ckpt, wav, str(tmp_path / "c.bvh"), frames=100, seed=1)
    assert open(a, "rb").read() == open(b, "rb").read()
    assert open(a, "rb").read() != open(c, "rb").read()
    skel, motion = read_bvh(a)
    assert skel.n_joints == 15 and motion.frames.shape == (100, skel.n_channels)
    assert motion.frame_time == pytest.approx(0.05)
    assert np.all(np.isfinite(motion.frames))


def test_synthesize_whole_clip_default(trained, takes, tmp_path):
    _, _, ckpt = trained
    out = pipeline.cmd_synthesize(ckpt, takes[2]["wav"], str(tmp_path))
    assert out.endswith("synth.bvh")
    assert len(read_bvh(out)[1].frames) == 160


def test_synthesize_eighteen_seconds(trained, tmp_path):
    _, _, ckpt = trained
    take = write_synthetic_take(str(tmp_path), "long", 18.0, seed=8)
    out = pipeline.cmd_synthesize(ckpt, take["wav"], str(tmp_path / "o.bvh"), frames=360)
    motion = read_bvh(out)[1]
    assert len(motion.frames) == 360
    assert len(motion.frames) * motion.frame_time == pytest.approx(18.0)


def test_synthesize_audio_too_short(trained, takes, tmp_path):
    _, _, ckpt = trained
    with pytest.raises(pipeline.PipelineError, match="too short"):
        pipeline.cmd_synthesize(ckpt, takes[2]["wav"], str(tmp_path / "x.bvh"), frames=360)


def test_synthesize_smoothing_applied(trained):
    cfg, _, ckpt = trained
    b = pipeline.load_bundle(ckpt)
    acoustics = np.zeros((60, 27))
    raw = pipeline.synthesize(b, acoustics, seed=4, smoothing=dataclasses.replace(
        cfg.smoothing, enabled=False))
    smooth = pipeline.synthesize(b, acoustics, seed=4)
    assert np.allclose(smooth, pipeline.sg_smooth(raw, 31, 4))


def test_synthesize_quantile_mode(trained):
    cfg, _, ckpt = trained
    b = pipeline.load_bundle(ckpt, cfg.with_updates(sampler={"quantile": True, "candidates": 3}))
    out = pipeline.synthesize_standardized(b, np.zeros((20, 27)), 20, seed=0)
    assert out.shape == (20, 45) and np.all(np.isfinite(out))


# ---------------------------------------------------------------- smoothing

def test_sg_polynomial_exact():
    t = np.linspace(-1, 1, 200)[:, None]
    x = np.hstack([1 + 2 * t - t ** 2 + 0.5 * t ** 3 - 3 * t ** 4, 4 * t ** 2])
    assert np.abs(pipeline.sg_smooth(x) - x).max() < 1e-8


def test_sg_constant_and_length():
    x = np.full((50, 3), 2.5)
    y = pipeline.sg_smooth(x)
    assert y.shape == x.shape and np.allclose(y, 2.5, atol=1e-12)


def test_sg_reduces_noise(rng):
    t = np.linspace(0, 4 * np.pi, 400)[:, None]
    clean = np.sin(t)
    noisy = clean + 0.2 * rng.standard_normal(clean.shape)
    assert np.var(pipeline.sg_smooth(noisy) - clean) < 0.5 * np.var(noisy - clean)


def test_sg_short_warns():
    x = np.arange(20.0)[:, None]
    with pytest.warns(UserWarning, match="shorter"):
        y = pipeline.sg_smooth(x)
    assert np.array_equal(y, x)


@pytest.mark.parametrize("window,order", [(30, 4), (0, 0), (5, 5), (5, -1)])
def test_sg_invalid(window, order):
    with pytest.raises(ValueError):
        pipeline.sg_smooth(np.zeros((100, 2)), window, order)


# ---------------------------------------------------------------- quantile sampling

def _gaussian_oracle(schedule):
    def eps(xn, h, n):
        abar = schedule.alpha_bar[np.asarray(n) - 1]
        return np.sqrt(1.0 - np.asarray(abar))[..., None] * xn
    return eps


def test_quantile_single_candidate_is_sample_frame():
    s = build_schedule(20)
    den = _gaussian_oracle(s)
    a = pipeline.quantile_sample(None, den, s, S=1, rng=np.random.default_rng(3), dim=4)
    b = sample_frame(None, den, s, np.random.default_rng(3), 4)
    assert np.array_equal(a, b)


def test_quantile_median_of_known_candidates():
    s = build_schedule(1)
    target = np.array([[-1.0], [0.0], [4.0]])
    beta, abar = s.beta[0], s.alpha_bar[0]

    def den(xn, h, n):
        # makes the single reverse step land exactly on ``target``
        return (xn - np.sqrt(s.alpha[0]) * target) * np.sqrt(1.0 - abar) / beta

    out = pipeline.quantile_sample(None, den, s, S=3, q=0.5, rng=np.random.default_rng(0), dim=1)
    assert out == pytest.approx([0.0])
    hi = pipeline.quantile_sample(None, den, s, S=3, q=1.0, rng=np.random.default_rng(0), dim=1)
    assert hi == pytest.approx([4.0])


def test_quantile_many_candidates_gaussian():
    s = build_schedule(50)
    out = pipeline.quantile_sample(None, _gaussian_oracle(s), s, S=101,
                                   rng=np.random.default_rng(1), dim=1)
    assert abs(out[0]) < 0.2


def test_quantile_median_spread_matches_order_statistics():
    # the sample median of S unit normals has std ~ sqrt(pi / 2) / sqrt(S)
    s = build_schedule(20)
    out = pipeline.quantile_sample(None, _gaussian_oracle(s), s, S=101,
                                   rng=np.random.default_rng(2), dim=400)
    assert abs(out.mean()) < 0.03
    assert out.std() == pytest.approx(np.sqrt(np.pi / 2 / 101), rel=0.15)


@pytest.mark.parametrize("S,q", [(0, 0.5), (3, 1.5), (3, -0.1)])
def test_quantile_invalid(S, q):
    s = build_schedule(2)
    with pytest.raises(ValueError):
        pipeline.quantile_sample(None, _gaussian_oracle(s), s, S=S, q=q,
                                 rng=np.random.default_rng(0), dim=1)


# ---------------------------------------------------------------- rollout

def _instrumented(tau, r):
    calls = []

    def encode(pw, aw, hidden):
        t = int(aw[tau, 0]) - 1          # acoustic frame t carries label t + 1
        calls.append((t, pw.copy(), aw.copy()))
        return np.array([t]), hidden + 1

    def sample(h, rng):
        return np.full(2, 100.0 + h[0])  # pose t is labelled 100 + t
    return encode, sample, calls


@pytest.mark.parametrize("T,tau,r", [(40, 10, 20), (15, 3, 0), (12, 10, 5)])
def test_rollout_window_discipline(T, tau, r):
    encode, sample, calls = _instrumented(tau, r)
    acoustics = np.arange(1.0, T + 1)[:, None]
    initial = np.full((tau, 2), -1.0)
    out = pipeline.rollout(encode, sample, acoustics, T, initial, r, hidden=0)
    assert out.shape == (T, 2)
    assert [c[0] for c in calls] == list(range(tau, T))
    for t, pw, aw in calls:
        want_pose = [-1.0 if k < tau else 100.0 + k for k in range(t - tau, t)]
        assert np.array_equal(pw[:, 0], want_pose)
        want_audio = [k + 1.0 if k < T else 0.0 for k in range(t - tau, t + r + 1)]
        assert np.array_equal(aw[:, 0], want_audio)


def test_rollout_threads_hidden_and_short_audio():
    encode, sample, calls = _instrumented(2, 1)
    seen = []

    def enc(pw, aw, hidden):
        seen.append(hidden)
        return encode(pw, aw, hidden)
    pipeline.rollout(enc, sample, np.arange(1.0, 7)[:, None], 6, np.zeros((2, 2)), 1, hidden=0)
    assert seen == [0, 1, 2, 3]
    with pytest.raises(pipeline.PipelineError):
        pipeline.rollout(encode, sample, np.ones((5, 1)), 6, np.zeros((2, 2)), 1, hidden=0)


# ---------------------------------------------------------------- evaluation

@pytest.fixture(scope="module")
def eval_setup(trained, takes):
    cfg, _, ckpt = trained
    bundle = pipeline.load_bundle(ckpt)
    return cfg, bundle, pipeline.load_eval_item(takes[2], cfg)


def test_evaluate_reference_against_itself(eval_setup):
    cfg, bundle, item = eval_setup
    rows, per_run = pipeline.evaluate([item], bundle.skeleton, lambda it, s: it.poses, cfg, runs=2)
    assert len(rows) == 4
    by = {r["metric"]: r for r in rows}
    assert by["l1"]["mean"] == 0.0 and by["pck"]["mean"] == 1.0
    assert by["diversity"]["runs"] == 1 and by["l1"]["runs"] == 2
    assert len(per_run[item.name]["bcs"]) == 2


def test_evaluate_neutral_stub(eval_setup):
    cfg, bundle, item = eval_setup
    neutral = lambda it, s: np.zeros_like(it.poses)
    rows, _ = pipeline.evaluate([item, item], bundle.skeleton, neutral, cfg, runs=3)
    assert len(rows) == 2 * 4
    by = {r["metric"]: r for r in rows[:4]}
    assert by["diversity"]["mean"] == 0.0
    assert by["l1"]["mean"] > 0.0
    # a motionless body has no speed minima, so no motion beats
    assert by["bcs"]["mean"] == 0.0


def test_evaluate_best_is_directional(eval_setup):
    cfg, bundle, item = eval_setup
    rng = np.random.default_rng(0)
    noisy = lambda it, s: it.poses + 0.05 * (s + 1) * rng.standard_normal(it.poses.shape)
    rows, per_run = pipeline.evaluate([item], bundle.skeleton, noisy, cfg, runs=3)
    by = {r["metric"]: r for r in rows}
    assert by["l1"]["best"] == min(per_run[item.name]["l1"])
    assert by["pck"]["best"] == max(per_run[item.name]["pck"])


def test_cmd_evaluate_writes_report(trained, tmp_path):
    cfg, _, ckpt = trained
    rows = pipeline.cmd_evaluate(ckpt, str(tmp_path), runs=2)
    assert len(rows) == len(cfg.data.eval_takes) * 4
    tsv = (tmp_path / "report.tsv").read_text().splitlines()
    assert tsv[0] == "item\tmetric\tmean\tbest\truns" and len(tsv) == 1 + len(rows)
    text = (tmp_path / "report.txt").read_text()
    assert "smoothed=True" in text and "all.diversity.mean=" in text


def test_cmd_evaluate_needs_eval_takes(trained, takes, tmp_path):
    _, _, ckpt = trained
    cfg = tiny_config(takes[:2])
    with pytest.raises(ConfigError, match="eval_takes"):
        pipeline.cmd_evaluate(ckpt, str(tmp_path), cfg)


# ---------------------------------------------------------------- ablation

def test_ablate_table(trained, tmp_path):
    cfg, root, _ = trained
    rows = pipeline.cmd_ablate(cfg, str(root / "ds"), str(tmp_path), [1, 40], epochs=1,
                               frames=20, repeats=2)
    assert [r["n_steps"] for r in rows] == [1, 40]
    assert rows[1]["synth_time"] > rows[0]["synth_time"]
    lines = (tmp_path / "ablation.tsv").read_text().splitlines()
    assert lines[0] == "metric\t1\t40" and len(lines) == 5
    assert lines[1].startswith("synth_time_per_frame_s\t") and "±" in lines[1]


def test_synthesis_time_roughly_linear_in_steps(trained):
    from gesturediff.metrics import time_synthesis
    _, _, ckpt = trained
    b = pipeline.load_bundle(ckpt)
    acoustics = np.zeros((30, 27))
    times = {}
    for N in (100, 500):
        bn = dataclasses.replace(b, schedule=build_schedule(N))
        times[N] = time_synthesis(lambda T: pipeline.synthesize_standardized(bn, acoustics, T),
                                  frames=30, repeats=3).mean
    assert 3.0 <= times[500] / times[100] <= 7.0
