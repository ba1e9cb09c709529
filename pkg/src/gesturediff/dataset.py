"""Paired training windows, normalization statistics and the on-disk container.

Container layout (one directory)::

    manifest.toml   format version, counts, shapes, fps, seed, checksums
    index.tsv       one row per sample: index, take, start, split
    poses.f32       tensor (S, W, D)
    audio.f32       tensor (S, W, A)
    stats.f64       tensor (4, max(D, A)): pose mean, pose std, audio mean,
                    audio std, each zero-padded to the common width
    skeleton.bvh    the (joint-selected) skeleton, zero frames; optional

Each tensor file is a 16-byte header followed by raw little-endian values
in row-major order: magic ``b"GDTN"``, uint8 format version, uint8 dtype
code (4 = float32, 8 = float64), uint16 ndim, uint64 element count, then
``ndim`` uint64 dimensions, then the data.
"""

import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
import tomli
import tomli_w

__all__ = [
    "DatasetError", "DatasetVersionError", "DatasetCorruptError", "TrainingSample",
    "NormStats", "Dataset", "window_pairs", "fit_stats", "standardize",
    "destandardize", "assign_splits", "save_dataset", "load_dataset",
    "write_tensor", "read_tensor", "FORMAT_VERSION", "STD_FLOOR",
]

FORMAT_VERSION = 1
STD_FLOOR = 1e-6
_MAGIC = b"GDTN"
_DTYPES = {4: "<f4", 8: "<f8"}


class DatasetError(ValueError):
    pass


class DatasetVersionError(DatasetError):
    pass


class DatasetCorruptError(DatasetError):
    pass


@dataclass(frozen=True, eq=False)
class TrainingSample:
    poses: np.ndarray      # W x D
    acoustics: np.ndarray  # W x A
    take: str = ""
    start: int = 0

    def __post_init__(self):
        if len(self.poses) != len(self.acoustics):
            raise DatasetError("pose and acoustic windows differ in length")


@dataclass(frozen=True, eq=False)
class NormStats:
    pose_mean: np.ndarray
    pose_std: np.ndarray
    audio_mean: np.ndarray
    audio_std: np.ndarray

    @property
    def neutral_pose(self):
        return self.pose_mean

    def standardize_poses(self, x):
        return (np.asarray(x) - self.pose_mean) / self.pose_std

    def destandardize_poses(self, x):
        return np.asarray(x) * self.pose_std + self.pose_mean

    def standardize_audio(self, a):
        return (np.asarray(a) - self.audio_mean) / self.audio_std

    def destandardize_audio(self, a):
        return np.asarray(a) * self.audio_std + self.audio_mean

    def to_array(self):
        width = max(len(self.pose_mean), len(self.audio_mean))
        out = np.zeros((4, width))
        for row, v in enumerate((self.pose_mean, self.pose_std, self.audio_mean, self.audio_std)):
            out[row, :len(v)] = v
        return out

    @classmethod
    def from_array(cls, arr, pose_dim, audio_dim):
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr[0, :pose_dim].copy(), arr[1, :pose_dim].copy(),
                   arr[2, :audio_dim].copy(), arr[3, :audio_dim].copy())

    def __eq__(self, other):
        return isinstance(other, NormStats) and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("pose_mean", "pose_std", "audio_mean", "audio_std"))


@dataclass(eq=False)
class Dataset:
    samples: list
    splits: list            # "train" / "val" per sample
    stats: NormStats
    fps: float = 20.0
    seed: int = 0
    val_fraction: float = 0.1
    skeleton_bvh: str = None
    meta: dict = field(default_factory=dict)

    def subset(self, split):
        return [s for s, sp in zip(self.samples, self.splits) if sp == split]

    @property
    def train(self):
        return self.subset("train")

    @property
    def val(self):
        return self.subset("val")

    @property
    def window(self):
        return self.samples[0].poses.shape[0] if self.samples else 0

    def manifest(self):
        first = self.samples[0] if self.samples else None
        return {
            "format_version": FORMAT_VERSION,
            "sample_count": len(self.samples),
            "window": self.window,
            "pose_channels": 0 if first is None else first.poses.shape[1],
            "audio_channels": 0 if first is None else first.acoustics.shape[1],
            "fps": float(self.fps),
            "seed": int(self.seed),
            "val_fraction": float(self.val_fraction),
            "train_count": self.splits.count("train"),
            "val_count": self.splits.count("val"),
        }


def window_pairs(poses, acoustics, window=80, stride=40, take=""):
    """Cut aligned ``window``-frame pairs starting at 0, stride, 2*stride, ..."""
    poses = np.asarray(poses)
    acoustics = np.asarray(acoustics)
    T = len(poses)
    if len(acoustics) != T:
        raise DatasetError(f"pose ({T}) and acoustic ({len(acoustics)}) sequences differ in length")
    if T < window:
        raise DatasetError(f"sequence of {T} frames is shorter than the {window}-frame window")
    if stride < 1:
        raise DatasetError("stride must be positive")
    return [TrainingSample(poses[s:s + window].copy(), acoustics[s:s + window].copy(), take, s)
            for s in range(0, T - window + 1, stride)]


def fit_stats(samples):
    """Per-channel mean and (floored) std over every frame of ``samples``."""
    if not samples:
        raise DatasetError("cannot fit statistics on an empty training split")
    poses = np.concatenate([np.asarray(s.poses, dtype=np.float64) for s in samples])
    audio = np.concatenate([np.asarray(s.acoustics, dtype=np.float64) for s in samples])
    return NormStats(poses.mean(axis=0), np.maximum(poses.std(axis=0), STD_FLOOR),
                     audio.mean(axis=0), np.maximum(audio.std(axis=0), STD_FLOOR))


def _check_shapes(sample, stats):
    if sample.poses.shape[-1] != len(stats.pose_mean) or \
            sample.acoustics.shape[-1] != len(stats.audio_mean):
        raise DatasetError(
            f"sample channels ({sample.poses.shape[-1]}, {sample.acoustics.shape[-1]}) do not "
            f"match stats ({len(stats.pose_mean)}, {len(stats.audio_mean)})")


def standardize(sample, stats):
    _check_shapes(sample, stats)
    return TrainingSample(stats.standardize_poses(sample.poses),
                          stats.standardize_audio(sample.acoustics), sample.take, sample.start)


def destandardize(sample, stats):
    _check_shapes(sample, stats)
    return TrainingSample(stats.destandardize_poses(sample.poses),
                          stats.destandardize_audio(sample.acoustics), sample.take, sample.start)


def assign_splits(takes, val_fraction=0.1, seed=0):
    """Map each distinct take to "train" or "val"; deterministic in ``seed``.

    With two or more takes at least one goes to validation; a single take
    is used for training only.
    """
    unique = sorted(set(takes))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(unique))
    n_val = 0 if len(unique) < 2 else max(1, int(round(val_fraction * len(unique))))
    val = {unique[i] for i in order[:n_val]}
    return {t: ("val" if t in val else "train") for t in unique}


# --------------------------------------------------------------------------
# tensor files


def write_tensor(path, array, dtype="<f4"):
    arr = np.ascontiguousarray(array, dtype=dtype)
    code = arr.dtype.itemsize
    header = _MAGIC + struct.pack("<BBHQ", FORMAT_VERSION, code, arr.ndim, arr.size)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = header + arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(payload)
    return zlib.crc32(payload)


def read_tensor(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    return _decode_tensor(raw, path), zlib.crc32(raw)


def _decode_tensor(raw, path):
    if len(raw) < 16 or raw[:4] != _MAGIC:
        raise DatasetCorruptError(f"{path}: bad tensor header")
    version, code, ndim, count = struct.unpack("<BBHQ", raw[4:16])
    if version != FORMAT_VERSION:
        raise DatasetVersionError(f"{path}: tensor format version {version}, "
                                  f"expected {FORMAT_VERSION}")
    if code not in _DTYPES:
        raise DatasetCorruptError(f"{path}: unknown dtype code {code}")
    end = 16 + 8 * ndim
    if len(raw) < end:
        raise DatasetCorruptError(f"{path}: truncated shape header")
    shape = struct.unpack(f"<{ndim}Q", raw[16:end])
    if int(np.prod(shape)) != count or len(raw) - end != count * code:
        raise DatasetCorruptError(
            f"{path}: length field says {count} elements of shape {shape}, "
            f"file holds {(len(raw) - end) / code:g}")
    return np.frombuffer(raw[end:], dtype=_DTYPES[code]).reshape(shape).copy()


# --------------------------------------------------------------------------
# container


def save_dataset(dataset, path):
    os.makedirs(path, exist_ok=True)
    S = len(dataset.samples)
    poses = np.stack([s.poses for s in dataset.samples]) if S else np.zeros((0, 0, 0))
    audio = np.stack([s.acoustics for s in dataset.samples]) if S else np.zeros((0, 0, 0))
    crc = {
        "poses": write_tensor(os.path.join(path, "poses.f32"), poses, "<f4"),
        "audio": write_tensor(os.path.join(path, "audio.f32"), audio, "<f4"),
        "stats": write_tensor(os.path.join(path, "stats.f64"), dataset.stats.to_array(), "<f8"),
    }
    with open(os.path.join(path, "index.tsv"), "w") as fh:
        fh.write("index\ttake\tstart\tsplit\n")
        for i, (s, sp) in enumerate(zip(dataset.samples, dataset.splits)):
            fh.write(f"{i}\t{s.take}\t{s.start}\t{sp}\n")
    if dataset.skeleton_bvh is not None:
        with open(os.path.join(path, "skeleton.bvh"), "w") as fh:
            fh.write(dataset.skeleton_bvh)
    manifest = dataset.manifest()
    manifest["checksums"] = {k: f"{v:08x}" for k, v in crc.items()}
    if dataset.meta:
        manifest["meta"] = dataset.meta
    with open(os.path.join(path, "manifest.toml"), "wb") as fh:
        tomli_w.dump(manifest, fh)
    return path


def load_dataset(path):
    try:
        with open(os.path.join(path, "manifest.toml"), "rb") as fh:
            manifest = tomli.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"{path}: no manifest.toml") from None
    except tomli.TOMLDecodeError as exc:
        raise DatasetCorruptError(f"{path}: unreadable manifest ({exc})") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetVersionError(
            f"{path}: dataset format version {manifest.get('format_version')}, "
            f"expected {FORMAT_VERSION}")
    tensors = {}
    for key, fname in (("poses", "poses.f32"), ("audio", "audio.f32"), ("stats", "stats.f64")):
        arr, crc = read_tensor(os.path.join(path, fname))
        expected = manifest.get("checksums", {}).get(key)
        if expected is not None and f"{crc:08x}" != expected:
            raise DatasetCorruptError(f"{path}/{fname}: checksum mismatch")
        tensors[key] = arr
    with open(os.path.join(path, "index.tsv")) as fh:
        rows = [line.rstrip("\n").split("\t") for line in fh.readlines()[1:]]
    S = manifest["sample_count"]
    if len(rows) != S or len(tensors["poses"]) != S or len(tensors["audio"]) != S:
        raise DatasetCorruptError(
            f"{path}: manifest lists {S} samples, index has {len(rows)}, "
            f"tensors have {len(tensors['poses'])}/{len(tensors['audio'])}")
    samples = [TrainingSample(tensors["poses"][i], tensors["audio"][i], take, int(start))
               for i, (_, take, start, _) in enumerate(rows)]
    splits = [r[3] for r in rows]
    stats = NormStats.from_array(tensors["stats"], manifest["pose_channels"],
                                 manifest["audio_channels"])
    skel_path = os.path.join(path, "skeleton.bvh")
    skeleton_bvh = None
    if os.path.exists(skel_path):
        with open(skel_path) as fh:
            skeleton_bvh = fh.read()
    return Dataset(samples, splits, stats, manifest["fps"], manifest["seed"],
                   manifest["val_fraction"], skeleton_bvh, manifest.get("meta", {}))
