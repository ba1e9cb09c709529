"""Skeletal motion: BVH parsing/writing, rotations, joint selection and FK.

Rotations follow the BVH convention.  A joint whose channels list
``Zrotation Xrotation Yrotation`` has local rotation ``Rz @ Rx @ Ry``, and
a child's position is ``parent_position + parent_global_rotation @ offset``.
Angles in BVH files are degrees; everything else here uses radians.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

__all__ = [
    "BvhError", "SelectionError", "ResampleError", "Skeleton", "EulerMotion",
    "PoseSequence", "PositionSequence", "UPPER_BODY_JOINTS", "parse_bvh",
    "read_bvh", "write_bvh", "select_joints", "select_upper_body",
    "euler_to_matrix", "euler_to_quat", "euler_to_expmap", "expmap_to_matrix",
    "matrix_to_expmap", "quat_to_expmap", "expmap_to_euler", "to_pose_sequence",
    "to_euler_motion", "root_translation", "resample", "forward_kinematics",
]

# Best guess at the 15-joint upper body of the Trinity skeleton: the spine
# chain from the first spine joint up to the head, plus both arms down to
# the hands.  Fingers and legs are excluded.
UPPER_BODY_JOINTS = (
    "Spine", "Spine1", "Spine2", "Spine3", "Neck", "Neck1", "Head",
    "RightShoulder", "RightArm", "RightForeArm", "RightHand",
    "LeftShoulder", "LeftArm", "LeftForeArm", "LeftHand",
)

_ROT = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}
_POS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}
_AXIS = {"X": 0, "Y": 1, "Z": 2}


class BvhError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class SelectionError(ValueError):
    pass


class ResampleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Skeleton:
    names: tuple
    parents: tuple
    offsets: np.ndarray
    channels: tuple
    end_sites: tuple = ()  # (parent index, offset 3-tuple) pairs

    def __post_init__(self):
        n = len(self.names)
        offsets = np.asarray(self.offsets, dtype=np.float64).reshape(n, 3)
        object.__setattr__(self, "offsets", offsets)
        if len(self.parents) != n or len(self.channels) != n:
            raise ValueError("names, parents and channels must have equal length")
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise ValueError(f"expected exactly one root at index 0, got {roots}")
        for i, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < i:
                raise ValueError(f"joint {self.names[i]!r} has parent index {p} >= own index")
        if not np.all(np.isfinite(offsets)):
            raise ValueError("non-finite joint offset")

    @property
    def n_joints(self):
        return len(self.names)

    @property
    def root(self):
        return 0

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise SelectionError(f"unknown joint {name!r}") from None

    def channel_slices(self):
        out, start = [], 0
        for ch in self.channels:
            out.append(slice(start, start + len(ch)))
            start += len(ch)
        return out

    @property
    def n_channels(self):
        return sum(len(ch) for ch in self.channels)

    def rotation_order(self, j):
        return "".join(_ROT[c] for c in self.channels[j] if c in _ROT)

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (self.names == other.names and self.parents == other.parents
                and self.channels == other.channels
                and np.array_equal(self.offsets, other.offsets)
                and self.end_sites == other.end_sites)


@dataclass(frozen=True, eq=False)
class EulerMotion:
    """Raw BVH channel values: ``frames`` is ``T x n_channels``."""
    frames: np.ndarray
    frame_time: float

    @property
    def fps(self):
        return 1.0 / self.frame_time

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """Exponential-map joint angles, ``T x 3J`` radians."""
    frames: np.ndarray
    fps: float
    skeleton: Skeleton = field(default=None, repr=False)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] % 3:
            raise ValueError(f"pose frames must be T x 3J, got {frames.shape}")
        if self.skeleton is not None and frames.shape[1] != 3 * self.skeleton.n_joints:
            raise ValueError(f"{frames.shape[1]} channels for {self.skeleton.n_joints} joints")
        if not np.all(np.isfinite(frames)):
            raise ValueError("non-finite pose values")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class PositionSequence:
    """World-space joint positions, ``T x J x 3``."""
    frames: np.ndarray
    fps: float

    def __len__(self):
        return len(self.frames)


# --------------------------------------------------------------------------
# rotations


def _elementary(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(angle), np.zeros_like(angle)
    if axis == "X":
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == "Y":
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    else:
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def euler_to_matrix(angles, order="ZXY"):
    """Compose elementary rotations ``R[order[0]] @ R[order[1]] @ R[order[2]]``.

    ``angles[..., k]`` is the angle (radians) about axis ``order[k]``.
    """
    angles = np.asarray(angles, dtype=np.float64)
    R = _elementary(order[0], angles[..., 0])
    for k in range(1, len(order)):
        R = R @ _elementary(order[k], angles[..., k])
    return R


def _quat_mul(a, b):
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def euler_to_quat(angles, order="ZXY"):
    """Unit quaternion ``(w, x, y, z)`` of :func:`euler_to_matrix`."""
    angles = np.asarray(angles, dtype=np.float64)
    q = None
    for k, axis in enumerate(order):
        half = 0.5 * angles[..., k]
        e = np.zeros(half.shape + (4,))
        e[..., 0] = np.cos(half)
        e[..., 1 + _AXIS[axis]] = np.sin(half)
        q = e if q is None else _quat_mul(q, e)
    return q


def quat_to_expmap(q):
    """Principal-branch rotation vector (norm in ``[0, pi]``) of a quaternion."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    q = np.where(q[..., :1] < 0, -q, q)
    w, xyz = q[..., 0], q[..., 1:]
    s = np.linalg.norm(xyz, axis=-1)
    theta = 2.0 * np.arctan2(s, w)
    # theta / sin(theta / 2), with its Taylor series near zero
    small = s < 1e-8
    safe_s = np.where(small, 1.0, s)
    scale = np.where(small, 2.0 / np.where(w == 0, 1.0, w), theta / safe_s)
    return xyz * scale[..., None]


def euler_to_expmap(angles, order="ZXY"):
    return quat_to_expmap(euler_to_quat(angles, order))


def _hat(v):
    x, y, z = np.moveaxis(v, -1, 0)
    zero = np.zeros_like(x)
    return np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=-2)


def expmap_to_matrix(v):
    """Rodrigues' formula; second-order Taylor expansion below norm 1e-8."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v, axis=-1)
    K = _hat(v)
    K2 = K @ K
    small = theta < 1e-8
    t = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(t) / t)
    b = np.where(small, 0.5, (1.0 - np.cos(t)) / (t * t))
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * K2


def matrix_to_expmap(R):
    """Rotation vector of a rotation matrix via Shepperd's quaternion method."""
    R = np.asarray(R, dtype=np.float64)
    shape = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    q = np.empty((len(R), 4))
    tr = np.trace(R, axis1=1, axis2=2)
    diag = np.stack([R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]], axis=1)
    choice = np.argmax(np.concatenate([tr[:, None], diag], axis=1), axis=1)
    for k in range(len(R)):
        m = R[k]
        c = choice[k]
        if c == 0:
            r = np.sqrt(1.0 + tr[k]) * 2
            q[k] = [0.25 * r, (m[2, 1] - m[1, 2]) / r, (m[0, 2] - m[2, 0]) / r,
                    (m[1, 0] - m[0, 1]) / r]
        else:
            i = c - 1
            j, l = (i + 1) % 3, (i + 2) % 3
            r = np.sqrt(1.0 + m[i, i] - m[j, j] - m[l, l]) * 2
            q[k, 0] = (m[l, j] - m[j, l]) / r
            q[k, 1 + i] = 0.25 * r
            q[k, 1 + j] = (m[j, i] + m[i, j]) / r
            q[k, 1 + l] = (m[l, i] + m[i, l]) / r
    return quat_to_expmap(q).reshape(shape + (3,))


def expmap_to_euler(v, order="ZXY"):
    """Euler angles (radians) in ``order`` whose composition equals ``v``."""
    v = np.asarray(v, dtype=np.float64)
    flat = v.reshape(-1, 3)
    return Rotation.from_rotvec(flat).as_euler(order.upper()).reshape(v.shape)


# --------------------------------------------------------------------------
# BVH parsing and writing


def _tokens(text):
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            yield tok, lineno


class _Reader:
    def __init__(self, text):
        self.toks = list(_tokens(text))
        self.pos = 0

    @property
    def line(self):
        if self.pos < len(self.toks):
            return self.toks[self.pos][1]
        return self.toks[-1][1] if self.toks else 1

    def peek(self):
        return self.toks[self.pos][0] if self.pos < len(self.toks) else None

    def next(self, what="token"):
        if self.pos >= len(self.toks):
            raise BvhError(f"unexpected end of file, expected {what}", self.line)
        tok = self.toks[self.pos][0]
        self.pos += 1
        return tok

    def expect(self, word):
        line = self.line
        tok = self.next(repr(word))
        if tok != word:
            raise BvhError(f"expected {word!r}, found {tok!r}", line)

    def number(self, what="number"):
        line = self.line
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise BvhError(f"expected {what}, found {tok!r}", line) from None


def _parse_joint(rd, parent, names, parents, offsets, channels, end_sites):
    line = rd.line
    name = rd.next("joint name")
    idx = len(names)
    names.append(name)
    parents.append(parent)
    rd.expect("{")
    rd.expect("OFFSET")
    offsets.append([rd.number("offset") for _ in range(3)])
    line = rd.line
    rd.expect("CHANNELS")
    count_tok = rd.next("channel count")
    try:
        count = int(count_tok)
    except ValueError:
        raise BvhError(f"bad channel count {count_tok!r}", line) from None
    chans = tuple(rd.next("channel name") for _ in range(count))
    for c in chans:
        if c not in _ROT and c not in _POS:
            raise BvhError(f"unknown channel {c!r} on joint {name!r}", line)
    channels.append(chans)
    while True:
        line = rd.line
        tok = rd.next("'}'")
        if tok == "}":
            return
        if tok == "JOINT":
            _parse_joint(rd, idx, names, parents, offsets, channels, end_sites)
        elif tok == "End":
            rd.expect("Site")
            rd.expect("{")
            rd.expect("OFFSET")
            end_sites.append((idx, tuple(rd.number("offset") for _ in range(3))))
            rd.expect("}")
        else:
            raise BvhError(f"unexpected {tok!r} inside joint {name!r}", line)


def parse_bvh(text):
    """Parse a BVH document into ``(Skeleton, EulerMotion)``."""
    rd = _Reader(text)
    rd.expect("HIERARCHY")
    rd.expect("ROOT")
    names, parents, offsets, channels, end_sites = [], [], [], [], []
    _parse_joint(rd, -1, names, parents, offsets, channels, end_sites)
    skeleton = Skeleton(tuple(names), tuple(parents), np.array(offsets),
                        tuple(channels), tuple(end_sites))
    rd.expect("MOTION")
    rd.expect("Frames:")
    line = rd.line
    n_frames = rd.number("frame count")
    if n_frames < 0 or n_frames != int(n_frames):
        raise BvhError(f"bad frame count {n_frames}", line)
    n_frames = int(n_frames)
    rd.expect("Frame")
    rd.expect("Time:")
    line = rd.line
    frame_time = rd.number("frame time")
    if not frame_time > 0:
        raise BvhError(f"frame time must be positive, got {frame_time}", line)

    # motion rows are line-delimited; re-split the remaining text by line
    width = skeleton.n_channels
    rest = rd.toks[rd.pos:]
    rows = {}
    for tok, ln in rest:
        rows.setdefault(ln, []).append(tok)
    lines = sorted(rows)
    if len(lines) != n_frames:
        raise BvhError(f"header declares {n_frames} frames but {len(lines)} rows follow",
                       lines[-1] if lines else rd.line)
    data = np.empty((n_frames, width))
    for r, ln in enumerate(lines):
        vals = rows[ln]
        if len(vals) != width:
            raise BvhError(f"motion row has {len(vals)} values, skeleton has {width} channels", ln)
        try:
            data[r] = [float(v) for v in vals]
        except ValueError:
            raise BvhError("non-numeric motion value", ln) from None
    return skeleton, EulerMotion(data, frame_time)


def read_bvh(path):
    with open(path) as fh:
        return parse_bvh(fh.read())


def _fmt(x):
    return f"{x:.10g}"


def write_bvh(skeleton, motion):
    """Serialize a skeleton with an :class:`EulerMotion` or :class:`PoseSequence`."""
    if isinstance(motion, PoseSequence):
        motion = to_euler_motion(skeleton, motion)
    children = [[] for _ in skeleton.names]
    for j, p in enumerate(skeleton.parents):
        if p >= 0:
            children[p].append(j)
    sites = {}
    for p, off in skeleton.end_sites:
        sites.setdefault(p, []).append(off)
    out = ["HIERARCHY"]

    def emit(j, depth):
        pad = "\t" * depth
        kind = "ROOT" if j == 0 else "JOINT"
        out.append(f"{pad}{kind} {skeleton.names[j]}")
        out.append(f"{pad}{{")
        out.append(f"{pad}\tOFFSET " + " ".join(_fmt(x) for x in skeleton.offsets[j]))
        chans = skeleton.channels[j]
        out.append(f"{pad}\tCHANNELS {len(chans)}" + "".join(" " + c for c in chans))
        for c in children[j]:
            emit(c, depth + 1)
        for off in sites.get(j, ()):
            out.append(f"{pad}\tEnd Site")
            out.append(f"{pad}\t{{")
            out.append(f"{pad}\t\tOFFSET " + " ".join(_fmt(x) for x in off))
            out.append(f"{pad}\t}}")
        out.append(f"{pad}}}")

    emit(0, 0)
    frames = np.asarray(motion.frames)
    out.append("MOTION")
    out.append(f"Frames: {len(frames)}")
    out.append(f"Frame Time: {_fmt(motion.frame_time)}")
    for row in frames:
        out.append(" ".join(_fmt(x) for x in row))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# representation changes


def to_pose_sequence(skeleton, motion):
    """Convert native Euler channels to exponential maps; translations are dropped."""
    frames = np.asarray(motion.frames, dtype=np.float64)
    out = np.zeros((len(frames), 3 * skeleton.n_joints))
    for j, sl in enumerate(skeleton.channel_slices()):
        chans = skeleton.channels[j]
        cols = [sl.start + k for k, c in enumerate(chans) if c in _ROT]
        if not cols:
            continue
        order = skeleton.rotation_order(j)
        out[:, 3 * j:3 * j + 3] = euler_to_expmap(np.radians(frames[:, cols]), order)
    return PoseSequence(out, motion.fps, skeleton)


def to_euler_motion(skeleton, pose):
    """Inverse of :func:`to_pose_sequence`; position channels are written as zero."""
    frames = np.asarray(pose.frames)
    out = np.zeros((len(frames), skeleton.n_channels))
    for j, sl in enumerate(skeleton.channel_slices()):
        chans = skeleton.channels[j]
        cols = [sl.start + k for k, c in enumerate(chans) if c in _ROT]
        if not cols:
            continue
        order = skeleton.rotation_order(j)
        out[:, cols] = np.degrees(expmap_to_euler(frames[:, 3 * j:3 * j + 3], order))
    return EulerMotion(out, 1.0 / pose.fps)


def root_translation(skeleton, motion):
    """``T x 3`` root position channels (zeros when the root has none)."""
    frames = np.asarray(motion.frames)
    out = np.zeros((len(frames), 3))
    sl = skeleton.channel_slices()[0]
    for k, c in enumerate(skeleton.channels[0]):
        if c in _POS:
            out[:, _POS[c]] = frames[:, sl.start + k]
    return out


def select_joints(skeleton, sequence, names):
    """Keep only ``names``; returns the reduced skeleton and sequence.

    The kept joints must form one connected tree: exactly one of them may
    have a parent outside the selection, and it becomes the new root.
    """
    keep = sorted({skeleton.index(n) for n in names})
    if len(keep) != len(names):
        raise SelectionError("duplicate joint names in selection")
    remap = {old: new for new, old in enumerate(keep)}
    roots = [j for j in keep if skeleton.parents[j] not in remap]
    if len(roots) != 1:
        raise SelectionError(
            "selection is not connected; joints without a selected parent: "
            + ", ".join(skeleton.names[j] for j in roots))
    new = Skeleton(
        tuple(skeleton.names[j] for j in keep),
        tuple(remap.get(skeleton.parents[j], -1) for j in keep),
        skeleton.offsets[keep],
        tuple(skeleton.channels[j] for j in keep),
        tuple((remap[p], off) for p, off in skeleton.end_sites if p in remap),
    )
    frames = np.asarray(sequence.frames)
    if isinstance(sequence, EulerMotion):
        slices = skeleton.channel_slices()
        cols = np.concatenate([np.arange(slices[j].start, slices[j].stop) for j in keep]
                              ).astype(int)
        return new, EulerMotion(frames[:, cols], sequence.frame_time)
    if isinstance(sequence, PoseSequence):
        cols = np.concatenate([np.arange(3 * j, 3 * j + 3) for j in keep])
        return new, PoseSequence(frames[:, cols], sequence.fps, new)
    raise TypeError(f"cannot select joints of {type(sequence).__name__}")


def select_upper_body(skeleton, sequence, names=UPPER_BODY_JOINTS):
    return select_joints(skeleton, sequence, names)


def resample(sequence, target_fps):
    """Decimate to ``target_fps``, which must divide the source rate."""
    source = sequence.fps
    ratio = source / target_fps
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-3 * step:
        raise ResampleError(
            f"cannot decimate {source:g} fps to {target_fps:g} fps: rate ratio {ratio:.4g} "
            "is not an integer")
    frames = sequence.frames[::step]
    if isinstance(sequence, EulerMotion):
        return EulerMotion(frames, 1.0 / target_fps)
    return dataclasses.replace(sequence, frames=frames, fps=float(target_fps))


def forward_kinematics(skeleton, pose, root_positions=None):
    """World joint positions for an exponential-map pose sequence.

    The root sits at the origin unless ``root_positions`` (``T x 3``) is given.
    """
    frames = np.asarray(pose.frames if isinstance(pose, PoseSequence) else pose)
    T, J = len(frames), skeleton.n_joints
    local = expmap_to_matrix(frames.reshape(T, J, 3))
    glob = np.empty_like(local)
    pos = np.zeros((T, J, 3))
    if root_positions is not None:
        pos[:, 0] = root_positions
    glob[:, 0] = local[:, 0]
    for j in range(1, J):
        p = skeleton.parents[j]
        glob[:, j] = glob[:, p] @ local[:, j]
        pos[:, j] = pos[:, p] + glob[:, p] @ skeleton.offsets[j]
    fps = pose.fps if isinstance(pose, PoseSequence) else 20.0
    return PositionSequence(pos, fps)
