"""Motion data: a BVH take, the upper-body subset, exponential maps and joint positions.

Run with ``python demos/01_motion.py``.
"""
# %% A synthetic 69-joint take, written out and read back as BVH text
import numpy as np

from gesturediff.motion import (forward_kinematics, parse_bvh, resample, select_upper_body,
                                to_pose_sequence, write_bvh)
from gesturediff.synthetic import synthetic_take, trinity_like_skeleton

skel = trinity_like_skeleton()
motion = synthetic_take(skel, seconds=2.0, fps=60.0, seed=1)
text = write_bvh(skel, motion)
skel, motion = parse_bvh(text)
print(f"{skel.n_joints} joints, {len(motion)} frames at {motion.fps:g} fps")

# %% Keep the 15 upper-body joints and convert Euler degrees to exponential maps
upper, upper_motion = select_upper_body(skel, motion)
poses = resample(to_pose_sequence(upper, upper_motion), 20.0)
print("upper body:", ", ".join(upper.names))
print("pose array:", poses.frames.shape, "(frames x 3 * joints) at", poses.fps, "fps")

# %% Forward kinematics gives world positions; the root stays at the origin
positions = forward_kinematics(upper, poses.frames).frames
span = positions.max(axis=(0, 1)) - positions.min(axis=(0, 1))
print("positions:", positions.shape, "extent (cm):", np.round(span, 1))
