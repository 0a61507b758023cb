"""Flatten a MediaPipe Holistic result into the recognizer's frame layout.

The layout contract is shared with the recognizer byte for byte: pose
33 x (x, y, z, visibility), face 468 x (x, y, z), left hand then right
hand 21 x (x, y, z) each, 1662 float32 values total, zeros for any group
the tracker did not detect.
"""

from __future__ import annotations

import numpy as np

POSE_POINTS = 33
FACE_POINTS = 468
HAND_POINTS = 21
POSE_LEN = POSE_POINTS * 4
FACE_LEN = FACE_POINTS * 3
HAND_LEN = HAND_POINTS * 3
FEATURE_DIM = POSE_LEN + FACE_LEN + 2 * HAND_LEN  # 1662


def _block(group, points: int, with_visibility: bool) -> np.ndarray:
    channels = 4 if with_visibility else 3
    if group is None:
        return np.zeros(points * channels, np.float32)
    if with_visibility:
        values = [(lm.x, lm.y, lm.z, lm.visibility) for lm in group.landmark]
    else:
        values = [(lm.x, lm.y, lm.z) for lm in group.landmark]
    arr = np.asarray(values, np.float32)
    if arr.shape != (points, channels):
        raise ValueError(f"tracker emitted {arr.shape[0]} points, expected {points}")
    return arr.reshape(-1)


def extract_keypoints(result) -> np.ndarray:
    """One tracking result -> one 1662-float feature vector."""
    return np.concatenate([
        _block(getattr(result, "pose_landmarks", None), POSE_POINTS, with_visibility=True),
        _block(getattr(result, "face_landmarks", None), FACE_POINTS, with_visibility=False),
        _block(getattr(result, "left_hand_landmarks", None), HAND_POINTS, with_visibility=False),
        _block(getattr(result, "right_hand_landmarks", None), HAND_POINTS, with_visibility=False),
    ])
