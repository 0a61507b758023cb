"""Deterministic fakes for the camera and the holistic tracker."""

import numpy as np

from signflow_capture.session import CameraError


class FakePoint:
    def __init__(self, x, y, z, visibility=None):
        self.x = float(x)
        self.y = float(y)
        self.z = float(z)
        if visibility is not None:
            self.visibility = float(visibility)


class FakeGroup:
    def __init__(self, points):
        self.landmark = points


class FakeResult:
    def __init__(self, pose=None, face=None, left_hand=None, right_hand=None):
        self.pose_landmarks = pose
        self.face_landmarks = face
        self.left_hand_landmarks = left_hand
        self.right_hand_landmarks = right_hand


def full_result(seed=0, drop=()):
    """A holistic result with every group present (minus ``drop``)."""
    rng = np.random.default_rng(seed)

    def group(points, visibility):
        pts = []
        for _ in range(points):
            coords = rng.random(4 if visibility else 3)
            pts.append(FakePoint(*coords) if visibility else FakePoint(*coords))
        return FakeGroup(pts)

    return FakeResult(
        pose=None if "pose" in drop else group(33, True),
        face=None if "face" in drop else group(468, False),
        left_hand=None if "left_hand" in drop else group(21, False),
        right_hand=None if "right_hand" in drop else group(21, False),
    )


class FakeCamera:
    """Delivers ``count`` dummy frames, then behaves like a dead camera."""

    def __init__(self, count=10 ** 9):
        self.remaining = count
        self.delivered = 0

    def read(self):
        if self.remaining <= 0:
            raise CameraError("fake camera exhausted")
        self.remaining -= 1
        self.delivered += 1
        return np.full((4, 4, 3), self.delivered % 255, np.uint8)


class FakeTracker:
    """Maps each frame to a fresh all-groups result, deterministically."""

    def __init__(self, seed=0):
        self.seed = seed
        self.calls = 0

    def __call__(self, frame):
        self.calls += 1
        return full_result(seed=self.seed + self.calls)
