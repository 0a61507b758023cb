"""Capture sessions: record labelled videos to LMK1 files or stream live
frame records.

The camera and tracker are injected so sessions run identically against a
real webcam + MediaPipe Holistic or against fakes in tests. A frame source
is anything with ``read() -> frame`` raising ``CameraError`` when the
device fails, and a tracker is any callable mapping a camera frame to a
holistic-style result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .formats import encode_frame_record, encode_sequence_file
from .keypoints import extract_keypoints


class CameraError(RuntimeError):
    """The camera is unavailable or stopped delivering frames."""


class StreamClosedError(RuntimeError):
    """The consumer went away mid-stream."""


@dataclass
class CaptureSession:
    """One recording job: N videos of M frames for a single label."""

    label: str
    videos: int = 30
    frames: int = 30
    pause_seconds: float = 2.0
    root: str | Path = "corpus"

    def __post_init__(self):
        if not self.label:
            raise ValueError("label must be non-empty")
        if self.videos < 1 or self.frames < 1:
            raise ValueError(f"videos ({self.videos}) and frames ({self.frames}) must be >= 1")
        if self.pause_seconds < 0:
            raise ValueError(f"pause must be >= 0, got {self.pause_seconds}")


def collect_session(session: CaptureSession, source, tracker,
                    on_status=None, sleep=time.sleep) -> list:
    """Record the session; returns the list of written file paths.

    Between videos the countdown runs through ``on_status`` (one call per
    remaining second) so a UI can display it; tests inject a no-op sleep.
    """
    label_dir = Path(session.root) / session.label
    label_dir.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(session.videos - 1)))
    written = []
    for video in range(session.videos):
        remaining = int(np.ceil(session.pause_seconds))
        for second in range(remaining, 0, -1):
            if on_status is not None:
                on_status(f"{session.label} [{video + 1}/{session.videos}] starting in {second}s")
            sleep(min(1.0, session.pause_seconds))
        frames = np.empty((session.frames, 1662), np.float32)
        for k in range(session.frames):
            frames[k] = extract_keypoints(tracker(source.read()))
            if on_status is not None:
                on_status(f"{session.label} [{video + 1}/{session.videos}] frame {k + 1}/{session.frames}")
        path = label_dir / f"{video:0{width}d}.lmk"
        path.write_bytes(encode_sequence_file(frames))
        written.append(path)
    return written


def stream_session(sink, source, tracker, max_frames: int | None = None,
                   on_frame=None) -> int:
    """Emit one frame record per camera frame until the source or sink ends.

    Returns the number of complete records written; a consumer hang-up
    raises StreamClosedError after the last complete record (never a
    partial one).
    """
    emitted = 0
    while max_frames is None or emitted < max_frames:
        try:
            frame = source.read()
        except CameraError:
            if emitted == 0:
                raise
            break
        record = encode_frame_record(extract_keypoints(tracker(frame)))
        try:
            sink.write(record)
            sink.flush()
        except (BrokenPipeError, ConnectionError) as exc:
            raise StreamClosedError(f"consumer closed the stream after {emitted} frames") from exc
        emitted += 1
        if on_frame is not None:
            on_frame(emitted)
    return emitted
