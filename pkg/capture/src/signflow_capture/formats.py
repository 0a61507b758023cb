"""Writers for the recognizer's wire formats.

Implemented independently against the published byte layouts; the test
suite proves every emitted byte decodes bit-exactly in the recognizer.
"""

from __future__ import annotations

import struct

import numpy as np

from .keypoints import FEATURE_DIM

LMK1_MAGIC = b"LMK1"
LMK1_VERSION = 1
_LMK1_HEADER = struct.Struct("<4sHII")

FRAME_LEAD_BYTE = 0x4C
_FRAME_HEADER = struct.Struct("<BI")


def encode_sequence_file(frames) -> bytes:
    """Frames (T, dim) -> one LMK1 file: magic, version, dim, count, f32-LE rows."""
    arr = np.ascontiguousarray(frames, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"frames must be 2-D (T, dim), got shape {arr.shape}")
    count, dim = arr.shape
    return _LMK1_HEADER.pack(LMK1_MAGIC, LMK1_VERSION, dim, count) + arr.tobytes()


def encode_frame_record(values, dim: int = FEATURE_DIM) -> bytes:
    """One feature vector -> one stream record: 0x4C, dim u32-LE, f32-LE values."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.shape != (dim,):
        raise ValueError(f"frame must have shape ({dim},), got {arr.shape}")
    return _FRAME_HEADER.pack(FRAME_LEAD_BYTE, dim) + arr.tobytes()
