"""Holistic landmark layout, sequence files, and the frame stream protocol.

Every other module speaks in the flat 1662-float feature vector defined
here: pose (33 points x,y,z,visibility), face (468 points x,y,z), left
hand and right hand (21 points x,y,z each), concatenated in that order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

# Block layout. Pose carries a 4th visibility channel; the other groups
# are plain x,y,z. 132 + 1404 + 63 + 63 = 1662.
POSE_POINTS = 33
FACE_POINTS = 468
HAND_POINTS = 21
POSE_LEN = POSE_POINTS * 4
FACE_LEN = FACE_POINTS * 3
HAND_LEN = HAND_POINTS * 3
FEATURE_DIM = POSE_LEN + FACE_LEN + 2 * HAND_LEN

POSE_SLICE = slice(0, POSE_LEN)
FACE_SLICE = slice(POSE_LEN, POSE_LEN + FACE_LEN)
LEFT_HAND_SLICE = slice(POSE_LEN + FACE_LEN, POSE_LEN + FACE_LEN + HAND_LEN)
RIGHT_HAND_SLICE = slice(POSE_LEN + FACE_LEN + HAND_LEN, FEATURE_DIM)

# LMK1 sequence file: magic, version u16-LE, feature_dim u32-LE,
# frame_count u32-LE, then frame_count*feature_dim f32-LE frame-major.
LMK1_MAGIC = b"LMK1"
LMK1_VERSION = 1
_LMK1_HEADER = struct.Struct("<4sHII")

# One streamed frame: lead byte 0x4C, dim u32-LE, dim f32-LE values.
FRAME_LEAD_BYTE = 0x4C
_FRAME_HEADER = struct.Struct("<BI")


class LayoutError(ValueError):
    """A landmark group has the wrong number of points or channels."""


class DecodeError(ValueError):
    """Base class for all byte-level decode failures."""


class BadMagicError(DecodeError):
    pass


class VersionMismatchError(DecodeError):
    pass


class TruncatedPayloadError(DecodeError):
    pass


class DimensionMismatchError(DecodeError):
    pass


class ProtocolError(DecodeError):
    """Frame stream record from an incompatible producer."""


@dataclass
class LandmarkFrame:
    """One tracked frame; each group is None when the tracker missed it.

    Shapes when present: pose (33, 4), face (468, 3), left_hand (21, 3),
    right_hand (21, 3).
    """

    pose: np.ndarray | None = None
    face: np.ndarray | None = None
    left_hand: np.ndarray | None = None
    right_hand: np.ndarray | None = None


@dataclass(eq=False)
class GestureSequence:
    """An ordered stack of feature frames, optionally labelled.

    ``frames`` is a (T, D) float32 array; training sequences use T = 30
    and D = 1662, but the container itself is dimension-agnostic.
    """

    frames: np.ndarray = field(default_factory=lambda: np.zeros((0, FEATURE_DIM), np.float32))
    label: str | None = None

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise LayoutError(f"frames must be 2-D (T, D), got shape {self.frames.shape}")

    def __eq__(self, other):
        if not isinstance(other, GestureSequence):
            return NotImplemented
        return (
            self.label == other.label
            and self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
        )

    def __len__(self):
        return self.frames.shape[0]


def frame_features(values, dim: int = FEATURE_DIM) -> np.ndarray:
    """Validate and return one feature vector as a float32 array of length ``dim``."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.shape != (dim,):
        raise LayoutError(f"feature vector must have shape ({dim},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise LayoutError("feature vector contains non-finite values")
    return arr


def _group_block(name: str, group: np.ndarray | None, points: int, channels: int) -> np.ndarray:
    if group is None:
        return np.zeros(points * channels, np.float32)
    arr = np.asarray(group, dtype=np.float32)
    if arr.shape != (points, channels):
        raise LayoutError(
            f"{name} group must have shape ({points}, {channels}), got {arr.shape}"
        )
    return arr.reshape(-1)


def flatten_frame(frame: LandmarkFrame) -> np.ndarray:
    """Flatten a LandmarkFrame into the fixed 1662-float layout.

    Absent groups are written as zeros so the output length never varies.
    """
    blocks = [
        _group_block("pose", frame.pose, POSE_POINTS, 4),
        _group_block("face", frame.face, FACE_POINTS, 3),
        _group_block("left_hand", frame.left_hand, HAND_POINTS, 3),
        _group_block("right_hand", frame.right_hand, HAND_POINTS, 3),
    ]
    return np.concatenate(blocks)


def encode_sequence(sequence: GestureSequence) -> bytes:
    """Serialize a sequence to LMK1 bytes (label is carried by the corpus layout, not the file)."""
    frames = np.ascontiguousarray(sequence.frames, dtype="<f4")
    count, dim = frames.shape
    header = _LMK1_HEADER.pack(LMK1_MAGIC, LMK1_VERSION, dim, count)
    return header + frames.tobytes()


def decode_sequence(data: bytes, expected_dim: int | None = None) -> GestureSequence:
    """Decode LMK1 bytes back into a GestureSequence.

    ``expected_dim`` lets callers reject files whose declared feature
    dimension does not match what they can consume.
    """
    if len(data) < _LMK1_HEADER.size:
        raise TruncatedPayloadError(
            f"file of {len(data)} bytes is shorter than the {_LMK1_HEADER.size}-byte header"
        )
    magic, version, dim, count = _LMK1_HEADER.unpack_from(data)
    if magic != LMK1_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {LMK1_MAGIC!r}")
    if version != LMK1_VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {LMK1_VERSION}")
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatchError(f"file declares dim {dim}, expected {expected_dim}")
    payload = data[_LMK1_HEADER.size:]
    expected_bytes = count * dim * 4
    if len(payload) != expected_bytes:
        raise TruncatedPayloadError(
            f"payload of {len(payload)} bytes, expected {expected_bytes} "
            f"for {count} frames of dim {dim}"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return GestureSequence(frames=frames.copy())


def encode_frame(frame, dim: int = FEATURE_DIM) -> bytes:
    """Serialize one feature vector as a stream record."""
    arr = frame_features(frame, dim=dim)
    return _FRAME_HEADER.pack(FRAME_LEAD_BYTE, dim) + arr.astype("<f4").tobytes()


def decode_frame(data: bytes, expected_dim: int = FEATURE_DIM) -> np.ndarray:
    """Decode one complete stream record back into a feature vector."""
    if len(data) < _FRAME_HEADER.size:
        raise TruncatedPayloadError(
            f"record of {len(data)} bytes is shorter than the {_FRAME_HEADER.size}-byte header"
        )
    lead, dim = _FRAME_HEADER.unpack_from(data)
    if lead != FRAME_LEAD_BYTE:
        raise ProtocolError(f"bad lead byte 0x{lead:02X}, expected 0x{FRAME_LEAD_BYTE:02X}")
    if dim != expected_dim:
        raise ProtocolError(f"record declares dim {dim}, expected {expected_dim}: incompatible producer")
    payload = data[_FRAME_HEADER.size:]
    if len(payload) != dim * 4:
        raise TruncatedPayloadError(f"payload of {len(payload)} bytes, expected {dim * 4}")
    return np.frombuffer(payload, dtype="<f4").copy()


def frame_record_size(dim: int = FEATURE_DIM) -> int:
    """Byte length of one stream record for the given feature dimension."""
    return _FRAME_HEADER.size + dim * 4


def read_frame_records(stream, expected_dim: int = FEATURE_DIM):
    """Yield feature vectors from a binary stream until EOF.

    A partial trailing record raises TruncatedPayloadError; a clean EOF
    at a record boundary simply ends the iteration.
    """
    record_len = frame_record_size(expected_dim)
    while True:
        chunk = stream.read(record_len)
        if not chunk:
            return
        while len(chunk) < record_len:
            more = stream.read(record_len - len(chunk))
            if not more:
                raise TruncatedPayloadError(
                    f"stream ended mid-record with {len(chunk)} of {record_len} bytes"
                )
            chunk += more
        yield decode_frame(chunk, expected_dim=expected_dim)
