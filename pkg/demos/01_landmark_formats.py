#!/usr/bin/env python3
"""Walk through the landmark data model: the 1662-float frame layout, the
LMK1 sequence file, and the single-frame stream record."""

import numpy as np

from signflow import landmarks as lm

# ---------------------------------------------------------------------------
# A tracked frame is four optional groups; flattening always yields 1662
# floats (pose 33x4, face 468x3, each hand 21x3), zeros where the tracker
# saw nothing.
# ---------------------------------------------------------------------------
rng = np.random.default_rng(0)
frame = lm.LandmarkFrame(
    pose=rng.random((33, 4)),
    face=rng.random((468, 3)),
    left_hand=None,  # out of view this frame
    right_hand=rng.random((21, 3)),
)
features = lm.flatten_frame(frame)
print(f"flattened frame: {features.shape[0]} floats ({features.dtype})")
print(f"left-hand block {lm.LEFT_HAND_SLICE} is all zeros:",
      not features[lm.LEFT_HAND_SLICE].any())

# ---------------------------------------------------------------------------
# Thirty frames make one gesture sequence; one LMK1 file stores it exactly.
# ---------------------------------------------------------------------------
sequence = lm.GestureSequence(
    frames=np.stack([lm.flatten_frame(frame) for _ in range(30)]))
blob = lm.encode_sequence(sequence)
print(f"\nLMK1 file: {len(blob)} bytes "
      f"(14-byte header + 30 x 1662 x 4)")
restored = lm.decode_sequence(blob)
print("bit-exact round trip:", restored == sequence)

# ---------------------------------------------------------------------------
# Live producers emit one self-describing record per frame instead.
# ---------------------------------------------------------------------------
record = lm.encode_frame(features)
print(f"\nstream record: {len(record)} bytes (lead byte 0x4C + dim + floats)")
echoed = lm.decode_frame(record)
print("stream round trip exact:", echoed.tobytes() == features.tobytes())

# Malformed input never decodes silently.
try:
    lm.decode_sequence(b"JUNK" + blob[4:])
except lm.BadMagicError as exc:
    print(f"\nbad file rejected: {exc}")
