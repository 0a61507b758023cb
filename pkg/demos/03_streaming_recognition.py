#!/usr/bin/env python3
"""Simulate the live pipeline: a producer emits frame records, the sliding
window classifies every frame once warm, and stable confident predictions
become transcript words."""

import io

import numpy as np

from signflow.dataset import build_label_map, class_names, synth_gestures, train_test_split, SplitConfig
from signflow.infer import Recognizer
from signflow.landmarks import encode_frame, read_frame_records
from signflow.nn import init_params, sequence_classifier_spec
from signflow.train import TrainConfig, fit

FRAMES, DIMS, CLASSES = 12, 24, 4

# ---------------------------------------------------------------------------
# Train a small model to stream against.
# ---------------------------------------------------------------------------
data = synth_gestures(CLASSES, 20, FRAMES, DIMS, noise_sd=0.05, seed=5)
train_data, _ = train_test_split(data, SplitConfig(test_fraction=0.1, seed=5))
params = init_params(sequence_classifier_spec(FRAMES, DIMS, CLASSES), seed=5)
params, history = fit(params, train_data, TrainConfig(epochs=20, batch_size=16, seed=5))
print(f"trained: final accuracy {history[-1].categorical_accuracy:.3f}")

labels = build_label_map(class_names(CLASSES))

# ---------------------------------------------------------------------------
# A producer would write these bytes to a pipe or TCP socket; here the
# "wire" is an in-memory buffer. The signed gesture switches from sign01
# to sign03 halfway through.
# ---------------------------------------------------------------------------
gesture_a = data.X[1 * 20 + 3]  # a sign01 video
gesture_b = data.X[3 * 20 + 7]  # a sign03 video
wire = io.BytesIO()
for _ in range(3):
    for frame in gesture_a:
        wire.write(encode_frame(frame.astype(np.float32), dim=DIMS))
for _ in range(3):
    for frame in gesture_b:
        wire.write(encode_frame(frame.astype(np.float32), dim=DIMS))
wire.seek(0)
print(f"producer wrote {6 * FRAMES} records")

# ---------------------------------------------------------------------------
# Consume the stream: nothing before the window fills, then one prediction
# per frame; the transcript only gains stable, confident, non-repeated words.
# ---------------------------------------------------------------------------
recognizer = Recognizer(params, labels, threshold=0.5, stability=8)
for frame in read_frame_records(wire, expected_dim=DIMS):
    prediction, word = recognizer.process_frame(frame)
    if word is not None:
        print(f"  frame {recognizer.frames_seen:>3}: emitted {word!r} "
              f"(p = {prediction.prob:.3f})")

print("transcript:", " ".join(recognizer.transcript.words))
