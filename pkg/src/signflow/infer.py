"""Real-time recognition: a sliding window over streamed frames plus
sentence assembly.

No prediction is produced until the window has seen a full sequence;
after that every pushed frame classifies the current window. Words enter
the transcript only when the last S predictions agree, the current
confidence clears the threshold, and the word differs from the previous
emission - so the transcript never stutters.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabelMap
from .nn import ModelParams, ShapeError, model_forward


@dataclass
class Prediction:
    probs: np.ndarray  # (C,), sums to 1
    label: str
    prob: float  # max entry of probs


class SlidingWindow:
    """Fixed-capacity ring of feature frames, iterated oldest to newest."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1 or dim < 1:
            raise ValueError(f"capacity {capacity} and dim {dim} must be >= 1")
        self.capacity = capacity
        self.dim = dim
        self._buffer = np.zeros((capacity, dim), np.float64)
        self._next = 0
        self.seen = 0

    def push(self, frame) -> None:
        frame = np.asarray(frame, np.float64)
        if frame.shape != (self.dim,):
            raise ShapeError(f"frame shape {frame.shape} does not match window dim {self.dim}")
        self._buffer[self._next] = frame
        self._next = (self._next + 1) % self.capacity
        self.seen += 1

    @property
    def full(self) -> bool:
        return self.seen >= self.capacity

    def window(self) -> np.ndarray:
        """The current contents, oldest first; only meaningful once full."""
        return np.concatenate([self._buffer[self._next:], self._buffer[:self._next]])


@dataclass
class TranscriptState:
    """Words emitted so far plus the agreement history that gates emission."""

    threshold: float = 0.5
    stability: int = 10
    words: list = field(default_factory=list)
    history: deque = None

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.stability < 1:
            raise ValueError(f"stability must be >= 1, got {self.stability}")
        if self.history is None:
            self.history = deque(maxlen=self.stability)

    def update(self, pred: Prediction):
        """Fold one prediction in; returns the newly emitted word, if any."""
        self.history.append(pred.label)
        stable = len(self.history) == self.stability and len(set(self.history)) == 1
        fresh = not self.words or self.words[-1] != pred.label
        if stable and pred.prob >= self.threshold and fresh:
            self.words.append(pred.label)
            return pred.label
        return None


def update_transcript(state: TranscriptState, pred: Prediction):
    """Functional-style wrapper over TranscriptState.update."""
    return state, state.update(pred)


class Recognizer:
    """Streams frames through a loaded model and assembles a transcript."""

    def __init__(self, params: ModelParams, label_map: LabelMap,
                 threshold: float = 0.5, stability: int = 10):
        if len(label_map) != params.spec.num_classes:
            raise ShapeError(
                f"label map has {len(label_map)} entries for {params.spec.num_classes} classes"
            )
        self.params = params
        self.labels = label_map.labels()
        self.window = SlidingWindow(params.spec.frames, params.spec.dim)
        self.transcript = TranscriptState(threshold=threshold, stability=stability)
        self.frames_seen = 0

    def push_frame(self, frame):
        """Push one frame; returns a Prediction once the window is warm."""
        self.window.push(frame)
        self.frames_seen += 1
        if not self.window.full:
            return None
        probs, _ = model_forward(self.params, self.window.window()[None])
        probs = probs[0]
        top = int(np.argmax(probs))  # ties break toward the lowest index
        return Prediction(probs=probs, label=self.labels[top], prob=float(probs[top]))

    def process_frame(self, frame):
        """push_frame plus transcript update; returns (prediction, emitted word)."""
        pred = self.push_frame(frame)
        if pred is None:
            return None, None
        return pred, self.transcript.update(pred)


def push_frame(recognizer: Recognizer, frame):
    """Module-level alias matching the operation vocabulary."""
    return recognizer.push_frame(frame)
