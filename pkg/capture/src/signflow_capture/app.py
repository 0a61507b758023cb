"""Command-line capture client.

``collect`` records labelled videos into a recognizer corpus; ``stream``
emits live frame records to stdout or a TCP recognizer. Camera access and
tracking need the ``live`` extra (opencv-python + mediapipe); everything
else, including the tests, runs without them.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import threading
from pathlib import Path

from .session import CameraError, CaptureSession, StreamClosedError, collect_session, stream_session

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CAMERA = 2
EXIT_STREAM_CLOSED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class CameraSource:
    """cv2.VideoCapture behind the frame-source protocol."""

    def __init__(self, index: int = 0):
        import cv2  # the 'live' extra

        self._capture = cv2.VideoCapture(index)
        if not self._capture.isOpened():
            raise CameraError(f"camera {index} is unavailable")

    def read(self):
        ok, frame = self._capture.read()
        if not ok:
            raise CameraError("camera stopped delivering frames")
        return frame

    def close(self):
        self._capture.release()


class HolisticTracker:
    """MediaPipe Holistic behind the tracker protocol (BGR frames in)."""

    def __init__(self):
        import cv2
        import mediapipe as mp

        self._cv2 = cv2
        self._holistic = mp.solutions.holistic.Holistic(
            min_detection_confidence=0.5, min_tracking_confidence=0.5)

    def __call__(self, frame_bgr):
        rgb = self._cv2.cvtColor(frame_bgr, self._cv2.COLOR_BGR2RGB)
        return self._holistic.process(rgb)

    def close(self):
        self._holistic.close()


class OverlayReader:
    """Tails recognizer JSON lines so the preview can show the sentence."""

    def __init__(self, path):
        self.words: list = []
        self._thread = threading.Thread(target=self._follow, args=(Path(path),), daemon=True)
        self._thread.start()

    def _follow(self, path):
        try:
            with open(path, "r", encoding="utf-8") as stream:
                for line in stream:
                    try:
                        record = json.loads(line)
                    except json.JSONDecodeError:
                        continue
                    if "word" in record:
                        self.words.append(record["word"])
        except OSError:
            pass

    def sentence(self) -> str:
        return " ".join(self.words[-8:])


def build_parser() -> _Parser:
    parser = _Parser(prog="signflow-capture", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_collect = sub.add_parser("collect", help="record labelled videos into a corpus")
    p_collect.add_argument("--label", required=True)
    p_collect.add_argument("--out", default="corpus")
    p_collect.add_argument("--videos", type=int, default=30)
    p_collect.add_argument("--frames", type=int, default=30)
    p_collect.add_argument("--pause", type=float, default=2.0)
    p_collect.add_argument("--camera", type=int, default=0)

    p_stream = sub.add_parser("stream", help="emit live frame records")
    p_stream.add_argument("--connect", default=None, metavar="HOST:PORT",
                          help="send to a TCP recognizer instead of stdout")
    p_stream.add_argument("--camera", type=int, default=0)
    p_stream.add_argument("--max-frames", type=int, default=None)
    p_stream.add_argument("--overlay-from", default=None, metavar="FILE",
                          help="tail recognizer JSON lines and print the sentence")
    return parser


def _cmd_collect(args) -> int:
    session = CaptureSession(label=args.label, videos=args.videos, frames=args.frames,
                             pause_seconds=args.pause, root=args.out)
    source = CameraSource(args.camera)
    tracker = HolisticTracker()
    try:
        written = collect_session(
            session, source, tracker,
            on_status=lambda line: print(line, file=sys.stderr, flush=True))
    finally:
        source.close()
        tracker.close()
    print(json.dumps({"label": args.label, "files": len(written),
                      "root": str(Path(args.out))}), flush=True)
    return EXIT_OK


def _cmd_stream(args) -> int:
    source = CameraSource(args.camera)
    tracker = HolisticTracker()
    overlay = OverlayReader(args.overlay_from) if args.overlay_from else None

    def on_frame(count):
        if overlay is not None and overlay.words:
            print(overlay.sentence(), file=sys.stderr, flush=True)

    conn = None
    try:
        if args.connect:
            host, _, port = args.connect.rpartition(":")
            conn = socket.create_connection((host, int(port)))
            sink = conn.makefile("wb")
        else:
            sink = sys.stdout.buffer
        emitted = stream_session(sink, source, tracker,
                                 max_frames=args.max_frames, on_frame=on_frame)
        print(f"emitted {emitted} frames", file=sys.stderr)
        return EXIT_OK
    except StreamClosedError as exc:
        print(f"signflow-capture: {exc}", file=sys.stderr)
        return EXIT_STREAM_CLOSED
    finally:
        if conn is not None:
            conn.close()
        source.close()
        tracker.close()


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "collect":
            return _cmd_collect(args)
        return _cmd_stream(args)
    except ImportError as exc:
        print(f"signflow-capture: live capture needs the 'live' extra: {exc}", file=sys.stderr)
        return EXIT_NO_CAMERA
    except (CameraError, OSError, ValueError) as exc:
        print(f"signflow-capture: error: {exc}", file=sys.stderr)
        return EXIT_NO_CAMERA


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
