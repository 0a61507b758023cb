"""Command-line entry point.

Machine-readable JSON (or JSON lines) goes to stdout; prose and errors go
to stderr. Exit codes: 0 success, 1 usage error, 2 unreadable or malformed
data, 3 runtime failure such as training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import landmarks as lm
from . import nn
from .infer import Recognizer
from .optim import AdamaxHyper
from .train import DivergedError, TrainConfig, evaluate, fit, format_percent

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse flavor that reports usage problems with exit code 1."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(payload) -> None:
    print(json.dumps(payload), flush=True)


def _resolve_seed(value) -> int:
    if value is not None:
        return value
    env = os.environ.get("SIGNFLOW_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"SIGNFLOW_SEED must be an integer, got {env!r}") from exc
    return 0


def _labels_path(args) -> Path:
    if args.labels is not None:
        return Path(args.labels)
    return Path(args.root) / "labels.json"


def _load_checkpoint(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ds.DatasetError(f"cannot read model {path}: {exc}") from exc
    return nn.decode_model(blob)


def build_parser() -> _Parser:
    parser = _Parser(prog="signflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_dataset = sub.add_parser("dataset", help="corpus management")
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command", required=True)

    p_scan = dataset_sub.add_parser("scan", help="index and validate a corpus directory")
    p_scan.add_argument("--root", required=True)

    p_synth = dataset_sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--classes", type=int, default=10)
    p_synth.add_argument("--videos", type=int, default=30)
    p_synth.add_argument("--frames", type=int, default=30)
    p_synth.add_argument("--dims", type=int, default=132)
    p_synth.add_argument("--noise", type=float, default=0.05)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--labels", default=None, help="label map output path (default <out>/labels.json)")

    p_train = sub.add_parser("train", help="fit the classifier on a corpus")
    p_train.add_argument("--root", required=True)
    p_train.add_argument("--labels", default=None, help="label map path (default <root>/labels.json)")
    p_train.add_argument("--model", required=True, help="checkpoint output path")
    p_train.add_argument("--log", default=None, help="JSON-lines training log path")
    p_train.add_argument("--epochs", type=int, default=300)
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--test-fraction", type=float, default=0.05)
    p_train.add_argument("--lr", type=float, default=0.001)
    p_train.add_argument("--frames", type=int, default=30, help="frames per sequence file")
    p_train.add_argument("--clip-norm", type=float, default=None)
    p_train.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True)

    p_eval = sub.add_parser("eval", help="score a trained model on a corpus split")
    p_eval.add_argument("--root", required=True)
    p_eval.add_argument("--labels", default=None)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--test-fraction", type=float, default=0.05)
    p_eval.add_argument("--split", choices=("test", "train", "all"), default="test")

    p_predict = sub.add_parser("predict", help="classify one sequence file")
    p_predict.add_argument("--model", required=True)
    p_predict.add_argument("file")

    p_stream = sub.add_parser("stream", help="recognize a live frame stream")
    p_stream.add_argument("--model", required=True)
    p_stream.add_argument("--threshold", type=float, default=0.5)
    p_stream.add_argument("--stability", type=int, default=10)
    p_stream.add_argument("--listen", default=None, metavar="HOST:PORT",
                          help="accept one TCP producer instead of reading stdin")
    p_stream.add_argument("--verbose", action="store_true",
                          help="also emit one JSON line per prediction")

    p_inspect = sub.add_parser("inspect", help="print checkpoint metadata")
    p_inspect.add_argument("--model", required=True)

    return parser


def _cmd_dataset_scan(args) -> int:
    index = ds.scan_dataset(args.root)
    _emit({
        "root": str(index.root),
        "labels": len(index.files),
        "files": index.total(),
        "counts": index.counts(),
        "short_labels": index.short_labels(),
    })
    return EXIT_OK


def _cmd_dataset_synth(args) -> int:
    if min(args.classes, args.videos, args.frames, args.dims) < 1:
        raise UsageError("--classes, --videos, --frames, and --dims must all be >= 1")
    if args.noise < 0:
        raise UsageError(f"--noise must be >= 0, got {args.noise}")
    seed = _resolve_seed(args.seed)
    data = ds.synth_gestures(args.classes, args.videos, args.frames, args.dims,
                             noise_sd=args.noise, seed=seed)
    label_map = ds.build_label_map(ds.class_names(args.classes))
    written = ds.write_corpus(args.out, data, label_map)
    labels_path = Path(args.labels) if args.labels else Path(args.out) / "labels.json"
    ds.save_label_map(label_map, labels_path)
    _emit({
        "root": args.out,
        "labels_file": str(labels_path),
        "classes": args.classes,
        "files": written,
        "frames": args.frames,
        "dims": args.dims,
        "noise": args.noise,
        "seed": seed,
    })
    return EXIT_OK


def _validate_train_flags(args) -> None:
    if args.epochs < 1:
        raise UsageError(f"--epochs must be >= 1, got {args.epochs}")
    if args.batch_size < 1:
        raise UsageError(f"--batch-size must be >= 1, got {args.batch_size}")
    if not 0.0 < args.test_fraction < 1.0:
        raise UsageError(f"--test-fraction must be in (0, 1), got {args.test_fraction}")
    if args.lr <= 0:
        raise UsageError(f"--lr must be > 0, got {args.lr}")
    if args.clip_norm is not None and args.clip_norm <= 0:
        raise UsageError(f"--clip-norm must be > 0, got {args.clip_norm}")
    if args.frames < 1:
        raise UsageError(f"--frames must be >= 1, got {args.frames}")


def _load_corpus(args):
    label_map = ds.load_label_map(_labels_path(args))
    index = ds.scan_dataset(args.root)
    frames = getattr(args, "frames", 30)
    data = ds.load_tensors(index, label_map, expected_frames=frames)
    return label_map, data


def _cmd_train(args) -> int:
    _validate_train_flags(args)
    seed = _resolve_seed(args.seed)
    label_map, data = _load_corpus(args)
    train_data, test_data = ds.train_test_split(
        data, ds.SplitConfig(test_fraction=args.test_fraction, seed=seed))
    spec = nn.sequence_classifier_spec(
        frames=data.X.shape[1], dim=data.X.shape[2], classes=len(label_map))
    params = nn.init_params(spec, seed=seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=seed,
                      clip_norm=args.clip_norm, deterministic=args.deterministic)
    hyper = AdamaxHyper(lr=args.lr)
    log_stream = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        params, history = fit(params, train_data, cfg, hyper, log_stream=log_stream)
    finally:
        if log_stream is not None:
            log_stream.close()
    Path(args.model).write_bytes(nn.encode_model(params, label_map, seed=seed))
    final = history[-1]
    _emit({
        "model": args.model,
        "log": args.log,
        "epochs": cfg.epochs,
        "steps_per_epoch": final.steps,
        "train_rows": len(train_data),
        "test_rows": len(test_data),
        "final_loss": final.loss,
        "final_categorical_accuracy": final.categorical_accuracy,
        "param_count": nn.param_count(spec),
        "seed": seed,
    })
    return EXIT_OK


def _cmd_eval(args) -> int:
    if not 0.0 < args.test_fraction < 1.0:
        raise UsageError(f"--test-fraction must be in (0, 1), got {args.test_fraction}")
    seed = _resolve_seed(args.seed)
    params, label_map, _ = _load_checkpoint(args.model)
    if args.labels is not None:
        on_disk = ds.load_label_map(args.labels)
        if on_disk.entries != label_map.entries:
            raise ds.DatasetError(
                f"label map {args.labels} disagrees with the one inside {args.model}"
            )
    index = ds.scan_dataset(args.root)
    data = ds.load_tensors(index, label_map,
                           expected_frames=params.spec.frames,
                           expected_dim=params.spec.dim)
    if args.split != "all":
        train_data, test_data = ds.train_test_split(
            data, ds.SplitConfig(test_fraction=args.test_fraction, seed=seed))
        data = test_data if args.split == "test" else train_data
    accuracy, loss, matrix = evaluate(params, data)
    _emit({
        "split": args.split,
        "rows": matrix.total,
        "correct": matrix.correct,
        "accuracy": accuracy,
        "accuracy_percent": matrix.accuracy_percent(),
        "loss": loss,
        "confusion": matrix.counts.tolist(),
    })
    return EXIT_OK


def _cmd_predict(args) -> int:
    params, label_map, _ = _load_checkpoint(args.model)
    spec = params.spec
    try:
        blob = Path(args.file).read_bytes()
    except OSError as exc:
        raise ds.DatasetError(f"cannot read {args.file}: {exc}") from exc
    seq = lm.decode_sequence(blob, expected_dim=spec.dim)
    if len(seq) != spec.frames:
        raise ds.LoadError(
            f"{args.file}: frame count {len(seq)} does not match the model's {spec.frames}"
        )
    probs, _ = nn.model_forward(params, seq.frames.astype(np.float64)[None])
    probs = probs[0]
    order = np.argsort(-probs, kind="stable")
    labels = label_map.labels()
    _emit({
        "file": args.file,
        "label": labels[int(order[0])],
        "prob": float(probs[order[0]]),
        "top": [{"label": labels[int(k)], "prob": float(probs[k])} for k in order[:5]],
    })
    return EXIT_OK


def _parse_listen(value: str):
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise UsageError(f"--listen expects HOST:PORT, got {value!r}")
    try:
        return host, int(port)
    except ValueError as exc:
        raise UsageError(f"--listen port must be an integer, got {port!r}") from exc


def run_stream(reader, recognizer: Recognizer, verbose: bool = False, out=None) -> int:
    """Drive a recognizer from a binary record stream; returns frames consumed."""
    out = out or sys.stdout
    frames = 0
    for frame in lm.read_frame_records(reader, expected_dim=recognizer.params.spec.dim):
        frames += 1
        pred, word = recognizer.process_frame(frame)
        if verbose and pred is not None:
            out.write(json.dumps({"t": recognizer.frames_seen, "label": pred.label,
                                  "p": pred.prob}) + "\n")
            out.flush()
        if word is not None:
            out.write(json.dumps({"t": recognizer.frames_seen, "word": word,
                                  "p": pred.prob}) + "\n")
            out.flush()
    return frames


def _cmd_stream(args) -> int:
    if not 0.0 <= args.threshold <= 1.0:
        raise UsageError(f"--threshold must be in [0, 1], got {args.threshold}")
    if args.stability < 1:
        raise UsageError(f"--stability must be >= 1, got {args.stability}")
    params, label_map, _ = _load_checkpoint(args.model)
    recognizer = Recognizer(params, label_map,
                            threshold=args.threshold, stability=args.stability)
    if args.listen is None:
        frames = run_stream(sys.stdin.buffer, recognizer, verbose=args.verbose)
        print(f"stream ended after {frames} frames", file=sys.stderr)
        return EXIT_OK
    host, port = _parse_listen(args.listen)
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(1)
        print(f"listening on {server.getsockname()[0]}:{server.getsockname()[1]}",
              file=sys.stderr, flush=True)
        conn, peer = server.accept()
        print(f"producer connected from {peer[0]}:{peer[1]}", file=sys.stderr)
        with conn, conn.makefile("rb") as reader:
            frames = run_stream(reader, recognizer, verbose=args.verbose)
    print(f"stream ended after {frames} frames", file=sys.stderr)
    return EXIT_OK


def _cmd_inspect(args) -> int:
    params, label_map, seed = _load_checkpoint(args.model)
    spec = params.spec
    layers = []
    for layer in spec.layers:
        if isinstance(layer, nn.LstmSpec):
            layers.append({"type": "lstm", "units": layer.units,
                           "return_sequences": layer.return_sequences,
                           "activation": layer.activation})
        else:
            layers.append({"type": "dense", "units": layer.units,
                           "activation": layer.activation})
    _emit({
        "model": args.model,
        "param_count": nn.param_count(spec),
        "frames": spec.frames,
        "dim": spec.dim,
        "classes": spec.num_classes,
        "layers": layers,
        "labels": len(label_map),
        "seed": seed,
    })
    return EXIT_OK


_COMMANDS = {
    ("dataset", "scan"): _cmd_dataset_scan,
    ("dataset", "synth"): _cmd_dataset_synth,
    ("train", None): _cmd_train,
    ("eval", None): _cmd_eval,
    ("predict", None): _cmd_predict,
    ("stream", None): _cmd_stream,
    ("inspect", None): _cmd_inspect,
}


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = _COMMANDS[(args.command, getattr(args, "dataset_command", None))]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"signflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergedError as exc:
        print(f"signflow: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ds.DatasetError, lm.DecodeError, nn.ShapeError, OSError) as exc:
        print(f"signflow: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
