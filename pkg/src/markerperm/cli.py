"""Command-line entry point: ``python -m markerperm <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import build, load_config
from .core import (DataError, DegenerateFrameError, DimensionError, DomainError,
                   MarkerFrame, MarkerPermError, NumericError)
from .evaluate import (TABLE_CONFIGS, EvalReport, NetworkModel, accuracy_precision_curve,
                       best_error_free_fraction, curve_from_predictions, decode_all,
                       eval_frames, eval_trajectories, measure_throughput, residual_stats)
from .permnet import (CheckpointError, TrainingError, label_frames, load_checkpoint,
                      save_checkpoint, train)
from .preprocess import normalize_frame
from .synthdata import (ACTIONS, FrameSet, generate_subject_sequences, introduce_gaps,
                        normalized_frameset, occlude_frameset, read_sequence,
                        shuffle_frameset, write_sequence)
from .trajlabel import attach_labels, relabel_sequence, segment_trajectories

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_MALFORMED = 4
EXIT_SHAPE = 5
EXIT_NUMERIC = 6

EXIT_HELP = """exit codes:
  0  success
  1  other error
  2  usage error (unknown flag, bad argument)
  3  missing input file
  4  malformed input data or config
  5  shape or version mismatch (marker count, checkpoint format)
  6  numeric failure (non-finite values, diverged training)

errors are reported on stderr as one line:
  error: category=<name> message=<text>
"""

_CATEGORIES = {
    EXIT_OTHER: "other",
    EXIT_USAGE: "usage",
    EXIT_MISSING: "missing_file",
    EXIT_MALFORMED: "malformed",
    EXIT_SHAPE: "shape",
    EXIT_NUMERIC: "numeric",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def exit_code_for(exc: BaseException) -> int:
    # order matters: several of these share ValueError as a base
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, FileNotFoundError):
        return EXIT_MISSING
    if isinstance(exc, (DimensionError, CheckpointError)):
        return EXIT_SHAPE
    if isinstance(exc, (NumericError, TrainingError, DomainError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, DegenerateFrameError, json.JSONDecodeError, ValueError)):
        return EXIT_MALFORMED
    return EXIT_OTHER


def _report_error(exc: BaseException, stream) -> int:
    code = exit_code_for(exc)
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error: category={_CATEGORIES[code]} message={msg}", file=stream)
    return code


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _sequence_files(inputs) -> list[Path]:
    out = []
    for item in inputs:
        p = _existing(item)
        out.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    if not out:
        raise DataError("no sequence files found")
    return out


def _write_json(obj, path):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# -- commands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for k in range(args.subjects):
        subject_seed = args.seed * 1000 + args.first_subject + k
        for seq in generate_subject_sequences(args.n_markers, subject_seed, args.frames,
                                              actions=args.actions, fps=args.fps):
            if args.gap_ratio > 0:
                seq = introduce_gaps(seq, args.gap_ratio, rng)
            write_sequence(seq, out / f"{seq.subject}_{seq.action}.csv")
    return EXIT_OK


def cmd_augment(args) -> int:
    seqs = [read_sequence(p) for p in _sequence_files(args.inputs)]
    rng = np.random.default_rng(args.seed)
    fs = normalized_frameset(seqs, args.stride)
    if args.shuffles > 0:
        fs = shuffle_frameset(fs, rng, args.shuffles)
    if args.max_occlusions > 0:
        fs = occlude_frameset(fs, rng, args.max_occlusions)
    fs.save(args.out)
    _write_json({"frames": len(fs), "n_markers": fs.n_markers,
                 "fingerprint": fs.fingerprint(), "subjects": sorted(fs.subject_set())}, None)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    train_set = FrameSet.load(_existing(args.train))
    val_set = FrameSet.load(_existing(args.val))
    net = build("network", cfg, n_markers=train_set.n_markers, seed=args.seed)
    if args.epochs is not None:
        # the flag wins over the config file
        cfg["train"]["epochs"] = args.epochs
    tcfg = build("train", cfg, seed=args.seed)
    scfg = build("sinkhorn", cfg)
    ckpt = train(train_set, val_set, net, tcfg, scfg)
    save_checkpoint(ckpt, args.out)
    meta = ckpt.training_meta
    _write_json({"best_epoch": meta["best_epoch"], "best_val_loss": meta["best_val_loss"],
                 "epochs_run": meta["epochs_run"]}, None)
    return EXIT_OK


def _label_rows(ckpt, seq):
    """Per-frame labels/confidences in the file's own row order."""
    pos = np.empty(seq.positions.shape)
    for t, frame in enumerate(seq.frames()):
        pos[t] = normalize_frame(frame)[0].positions
    results = label_frames(pos, ckpt)
    labels = np.array([r.labels for r in results])
    conf = np.array([r.confidences for r in results])
    return labels, conf, results


def cmd_label(args) -> int:
    ckpt = load_checkpoint(_existing(args.checkpoint))
    seq = read_sequence(_existing(args.input))
    if seq.n_markers != ckpt.n_markers:
        raise DimensionError(f"file has {seq.n_markers} markers, checkpoint expects {ckpt.n_markers}")
    scoring = build("scoring", load_config(args.config))
    labels, conf, results = _label_rows(ckpt, seq)
    if args.trajectories:
        trajs = segment_trajectories(seq.frames())
        attach_labels(trajs, results)
        labels, _ = relabel_sequence(trajs, seq.n_frames, seq.n_markers, scoring)
    labels = np.where(conf >= args.threshold, labels, -1)
    lines = ["frame,track,label,confidence"]
    occ = seq.occluded
    for t in range(seq.n_frames):
        for k in range(seq.n_markers):
            lab = -1 if (args.trajectories and occ[t, k]) else int(labels[t, k])
            lines.append(f"{t},{k},{lab},{conf[t, k]:.17g}")
    text = "\n".join(lines) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    ckpt = load_checkpoint(_existing(args.checkpoint))
    test = FrameSet.load(_existing(args.test))
    if test.n_markers != ckpt.n_markers:
        raise DimensionError(f"test set has {test.n_markers} markers, checkpoint expects {ckpt.n_markers}")
    rng = np.random.default_rng(args.seed)
    report = EvalReport()
    report.frame_accuracy = eval_frames(ckpt, test, range(args.max_occlusions + 1), rng)
    dsms = NetworkModel(ckpt).predict_dsm(test.positions)
    report.dsm_residual = residual_stats(dsms)
    labels, conf = decode_all(dsms)
    report.curve = curve_from_predictions(labels, conf, test.targets,
                                          np.linspace(0.0, 1.0, args.steps))
    if args.sequences:
        seqs = [read_sequence(p) for p in _sequence_files(args.sequences)]
        if args.gap_ratio > 0:
            seqs = [introduce_gaps(s, args.gap_ratio, rng) for s in seqs]
        configs = list(TABLE_CONFIGS)
        user = build("scoring", cfg)
        if user not in configs:
            configs.append(user)
        traj = eval_trajectories(ckpt, seqs, configs, rng)
        report.trajectory_accuracy = {"baseline": traj["baseline"], **traj["configs"]}
        report.label_collisions = int(sum(traj["collisions"].values()))
    n_timing = min(args.timing_frames, len(test))
    if n_timing > 0:
        frames = [MarkerFrame(test.positions[k], test.occluded[k], k) for k in range(n_timing)]
        report.runtime = measure_throughput(ckpt, frames)
    report.provenance = {
        "seed": args.seed,
        "test_fingerprint": test.fingerprint(),
        "test_subjects": sorted(test.subject_set()),
        "training": {k: ckpt.training_meta.get(k) for k in
                     ("dataset_fingerprint", "val_fingerprint", "train_subjects",
                      "train_config", "best_epoch")},
        "network_config": asdict(ckpt.config),
        "sinkhorn": asdict(ckpt.sinkhorn),
        "gap_ratio": args.gap_ratio,
    }
    text = report.to_json()
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_curve(args) -> int:
    ckpt = load_checkpoint(_existing(args.checkpoint))
    test = FrameSet.load(_existing(args.test))
    if test.n_markers != ckpt.n_markers:
        raise DimensionError(f"test set has {test.n_markers} markers, checkpoint expects {ckpt.n_markers}")
    curve = accuracy_precision_curve(ckpt, test, np.linspace(0.0, 1.0, args.steps))
    _write_json({"curve": curve, "error_free_labelled_fraction": best_error_free_fraction(curve),
                 "test_fingerprint": test.fingerprint()}, args.out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="markerperm",
                description="Motion-capture marker labelling by learned permutations.",
                epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, description=help_, epilog=EXIT_HELP,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    s = add("synth", "generate synthetic labelled sequence files")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--subjects", type=int, default=20)
    s.add_argument("--first-subject", type=int, default=1)
    s.add_argument("--n-markers", type=int, default=20)
    s.add_argument("--frames", type=int, default=960)
    s.add_argument("--fps", type=int, default=120)
    s.add_argument("--actions", nargs="+", choices=ACTIONS, default=list(ACTIONS))
    s.add_argument("--gap-ratio", type=float, default=0.0,
                   help="fraction of marker samples to occlude in bursts")
    s.set_defaults(func=cmd_synth)

    s = add("augment", "normalize, shuffle and occlude sequences into a frame set")
    s.add_argument("inputs", nargs="+", help="sequence files or directories")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stride", type=int, default=1, help="use every k-th frame")
    s.add_argument("--shuffles", type=int, default=16)
    s.add_argument("--max-occlusions", type=int, default=0)
    s.set_defaults(func=cmd_augment)

    s = add("train", "train a labelling network on frame sets")
    s.add_argument("--train", required=True)
    s.add_argument("--val", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--config", help="key-value config file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, help="overrides train.epochs")
    s.set_defaults(func=cmd_train)

    s = add("label", "label every frame of a sequence file")
    s.add_argument("input")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", help="output CSV (default stdout)")
    s.add_argument("--config", help="key-value config file (scoring section)")
    s.add_argument("--trajectories", action="store_true",
                   help="relabel whole trajectories by confidence voting")
    s.add_argument("--threshold", type=float, default=0.0,
                   help="leave markers below this normalized confidence unlabelled (-1)")
    s.set_defaults(func=cmd_label)

    s = add("eval", "evaluate a checkpoint and emit a JSON report")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--test", required=True, help="shuffled held-out frame set")
    s.add_argument("--sequences", nargs="*", help="held-out sequence files for trajectory metrics")
    s.add_argument("--gap-ratio", type=float, default=0.0)
    s.add_argument("--max-occlusions", type=int, default=5)
    s.add_argument("--steps", type=int, default=101, help="curve thresholds")
    s.add_argument("--timing-frames", type=int, default=0)
    s.add_argument("--config", help="key-value config file (scoring section)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="report path (default stdout)")
    s.set_defaults(func=cmd_eval)

    s = add("curve", "accuracy-precision curve over confidence thresholds")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--steps", type=int, default=101)
    s.add_argument("--out", help="JSON path (default stdout)")
    s.set_defaults(func=cmd_curve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s")
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, MarkerPermError, OSError, ValueError, ArithmeticError) as exc:
        return _report_error(exc, sys.stderr)
    except Exception as exc:  # noqa: BLE001 - last-resort single-line report
        return _report_error(exc, sys.stderr)
