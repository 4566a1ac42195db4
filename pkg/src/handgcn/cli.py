"""Command-line interface wiring all modules together.

Commands: preprocess, train, crossval, eval, predict, synth.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dataset_io, evaluation
from .errors import (
    CorruptFile,
    DegenerateJoint,
    DegeneratePose,
    EmptyDataset,
    HandGcnError,
    NonFiniteLoss,
    ParseError,
    TooFewSamples,
    UnknownLabel,
    UsageError,
    VersionMismatch,
)
from .gcn_net import model_forward
from .hand_graph import preprocess
from .numerics import derive_seed
from .training import TrainConfig, fit, load_checkpoint, save_checkpoint

# Closed-form parameter total of the default wiring, printed next to the
# reference architecture's published figure at train start.
REFERENCE_PARAMETER_TOTAL = 142447

DATA_ERRORS = (
    ParseError, UnknownLabel, CorruptFile, VersionMismatch,
    EmptyDataset, TooFewSamples, FileNotFoundError, IsADirectoryError,
)
NUMERICAL_ERRORS = (DegenerateJoint, DegeneratePose, NonFiniteLoss)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    """Hyperparameter overrides; defaults match TrainConfig."""
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=128, help="hidden width H")
    p.add_argument("--learning-rate", type=float, default=3e-4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--dropout-probability", type=float, default=0.4)
    p.add_argument("--adam-weight-decay", type=float, default=1e-4)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--leaky-relu-alpha", type=float, default=0.2)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--max-epochs", type=int, default=500)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        dropout_p=args.dropout_probability,
        weight_decay=args.adam_weight_decay,
        beta1=args.beta1,
        beta2=args.beta2,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
        hidden_dim=args.hidden,
        leaky_alpha=args.leaky_relu_alpha,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="handgcn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="landmark file -> graph file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--desired-distance", type=float, default=1.0)

    p = sub.add_parser("train", help="train on a graph file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-fraction", type=float, default=0.2,
                   help="stratified share of the data held out for early stopping")
    _add_train_flags(p)

    p = sub.add_parser("crossval", help="k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--report", required=True)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a graph file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("predict", help="classify raw landmarks with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)

    p = sub.add_parser("synth", help="generate a synthetic landmark file")
    p.add_argument("--classes", type=int, default=29)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)

    return parser


def _cmd_preprocess(args) -> int:
    poses = dataset_io.read_landmarks(args.input)
    graphs = [preprocess(pose, args.desired_distance) for pose in poses]
    dataset_io.write_graphs(graphs, args.output, args.desired_distance)
    print(f"preprocessed {len(graphs)} poses -> {args.output}")
    return 0


def _announce_parameters(hidden: int) -> None:
    closed_form = 2 * hidden * hidden + 625 * hidden + 29
    print(
        f"parameters: {closed_form} at hidden width {hidden} "
        f"(reference architecture total: {REFERENCE_PARAMETER_TOTAL})"
    )


def _cmd_train(args) -> int:
    graphs, d_desired = dataset_io.read_graphs(args.data)
    cfg = _train_config(args)
    _announce_parameters(cfg.hidden_dim)
    if not 0.0 < args.val_fraction < 1.0:
        raise UsageError("--val-fraction must lie in (0, 1)")
    k = max(2, round(1.0 / args.val_fraction))
    folds = evaluation.stratified_kfold([g.label for g in graphs], k, derive_seed(cfg.seed, 0))
    val_idx = set(folds[0].tolist())
    train_set = [g for i, g in enumerate(graphs) if i not in val_idx]
    val_set = [graphs[i] for i in sorted(val_idx)]
    ckpt = fit(train_set, val_set, cfg, d_desired=d_desired, log=print)
    save_checkpoint(ckpt, args.out)
    best_train, best_val = ckpt.history[ckpt.best_epoch]
    print(
        f"done: {len(ckpt.history)} epochs, best epoch {ckpt.best_epoch + 1} "
        f"(train {best_train:.6f}, val {best_val:.6f}) -> {args.out}"
    )
    return 0


def _cmd_crossval(args) -> int:
    graphs, d_desired = dataset_io.read_graphs(args.data)
    cfg = _train_config(args)
    _announce_parameters(cfg.hidden_dim)
    results = evaluation.cross_validate(graphs, cfg, k=args.folds, d_desired=d_desired, log=print)
    evaluation.write_report(args.report, results, dataset_io.CLASS_NAMES)
    for res in results:
        if res.error is None:
            print(f"fold {res.fold}: {res.epochs} epochs, "
                  f"{res.mean_epoch_seconds:.3f}s mean epoch wall time")
    failed = [r.fold for r in results if r.error is not None]
    if failed:
        print(f"folds failed: {failed}", file=sys.stderr)
        return 3
    print(f"report written to {args.report}")
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.model)
    graphs, _ = dataset_io.read_graphs(args.data)
    report, cm = evaluation.evaluate_split(ckpt.params, ckpt.model_config, graphs, "evaluation", 0)
    result = evaluation.FoldResult(
        fold=0, train_report=None, test_report=report,
        epochs=len(ckpt.history), mean_epoch_seconds=0.0,
    )
    evaluation.write_report(
        args.report, [result], dataset_io.CLASS_NAMES,
        extra={"confusion_matrix": cm.counts.tolist()},
    )
    print(
        f"accuracy {report.accuracy:.4f}  precision {report.precision:.4f}  "
        f"recall {report.recall:.4f}  f1 {report.f1:.4f}  "
        f"macro_auc {report.macro_auc:.4f}  weighted_auc {report.weighted_auc:.4f}"
    )
    return 0


def _cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.model)
    poses = dataset_io.read_landmarks(args.input)
    graphs = [preprocess(pose, ckpt.model_config.d_desired) for pose in poses]
    logp, _ = model_forward(graphs, ckpt.params, ckpt.model_config, training=False)
    probs = np.exp(logp)
    for pose, row in zip(poses, probs):
        best = int(row.argmax())
        name = dataset_io.VOCABULARY.name(best)
        tag = pose.source_id or "-"
        print(f"{tag}\t{name}\t{row[best]:.6f}")
    return 0


def _cmd_synth(args) -> int:
    poses = dataset_io.synth_dataset(args.classes, args.per_class, args.noise, args.seed)
    dataset_io.write_landmarks(poses, args.out)
    print(f"wrote {len(poses)} synthetic poses -> {args.out}")
    return 0


_COMMANDS = {
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "crossval": _cmd_crossval,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "synth": _cmd_synth,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except HandGcnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
