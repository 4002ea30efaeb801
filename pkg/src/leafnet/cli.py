"""Command-line surface: leafnet <summary|train|eval|predict>.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure during
training. Every run echoes its effective configuration first; all
randomness derives from --seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import data as D
from . import metrics as MET
from . import models as M
from . import training as TR
from .errors import LeafnetError, TrainingDiverged

DEFAULT_SEED = 42


def _seed(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be >= 0, got {value}")
    return value


def _parse_filters(text: str) -> tuple[int, ...]:
    try:
        filters = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad filter list {text!r}; expected e.g. 32,64,128")
    if not filters:
        raise argparse.ArgumentTypeError("filter list is empty")
    return filters


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leafnet",
        description="Train and evaluate the leaf-disease CNN/LSTM classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def arch_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--arch", choices=("cnn", "lstm"), default="cnn")
        p.add_argument("--input", type=int, default=None,
                       help="square input image size (cnn: 128, lstm resize: 80)")
        p.add_argument("--filters", type=_parse_filters, default=None,
                       help="cnn filter progression, e.g. 8,16,32")
        p.add_argument("--dense", type=int, default=None, help="dense layer width")
        p.add_argument("--hidden", type=int, default=None, help="lstm memory units")
        p.add_argument("--timesteps", type=int, default=None, help="lstm sequence length")

    p = sub.add_parser("summary", help="print a model summary table")
    arch_flags(p)
    p.add_argument("--classes", type=int, default=38)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("data_root", type=Path)
    arch_flags(p)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("eval", help="write a classification report for a model")
    p.add_argument("model_file", type=Path)
    p.add_argument("data_root", type=Path)
    p.add_argument("--split", choices=D.SPLITS, default="valid")
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("model_file", type=Path)
    p.add_argument("image", type=Path)

    return parser


def _cnn_config(args, classes: int) -> M.CnnConfig:
    base = M.CnnConfig()
    return M.CnnConfig(
        input_size=args.input or base.input_size,
        filters=args.filters or base.filters,
        dense_units=args.dense or base.dense_units,
        classes=classes,
    )


def _lstm_config(args, classes: int) -> M.LstmConfig:
    base = M.LstmConfig()
    timesteps = args.timesteps or base.timesteps
    side = args.input or D.lstm_image_size(base.timesteps, base.features)
    features, rem = divmod(side * side * 3, timesteps)
    if rem:
        raise LeafnetError(
            f"--input {side} with --timesteps {timesteps}: {side * side * 3} values "
            f"do not split into {timesteps} steps")
    return M.LstmConfig(
        timesteps=timesteps,
        features=features,
        hidden=args.hidden or base.hidden,
        dense_units=args.dense or base.dense_units,
        classes=classes,
    )


def _build(args, classes: int, seed: int) -> M.SequentialModel:
    if args.arch == "cnn":
        return M.build_cnn(_cnn_config(args, classes), seed=seed)
    return M.build_lstm(_lstm_config(args, classes), seed=seed)


def _loader_for(model: M.SequentialModel):
    cfg = model.spec.config
    if model.spec.arch == "cnn":
        return lambda p: D.load_image(p, "cnn", cnn_size=cfg.input_size)
    return lambda p: D.load_image(p, "lstm", timesteps=cfg.timesteps,
                                  features=cfg.features)


def _echo(command: str, **kv) -> None:
    pairs = " ".join(f"{k}={v}" for k, v in kv.items())
    print(f"leafnet {command}: {pairs}")


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def cmd_summary(args) -> int:
    _echo("summary", arch=args.arch, classes=args.classes)
    model = _build(args, args.classes, seed=0)
    print(M.summary(model))
    return 0


def cmd_train(args) -> int:
    _echo("train", arch=args.arch, data=args.data_root, epochs=args.epochs,
          batch=args.batch, lr=args.lr, seed=args.seed, out=args.out)
    index = D.scan_dataset(args.data_root)
    counts = index.counts()
    print(f"dataset: {counts['train']} train / {counts['valid']} valid / "
          f"{len(index.label_map)} classes")
    model = _build(args, len(index.label_map), seed=args.seed)
    model.label_map = list(index.label_map)
    loader = _loader_for(model)
    train_set = D.DiskDataset(index, "train", loader)
    valid_set = D.DiskDataset(index, "valid", loader)
    config = TR.TrainConfig(epochs=args.epochs, batch_size=args.batch,
                            lr=args.lr, seed=args.seed)
    model, history = TR.train(model, train_set, valid_set, config)
    args.out.mkdir(parents=True, exist_ok=True)
    D.save_model(model, args.out / "model.leaf")
    _write_text(args.out / "history.csv", TR.history_to_csv(history))
    last = history[-1]
    print(f"epoch {last.epoch}: train_loss={last.train_loss:.6f} "
          f"train_acc={last.train_acc:.4f} val_loss={last.val_loss:.6f} "
          f"val_acc={last.val_acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    _echo("eval", model=args.model_file, data=args.data_root, split=args.split,
          out=args.out)
    model = D.load_model(args.model_file)
    index = D.scan_dataset(args.data_root)
    if list(index.label_map) != list(model.label_map):
        missing_model = sorted(set(index.label_map) - set(model.label_map))
        missing_data = sorted(set(model.label_map) - set(index.label_map))
        raise LeafnetError(
            "label maps differ between model and dataset; "
            f"missing from model: {missing_model}; missing from dataset: {missing_data}")
    dataset = D.DiskDataset(index, args.split, _loader_for(model))
    if len(dataset) == 0:
        raise LeafnetError(f"split {args.split!r} has no records")
    preds, labels = [], []
    for x, y in dataset.samples():
        probs = M.forward(model, x, mode="infer")
        preds.append(int(probs.argmax()))
        labels.append(y)
    cm = MET.confusion_matrix(preds, labels, model.label_map)
    report = MET.class_report(cm)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_text(args.out / "report.txt", MET.format_report(report))
    _write_text(args.out / "confusion.csv", MET.cm_to_csv(cm))
    print(f"accuracy: {report.accuracy:.4f} (n={report.total_support})")
    return 0


def cmd_predict(args) -> int:
    _echo("predict", model=args.model_file, image=args.image)
    model = D.load_model(args.model_file)
    cfg = model.spec.config
    if model.spec.arch == "cnn":
        x = D.load_image(args.image, "cnn", cnn_size=cfg.input_size)
    else:
        x = D.load_image(args.image, "lstm", timesteps=cfg.timesteps,
                         features=cfg.features)
    name, confidence = M.predict(model, x)
    print(f"{name}\t{confidence:.4f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"summary": cmd_summary, "train": cmd_train,
               "eval": cmd_eval, "predict": cmd_predict}[args.command]
    try:
        return handler(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (LeafnetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
