"""
Command implementations behind the vibcrnn command line.

Each cmd_* takes the parsed argparse namespace and returns an exit code.
Library errors propagate to ui.cli.main, which maps them to exit codes.
Results meant for the user are printed on stdout; progress goes to the log.
"""

import csv
import io
import json
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from core import checkpoint as ckpt
from core.config_manager import ConfigManager, RunConfig
from core.dataset import (WindowSet, assemble, load_archive, save_archive, split,
                          split_with_validation, window)
from core.errors import EXIT_FAILURE, EXIT_OK, ConfigError, ShapeError
from core.gradcheck import ToySize, run_suite
from core.metrics import METRICS_HEADER, EpochMetrics, metrics_csv
from core.model import build
from core.signals import SignalMatrix, load_signal, save_binary_matrix
from core.synth import SynthSpec, synth_generate
from core.tensor import Rng
from core.trainer import Trainer, check_compatible, evaluate
from utils.fileio import OutputLock, atomic_write_text
from utils.resource_path import resource_path
from utils.system_info import host_summary, resident_memory_mb
from version import VERSION

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CHECKPOINT_FILE = "model.crn"
CONFUSION_FILE = "confusion.json"
RUN_CONFIG_FILE = "run_config.toml"
PREDICTIONS_FILE = "predictions.csv"
SYNTH_SPEC_FILE = "synth_spec.json"


def _load_config(args) -> RunConfig:
    manager = ConfigManager()
    config = manager.load(getattr(args, "config", None), getattr(args, "preset", None))
    return manager.apply_overrides(config, seed=args.seed, out=args.out)


def _confusion_json(matrix) -> str:
    return json.dumps(matrix.to_dict(), indent=2) + "\n"


# prepare

def _class_inputs(spec: str) -> Tuple[str, List[str]]:
    name, sep, paths = spec.partition("=")
    if not sep or not name.strip() or not paths.strip():
        raise ConfigError(f"--class expects NAME=PATH[,PATH...], got {spec!r}")
    return name.strip(), [p.strip() for p in paths.split(",") if p.strip()]


def _expand_files(name: str, paths: List[str]) -> List[Path]:
    files: List[Path] = []
    for entry in paths:
        path = Path(entry)
        if path.is_dir():
            files.extend(sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith(".")))
        elif path.is_file():
            files.append(path)
        else:
            raise ConfigError(f"class {name!r}: input does not exist: {entry}")
    if not files:
        raise ConfigError(f"class {name!r} has no input files")
    return files


def _class_windows(name: str, files: List[Path], window_len: int, sample_rate_hz: float,
                   channels: Optional[int]) -> Tuple[np.ndarray, float]:
    """Concatenate a class's recordings in file order, then cut windows"""
    matrices: List[SignalMatrix] = [load_signal(path, sample_rate_hz) for path in files]
    width = channels if channels is not None else matrices[0].cols
    for matrix in matrices:
        if matrix.cols != width:
            raise ShapeError(f"class {name!r}: {matrix.source} has {matrix.cols} columns, expected {width}")
    rate = matrices[0].sample_rate_hz
    joined = SignalMatrix(np.concatenate([m.values for m in matrices], axis=0), rate, source=f"class {name!r}")
    return window(joined, window_len), rate


def cmd_prepare(args) -> int:
    config = _load_config(args)
    layout = config.dataset
    if not args.classes:
        raise ConfigError("prepare needs at least one --class NAME=PATH[,PATH...]")
    if not config.out:
        raise ConfigError("prepare needs --out DIR for the archive")
    window_len = args.window or layout.window_len
    if not window_len:
        raise ConfigError("prepare needs --window T (or dataset.window_len in the config)")
    files_per_class = args.files_per_class or layout.files_per_class
    sample_rate = args.sample_rate or layout.sample_rate_hz
    rng = Rng(config.split.seed)

    inputs = [_class_inputs(spec) for spec in args.classes]
    names = [name for name, _ in inputs]
    if len(set(names)) != len(names):
        raise ConfigError(f"class names must be unique, got {names}")
    if layout.class_names and names != layout.class_names:
        logger.warning("class order %s differs from the preset's %s", names, layout.class_names)

    per_class = []
    sources: Dict[str, List[str]] = {}
    channels = None
    rate = sample_rate
    for name, paths in inputs:
        files = _expand_files(name, paths)
        if files_per_class:
            if files_per_class > len(files):
                raise ConfigError(f"class {name!r} has {len(files)} files, fewer than --files-per-class "
                                  f"{files_per_class}")
            files = [files[i] for i in sorted(rng.choice(len(files), files_per_class))]
        windows, rate = _class_windows(name, files, window_len, sample_rate, channels)
        channels = windows.shape[2]
        per_class.append(windows)
        sources[name] = [str(path) for path in files]

    ws = assemble(per_class, names, rate)
    with OutputLock(config.out):
        save_archive(ws, config.out, config.split.seed, {"sources": sources, "version": VERSION})
    for name, count in zip(ws.class_names, ws.class_counts()):
        print(f"{name}: {count} windows")
    print(f"archive {config.out}: {len(ws)} samples x {ws.window_len} x {ws.channels}")
    return EXIT_OK


# synth

def cmd_synth(args) -> int:
    spec_path = Path(args.config) if args.config else resource_path("synth_default.json")
    if not spec_path.is_file():
        raise ConfigError(f"synth spec not found: {spec_path}")
    try:
        with open(spec_path, "r", encoding="utf-8") as f:
            spec = SynthSpec.from_dict(json.load(f))
    except json.JSONDecodeError as e:
        raise ConfigError(f"cannot parse synth spec {spec_path}: {e}")
    if args.seed is not None:
        spec.seed = args.seed
    if args.duration is not None:
        spec.duration_s = args.duration
    if args.channels is not None:
        spec.channels = args.channels
    if not args.out:
        raise ConfigError("synth needs --out DIR")
    signals = synth_generate(spec)
    out = Path(args.out)
    with OutputLock(out):
        for index, (name, matrix) in enumerate(signals.items()):
            path = out / f"class_{index:02d}_{name}.vib"
            save_binary_matrix(matrix, path)
            print(f"{path}: {matrix.rows} x {matrix.cols} at {matrix.sample_rate_hz:g} Hz ({name})")
        atomic_write_text(out / SYNTH_SPEC_FILE, json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# train

def _previous_rows(path: Path, up_to_epoch: int) -> List[List[str]]:
    """Metric rows of an earlier run that a resumed run continues"""
    if not path.is_file():
        return []
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != METRICS_HEADER:
        logger.warning("ignoring %s: unexpected header", path)
        return []
    return [row for row in rows[1:] if row and int(row[0]) <= up_to_epoch]


def _metrics_text(previous: List[List[str]], history: List[EpochMetrics]) -> str:
    if not previous:
        return metrics_csv(history)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    writer.writerows(previous)
    writer.writerows(record.csv_row() for record in history)
    return buffer.getvalue()


def _partitions(config: RunConfig, ws: WindowSet) -> Tuple[WindowSet, WindowSet, WindowSet]:
    """(train, per-epoch held-out, final test)"""
    if config.data.eval_archive:
        test = load_archive(config.data.eval_archive)
        if test.class_names != ws.class_names:
            raise ShapeError(f"eval archive classes {test.class_names} differ from {ws.class_names}")
        return ws, test, test
    if config.split.validation_fraction > 0:
        return split_with_validation(ws, config.split)
    train, test = split(ws, config.split)
    return train, test, test


def cmd_train(args) -> int:
    manager = ConfigManager()
    config = manager.load(args.config, args.preset)
    manager.apply_overrides(config, seed=args.seed, out=args.out, archive=args.archive,
                            epochs=args.epochs, batch_size=args.batch_size,
                            learning_rate=args.learning_rate)
    if args.no_shuffle:
        config.train.shuffle = False
    if args.record_wall_time is not None:
        config.train.record_wall_time = args.record_wall_time
    manager.validate(config, require=("archive", "out"))
    out = Path(config.out)

    with OutputLock(out):
        logger.info("vibcrnn %s on %s", VERSION, host_summary())
        ws = load_archive(config.data.archive)
        train_set, held_out, test_set = _partitions(config, ws)
        logger.info("train %d / held-out %d / test %d samples", len(train_set), len(held_out), len(test_set))

        if args.resume:
            state = ckpt.load_checkpoint(args.resume)
            model = state.model
            check_compatible(model, ws, "archive")
            trainer = Trainer.resume(model, config.train,
                                     state.optimizer(config.train.learning_rate, config.train.adagrad_epsilon),
                                     state.meta)
            config.model = model.config.to_dict()
        else:
            rng = Rng(config.train.seed)
            model = build(config.model_config(ws.window_len, ws.channels, ws.num_classes), rng)
            trainer = Trainer(model, config.train, rng)
            config.model = model.config.to_dict()
        logger.debug("model\n%s", model.summary())
        manager.save(config, out / RUN_CONFIG_FILE)

        previous = _previous_rows(out / METRICS_FILE, trainer.epoch) if args.resume else []
        started = time.perf_counter()

        run: List[EpochMetrics] = []

        def record(metrics: EpochMetrics):
            run.append(metrics)
            atomic_write_text(out / METRICS_FILE, _metrics_text(previous, run))

        trainer.fit(train_set, held_out, on_epoch=record)
        seconds = time.perf_counter() - started

        meta = {**trainer.checkpoint_meta(ws.class_names), "version": VERSION}
        ckpt.save_checkpoint(out / CHECKPOINT_FILE, model, trainer.optimizer, meta)
        final = evaluate(model, test_set, config.train.batch_size)
        atomic_write_text(out / CONFUSION_FILE, _confusion_json(final.confusion))
        logger.info("peak resident memory %.0f MB", resident_memory_mb())

    print(final.confusion.render())
    last = trainer.history[-1]
    print(f"final train_acc={last.train_accuracy:.4f} test_acc={final.accuracy:.4f} seconds={seconds:.1f}")
    return EXIT_OK


# eval / predict

def cmd_eval(args) -> int:
    config = _load_config(args)
    if args.archive:
        config.data.archive = args.archive
    ConfigManager().validate(config, require=("archive",))
    state = ckpt.load_checkpoint(args.checkpoint)
    model = state.model
    ws = load_archive(config.data.archive)
    check_compatible(model, ws, "archive")
    trained_on = state.meta.get("class_names")
    if trained_on and list(trained_on) != ws.class_names:
        raise ShapeError(f"archive classes {ws.class_names} differ from the checkpoint's {trained_on}")
    batch_size = args.batch_size or config.train.batch_size
    result = evaluate(model, ws, batch_size)
    if config.out:
        with OutputLock(config.out):
            atomic_write_text(Path(config.out) / CONFUSION_FILE, _confusion_json(result.confusion))
    print(result.confusion.render())
    print(f"accuracy={result.accuracy:.4f} samples={len(ws)} loss={result.loss:.6f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    state = ckpt.load_checkpoint(args.checkpoint)
    model = state.model
    cfg = model.config
    signal = load_signal(args.signal, args.sample_rate)
    if signal.cols != cfg.in_channels:
        raise ShapeError(f"{args.signal} has {signal.cols} channels, the model expects {cfg.in_channels}")
    windows = window(signal, cfg.window_len)
    names = state.meta.get("class_names") or [f"class_{i}" for i in range(cfg.num_classes)]
    # a stateful model scores one window at a time from a fresh state
    model.reset_state()
    scores = model.predict_scores(windows, 1 if cfg.lstm_stateful else 256)
    predicted = np.argmax(scores, axis=1)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["index", "class"] + [f"score_{name}" for name in names])
    for index, (label, row) in enumerate(zip(predicted, scores)):
        writer.writerow([index, names[label]] + [f"{value:.6f}" for value in row])
    table = buffer.getvalue()
    if args.out:
        with OutputLock(args.out):
            atomic_write_text(Path(args.out) / PREDICTIONS_FILE, table)
    print(table, end="")
    return EXIT_OK


# gradcheck

def cmd_gradcheck(args) -> int:
    size = ToySize(batch=args.batch, window_len=args.window, channels=args.channels, filters=args.filters,
                   kernel=args.kernel, pool_size=args.pool, lstm_units=args.units, num_classes=args.classes)
    seed = args.seed if args.seed is not None else 0
    started = time.perf_counter()
    report = run_suite(size, seed, args.tolerance, min(args.dense_tolerance, args.tolerance))
    print(report.render())
    verdict = "passed" if report.passed else "FAILED"
    print(f"gradcheck {verdict}: max relative error {report.max_relative_error:.3e} "
          f"in {time.perf_counter() - started:.1f}s")
    if args.out:
        with OutputLock(args.out):
            atomic_write_text(Path(args.out) / "gradcheck.txt", report.render() + "\n")
    return EXIT_OK if report.passed else EXIT_FAILURE
