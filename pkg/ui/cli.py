import argparse
import logging
import sys
from typing import List, Optional

from core.config_manager import PRESETS
from core.errors import EXIT_FAILURE, EXIT_IO_ERROR, exit_code_for
from ui import commands
from version import VERSION

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def configure_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def _shared_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="run configuration (.toml, otherwise JSON)")
    shared.add_argument("--preset", choices=PRESETS, help="bundled configuration to start from")
    shared.add_argument("--seed", type=int, help="overrides train.seed and split.seed")
    shared.add_argument("--out", help="output directory")
    noise = shared.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    noise.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    return shared


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibcrnn",
        description="CNN+LSTM bearing-fault classifier trained on raw vibration windows",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    shared = _shared_flags()

    p = sub.add_parser("prepare", parents=[shared], help="window labelled recordings into an archive")
    p.add_argument("--class", dest="classes", action="append", metavar="NAME=PATH[,PATH...]",
                   help="class name and its recordings (files or directories); repeat per class, in label order")
    p.add_argument("--window", type=int, help="window length T in rows")
    p.add_argument("--files-per-class", type=int, help="seeded random choice of N files per class")
    p.add_argument("--sample-rate", type=float, help="sample rate of text recordings in Hz")
    p.set_defaults(handler=commands.cmd_prepare)

    p = sub.add_parser("synth", parents=[shared], help="generate synthetic per-class recordings "
                                                       "(--config takes a synth spec JSON)")
    p.add_argument("--duration", type=float, help="seconds per class")
    p.add_argument("--channels", type=int, help="channels per recording")
    p.set_defaults(handler=commands.cmd_synth)

    p = sub.add_parser("train", parents=[shared], help="train the CRNN on an archive")
    p.add_argument("--archive", help="training archive directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a saved checkpoint")
    p.add_argument("--no-shuffle", action="store_true", help="keep batch order fixed")
    p.add_argument("--wall-time", dest="record_wall_time", action=argparse.BooleanOptionalAction,
                   help="record measured seconds per epoch in metrics.csv (default: 0.0, so repeated runs "
                        "give identical files)")
    p.set_defaults(handler=commands.cmd_train)

    p = sub.add_parser("eval", parents=[shared], help="score a checkpoint on an archive")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archive")
    p.add_argument("--batch-size", type=int)
    p.set_defaults(handler=commands.cmd_eval)

    p = sub.add_parser("predict", parents=[shared], help="classify every window of a raw recording")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("signal", help="VIB1 or text recording")
    p.add_argument("--sample-rate", type=float, default=20000.0, help="sample rate of a text recording")
    p.set_defaults(handler=commands.cmd_predict)

    p = sub.add_parser("gradcheck", parents=[shared], help="finite-difference check of every gradient")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--dense-tolerance", type=float, default=1e-6, help="tolerance for the dense head and MSLE")
    p.add_argument("--batch", type=int, default=3)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--filters", type=int, default=4)
    p.add_argument("--kernel", type=int, default=5)
    p.add_argument("--pool", type=int, default=2)
    p.add_argument("--units", type=int, default=3)
    p.add_argument("--classes", type=int, default=4)
    p.set_defaults(handler=commands.cmd_gradcheck)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO_ERROR
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_FAILURE:
            logger.exception("unexpected failure")
        print(f"error: {e}", file=sys.stderr)
        return code
