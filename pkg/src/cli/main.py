"""
Single entry point for the whole workflow.

Subcommands: gen-data, flow, train, extract, eval, ablate. Exit codes: 0 success,
2 usage or validation error, 3 numerical failure, 4 I/O error.
"""

import argparse
import sys
import uuid

import structlog
from pydantic import ValidationError

from src.cli import commands
from src.common.errors import ConfigError, ReidError, format_error
from src.common.logging_config import configure_logging
from src.common.utils import parse_bool

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_INTERRUPTED = 130


def _bool(text: str) -> bool:
    try:
        return parse_bool(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value run configuration file")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")


def _model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=["mutual", "gated", "none"])
    parser.add_argument("--agg", choices=["weighted", "avg", "tattn"])
    parser.add_argument("--inject-stage", type=int, dest="inject_stage")
    parser.add_argument("--streams", type=int, choices=[1, 2])
    parser.add_argument("--se", type=_bool, help="squeeze-excitation in every stage")
    parser.add_argument("--precision", choices=["float32", "float64"])
    parser.add_argument("--flow-source", choices=["estimated", "ground_truth"], dest="flow_source")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frid", description="Flow-guided attention for video person re-identification"
    )
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="render the synthetic benchmark")
    _common(gen)
    gen.add_argument("--ids", type=int, default=32, help="number of identities")
    gen.add_argument("--clips", type=int, default=4, help="clips per identity per camera")
    gen.add_argument("--frames", type=int, default=16, help="frames per clip")
    gen.add_argument("--height", type=int, default=64)
    gen.add_argument("--width", type=int, default=32)
    gen.add_argument("--noise", type=float, default=0.01, help="camera-1 noise sigma")
    gen.add_argument("--jitter", type=int, default=0, help="per-frame box jitter in pixels")
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(handler=commands.gen_data)

    flow = sub.add_parser("flow", help="estimate Horn-Schunck flow for every clip")
    _common(flow)
    flow.add_argument("--manifest", required=True)
    flow.add_argument("--alpha", type=float, dest="flow_alpha")
    flow.add_argument("--iters", type=int, dest="flow_iterations")
    flow.add_argument("--presmooth", type=float, dest="flow_presmooth", help="Gaussian sigma before estimation")
    flow.set_defaults(handler=commands.flow)

    train = sub.add_parser("train", help="train a network")
    _common(train)
    _model_flags(train)
    train.add_argument("--data", dest="data_dir", help="dataset directory or manifest")
    train.add_argument("--out", dest="out_dir", help="run directory")
    train.add_argument("--seq-len", type=int, dest="seq_len")
    train.add_argument("--eval-seq-len", type=int, dest="eval_seq_len")
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--margin", type=float)
    train.add_argument("--augment", type=_bool)
    train.add_argument("--evaluate-every", type=int, dest="evaluate_every")
    train.add_argument("--log-seconds", type=_bool, dest="log_seconds")
    train.set_defaults(handler=commands.train)

    extract = sub.add_parser("extract", help="write clip descriptors for a split")
    _common(extract)
    extract.add_argument("--checkpoint", required=True)
    extract.add_argument("--manifest", required=True)
    extract.add_argument("--split", default="test", choices=["train", "test", "query", "gallery"])
    extract.add_argument("--out", required=True, help="FVEC output file")
    extract.add_argument("--seq-len", type=int, dest="eval_seq_len")
    extract.add_argument("--dump-attention", dest="dump_attention", help="PGM output directory")
    extract.set_defaults(handler=commands.extract)

    evaluate = sub.add_parser("eval", help="CMC and mAP for query against gallery")
    _common(evaluate)
    evaluate.add_argument("--query", required=True)
    evaluate.add_argument("--gallery", required=True)
    evaluate.add_argument("--ranks", help="comma-separated ranks, e.g. 1,5,10,20")
    evaluate.add_argument("--distance", choices=["euclidean", "cosine"])
    evaluate.add_argument("--out", help="CSV report path (default: next to the query file)")
    evaluate.set_defaults(handler=commands.evaluate)

    ablate = sub.add_parser("ablate", help="run a configuration sweep")
    _common(ablate)
    ablate.add_argument("--axis", required=True, choices=["layer", "seqlen", "module"])
    ablate.add_argument("--data", dest="data_dir", help="dataset directory or manifest")
    ablate.add_argument("--out", dest="out_dir", help="output directory")
    ablate.add_argument("--seeds", help="comma-separated seeds to average over")
    ablate.add_argument("--epochs", type=int)
    ablate.set_defaults(handler=commands.ablate)

    return parser


def run_handler(args: argparse.Namespace) -> None:
    """
    Run the selected subcommand, turning stray validation and lookup errors into
    ConfigError so they exit with the usage code.
    """
    try:
        args.handler(args)
    except ReidError:
        raise
    except ValidationError as e:
        raise ConfigError(f"invalid arguments: {e}") from e
    except (ValueError, KeyError) as e:
        raise ConfigError(str(e).strip("'\"")) from e


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        configure_logging(args.log_level)

    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(run_id=uuid.uuid4().hex[:12], subcommand=args.command)

    try:
        run_handler(args)
    except ReidError as e:
        diagnostics = getattr(e, "diagnostics", None)
        logger.error("Command failed", error=format_error(e, "Command failed"), diagnostics=diagnostics)
        print(format_error(e, "error"), file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return EXIT_INTERRUPTED
    return EXIT_OK
