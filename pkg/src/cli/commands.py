"""Subcommand handlers. Each resolves its RunConfig, does the work and records the config."""

import argparse
import sys
from pathlib import Path

import numpy as np
import structlog
from pydantic import ValidationError

from src.common.config import RESOLVED_CONFIG_NAME, RunConfig, load_run_config
from src.common.errors import ConfigError, ShapeError
from src.core.data.flows import compute_flows
from src.core.data.generator import GeneratorConfig, generate
from src.core.data.manifest import DatasetManifest, read_manifest
from src.core.evaluation.extract import dump_attention, extract_descriptors
from src.core.evaluation.fvec import read_fvec, write_fvec
from src.core.evaluation.metrics import EvalProtocol, evaluate as evaluate_descriptors, localization_ratio
from src.core.evaluation.report import format_table, write_report
from src.core.models.attention import NEUTRAL_GATE
from src.core.models.network import build_model
from src.core.tensor.checkpoint import load_checkpoint
from src.core.tensor.tensor import set_default_dtype
from src.core.training.ablation import run_ablation, write_ablation_csv
from src.core.training.pipeline import flow_params, make_loader, train_model

logger = structlog.get_logger(__name__)

# RunConfig keys a subcommand may take from its flags
_RUN_KEYS = set(RunConfig.model_fields)


def resolve_config(args: argparse.Namespace, config_path: str | None = None, **extra: object) -> RunConfig:
    """Config file (``--config`` or ``config_path``) overridden by any RunConfig flag given."""
    overrides = {k: v for k, v in vars(args).items() if k in _RUN_KEYS and v is not None}
    overrides.update({k: v for k, v in extra.items() if v is not None})
    return load_run_config(args.config or config_path, overrides)


def _manifest(path: str) -> DatasetManifest:
    location = Path(path)
    if not location.exists():
        raise ConfigError(f"manifest not found: {path}")
    if location.is_dir() and not (location / "manifest.txt").exists():
        raise ConfigError(f"no manifest.txt in {path}")
    return read_manifest(location)


def gen_data(args: argparse.Namespace) -> None:
    config = resolve_config(args, data_dir=args.out)
    try:
        generator_config = GeneratorConfig(
            seed=config.seed,
            num_identities=args.ids,
            clips_per_identity=args.clips,
            frames_per_clip=args.frames,
            height=args.height,
            width=args.width,
            noise_sigma=args.noise,
            tracklet_jitter=args.jitter,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid generator settings: {e}") from e
    manifest = generate(generator_config, args.out, workers=config.workers)
    config.write(args.out, "gen_data_config.txt")
    print(f"{len(manifest.records)} clips, {manifest.num_identities} identities -> {args.out}")


def flow(args: argparse.Namespace) -> None:
    manifest = _manifest(args.manifest)
    config = resolve_config(args, data_dir=manifest.root)
    compute_flows(manifest, flow_params(config), workers=config.workers)
    config.write(manifest.root, "flow_config.txt")


def train(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    manifest = _manifest(config.data_dir)
    out_dir = Path(config.out_dir)
    config.write(out_dir)
    run = train_model(config, manifest, out_dir)
    last = run.history[-1] if run.history else None
    logger.info(
        "Training finished",
        out_dir=str(out_dir),
        epochs=len(run.history),
        id_loss=last.id_loss if last else None,
        triplet_loss=last.triplet_loss if last else None,
    )


def extract(args: argparse.Namespace) -> None:
    checkpoint = Path(args.checkpoint)
    run_config = checkpoint.parent / RESOLVED_CONFIG_NAME
    config = resolve_config(args, config_path=str(run_config) if run_config.exists() else None)
    set_default_dtype(config.precision)
    state = load_checkpoint(checkpoint)
    if "classifier.w" not in state:
        raise ShapeError(f"checkpoint {checkpoint} has no classifier weights")
    model = build_model(config, num_identities=int(state["classifier.w"].shape[0]))
    model.load_state_dict(state)

    manifest = _manifest(args.manifest)
    loader = make_loader(config, manifest)
    extraction = extract_descriptors(
        model,
        loader,
        manifest.split(args.split),
        config.eval_seq_len,
        config.frame_height,
        config.frame_width,
        config.flow_cap,
        keep_attention=bool(args.dump_attention),
    )
    out = Path(args.out)
    write_fvec(out, extraction.descriptors)
    config.write(out.parent, "extract_config.txt")
    print(f"{len(extraction.descriptors)} descriptors of dim {extraction.descriptors.dim} -> {out}")

    if args.dump_attention:
        if extraction.attention is None:
            logger.warning("Model has no attention maps to dump", mode=config.mode)
            return
        count = dump_attention(args.dump_attention, extraction.descriptors.clip_ids, extraction.attention)
        logger.info("Attention maps written", directory=args.dump_attention, files=count)
        if extraction.masks and all(m is not None for m in extraction.masks):
            maps = np.concatenate(extraction.attention)
            masks = np.concatenate(extraction.masks)
            ratio = localization_ratio(maps, masks)
            contrast = localization_ratio(maps, masks, neutral=NEUTRAL_GATE)
            print(f"localization ratio (inside/outside mask): {ratio:.4f}")
            print(f"localization ratio above the neutral gate: {contrast:.4f}")


def evaluate(args: argparse.Namespace) -> None:
    config = resolve_config(args, ranks=args.ranks)
    for role, path in (("query", args.query), ("gallery", args.gallery)):
        if Path(path).is_file() and Path(path).stat().st_size == 0:
            raise ConfigError(f"{role} file {path} is empty")
    queries = read_fvec(args.query)
    gallery = read_fvec(args.gallery)
    if len(queries) == 0:
        raise ConfigError(f"query file {args.query} holds no descriptors")
    if len(gallery) == 0:
        raise ConfigError(f"gallery file {args.gallery} holds no descriptors")
    if queries.dim != gallery.dim:
        raise ShapeError(f"query dim {queries.dim} != gallery dim {gallery.dim}")

    report = evaluate_descriptors(queries, gallery, EvalProtocol(distance=config.distance))
    out = Path(args.out) if args.out else Path(args.query).parent / "report.csv"
    write_report(out, report, config.ranks)
    config.write(out.parent, "eval_config.txt")
    sys.stdout.write(format_table(report, config.ranks))


def ablate(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    manifest = _manifest(config.data_dir)
    out_dir = Path(config.out_dir)
    config.write(out_dir, "ablate_config.txt")
    manifest_path = Path(manifest.root) / "manifest.txt"
    rows = run_ablation(args.axis, config, manifest_path, workers=config.workers)
    path = write_ablation_csv(out_dir / f"ablation_{args.axis}.csv", rows)
    sys.stdout.write(path.read_text(encoding="utf-8"))
