"""Horn–Schunck flow for every clip of a manifest, written as ``.flo`` files."""

from pathlib import Path

import numpy as np
import structlog

from src.core.data.imageio import read_image, to_unit
from src.core.data.manifest import DatasetManifest, write_manifest
from src.core.flow.flo_io import write_flo
from src.core.flow.horn_schunck import FlowParams, clip_flow
from src.worker.pool import parallel_map

logger = structlog.get_logger(__name__)


def _flow_job(job: tuple[str, str, list[str], FlowParams]) -> list[str]:
    root, clip_id, frame_paths, params = job
    base = Path(root)
    frames = np.stack([to_unit(read_image(base / p)) for p in frame_paths])
    relative = []
    for t, flow in enumerate(clip_flow(frames, params)):
        rel = f"flow/{clip_id}/{t:04d}.flo"
        write_flo(base / rel, flow)
        relative.append(rel)
    return relative


def compute_flows(
    manifest: DatasetManifest, params: FlowParams | None = None, workers: int | None = None
) -> DatasetManifest:
    """
    Estimate and store flows for all records and rewrite the manifest's flow column.

    Re-running with the same parameters rewrites identical files.
    """
    params = params or FlowParams()
    jobs = [(manifest.root, r.clip_id, r.frames, params) for r in manifest.records]
    results = parallel_map(_flow_job, jobs, workers=workers, label="flow")
    records = [r.model_copy(update={"flows": paths}) for r, paths in zip(manifest.records, results)]
    updated = manifest.model_copy(update={"records": records})
    path = write_manifest(Path(manifest.root) / "manifest.txt", updated)
    logger.info(
        "Flows estimated",
        manifest=str(path),
        clips=len(records),
        alpha=params.alpha,
        iterations=params.iterations,
    )
    return updated
