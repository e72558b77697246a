"""
Cross-camera ranking metrics.

For every query, gallery entries of the same identity seen by the same camera are removed
before ranking. The remaining gallery is sorted by distance, ties broken by gallery index.
"""

import numpy as np
import structlog
from pydantic import BaseModel, Field, field_validator

from src.common.errors import ShapeError

logger = structlog.get_logger(__name__)


class DescriptorSet(BaseModel):
    """Clip descriptors (N×D) with their labels."""

    model_config = {"arbitrary_types_allowed": True}

    vectors: np.ndarray
    identities: np.ndarray
    cameras: np.ndarray
    clip_ids: list[str] = Field(default_factory=list)

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


class EvalProtocol(BaseModel):
    distance: str = "euclidean"
    exclude_same_camera: bool = True

    @field_validator("distance")
    @classmethod
    def _check_distance(cls, value: str) -> str:
        if value not in ("euclidean", "cosine"):
            raise ValueError(f"unknown distance '{value}'")
        return value


class EvalReport(BaseModel):
    cmc: list[float]
    map: float
    num_queries: int
    excluded_queries: int = 0

    def rank(self, k: int) -> float:
        """CMC at rank ``k``; ranks past the gallery size repeat the last value."""
        if not self.cmc:
            return 0.0
        return self.cmc[min(k, len(self.cmc)) - 1]


def distance_matrix(queries: np.ndarray, gallery: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Q×G distances between rows of ``queries`` and ``gallery``."""
    queries = np.asarray(queries, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    if queries.ndim != 2 or gallery.ndim != 2 or queries.shape[1] != gallery.shape[1]:
        raise ShapeError(f"descriptor dimensions differ: {queries.shape} vs {gallery.shape}")
    if metric == "cosine":
        qn = np.linalg.norm(queries, axis=1, keepdims=True)
        gn = np.linalg.norm(gallery, axis=1, keepdims=True)
        q = queries / np.where(qn > 0, qn, 1.0)
        g = gallery / np.where(gn > 0, gn, 1.0)
        return 1.0 - q @ g.T
    if metric != "euclidean":
        raise ValueError(f"unknown distance '{metric}'")
    out = np.empty((len(queries), len(gallery)))
    for i, q in enumerate(queries):
        diff = gallery - q
        out[i] = np.sqrt((diff * diff).sum(axis=1))
    return out


def average_precision(matches: np.ndarray) -> float:
    """Mean of precision@rank over the ranks holding a correct match."""
    hits = np.flatnonzero(matches)
    return float(np.mean((np.arange(len(hits)) + 1) / (hits + 1)))


def evaluate(
    queries: DescriptorSet, gallery: DescriptorSet, protocol: EvalProtocol | None = None
) -> EvalReport:
    protocol = protocol or EvalProtocol()
    dist = distance_matrix(queries.vectors, gallery.vectors, protocol.distance)
    cmc_hits = np.zeros(len(gallery))
    aps = []
    excluded = 0
    for i in range(len(queries)):
        keep = np.ones(len(gallery), dtype=bool)
        if protocol.exclude_same_camera:
            keep &= ~(
                (gallery.identities == queries.identities[i])
                & (gallery.cameras == queries.cameras[i])
            )
        candidates = np.flatnonzero(keep)
        order = candidates[np.argsort(dist[i, candidates], kind="stable")]
        matches = gallery.identities[order] == queries.identities[i]
        if not matches.any():
            excluded += 1
            continue
        cmc_hits[int(np.argmax(matches)) :] += 1
        aps.append(average_precision(matches))

    valid = len(queries) - excluded
    if excluded:
        logger.info("Queries without a valid gallery match", excluded=excluded, total=len(queries))
    cmc = (cmc_hits / valid).tolist() if valid else [0.0] * len(gallery)
    return EvalReport(
        cmc=cmc,
        map=float(np.mean(aps)) if aps else 0.0,
        num_queries=len(queries),
        excluded_queries=excluded,
    )


def _block_mean(mask: np.ndarray, rows: int, cols: int) -> np.ndarray:
    h, w = mask.shape
    row_edges = (np.arange(rows) * h) // rows
    col_edges = (np.arange(cols) * w) // cols
    summed = np.add.reduceat(np.add.reduceat(mask.astype(np.float64), row_edges, axis=0), col_edges, axis=1)
    heights = np.diff(np.append(row_edges, h))
    widths = np.diff(np.append(col_edges, w))
    return summed / (heights[:, None] * widths[None, :])


def localization_ratio(attention: np.ndarray, masks: np.ndarray, neutral: float = 0.0) -> float:
    """
    Mean attention inside ground-truth masks divided by the mean outside.

    Args:
        attention: N×1×I×J attention maps
        masks: N×H×W boolean person masks, block-averaged to I×J and thresholded at 0.5
        neutral: Floor of the map's range, subtracted before taking the ratio; 0.5 scores
            maps bounded below by the neutral gate on their excess over it
    """
    if attention.ndim != 4 or masks.ndim != 3 or attention.shape[0] != masks.shape[0]:
        raise ShapeError(f"attention {attention.shape} and masks {masks.shape} do not align")
    rows, cols = attention.shape[2:]
    inside = np.stack([_block_mean(m, rows, cols) >= 0.5 for m in masks])
    values = attention[:, 0] - neutral
    if not inside.any() or inside.all():
        return float("nan")
    return float(values[inside].mean() / max(values[~inside].mean(), 1e-12))
