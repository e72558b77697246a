"""P identities × K clips batch sampling."""

from collections import defaultdict

import numpy as np
import structlog

from src.common.errors import ConfigError
from src.core.data.manifest import ClipRecord

logger = structlog.get_logger(__name__)


class PKSampler:
    """
    Each epoch shuffles the identities and groups them P at a time; every identity
    contributes K clips (drawn with replacement when it has fewer than K).
    Identities left over after the last full group are skipped for that epoch.
    """

    def __init__(self, records: list[ClipRecord], identities_per_batch: int, clips_per_identity: int):
        if identities_per_batch < 2:
            raise ConfigError("a batch needs at least two identities")
        if clips_per_identity < 2:
            raise ConfigError("a batch needs at least two clips per identity")
        self.by_identity: dict[int, list[ClipRecord]] = defaultdict(list)
        for record in records:
            self.by_identity[record.identity].append(record)
        if len(self.by_identity) < identities_per_batch:
            raise ConfigError(
                f"training split has {len(self.by_identity)} identities, "
                f"need at least {identities_per_batch} per batch"
            )
        self.p = identities_per_batch
        self.k = clips_per_identity

    def __len__(self) -> int:
        return len(self.by_identity) // self.p

    def batches(self, rng: np.random.Generator) -> list[list[ClipRecord]]:
        identities = sorted(self.by_identity)
        order = rng.permutation(len(identities))
        batches = []
        for start in range(0, len(order) - self.p + 1, self.p):
            batch = []
            for index in order[start : start + self.p]:
                clips = self.by_identity[identities[index]]
                picks = rng.choice(len(clips), size=self.k, replace=len(clips) < self.k)
                batch.extend(clips[i] for i in picks)
            batches.append(batch)
        return batches
