"""
Small helpers shared by the data, training and CLI layers.
"""

import numpy as np


def make_rng(*seed_parts: int) -> np.random.Generator:
    """Return a generator seeded deterministically from a sequence of integers."""
    return np.random.default_rng([int(part) for part in seed_parts])


def parse_int_list(text: str) -> list[int]:
    """
    Parse a comma-separated list of integers such as ``"1,5,10,20"``.

    Raises:
        ValueError: If any entry is not an integer
    """
    items = [part.strip() for part in text.split(",")]
    return [int(part) for part in items if part]


def parse_bool(text: str | bool) -> bool:
    """Parse ``true/false/1/0/yes/no`` flags."""
    if isinstance(text, bool):
        return text
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


def evenly_spaced_indices(n: int, k: int) -> list[int]:
    """Indices ``floor(i * (n - 1) / (k - 1))`` for ``i < k``; ``[0]`` when ``k == 1``."""
    if k <= 1:
        return [0]
    return [(i * (n - 1)) // (k - 1) for i in range(k)]
