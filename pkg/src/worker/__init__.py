"""Parallel job execution for CPU-bound preprocessing."""

from .pool import parallel_map

__all__ = ["parallel_map"]
