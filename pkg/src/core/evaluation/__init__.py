"""Distances, CMC/mAP, FVEC descriptor files and report rendering."""

from .extract import Extraction, dump_attention, extract_descriptors
from .fvec import read_fvec, write_fvec
from .metrics import DescriptorSet, EvalProtocol, EvalReport, distance_matrix, evaluate, localization_ratio
from .report import format_table, report_csv, write_report

__all__ = [
    "DescriptorSet",
    "EvalProtocol",
    "EvalReport",
    "Extraction",
    "distance_matrix",
    "dump_attention",
    "evaluate",
    "extract_descriptors",
    "format_table",
    "localization_ratio",
    "read_fvec",
    "report_csv",
    "write_fvec",
    "write_report",
]
