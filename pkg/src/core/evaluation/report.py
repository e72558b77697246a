"""EvalReport rendering: CSV rows and a plain-text table."""

from pathlib import Path

from src.common.errors import DatasetIOError
from src.core.evaluation.metrics import EvalReport


def report_csv(report: EvalReport, ranks: list[int]) -> str:
    """``rank,k,value`` rows for each requested rank, then ``mAP,value``."""
    lines = [f"rank,{k},{report.rank(k):.6f}" for k in sorted(set(ranks))]
    lines.append(f"mAP,{report.map:.6f}")
    return "\n".join(lines) + "\n"


def format_table(report: EvalReport, ranks: list[int]) -> str:
    rows = [("metric", "value")]
    rows += [(f"rank-{k}", f"{100 * report.rank(k):6.2f}%") for k in sorted(set(ranks))]
    rows.append(("mAP", f"{100 * report.map:6.2f}%"))
    rows.append(("queries", str(report.num_queries)))
    rows.append(("excluded", str(report.excluded_queries)))
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"


def write_report(path: Path | str, report: EvalReport, ranks: list[int]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report_csv(report, ranks), encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot write report: {e}", path) from e
    return path
