"""
Writers for CSV tables and JSON reports
"""
from pathlib import Path
from typing import Any, Dict, Optional, TextIO
import json
import sys

import pandas as pd
import structlog

logger = structlog.get_logger(__name__)


def companion_path(path: str, suffix: str) -> str:
    """results.csv + trajectory -> results_trajectory.csv"""
    p = Path(path)
    return str(p.with_name(f"{p.stem}_{suffix}{p.suffix or '.csv'}"))


def write_table(frame: pd.DataFrame, path: Optional[str] = None, stream: TextIO = None):
    if path is None:
        frame.to_csv(stream or sys.stdout, index=False, float_format="%.17g")
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info("Table written", path=path, rows=len(frame))


def write_report(report: Dict[str, Any], path: Optional[str] = None, stream: TextIO = None):
    text = json.dumps(report, indent=2, default=str)
    if path is None:
        print(text, file=stream or sys.stdout)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text + "\n", encoding="utf-8")
    logger.info("Report written", path=path)
