"""
Utility functions for the persistlam engine.
Logging setup, report/CSV persistence, code labels, validation helpers and
the deterministic chunked worker pool.
"""

import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from pythonjsonlogger import jsonlogger

from .config import settings

T = TypeVar("T")

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


# ===========================================
# LOGGING
# ===========================================

def setup_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """
    Install a single stream handler on the root logger.

    Args:
        level: log level name (defaults to settings)
        fmt: 'json' or 'text' (defaults to settings)
    """
    level = (level or settings.log_level()).upper()
    fmt = (fmt or settings.LOG_FORMAT).lower()

    handler = logging.StreamHandler(sys.stderr)
    if fmt == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(JSON_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.INFO))


# ===========================================
# CODES
# ===========================================

def code_label(symbols: Sequence[int]) -> str:
    """Dot-joined symbol string; the empty code is ''."""
    return ".".join(str(int(s)) for s in symbols)


def parse_code_label(label: str) -> Tuple[int, ...]:
    """Inverse of code_label."""
    label = label.strip()
    if not label:
        return ()
    return tuple(int(part) for part in label.split("."))


# ===========================================
# VALIDATION HELPERS
# ===========================================

def validate_positive(value: Any, name: str) -> Tuple[bool, Optional[float], Optional[str]]:
    """
    Validate a strictly positive finite number.

    Returns:
        Tuple of (is_valid, normalized_value, error_message)
    """
    try:
        number = float(value)
    except (TypeError, ValueError):
        return False, None, f"{name} must be a number, got {value!r}"
    if not math.isfinite(number) or number <= 0:
        return False, None, f"{name} must be positive and finite, got {number}"
    return True, number, None


def validate_values(raw: Iterable[Any]) -> Tuple[bool, Optional[List[float]], Optional[str]]:
    """Validate a non-empty list of finite sweep values."""
    values = []
    for item in raw:
        try:
            number = float(item)
        except (TypeError, ValueError):
            return False, None, f"sweep value {item!r} is not a number"
        if not math.isfinite(number):
            return False, None, f"sweep value {item!r} is not finite"
        values.append(number)
    if not values:
        return False, None, "sweep needs at least one value"
    return True, values, None


# ===========================================
# WORKER POOL
# ===========================================

def chunk_ranges(count: int, chunks: int) -> List[Tuple[int, int]]:
    """Split range(count) into at most `chunks` contiguous pieces."""
    chunks = max(1, min(chunks, count)) if count else 1
    bounds = np.linspace(0, count, chunks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def parallel_map(func: Callable[[Tuple[int, int]], T], count: int, threads: int) -> List[T]:
    """
    Apply func to contiguous index ranges and return results in range order.

    Results do not depend on `threads`; only the scheduling does.
    """
    ranges = chunk_ranges(count, max(1, threads))
    if threads <= 1 or len(ranges) == 1:
        return [func(r) for r in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, ranges))


# ===========================================
# PERSISTENCE
# ===========================================

def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def write_json(path: Path, payload: Any) -> None:
    """Write JSON with sorted keys so equal payloads give equal bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def read_json(path: Path) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def format_float(value: float) -> str:
    """Shortest round-tripping representation."""
    return repr(float(value))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write CSV with '.' decimals and '\\n' line endings; returns row count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
            count += 1
    return count


def read_csv(path: Path) -> Tuple[List[str], List[List[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]
