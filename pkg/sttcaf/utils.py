import csv
import math
import os
from typing import Iterable, List, Optional, Sequence

import joblib

THREADS_ENV = "STTC_AF_THREADS"


def get_worker_count(requested: Optional[int] = None) -> int:
    """Number of joblib workers to use.

    ``STTC_AF_THREADS`` caps the count; without it every core is used.

    Raises:
        ValueError: If the environment value or ``requested`` is not a
            positive integer
    """
    available = joblib.cpu_count()
    override = os.environ.get(THREADS_ENV)
    if override:
        try:
            cap = int(override)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, but got '{override}'")
        if cap < 1:
            raise ValueError(f"{THREADS_ENV} must be at least 1, but got {cap}")
        available = min(available, cap)
    if requested is None:
        return available
    if requested < 1:
        raise ValueError(f"Worker count must be at least 1, but got {requested}")
    return min(requested, available)


def format_number(value: float) -> str:
    """Locale-free text for a CSV cell; integers stay integers."""
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return format(value, ".10g")


def format_db(value: float) -> str:
    """Compact dB label used in column names ("10", "12.5", "inf")."""
    return format_number(value).replace("+", "")


def write_csv(
    path: str,
    header: Sequence[str],
    rows: Iterable[Sequence],
    trailer: Optional[List[str]] = None,
) -> str:
    """Write an RFC-4180 style CSV with optional trailing '# ...' lines.

    Numbers are rendered with ``format_number`` so the bytes written depend
    only on the values.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [cell if isinstance(cell, str) else format_number(cell) for cell in row]
            )
        for line in trailer or []:
            f.write(f"# {line}\n")
    return path


def read_csv(path: str) -> List[List[str]]:
    """Read back a CSV written by ``write_csv``, skipping '#' lines."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        return [row for row in csv.reader(line for line in f if not line.startswith("#"))]
