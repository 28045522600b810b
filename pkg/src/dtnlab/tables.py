"""CSV tables: header row, '.' decimal, full-precision scientific notation."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17e}"
    return str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_matrix_csv(path, matrix, prefix: str = "col") -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    write_csv(path, [f"{prefix}{j}" for j in range(matrix.shape[1])], matrix.tolist())


def ordered_map(func, items, threads: int = 1):
    """``list(map(func, items))``, optionally on a thread pool; results keep input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log|y|`` against ``log x``."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.abs(np.asarray(y, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])
