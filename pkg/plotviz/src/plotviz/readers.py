"""Readers for the documented CSV schemas.

Only the public artifact formats are understood here; any other header is
rejected with a message naming the offending line.
"""

from __future__ import annotations

import numpy as np

SCHEMAS = {
    "profile": "t,x,sz",
    "heatmap": "t,x,re_g,im_g",
    "spectrum": "q,omega,s",
    "dispersion": "q,omega_peak",
}


class SchemaError(ValueError):
    pass


def read_rows(path: str, expected_header: str) -> np.ndarray:
    with open(path) as f:
        header = f.readline().strip()
        if header != expected_header:
            raise SchemaError(
                f"{path}: expected header {expected_header!r}, found {header!r}"
            )
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(expected_header.split(",")):
                raise SchemaError(f"{path}:{lineno}: wrong column count")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return np.asarray(rows)


def pivot(rows: np.ndarray, value_cols=(2,)):
    """Pivot (a, b, values...) rows onto the rectangular (a, b) grid."""
    avals = np.unique(rows[:, 0])
    bvals = np.unique(rows[:, 1])
    grids = [np.full((len(avals), len(bvals)), np.nan) for _ in value_cols]
    ia = {v: i for i, v in enumerate(avals)}
    ib = {v: i for i, v in enumerate(bvals)}
    for row in rows:
        for g, c in zip(grids, value_cols):
            g[ia[row[0]], ib[row[1]]] = row[c]
    for g in grids:
        if np.any(np.isnan(g)):
            raise SchemaError("incomplete grid: a (row, column) pair is missing")
    return avals, bvals, grids


def column_argmax(qs: np.ndarray, omegas: np.ndarray, s: np.ndarray):
    """Ridge maximum per q; ties break toward the smaller omega (argmax of
    an ascending omega grid returns the first maximum)."""
    return np.array([(q, omegas[int(np.argmax(s[i]))]) for i, q in enumerate(qs)])
