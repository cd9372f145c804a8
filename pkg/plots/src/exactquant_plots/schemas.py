"""CSV schemas of the experiment outputs this package renders.

The columns must match the producing CLI exactly; rendering refuses files
whose header deviates so a stale or corrupted CSV cannot silently produce a
wrong figure.
"""

from __future__ import annotations

import csv

ENTROPY_COLUMNS = ["scheme", "t", "sigma", "lower", "measured", "upper"]
MSE_COLUMNS = ["mechanism", "eps", "gamma", "trial", "mse", "bits_var",
               "bits_fixed"]
BITS_COLUMNS = ["mechanism", "n", "t", "sigma", "mean_bits", "bound"]


class SchemaError(ValueError):
    """Raised when a CSV header deviates from the documented schema."""


def read_rows(path: str, columns: list[str]) -> list[dict]:
    """Rows of a schema-conforming CSV; raises SchemaError otherwise."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header != columns:
            raise SchemaError(
                f"{path}: header {header!r} does not match {columns!r}")
        rows = [dict(zip(columns, row)) for row in reader if row]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows
