"""CSV schema shared by ``dump`` and ``analyze``.

Client files are ``client_<id>.csv`` with header ``x1..xd,w,y[,y0,y1]``;
truth sidecars are ``truths_<id>.csv`` with ``theta_1..theta_d,true_ate``.
Floats are written with ``repr`` so a write/read cycle is lossless.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .model import ClientDataset


class CsvFormatError(ValueError):
    pass


def client_header(d: int, potential: bool) -> list[str]:
    cols = [f"x{j}" for j in range(1, d + 1)] + ["w", "y"]
    return cols + (["y0", "y1"] if potential else [])


def write_client_csv(data: ClientDataset, out_dir, client_id: int) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"client_{client_id}.csv"
    pot = data.has_potential_outcomes
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(client_header(data.d, pot))
        for i in range(data.n):
            row = [repr(float(v)) for v in data.x[i]] + [str(int(data.w[i])), repr(float(data.y[i]))]
            if pot:
                row += [repr(float(data.y0[i])), repr(float(data.y1[i]))]
            wr.writerow(row)
    return path


def write_truths_csv(theta, true_ate: float, out_dir, client_id: int) -> Path:
    path = Path(out_dir) / f"truths_{client_id}.csv"
    theta = np.asarray(theta, dtype=float)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([f"theta_{j}" for j in range(1, theta.size + 1)] + ["true_ate"])
        wr.writerow([repr(float(v)) for v in theta] + [repr(float(true_ate))])
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row; errors carry row/column context."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CsvFormatError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path}:{i}: column {header[j]!r} has non-numeric value {cell!r}"
                ) from None
    return header, values


def read_client_csv(path) -> ClientDataset:
    """Load a file written by ``write_client_csv``."""
    header, values = read_table(path)
    xcols = sorted((h for h in header if re.fullmatch(r"x\d+", h)), key=lambda h: int(h[1:]))
    for col in ("w", "y"):
        if col not in header:
            raise CsvFormatError(f"{path}: missing column {col!r}")
    idx = {h: j for j, h in enumerate(header)}
    x = values[:, [idx[h] for h in xcols]]
    kw = {}
    if "y0" in idx and "y1" in idx:
        kw = dict(y0=values[:, idx["y0"]], y1=values[:, idx["y1"]])
    return ClientDataset(x, values[:, idx["w"]].astype(int), values[:, idx["y"]], **kw)


def read_truths_csv(path) -> tuple[np.ndarray, float]:
    header, values = read_table(path)
    theta_cols = [j for j, h in enumerate(header) if h.startswith("theta_")]
    return values[0, theta_cols], float(values[0, header.index("true_ate")])


def client_files(directory) -> list[Path]:
    """``client_<id>.csv`` files in ``directory`` ordered by numeric id."""
    found = [(int(m.group(1)), p) for p in Path(directory).glob("client_*.csv")
             if (m := re.fullmatch(r"client_(\d+)\.csv", p.name))]
    return [p for _, p in sorted(found)]


def write_table(columns: dict, path) -> Path:
    """Write named numeric columns of equal length."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[c], dtype=float) for c in names])
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(names)
        wr.writerows([repr(float(v)) for v in row] for row in data)
    return path
