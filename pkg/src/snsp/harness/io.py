"""Snapshot and time-series persistence.

Snapshot layout: one ASCII header line ``SNSP1 M L ncomp t`` followed by
little-endian float64 samples, row-major over ``(x1, x2, x3)``, one block per
component. ``L`` and ``t`` are written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..spectral import GridSpec

__all__ = ["SnapshotError", "write_snapshot", "read_snapshot", "write_timeseries", "read_timeseries"]

MAGIC = "SNSP1"


class SnapshotError(ValueError):
    pass


def write_snapshot(path, field, t: float = 0.0, grid: GridSpec | None = None):
    """Write a scalar ``(M, M, M)`` or vector ``(3, M, M, M)`` field."""
    grid = grid or getattr(field, "grid", None)
    values = np.asarray(getattr(field, "values", field), dtype="<f8")
    ncomp = 1 if values.ndim == 3 else values.shape[0]
    M = values.shape[-1]
    if values.shape[-3:] != (M, M, M):
        raise SnapshotError(f"field shape {values.shape} is not cubic")
    L = grid.L if grid is not None else 2 * np.pi
    header = f"{MAGIC} {M} {float(L)!r} {ncomp} {float(t)!r}\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_snapshot(path, grid: GridSpec | None = None, M: int | None = None):
    """Return ``(values, meta)`` where ``meta`` has ``M``, ``L``, ``ncomp`` and ``t``.

    When ``grid`` (or ``M``) is given, a header with a different ``M`` is rejected.
    """
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        payload = fh.read()
    if len(header) != 5 or header[0] != MAGIC:
        raise SnapshotError(f"{path}: not an {MAGIC} snapshot")
    try:
        m_file, L, ncomp, t = int(header[1]), float(header[2]), int(header[3]), float(header[4])
    except ValueError as exc:
        raise SnapshotError(f"{path}: malformed header") from exc
    expect = grid.M if grid is not None else M
    if expect is not None and expect != m_file:
        raise SnapshotError(f"{path}: header has M={m_file}, expected M={expect}")
    n = ncomp * m_file**3
    if len(payload) != 8 * n:
        raise SnapshotError(f"{path}: payload has {len(payload)} bytes, expected {8 * n}")
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    shape = (m_file,) * 3 if ncomp == 1 else (ncomp, *(m_file,) * 3)
    return values.reshape(shape), {"M": m_file, "L": L, "ncomp": ncomp, "t": t}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_timeseries(path, rows):
    """Write dict rows as CSV; floats use ``repr`` so files are reproducible bit for bit."""
    rows = list(rows)
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in keys])


def read_timeseries(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
