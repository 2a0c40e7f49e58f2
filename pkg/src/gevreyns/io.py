"""On-disk formats: GNSF field snapshots, trajectory directories, CSV series and key-value text."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .spectral import GridSpec, SpectralField

MAGIC = b"GNSF"
VERSION = 1
HEADER = struct.Struct("<4sIIdI")
FLAG_DIV_FREE = 1
FLAG_ZERO_MEAN = 2


class SnapshotFormatError(ValueError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# -- snapshots ----------------------------------------------------------------


def snapshot_bytes(f: SpectralField) -> bytes:
    """Header then coefficients in lexicographic ``k`` order (each axis from ``-n/2`` to ``n/2 - 1``)."""
    flags = 0
    if f.is_divergence_free():
        flags |= FLAG_DIV_FREE
    if f.zero_mean:
        flags |= FLAG_ZERO_MEAN
    head = HEADER.pack(MAGIC, VERSION, f.grid.n, float(f.grid.box_period), flags)
    c = np.fft.fftshift(f.coeffs, axes=(-3, -2, -1))
    body = np.ascontiguousarray(np.moveaxis(c, 0, -1)).astype("<c16").tobytes()
    return head + body


def write_snapshot(path, f: SpectralField) -> str:
    data = snapshot_bytes(f)
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def read_snapshot(path, dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, version, n, period, _flags = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    expected = HEADER.size + 3 * n**3 * 16
    if len(data) != expected:
        raise SnapshotFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    grid = GridSpec(n, period, dealias_fraction)
    c = np.frombuffer(data, dtype="<c16", offset=HEADER.size).reshape(n, n, n, 3)
    c = np.fft.ifftshift(np.moveaxis(c, -1, 0), axes=(-3, -2, -1)).astype(np.complex128)
    return SpectralField(grid, c)


def write_trajectory(directory, times: Sequence[float], fields: Sequence[SpectralField]) -> list[Path]:
    """Write ``snap_XXXXX.gnsf`` files plus ``index.csv`` with ``time,filename,sha256`` rows."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    rows = []
    for i, (t, f) in enumerate(zip(times, fields)):
        name = f"snap_{i:05d}.gnsf"
        digest = write_snapshot(d / name, f)
        rows.append((repr(float(t)), name, digest))
        paths.append(d / name)
    with open(d / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "filename", "sha256"])
        w.writerows(rows)
    return paths + [d / "index.csv"]


def read_trajectory(directory, verify: bool = True) -> tuple[list[float], list[SpectralField]]:
    d = Path(directory)
    times, fields = [], []
    with open(d / "index.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            p = d / row["filename"]
            if verify and sha256_file(p) != row["sha256"]:
                raise SnapshotFormatError(f"{p}: checksum mismatch")
            times.append(float(row["time"]))
            fields.append(read_snapshot(p))
    return times, fields


# -- tabular and text output ------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    if x is None:
        return ""
    return str(x)


def norm_column(s: float, a: float) -> str:
    return f"Hs_{s:g}_a{a:g}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, list(r)


def trajectory_rows(record):
    """Header and rows of a :class:`TrajectoryRecord` in the documented column layout."""
    keys = list(record.hs_norms)
    header = ["time", "energy"] + [norm_column(s, a) for s, a in keys] + ["dissipation_accum", "analyticity_radius"]
    rows = []
    for i, t in enumerate(record.times):
        radius = record.analyticity_radius[i] if record.analyticity_radius is not None else None
        rows.append([t, record.energy[i]] + [record.hs_norms[k][i] for k in keys]
                    + [record.dissipation_accum[i], radius])
    return header, rows


def write_trajectory_csv(path, record) -> None:
    header, rows = trajectory_rows(record)
    write_csv(path, header, rows)


def write_kv(path, items: Mapping[str, object], header: str | None = None) -> None:
    """One ``key = value`` per line; ``#`` lines are comments."""
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for k, v in items.items():
        if isinstance(v, (list, tuple)):
            v = ", ".join(_fmt(x) for x in v)
        lines.append(f"{k} = {_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_kv(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
