"""Trace CSV files and binary graymap (PGM) snapshots."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from bzmarble.geometry import Mask
from bzmarble.measurement import PotentialTrace

TRACE_HEADER = ("time", "potential")

# graymap levels
OUTSIDE, QUIESCENT, EXCITED = 0, 128, 255


def write_trace_csv(trace: PotentialTrace, path) -> Path:
    """Write ``time,potential`` rows with round-trip (``repr``) precision, LF newlines."""
    path = Path(path)
    lines = [",".join(TRACE_HEADER)]
    for t, value in zip(trace.times, trace.samples):
        lines.append(f"{float(t)!r},{float(value)!r}")
    try:
        with open(path, "w", newline="\n", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc.strerror or exc}") from exc
    return path


def read_trace_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column ``time,value`` CSV (header optional) into arrays.

    Rows that are blank or start with ``#`` are skipped so that exported
    logger files with comments load as well.
    """
    path = Path(path)
    times, values = [], []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                    continue
                try:
                    t, value = float(row[0]), float(row[1])
                except (ValueError, IndexError):
                    if not times and lineno == 1:
                        continue  # header
                    raise ValueError(f"{path}:{lineno}: expected two numeric columns, got {row!r}") from None
                times.append(t)
                values.append(value)
    except OSError as exc:
        raise OSError(f"cannot read trace {path}: {exc.strerror or exc}") from exc
    return np.asarray(times), np.asarray(values)


def trace_from_csv(path) -> PotentialTrace:
    """Load a CSV as a trace; the time column must be evenly spaced."""
    times, values = read_trace_csv(path)
    if len(times) < 2:
        spacing = 1.0
        offset = 0
    else:
        steps = np.diff(times)
        spacing = float(steps.mean())
        if spacing <= 0 or np.max(np.abs(steps - spacing)) > 1e-6 * max(abs(spacing), 1.0) + 1e-9:
            raise ValueError(f"{path}: time column is not evenly spaced")
        offset = int(round(times[0] / spacing))
        if abs(offset * spacing - times[0]) > 1e-6 * spacing:
            # start time not on the sampling grid: keep spacing, drop the offset
            offset = 0
    return PotentialTrace(1, spacing, [float(v) for v in values], offset)


def snapshot_levels(u: np.ndarray, mask: Mask, threshold: float = 0.04) -> np.ndarray:
    """uint8 image: 255 excited (u > threshold), 128 other domain nodes, 0 outside."""
    if u.shape != mask.shape:
        raise ValueError(f"field shape {u.shape} does not match mask {mask.shape}")
    img = np.full(mask.shape, OUTSIDE, dtype=np.uint8)
    img[mask.in_domain] = QUIESCENT
    img[mask.in_domain & (u > threshold)] = EXCITED
    return img


def write_pgm(image: np.ndarray, path) -> Path:
    path = Path(path)
    image = np.ascontiguousarray(image, dtype=np.uint8)
    height, width = image.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            fh.write(image.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write snapshot to {path}: {exc.strerror or exc}") from exc
    return path


def write_snapshot(u: np.ndarray, mask: Mask, threshold: float, path) -> Path:
    return write_pgm(snapshot_levels(u, mask, threshold), path)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5, maxval 255) graymap written by :func:`write_pgm`."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary graymap")
    width, height = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos + 1)
    return pixels.reshape(height, width)
