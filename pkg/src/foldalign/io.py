"""CSV and JSON file formats.

Numbers are written with ``repr(float)``, the shortest string that round-trips
exactly, so write-then-read reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .foldnet import Codeword
from .geometry import PointCloud, SeriesFrameSet

FRAME_PATTERN = re.compile(r"^frame_(\d{4,})\.csv$")


class FormatError(ValueError):
    """Malformed input file; the message carries the path and line number."""


def fmt(value: float) -> str:
    return repr(float(value))


def _parse_float(token: str, path, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"{path}:{line}: cannot parse {token.strip()!r} as a number") from None


def write_cloud(cloud: PointCloud, path) -> None:
    with open(path, "w", newline="") as f:
        for x, y, z in cloud.points:
            f.write(f"{fmt(x)},{fmt(y)},{fmt(z)}\n")


def read_cloud(path, frame_index: int | None = None) -> PointCloud:
    rows = []
    with open(path, newline="") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 3:
                raise FormatError(f"{path}:{line_no}: expected 3 comma-separated values, got {len(parts)}")
            rows.append([_parse_float(p, path, line_no) for p in parts])
    if not rows:
        raise FormatError(f"{path}: no points")
    try:
        return PointCloud(np.array(rows), frame_index)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def frame_filename(i: int) -> str:
    return f"frame_{i:04d}.csv"


def write_series(series: SeriesFrameSet, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for stale in d.glob("frame_*.csv"):
        stale.unlink()
    for frame in series:
        write_cloud(frame, d / frame_filename(frame.frame_index))
    return d


def read_series(directory, minutes_per_frame: float = 1.0) -> SeriesFrameSet:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"series directory not found: {d}")
    found = {}
    for p in d.iterdir():
        m = FRAME_PATTERN.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise FormatError(f"{d}: no frame_NNNN.csv files")
    T = max(found)
    missing = [i for i in range(1, T + 1) if i not in found]
    if missing:
        raise FormatError(f"{d}: frames must be contiguous from 0001; missing {frame_filename(missing[0])}")
    frames = tuple(read_cloud(found[i], i) for i in range(1, T + 1))
    return SeriesFrameSet(frames, minutes_per_frame)


def _read_table(path, required: Sequence[str]) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}:1: empty file") from None
        header = [h.strip() for h in header]
        for col in required:
            if col not in header:
                raise FormatError(f"{path}:1: missing column {col!r}")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            rows.append((reader.line_num, row))
    return header, rows


def write_codewords(codes: Sequence[Codeword], path) -> None:
    dim = len(codes[0])
    with open(path, "w", newline="") as f:
        f.write(",".join(["frame"] + [f"c{i}" for i in range(dim)]) + "\n")
        for c in codes:
            f.write(",".join([str(c.frame_index)] + [fmt(v) for v in c.values]) + "\n")


def read_codewords(path) -> list[Codeword]:
    header, rows = _read_table(path, ["frame"])
    codes = []
    for line_no, row in rows:
        try:
            frame = int(row[0])
        except ValueError:
            raise FormatError(f"{path}:{line_no}: bad frame index {row[0]!r}") from None
        values = [_parse_float(v, path, line_no) for v in row[1:]]
        codes.append(Codeword(np.array(values), frame))
    if not codes:
        raise FormatError(f"{path}: no codeword rows")
    return codes


ALIGN_COLUMNS = ["query_frame", "raw_index", "monotone_index"]


def write_alignment(path, frames, raw, monotone, ground_truth=None) -> None:
    cols = ALIGN_COLUMNS + (["ground_truth_index"] if ground_truth is not None else [])
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for i in range(len(raw)):
            vals = [str(int(frames[i])), fmt(raw[i]), fmt(monotone[i])]
            if ground_truth is not None:
                vals.append(fmt(ground_truth[i]))
            f.write(",".join(vals) + "\n")


def read_alignment(path) -> dict[str, np.ndarray]:
    header, rows = _read_table(path, ALIGN_COLUMNS)
    out = {col: [] for col in header}
    for line_no, row in rows:
        for col, val in zip(header, row):
            out[col].append(_parse_float(val, path, line_no))
    result = {k: np.array(v) for k, v in out.items()}
    result["query_frame"] = result["query_frame"].astype(np.int64)
    return result


def write_ground_truth(path, ground_truth) -> None:
    with open(path, "w", newline="") as f:
        f.write("warped_frame,reference_index\n")
        for i, v in enumerate(ground_truth, start=1):
            f.write(f"{i},{fmt(v)}\n")


def read_ground_truth(path) -> np.ndarray:
    _, rows = _read_table(path, ["warped_frame", "reference_index"])
    values = []
    for expected, (line_no, row) in enumerate(rows, start=1):
        if int(_parse_float(row[0], path, line_no)) != expected:
            raise FormatError(f"{path}:{line_no}: warped_frame must run 1..T in order")
        values.append(_parse_float(row[1], path, line_no))
    return np.array(values)


def write_table(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def load_dataclass(cls, data: dict):
    """Build ``cls`` from a dict, rejecting unknown field names."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {', '.join(sorted(unknown))}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            v = data[f.name]
            kwargs[f.name] = tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
    return cls(**kwargs)
