"""Tagged text grids and delimited tables.

A grid file is a short ``key value`` header followed by one text row per
grid row, lowest y first::

    # proxlitho grid v1
    type height
    size 4 3
    pitch 0.5 um
    origin 0 0 um
    gap 240 um
    comment free text, one line
    data
    0 0.25 0.5 0.25
    ...

Values carry 9 significant digits, so a value read back and written again
produces identical text.
"""

from __future__ import annotations

import io
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

__all__ = ["GRID_TYPES", "GridFormatError", "Grid", "read_grid", "write_grid", "write_table", "atomic_write", "fmt"]

GRID_TYPES = ("transmission", "intensity", "dose", "height")
_MAGIC = "# proxlitho grid v1"
_UNITS = {"transmission": "1", "intensity": "1", "dose": "mJ/cm2", "height": "um"}


class GridFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Grid:
    """A 2-D cell-centred sample grid with its physical meaning."""

    kind: str
    values: np.ndarray
    pitch: float
    origin: tuple[float, float] = (0.0, 0.0)
    gap: float | None = None
    comment: str | None = None

    def __post_init__(self):
        if self.kind not in GRID_TYPES:
            raise ValueError(f"unknown grid type {self.kind!r}; expected one of {', '.join(GRID_TYPES)}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("grid values must be a non-empty 2-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        if not self.pitch > 0:
            raise ValueError("pitch must be positive")
        if self.comment is not None and ("\n" in self.comment or "\r" in self.comment):
            raise ValueError("grid comment must be a single line")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def unit(self) -> str:
        return _UNITS[self.kind]


def fmt(x: float) -> str:
    """Shortest stable text for a value at 9 significant digits."""
    s = f"{x:.9g}"
    return "0" if s == "-0" else s


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Replace ``path`` with ``text`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _render(grid: Grid) -> str:
    ny, nx = grid.values.shape
    out = [
        _MAGIC,
        f"type {grid.kind}",
        f"size {nx} {ny}",
        f"pitch {fmt(grid.pitch)} um",
        f"origin {fmt(grid.origin[0])} {fmt(grid.origin[1])} um",
    ]
    if grid.gap is not None:
        out.append(f"gap {fmt(grid.gap)} um")
    out.append(f"unit {grid.unit}")
    if grid.comment:
        out.append(f"comment {grid.comment.strip()}")
    out.append("data")
    out.extend(" ".join(fmt(v) for v in row) for row in grid.values)
    return "\n".join(out) + "\n"


def write_grid(target: str | os.PathLike | TextIO, grid: Grid) -> None:
    """Write ``grid`` to a path (atomically) or an open text stream."""
    text = _render(grid)
    if isinstance(target, (str, os.PathLike)):
        atomic_write(target, text)
    else:
        target.write(text)


def _float(tok: str, line: int, what: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise GridFormatError(f"malformed number {tok!r} for {what}", line) from None
    if not math.isfinite(v):
        raise GridFormatError(f"non-finite value {tok!r} for {what}", line)
    return v


def _parse(lines: Sequence[str], expect: str | Iterable[str] | None) -> Grid:
    if not lines or lines[0].strip() != _MAGIC:
        raise GridFormatError(f"not a grid file: first line must be {_MAGIC!r}", 1)
    head: dict[str, tuple[list[str], int]] = {}
    i = 1
    while i < len(lines):
        ln = i + 1
        tok = lines[i].split()
        i += 1
        if not tok or tok[0].startswith("#"):
            continue
        if tok[0] == "data":
            break
        if tok[0] in head:
            raise GridFormatError(f"duplicate header key {tok[0]!r}", ln)
        head[tok[0]] = (tok[1:], ln)
        if tok[0] == "comment":
            head["comment"] = ([lines[i - 1].strip()[len("comment"):].strip()], ln)
    else:
        raise GridFormatError("truncated file: no 'data' line", len(lines))
    data_start = i + 1

    for key in ("type", "size", "pitch"):
        if key not in head:
            raise GridFormatError(f"missing header key {key!r}", data_start - 1)
    toks, ln = head["type"]
    kind = toks[0] if len(toks) == 1 else " ".join(toks)
    if kind not in GRID_TYPES:
        raise GridFormatError(f"unknown grid type {kind!r}; expected one of {', '.join(GRID_TYPES)}", ln)
    if expect is not None:
        allowed = (expect,) if isinstance(expect, str) else tuple(expect)
        if kind not in allowed:
            raise GridFormatError(f"type mismatch: file holds a {kind!r} grid, expected {' or '.join(allowed)}", ln)
    toks, ln = head["size"]
    if len(toks) != 2 or not all(t.isdigit() and int(t) > 0 for t in toks):
        raise GridFormatError("size must be two positive integers 'nx ny'", ln)
    nx, ny = int(toks[0]), int(toks[1])
    toks, ln = head["pitch"]
    if len(toks) != 2 or toks[1] != "um":
        raise GridFormatError("pitch must be '<value> um'", ln)
    pitch = _float(toks[0], ln, "pitch")
    if pitch <= 0:
        raise GridFormatError("pitch must be positive", ln)
    origin = (0.0, 0.0)
    if "origin" in head:
        toks, ln = head["origin"]
        if len(toks) != 3 or toks[2] != "um":
            raise GridFormatError("origin must be '<x> <y> um'", ln)
        origin = (_float(toks[0], ln, "origin"), _float(toks[1], ln, "origin"))
    gap = None
    if "gap" in head:
        toks, ln = head["gap"]
        if len(toks) != 2 or toks[1] != "um":
            raise GridFormatError("gap must be '<value> um'", ln)
        gap = _float(toks[0], ln, "gap")
    if "unit" in head:
        toks, ln = head["unit"]
        if toks != [_UNITS[kind]]:
            raise GridFormatError(f"unit for a {kind} grid must be {_UNITS[kind]!r}", ln)

    rows = [(n, ln.split()) for n, ln in enumerate(lines[data_start - 1 :], start=data_start) if ln.strip()]
    count = sum(len(t) for _, t in rows)
    if len(rows) != ny or count != nx * ny:
        span = f"lines {rows[0][0]}-{rows[-1][0]}" if rows else f"after line {data_start - 1}"
        raise GridFormatError(
            f"header says {nx}x{ny} ({nx * ny} values) but payload has {count} values in {len(rows)} lines ({span})",
            rows[-1][0] if rows else data_start - 1,
        )
    values = np.empty((ny, nx))
    for r, (ln, tok) in enumerate(rows):
        if len(tok) != nx:
            raise GridFormatError(f"row has {len(tok)} values, expected {nx}", ln)
        for c, t in enumerate(tok):
            values[r, c] = _float(t, ln, "grid value")
    comment = head["comment"][0][0] if "comment" in head else None
    return Grid(kind, values, pitch, origin, gap, comment or None)


def read_grid(source: str | os.PathLike | TextIO, expect: str | Iterable[str] | None = None) -> Grid:
    """Read a grid file; ``expect`` restricts the accepted type tags."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    return _parse(text.splitlines(), expect)


def write_table(target: str | os.PathLike | TextIO, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> None:
    """Tab-delimited table with optional leading ``#`` comment lines."""
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    buf.write("\t".join(header) + "\n")
    for row in rows:
        buf.write("\t".join(fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    if isinstance(target, (str, os.PathLike)):
        atomic_write(target, buf.getvalue())
    else:
        target.write(buf.getvalue())
