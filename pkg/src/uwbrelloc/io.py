"""CSV datasets and estimate streams.

A dataset file is one table of typed rows after a mandatory header::

    record,t,c1,c2,c3,c4,c5
    NODE,robot,node,x,y
    GT,t,robot,x,y,theta
    ODO,t,robot,dx,dy,dtheta
    UWB,t,robot_i,node_k,robot_j,node_l,range
    END,t,ticks

NODE rows (optional, before any timed row) carry antenna layouts. The
closing END row records the last timestamp and the tick count, so a file cut
anywhere is detected as truncated. Numbers are written with 9 significant
digits, the precision simulated datasets are quantized to, so emit followed
by ingest is lossless.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Mapping, TextIO

import numpy as np

from .ranging import NodeLayout, RangeSet
from .simulator import SIGNIFICANT_DIGITS, Dataset

DATASET_HEADER = ["record", "t", "c1", "c2", "c3", "c4", "c5"]
ESTIMATE_HEADER = ["record", "t", "robot_i", "robot_j", "x", "y", "theta"]

_ARITY = {"NODE": 5, "GT": 6, "ODO": 6, "UWB": 7, "END": 3, "EST": 7}


class DatasetFormatError(ValueError):
    """Malformed input; ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


def _num(v: float) -> str:
    return f"{v:.{SIGNIFICANT_DIGITS}g}"


# -- emit ---------------------------------------------------------------------


def write_dataset(dataset: Dataset, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for r, layout in sorted(dataset.layouts.items()):
        for k, (x, y) in enumerate(layout.offsets):
            w.writerow(["NODE", r, k, _num(x), _num(y)])
    for k, t in enumerate(dataset.times):
        ts = _num(t)
        for r in dataset.robots:
            w.writerow(["GT", ts, r, *map(_num, dataset.ground_truth[r][k])])
        for r in dataset.robots:
            w.writerow(["ODO", ts, r, *map(_num, dataset.odometry[r][k])])
        for (i, j), rs in dataset.ranges[k].items():
            for a, b in zip(*np.nonzero(rs.mask)):
                w.writerow(["UWB", ts, i, int(a), j, int(b), _num(rs.ranges[a, b])])
    w.writerow(["END", _num(dataset.times[-1]) if len(dataset.times) else "0", len(dataset.times)])


def emit_dataset(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        write_dataset(dataset, fh)


def dataset_to_string(dataset: Dataset) -> str:
    buf = io.StringIO()
    write_dataset(dataset, buf)
    return buf.getvalue()


# -- ingest -------------------------------------------------------------------


class _Tick:
    __slots__ = ("t", "line", "gt", "odo", "uwb")

    def __init__(self, t: float, line: int):
        self.t = t
        self.line = line
        self.gt: dict[int, tuple[float, float, float]] = {}
        self.odo: dict[int, tuple[float, float, float]] = {}
        self.uwb: list[tuple[int, int, int, int, float, int]] = []


def _float(cell: str, line: int, col: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DatasetFormatError(f"cannot parse {cell!r} as a number", line, col) from None
    if not math.isfinite(v):
        raise DatasetFormatError(f"non-finite value {cell!r}", line, col)
    return v


def _int(cell: str, line: int, col: int) -> int:
    try:
        v = int(cell)
    except ValueError:
        raise DatasetFormatError(f"cannot parse {cell!r} as an integer id", line, col) from None
    if v < 0:
        raise DatasetFormatError(f"negative id {v}", line, col)
    return v


def read_dataset(lines: Iterable[str]) -> Dataset:
    text = list(lines)
    rows = csv.reader(text)
    header = next(rows, None)
    if header is None:
        raise DatasetFormatError("empty file; a header row is required", 1)
    if [h.strip() for h in header] != DATASET_HEADER:
        raise DatasetFormatError(f"bad header {','.join(header)!r}; expected {','.join(DATASET_HEADER)!r}", 1, 1)

    nodes: dict[int, dict[int, tuple[float, float]]] = {}
    ticks: list[_Tick] = []
    robots: list[int] = []
    last_line = len(text)
    end_seen = False

    def complete(tk: _Tick) -> bool:
        return all(r in tk.gt and r in tk.odo for r in robots)

    def last_complete() -> str:
        # without a trailer the final tick may be missing UWB rows
        done = [k for k, tk in enumerate(ticks[:-1]) if complete(tk)]
        if not done:
            return "no tick is complete"
        k = done[-1]
        return f"last complete tick is {k} (t={_num(ticks[k].t)})"

    for ln, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if end_seen:
                raise DatasetFormatError("rows after the END record", ln, 1)
            kind = row[0].strip()
            if kind not in _ARITY or kind == "EST":
                raise DatasetFormatError(f"unknown record type {kind!r}", ln, 1)
            if len(row) != _ARITY[kind]:
                raise DatasetFormatError(f"{kind} row needs {_ARITY[kind]} fields, got {len(row)}", ln, len(row) + 1 if len(row) < _ARITY[kind] else _ARITY[kind] + 1)
            if kind == "NODE":
                if ticks:
                    raise DatasetFormatError("NODE rows must precede timed rows", ln, 1)
                r, k = _int(row[1], ln, 2), _int(row[2], ln, 3)
                nodes.setdefault(r, {})[k] = (_float(row[3], ln, 4), _float(row[4], ln, 5))
                continue
            if kind == "END":
                n = _int(row[2], ln, 3)
                if n != len(ticks) or (ticks and _float(row[1], ln, 2) != ticks[-1].t):
                    raise DatasetFormatError(f"END record says {n} ticks ending at t={row[1]}, file has {len(ticks)}", ln, 3)
                end_seen = True
                continue
            t = _float(row[1], ln, 2)
            if ticks and t < ticks[-1].t:
                raise DatasetFormatError(f"non-monotone timestamps ({_num(t)} after {_num(ticks[-1].t)})", ln, 2)
            if not ticks or t > ticks[-1].t:
                if len(ticks) == 1 and not robots:
                    robots = list(ticks[0].gt)
                if ticks and not complete(ticks[-1]):
                    tk = ticks[-1]
                    missing = [r for r in robots if r not in tk.gt or r not in tk.odo]
                    raise DatasetFormatError(f"tick {len(ticks) - 1} (t={_num(tk.t)}) lacks GT/ODO rows for robots {missing}", ln, 2)
                ticks.append(_Tick(t, ln))
            tk = ticks[-1]
            if kind in ("GT", "ODO"):
                r = _int(row[2], ln, 3)
                if robots and r not in robots:
                    raise DatasetFormatError(f"robot {r} does not appear in the first tick", ln, 3)
                target = tk.gt if kind == "GT" else tk.odo
                if r in target:
                    raise DatasetFormatError(f"duplicate {kind} row for robot {r} at t={_num(t)}", ln, 3)
                target[r] = tuple(_float(row[c], ln, c + 1) for c in (3, 4, 5))  # type: ignore[assignment]
            else:
                i, k, j, m = (_int(row[c], ln, c + 1) for c in (2, 3, 4, 5))
                rng = _float(row[6], ln, 7)
                if rng <= 0:
                    raise DatasetFormatError(f"range must be > 0, got {row[6]!r}", ln, 7)
                if i == j:
                    raise DatasetFormatError(f"range between robot {i} and itself", ln, 5)
                tk.uwb.append((i, k, j, m, rng, ln))
        except DatasetFormatError as exc:
            if ln == last_line:
                raise DatasetFormatError(f"truncated input ({exc}); {last_complete()}", ln) from None
            raise

    if not ticks:
        raise DatasetFormatError("no GT/ODO/UWB rows", last_line)
    if not robots:
        robots = list(ticks[0].gt)
    if not end_seen or not complete(ticks[-1]):
        raise DatasetFormatError(f"truncated input: tick {len(ticks) - 1} is incomplete; {last_complete()}", last_line)
    return _assemble(ticks, robots, nodes)


def _assemble(ticks: list[_Tick], robots: list[int], nodes: Mapping[int, Mapping[int, tuple[float, float]]]) -> Dataset:
    layouts: dict[int, NodeLayout] = {}
    for r, entries in nodes.items():
        if sorted(entries) != list(range(len(entries))):
            raise DatasetFormatError(f"NODE rows for robot {r} must number nodes 0..{len(entries) - 1}")
        layouts[r] = NodeLayout(tuple(entries[k] for k in range(len(entries))))
    counts = {r: len(lay) for r, lay in layouts.items()}
    if not layouts:
        # infer block shapes from the highest node index seen per robot
        for tk in ticks:
            for i, k, j, m, _, _ in tk.uwb:
                counts[i] = max(counts.get(i, 0), k + 1)
                counts[j] = max(counts.get(j, 0), m + 1)

    times = np.array([tk.t for tk in ticks])
    gt = {r: np.array([tk.gt[r] for tk in ticks]) for r in robots}
    odo = {r: np.array([tk.odo[r] for tk in ticks]) for r in robots}
    ranges = []
    for tk in ticks:
        blocks: dict[tuple[int, int], np.ndarray] = {}
        for i, k, j, m, rng, ln in tk.uwb:
            for r, col in ((i, 3), (j, 5)):
                if r not in robots:
                    raise DatasetFormatError(f"unknown robot {r}", ln, col)
            if k >= counts.get(i, 0):
                raise DatasetFormatError(f"node {k} out of range for robot {i}", ln, 4)
            if m >= counts.get(j, 0):
                raise DatasetFormatError(f"node {m} out of range for robot {j}", ln, 6)
            blk = blocks.get((i, j))
            if blk is None:
                blk = blocks[(i, j)] = np.full((counts[i], counts[j]), np.nan)
            if not math.isnan(blk[k, m]):
                raise DatasetFormatError(f"duplicate range for nodes ({k}, {m})", ln, 7)
            blk[k, m] = rng
        ranges.append({p: RangeSet(p[0], p[1], tk.t, b) for p, b in blocks.items()})
    return Dataset(times, robots, gt, odo, ranges, layouts)


def ingest_dataset(path: str | Path) -> Dataset:
    with open(path, newline="") as fh:
        return read_dataset(fh.readlines())


def dataset_from_string(text: str) -> Dataset:
    return read_dataset(text.splitlines(keepends=True))


# -- estimates ----------------------------------------------------------------


def emit_estimates(times: np.ndarray, estimates: Mapping[tuple[int, int], np.ndarray], path: str | Path) -> None:
    """Write one EST row per pair and tick; NaN (never estimated) ticks are skipped."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_HEADER)
        for k, t in enumerate(times):
            for (i, j), series in estimates.items():
                if np.all(np.isfinite(series[k])):
                    w.writerow(["EST", _num(t), i, j, *map(_num, series[k])])


def ingest_estimates(path: str | Path, times: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Read an estimates file onto the tick grid ``times``; ticks without a row stay NaN."""
    index = {float(t): k for k, t in enumerate(times)}
    out: dict[tuple[int, int], np.ndarray] = {}
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or [h.strip() for h in header] != ESTIMATE_HEADER:
            raise DatasetFormatError(f"bad header; expected {','.join(ESTIMATE_HEADER)!r}", 1, 1)
        for ln, row in enumerate(rows, start=2):
            if not row:
                continue
            if row[0].strip() != "EST":
                raise DatasetFormatError(f"unknown record type {row[0]!r}", ln, 1)
            if len(row) != 7:
                raise DatasetFormatError(f"EST row needs 7 fields, got {len(row)}", ln)
            t = _float(row[1], ln, 2)
            if t not in index:
                raise DatasetFormatError(f"timestamp {row[1]} is not a tick of the truth dataset", ln, 2)
            pair = (_int(row[2], ln, 3), _int(row[3], ln, 4))
            series = out.setdefault(pair, np.full((len(times), 3), np.nan))
            series[index[t]] = [_float(row[c], ln, c + 1) for c in (4, 5, 6)]
    if not out:
        raise DatasetFormatError("no EST rows")
    return out
