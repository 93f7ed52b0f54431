"""Flow records and tumbling-window aggregation.

A trace is a time-ordered stream of :class:`FlowRecord` values. Records are
bucketed into consecutive windows of length ``delta_ms``; window ``w`` owns
the half-open interval ``((w - 1) * delta_ms, w * delta_ms]`` and a record at
time 0 belongs to window 1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

VOLUME = "volume"
FLOW = "flow"
KNOWN_MEASURES = (VOLUME, FLOW)

TRACE_HEADER = ("timestamp_ms", "flow_id", "bytes", "packets")
WINDOW_HEADER = ("window_index", "window_end_ms", "volume_bytes", "flow_count")


class RejectedRecordError(ValueError):
    """A trace record violates the record contract."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class FlowRecord:
    timestamp: float
    flow_id: str
    bytes: int
    packets: int = 0

    def validate(self, line: int | None = None) -> None:
        if self.timestamp < 0 or math.isnan(self.timestamp):
            raise RejectedRecordError(f"negative timestamp {self.timestamp}", line)
        if self.bytes < 0:
            raise RejectedRecordError(f"negative byte count {self.bytes}", line)
        if self.packets < 0:
            raise RejectedRecordError(f"negative packet count {self.packets}", line)
        if self.bytes == 0 and self.packets != 0:
            raise RejectedRecordError("packets without bytes", line)


@dataclass(frozen=True)
class WindowingConfig:
    delta_ms: float = 200.0
    measure_set: tuple[str, ...] = (VOLUME, FLOW)

    def __post_init__(self) -> None:
        object.__setattr__(self, "measure_set", tuple(self.measure_set))
        if not self.delta_ms > 0:
            raise ValueError(f"delta_ms must be positive, got {self.delta_ms}")
        if not self.measure_set:
            raise ValueError("measure_set must not be empty")
        if len(set(self.measure_set)) != len(self.measure_set):
            raise ValueError(f"duplicate measures in {self.measure_set}")
        unknown = [m for m in self.measure_set if m not in KNOWN_MEASURES]
        if unknown:
            raise ValueError(f"unknown measures {unknown}; known: {KNOWN_MEASURES}")


@dataclass(frozen=True)
class WindowStats:
    window_index: int
    window_end: float
    per_flow_bytes: Mapping[str, int] = field(default_factory=dict)
    measure_names: tuple[str, ...] = (VOLUME, FLOW)

    @property
    def volume_bytes(self) -> int:
        return sum(self.per_flow_bytes.values())

    @property
    def flow_count(self) -> int:
        return len(self.per_flow_bytes)

    @property
    def active_flows(self) -> list[str]:
        return sorted(self.per_flow_bytes)

    @property
    def measures(self) -> tuple[float, ...]:
        return tuple(aggregate_measure(self, j) for j in range(len(self.measure_names)))


def window_index_for(timestamp: float, delta_ms: float) -> int:
    """Index of the window owning ``timestamp`` (``ceil(t / delta)``, min 1)."""
    return max(1, math.ceil(timestamp / delta_ms))


def _measure_value(name: str, per_flow_bytes: Mapping[str, int]) -> float:
    if name == VOLUME:
        return sum(per_flow_bytes.values())
    if name == FLOW:
        # one unit per active flow
        return sum(1 for b in per_flow_bytes.values() if b > 0)
    raise ValueError(f"unknown measure {name!r}")


def aggregate_measure(window: WindowStats, measure_index: int) -> float:
    """Sum of per-flow contributions for measure ``measure_index``."""
    if not 0 <= measure_index < len(window.measure_names):
        raise IndexError(
            f"measure index {measure_index} out of range for {window.measure_names}"
        )
    return _measure_value(window.measure_names[measure_index], window.per_flow_bytes)


def window_partition(
    records: Iterable[FlowRecord],
    cfg: WindowingConfig | None = None,
    n_windows: int | None = None,
) -> list[WindowStats]:
    """Bucket records into tumbling windows.

    Windows run from 1 up to the last record's window, empty ones included.
    ``n_windows`` pads (never truncates) the output to a fixed length, which
    keeps traces observed at different monitoring points aligned.
    """
    cfg = cfg or WindowingConfig()
    recs = list(records)
    for i, rec in enumerate(recs):
        rec.validate(line=i)
    if not recs and not n_windows:
        return []
    recs.sort(key=lambda r: r.timestamp)

    buckets: dict[int, dict[str, int]] = {}
    for rec in recs:
        if rec.bytes == 0:
            continue
        w = window_index_for(rec.timestamp, cfg.delta_ms)
        bucket = buckets.setdefault(w, {})
        bucket[rec.flow_id] = bucket.get(rec.flow_id, 0) + rec.bytes

    last = window_index_for(recs[-1].timestamp, cfg.delta_ms) if recs else 0
    if n_windows is not None:
        last = max(last, n_windows)
    return [
        WindowStats(w, w * cfg.delta_ms, buckets.get(w, {}), cfg.measure_set)
        for w in range(1, last + 1)
    ]


def read_trace_csv(source: str | Path | io.TextIOBase) -> list[FlowRecord]:
    """Parse ``timestamp_ms,flow_id,bytes,packets`` rows, header required."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_trace_csv(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
        raise RejectedRecordError(
            f"expected header {','.join(TRACE_HEADER)}, got {header}", line=1
        )
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise RejectedRecordError(f"expected 4 fields, got {len(row)}", lineno)
        try:
            rec = FlowRecord(float(row[0]), row[1], int(row[2]), int(row[3]))
        except ValueError as exc:
            raise RejectedRecordError(str(exc), lineno) from exc
        rec.validate(lineno)
        records.append(rec)
    records.sort(key=lambda r: r.timestamp)
    return records


def _fmt_ts(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))


def write_trace_csv(records: Iterable[FlowRecord], fh: io.TextIOBase) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for r in records:
        writer.writerow((_fmt_ts(r.timestamp), r.flow_id, r.bytes, r.packets))


def write_windows_csv(
    windows: Sequence[WindowStats],
    fh: io.TextIOBase,
    truth: Sequence[bool] | None = None,
) -> None:
    header = WINDOW_HEADER + (("is_attack_truth",) if truth is not None else ())
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for i, w in enumerate(windows):
        row = [w.window_index, _fmt_ts(w.window_end), w.volume_bytes, w.flow_count]
        if truth is not None:
            row.append(int(bool(truth[i])))
        writer.writerow(row)


def read_windows_csv(
    source: str | Path | io.TextIOBase, measure_set: Sequence[str] = (VOLUME, FLOW)
) -> tuple[list[WindowStats], list[bool] | None]:
    """Load windowed stats emitted by :func:`write_windows_csv`.

    Per-flow identities are not stored in this format, so the returned windows
    carry synthetic flow ids that reproduce the volume and flow counts only.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_windows_csv(fh, measure_set)
    reader = csv.DictReader(source)
    fields = tuple(reader.fieldnames or ())
    if fields[:4] != WINDOW_HEADER:
        raise RejectedRecordError(f"unexpected window header {fields}", line=1)
    has_truth = "is_attack_truth" in fields
    windows, truth = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            volume = int(row["volume_bytes"])
            flows = int(row["flow_count"])
            idx = int(row["window_index"])
            end = float(row["window_end_ms"])
        except (TypeError, ValueError) as exc:
            raise RejectedRecordError(str(exc), lineno) from exc
        if volume < 0 or flows < 0 or (flows == 0 and volume > 0) or volume < flows:
            raise RejectedRecordError("inconsistent volume/flow counts", lineno)
        windows.append(WindowStats(idx, end, _synthetic_flows(volume, flows), tuple(measure_set)))
        if has_truth:
            truth.append(row["is_attack_truth"].strip() in ("1", "true", "True"))
    return windows, (truth if has_truth else None)


def _synthetic_flows(volume: int, flows: int) -> dict[str, int]:
    if flows == 0:
        return {}
    base, extra = divmod(volume, flows)
    return {f"_f{i}": base + (1 if i < extra else 0) for i in range(flows)}
