"""Normal-profile training and threshold detection over windowed measures.

A window is anomalous when any measure exceeds its learned mean by strictly
more than ``r_j * sigma_j``. A deviation exactly equal to the threshold is
not an attack.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .flow_model import FLOW, VOLUME, WindowStats

DEFAULT_R = 6.0


class SchemaError(ValueError):
    """Measure arity or naming mismatch between detector inputs."""


class InsufficientTrainingError(ValueError):
    pass


@dataclass(frozen=True)
class NormalProfile:
    measure_names: tuple[str, ...]
    means: tuple[float, ...]
    std_devs: tuple[float, ...]
    training_window_count: int
    delta_ms: float = 200.0

    def __post_init__(self) -> None:
        n = len(self.measure_names)
        if len(self.means) != n or len(self.std_devs) != n:
            raise SchemaError("means, std_devs and measure_names must have equal length")
        if any(s < 0 for s in self.std_devs):
            raise ValueError("standard deviations must be non-negative")
        if self.training_window_count < 2:
            raise InsufficientTrainingError("a profile needs at least 2 training windows")

    @property
    def arity(self) -> int:
        return len(self.measure_names)

    def to_json(self) -> dict:
        return {
            "delta_ms": self.delta_ms,
            "training_window_count": self.training_window_count,
            "measures": [
                {"name": n, "mean": m, "std_dev": s}
                for n, m, s in zip(self.measure_names, self.means, self.std_devs)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> NormalProfile:
        try:
            measures = doc["measures"]
            return cls(
                measure_names=tuple(m["name"] for m in measures),
                means=tuple(float(m["mean"]) for m in measures),
                std_devs=tuple(float(m["std_dev"]) for m in measures),
                training_window_count=int(doc["training_window_count"]),
                delta_ms=float(doc["delta_ms"]),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed profile document: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> NormalProfile:
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DetectorConfig:
    """Per-measure tolerance factors; OR-combination is fixed."""

    tolerance_factors: tuple[float, ...] = (DEFAULT_R, DEFAULT_R)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tolerance_factors", tuple(float(r) for r in self.tolerance_factors))
        if any(not r > 0 for r in self.tolerance_factors):
            raise ValueError(f"tolerance factors must be positive: {self.tolerance_factors}")

    @classmethod
    def uniform(cls, r: float, arity: int = 2) -> DetectorConfig:
        return cls((r,) * arity)


@dataclass(frozen=True)
class Thresholds:
    measure_names: tuple[str, ...]
    xi: tuple[float, ...]


@dataclass(frozen=True)
class Verdict:
    is_attack: bool
    triggered_measures: frozenset[str]
    deviations: tuple[float, ...]


@dataclass
class DetectionReport:
    verdicts: list[Verdict]
    delta_ms: float
    window_indices: list[int] = field(default_factory=list)

    @property
    def first_detection_window(self) -> int | None:
        for w, v in zip(self.window_indices, self.verdicts):
            if v.is_attack:
                return w
        return None

    @property
    def detection_time_ms(self) -> float | None:
        w = self.first_detection_window
        return None if w is None else w * self.delta_ms

    @property
    def alarms(self) -> list[bool]:
        return [v.is_attack for v in self.verdicts]


def _measure_matrix(windows: Sequence[WindowStats]) -> tuple[tuple[str, ...], np.ndarray]:
    names = windows[0].measure_names
    for w in windows:
        if w.measure_names != names:
            raise SchemaError(
                f"window {w.window_index} has measures {w.measure_names}, expected {names}"
            )
    return names, np.array([w.measures for w in windows], dtype=float)


def build_profile(training: Sequence[WindowStats], delta_ms: float | None = None) -> NormalProfile:
    """Mean and sample standard deviation (divisor l - 1) of every measure."""
    if len(training) < 2:
        raise InsufficientTrainingError(
            f"need at least 2 training windows, got {len(training)}"
        )
    names, z = _measure_matrix(training)
    if delta_ms is None:
        delta_ms = training[0].window_end / training[0].window_index
    return NormalProfile(
        measure_names=names,
        means=tuple(float(x) for x in z.mean(axis=0)),
        std_devs=tuple(float(x) for x in z.std(axis=0, ddof=1)),
        training_window_count=len(training),
        delta_ms=float(delta_ms),
    )


def compute_thresholds(profile: NormalProfile, cfg: DetectorConfig) -> Thresholds:
    if len(cfg.tolerance_factors) != profile.arity:
        raise SchemaError(
            f"{len(cfg.tolerance_factors)} tolerance factors for {profile.arity} measures"
        )
    return Thresholds(
        profile.measure_names,
        tuple(
            math.inf if math.isinf(r) else r * s
            for r, s in zip(cfg.tolerance_factors, profile.std_devs)
        ),
    )


def detect_values(
    observed: Sequence[float], profile: NormalProfile, thr: Thresholds
) -> Verdict:
    """Verdict for a raw measure vector ordered like ``profile.measure_names``."""
    if not (len(observed) == profile.arity == len(thr.xi)):
        raise SchemaError(
            f"arity mismatch: observed {len(observed)}, profile {profile.arity}, "
            f"thresholds {len(thr.xi)}"
        )
    deviations = tuple(float(o) - m for o, m in zip(observed, profile.means))
    triggered = frozenset(
        name
        for name, d, xi in zip(profile.measure_names, deviations, thr.xi)
        if d > xi
    )
    return Verdict(bool(triggered), triggered, deviations)


def detect_window(stats: WindowStats, profile: NormalProfile, thr: Thresholds) -> Verdict:
    if stats.measure_names != profile.measure_names:
        raise SchemaError(
            f"window measures {stats.measure_names} do not match profile {profile.measure_names}"
        )
    return detect_values(stats.measures, profile, thr)


def detect_stream(
    windows: Sequence[WindowStats], profile: NormalProfile, cfg: DetectorConfig
) -> DetectionReport:
    if not windows:
        raise ValueError("detect_stream needs at least one window")
    thr = compute_thresholds(profile, cfg)
    return DetectionReport(
        verdicts=[detect_window(w, profile, thr) for w in windows],
        delta_ms=profile.delta_ms,
        window_indices=[w.window_index for w in windows],
    )


def volume_only_config(r: float = DEFAULT_R, measure_names: Sequence[str] = (VOLUME, FLOW)) -> DetectorConfig:
    """Tolerance vector that disables every measure except volume."""
    return DetectorConfig(tuple(r if n == VOLUME else math.inf for n in measure_names))


VERDICT_HEADER = ("window_index", "is_attack", "volume_deviation", "flow_deviation", "triggered")


def write_verdicts_csv(report: DetectionReport, names: Sequence[str], fh: io.TextIOBase) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(VERDICT_HEADER)
    vol = names.index(VOLUME) if VOLUME in names else None
    flo = names.index(FLOW) if FLOW in names else None
    for w, v in zip(report.window_indices, report.verdicts):
        writer.writerow(
            (
                w,
                int(v.is_attack),
                "" if vol is None else repr(v.deviations[vol]),
                "" if flo is None else repr(v.deviations[flo]),
                ";".join(n for n in names if n in v.triggered_measures),
            )
        )
