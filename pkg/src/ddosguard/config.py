"""JSON run configuration.

Every section is optional and falls back to the dataclass defaults::

    {
      "seed": 1,
      "topology":  {TopologySpec fields},
      "scenario":  {ScenarioSpec fields},
      "windowing": {"delta_ms": 200, "measure_set": ["volume", "flow"]},
      "detector":  {"r": 6, "tolerance_factors": null},
      "coop":      {"sa_threshold": null, "local_r": 6, "central_r": 6,
                    "query_on": true, "retention": 16},
      "suite":     {"r_values": [1, ..., 12],
                    "families": [{"name", "runs", "seed_start",
                                  "topology": {...}, "scenario": {...}}]}
    }

Unknown keys and wrongly typed values raise :class:`ConfigError` naming the
dotted path of the offending field.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .coop import CoopConfig
from .detector import DEFAULT_R, DetectorConfig
from .evaluation import SuiteFamily, mixed_families
from .flow_model import WindowingConfig
from .simulator import ConfigError, ScenarioSpec, TopologySpec

__all__ = ["ConfigError", "RunConfig", "load_config", "apply_overrides"]

SECTIONS = ("seed", "topology", "scenario", "windowing", "detector", "coop", "suite")


def _check_type(value: Any, tp: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_type(value, inner[0], path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        (item, *_rest) = typing.get_args(tp)
        return tuple(_check_type(v, item, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, doc: Any, path: str):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object, got {doc!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown key")
    kwargs = {k: _check_type(v, hints[k], f"{path}.{k}") for k, v in doc.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class DetectorSection:
    r: float = DEFAULT_R
    tolerance_factors: tuple[float, ...] | None = None

    def config(self, arity: int) -> DetectorConfig:
        if self.tolerance_factors is not None:
            return DetectorConfig(self.tolerance_factors)
        return DetectorConfig.uniform(self.r, arity)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 1
    topology: TopologySpec = field(default_factory=TopologySpec)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    windowing: WindowingConfig = field(default_factory=WindowingConfig)
    detector: DetectorSection = field(default_factory=DetectorSection)
    coop: CoopConfig = field(default_factory=CoopConfig)
    families: tuple[SuiteFamily, ...] = field(default_factory=lambda: tuple(mixed_families(40)))
    r_values: tuple[float, ...] = tuple(float(r) for r in range(1, 13))
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def detector_config(self) -> DetectorConfig:
        return self.detector.config(len(self.windowing.measure_set))

    def canonical(self) -> dict:
        """Fully resolved configuration as plain JSON data."""
        return {
            "seed": self.seed,
            "topology": dataclasses.asdict(self.topology),
            "scenario": dataclasses.asdict(self.scenario),
            "windowing": {
                "delta_ms": self.windowing.delta_ms,
                "measure_set": list(self.windowing.measure_set),
            },
            "detector": {
                "r": self.detector.r,
                "tolerance_factors": None
                if self.detector.tolerance_factors is None
                else list(self.detector.tolerance_factors),
            },
            "coop": dataclasses.asdict(self.coop),
            "suite": {
                "r_values": list(self.r_values),
                "families": [
                    {
                        "name": f.name,
                        "runs": f.runs,
                        "seed_start": f.seed_start,
                        "topology": dataclasses.asdict(f.topology),
                        "scenario": dataclasses.asdict(f.scenario),
                    }
                    for f in self.families
                ],
            },
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _parse_families(doc: Any) -> tuple[SuiteFamily, ...]:
    if not isinstance(doc, list) or not doc:
        raise ConfigError("suite.families: expected a non-empty list")
    fams = []
    for i, fam in enumerate(doc):
        path = f"suite.families[{i}]"
        if not isinstance(fam, dict):
            raise ConfigError(f"{path}: expected an object")
        unknown = set(fam) - {"name", "runs", "seed_start", "topology", "scenario"}
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown key")
        fams.append(
            SuiteFamily(
                name=_check_type(fam.get("name", f"family{i}"), str, f"{path}.name"),
                topology=_build(TopologySpec, fam.get("topology"), f"{path}.topology"),
                scenario=_build(ScenarioSpec, fam.get("scenario"), f"{path}.scenario"),
                runs=_check_type(fam.get("runs", 20), int, f"{path}.runs"),
                seed_start=_check_type(fam.get("seed_start", 1), int, f"{path}.seed_start"),
            )
        )
    return tuple(fams)


def parse_config(doc: Any) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>: expected a JSON object")
    for key in doc:
        if key not in SECTIONS:
            raise ConfigError(f"{key}: unknown section")
    kwargs: dict[str, Any] = {"raw": copy.deepcopy(doc)}
    if "seed" in doc:
        kwargs["seed"] = _check_type(doc["seed"], int, "seed")
    kwargs["topology"] = _build(TopologySpec, doc.get("topology"), "topology")
    kwargs["scenario"] = _build(ScenarioSpec, doc.get("scenario"), "scenario")
    kwargs["windowing"] = _build(WindowingConfig, doc.get("windowing"), "windowing")
    kwargs["detector"] = _build(DetectorSection, doc.get("detector"), "detector")
    kwargs["coop"] = _build(CoopConfig, doc.get("coop"), "coop")
    suite = doc.get("suite") or {}
    if not isinstance(suite, dict):
        raise ConfigError("suite: expected an object")
    unknown = set(suite) - {"r_values", "families"}
    if unknown:
        raise ConfigError(f"suite.{sorted(unknown)[0]}: unknown key")
    if "families" in suite:
        kwargs["families"] = _parse_families(suite["families"])
    if "r_values" in suite:
        r_values = _check_type(suite["r_values"], tuple[float, ...], "suite.r_values")
        if not r_values:
            raise ConfigError("suite.r_values: must not be empty")
        kwargs["r_values"] = r_values
    cfg = RunConfig(**kwargs)
    det = cfg.detector
    if not det.r > 0:
        raise ConfigError(f"detector.r: must be positive, got {det.r}")
    if det.tolerance_factors is not None:
        if len(det.tolerance_factors) != len(cfg.windowing.measure_set):
            raise ConfigError("detector.tolerance_factors: one factor per measure required")
        if not all(r > 0 for r in det.tolerance_factors):
            raise ConfigError("detector.tolerance_factors: factors must be positive")
    if not all(r > 0 for r in cfg.r_values):
        raise ConfigError("suite.r_values: factors must be positive")
    cfg.topology.validate()
    cfg.scenario.validate()
    return cfg


def _coerce(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``KEY=VALUE`` overrides addressed by dotted path."""
    doc = copy.deepcopy(doc)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
        parts = key.split(".")
        node = doc
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"{key}: {part} is not an object")
            node = nxt
        node[parts[-1]] = _coerce(value)
    return doc


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    doc: Any = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such config file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<root>: expected a JSON object")
    return parse_config(apply_overrides(doc, overrides or []))
