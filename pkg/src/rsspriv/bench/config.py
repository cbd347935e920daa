"""Benchmark configuration: a JSON document with five sections.

``dataset``
    ``{"synthetic": {"k": 5, "n": 5000, "seed": 0, ...SynthConfig fields}}`` or
    ``{"csv": "path.csv", "schema": {...CsvSchema fields}}``, plus optional
    ``train_fraction`` (default 0.7), ``split_seed`` (default 0) and
    ``pilot_fraction``: when set, privatizers are fit on that share of the
    training block and the adversary trains on the disjoint remainder.
``privatizers``
    list of ``{"name": "noise"|"gldp"|"lldp"|"gap"|"it", "grid": [...],
    "options": {...}}``; the grid sweeps sigma, epsilon, epsilon, rho and
    mu1 respectively.
``metrics``
    ``{"v1", "v2", "w1", "w2"}`` composite weights (all default 1) and
    ``u2_block_size``: score U2 as the mean over row blocks of this size
    instead of one fit on the whole test block.
``adversary``
    ``{"seeds": [...], "variants": [...], "schedule": {...}}``; the schedule
    overrides :class:`~rsspriv.adversary.InferenceAdversary` training
    parameters.
``output``
    ``{"dir": "results", "workers": 1, "grid_bins": 20}``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from ..adversary import VARIANTS
from ..dataset import ConfigError
from ..metrics import MetricWeights

PARAM_NAMES = {"noise": "sigma", "gldp": "epsilon", "lldp": "epsilon", "gap": "rho", "it": "mu1"}

DEFAULT_GRIDS = {
    "noise": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
    "gldp": [1.0, 3.0, 10.0, 30.0, 100.0],
    "lldp": [1.0, 3.0, 10.0, 30.0, 100.0],
    "gap": [0.1, 0.3, 0.5, 0.7, 0.9],
    "it": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
}

_NUMBER = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "synthetic": {"type": "object"},
                "csv": {"type": "string"},
                "schema": {"type": "object"},
                "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "split_seed": {"type": "integer"},
                "pilot_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "privatizers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {
                    "name": {"enum": sorted(PARAM_NAMES)},
                    "grid": {"type": "array", "minItems": 1, "items": _NUMBER},
                    "options": {"type": "object"},
                },
            },
        },
        "metrics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                **{k: {"type": "number", "minimum": 0} for k in ("v1", "v2", "w1", "w2")},
                "u2_block_size": {"type": "integer", "minimum": 1},
            },
        },
        "adversary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
                "variants": {"type": "array", "minItems": 1, "items": {"enum": list(VARIANTS)}},
                "alternative_weights": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUMBER},
                "schedule": {"type": "object"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "workers": {"type": "integer", "minimum": 1},
                "grid_bins": {"type": "integer", "minimum": 1},
            },
        },
    },
}


@dataclass(frozen=True)
class PrivatizerSpec:
    name: str
    grid: tuple[float, ...]
    options: dict = field(default_factory=dict, hash=False, compare=False)

    @property
    def param_name(self) -> str:
        return PARAM_NAMES[self.name]


@dataclass
class SweepConfig:
    dataset: dict = field(default_factory=lambda: {"synthetic": {"k": 5, "n": 5000, "seed": 0}})
    privatizers: list[PrivatizerSpec] = field(default_factory=lambda: [PrivatizerSpec(n, tuple(g)) for n, g in DEFAULT_GRIDS.items()])
    weights: MetricWeights = field(default_factory=MetricWeights)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    variants: tuple[str, ...] = VARIANTS
    alternative_weights: tuple[float, float] = (0.8, 0.2)
    schedule: dict = field(default_factory=dict)
    out_dir: str = "results"
    workers: int = 1
    grid_bins: int = 20
    u2_block: int | None = None
    base_dir: Path | None = None

    @property
    def train_fraction(self) -> float:
        return float(self.dataset.get("train_fraction", 0.7))

    @property
    def split_seed(self) -> int:
        return int(self.dataset.get("split_seed", 0))

    @property
    def pilot_fraction(self) -> float | None:
        v = self.dataset.get("pilot_fraction")
        return None if v is None else float(v)

    def privatizer(self, name: str) -> PrivatizerSpec:
        for p in self.privatizers:
            if p.name == name:
                return p
        raise ConfigError(f"privatizer {name!r} is not configured")

    def to_dict(self) -> dict:
        w = self.weights
        metrics = {"v1": w.v1, "v2": w.v2, "w1": w.w1, "w2": w.w2}
        if self.u2_block is not None:
            metrics["u2_block_size"] = self.u2_block
        return {
            "dataset": copy.deepcopy(self.dataset),
            "privatizers": [{"name": p.name, "grid": list(p.grid), "options": dict(p.options)} for p in self.privatizers],
            "metrics": metrics,
            "adversary": {
                "seeds": list(self.seeds),
                "variants": list(self.variants),
                "alternative_weights": list(self.alternative_weights),
                "schedule": dict(self.schedule),
            },
            "output": {"dir": self.out_dir, "workers": self.workers, "grid_bins": self.grid_bins},
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (output section excluded)."""
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "SweepConfig":
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {where}: {exc.message}") from None
        ds = raw.get("dataset", {"synthetic": {"k": 5, "n": 5000, "seed": 0}})
        if ("synthetic" in ds) == ("csv" in ds):
            raise ConfigError("dataset needs exactly one of 'synthetic' or 'csv'")
        privs = []
        for p in raw.get("privatizers", [{"name": n} for n in DEFAULT_GRIDS]):
            grid = tuple(float(v) for v in p.get("grid", DEFAULT_GRIDS[p["name"]]))
            if p["name"] in ("gap", "it") and any(v < 0 or (p["name"] == "gap" and v > 1) for v in grid):
                raise ConfigError(f"{p['name']} grid values out of range: {grid}")
            if p["name"] in ("gldp", "lldp") and any(v <= 0 for v in grid):
                raise ConfigError(f"{p['name']} epsilon grid must be positive: {grid}")
            if p["name"] == "noise" and any(v < 0 for v in grid):
                raise ConfigError(f"noise sigma grid must be nonnegative: {grid}")
            privs.append(PrivatizerSpec(p["name"], grid, dict(p.get("options", {}))))
        names = [p.name for p in privs]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate privatizer entries: {names}")
        adv = raw.get("adversary", {})
        metrics = raw.get("metrics") or {}
        out = raw.get("output", {})
        return cls(
            dataset=copy.deepcopy(ds),
            privatizers=privs,
            weights=MetricWeights.from_dict({k: v for k, v in metrics.items() if k != "u2_block_size"}),
            u2_block=metrics.get("u2_block_size"),
            seeds=tuple(adv.get("seeds", (0, 1, 2, 3, 4))),
            variants=tuple(adv.get("variants", VARIANTS)),
            alternative_weights=tuple(adv.get("alternative_weights", (0.8, 0.2))),
            schedule=dict(adv.get("schedule", {})),
            out_dir=out.get("dir", "results"),
            workers=int(out.get("workers", 1)),
            grid_bins=int(out.get("grid_bins", 20)),
            base_dir=Path(base_dir) if base_dir is not None else None,
        )


def load_config(path) -> SweepConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return SweepConfig.from_dict(raw, base_dir=path.parent)
