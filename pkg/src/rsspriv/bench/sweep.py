"""Parameter sweeps: obfuscate the train and test blocks, attack, and score."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np

from .. import rssmap
from ..adversary import InferenceAdversary
from ..dataset import Dataset, FeatureMatrix, NormStats, fit_normalizer, normalize, read_dataset_source, split
from ..metrics import composite_privacy, composite_utility, utility_report
from ..privatizers import GapPrivatizer, ItPrivatizer, LdpPrivatizer, NoisePrivatizer
from .config import PrivatizerSpec, SweepConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TradeoffRow:
    privatizer: str
    param: float
    seed: int
    variant: str
    p1: float
    p2: float
    p: float
    u1: float
    u2: float
    u: float
    rmse_dbm: float
    status: str = "ok"
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


TRADEOFF_COLUMNS = tuple(f.name for f in fields(TradeoffRow))
_NAN = float("nan")


@dataclass(frozen=True)
class PreparedData:
    """``pilot`` fits the privatizers; ``train`` trains the adversary (the same block unless disjoint)."""

    dataset: Dataset
    stats: NormStats
    train: FeatureMatrix
    test: FeatureMatrix
    pilot: FeatureMatrix


@lru_cache(maxsize=8)
def _prepare(dataset_json: str, base_dir: str | None, fraction: float, split_seed: int, pilot: float | None) -> PreparedData:
    d = read_dataset_source(json.loads(dataset_json), base_dir)
    sp = split(d, fraction, split_seed)
    stats = fit_normalizer(d, sp.train)
    f = normalize(d, stats)
    train, test = f.take(sp.train), f.take(sp.test)
    if pilot is None:
        return PreparedData(d, stats, train, test, train)
    inner = split(len(sp.train), pilot, split_seed + 1)
    return PreparedData(d, stats, train.take(inner.test), test, train.take(inner.train))


def prepare(cfg: SweepConfig) -> PreparedData:
    """Load or synthesize the dataset, split it, and normalize with train-only statistics."""
    base = str(cfg.base_dir) if cfg.base_dir is not None else None
    source = {k: v for k, v in cfg.dataset.items() if k not in ("train_fraction", "split_seed", "pilot_fraction")}
    return _prepare(json.dumps(source, sort_keys=True), base, cfg.train_fraction, cfg.split_seed, cfg.pilot_fraction)


def make_privatizer(spec: PrivatizerSpec, param: float, seed: int, cfg: SweepConfig):
    """Unfitted sklearn-style privatizer for one grid point."""
    opts = dict(spec.options)
    w = cfg.weights
    if spec.name == "noise":
        return NoisePrivatizer(sigma=param, random_state=seed, **opts)
    if spec.name == "gldp":
        opts.setdefault("mechanism", "gaussian-analytic")
        return LdpPrivatizer(epsilon=param, random_state=seed, **opts)
    if spec.name == "lldp":
        opts.setdefault("mechanism", "truncated-laplacian")
        return LdpPrivatizer(epsilon=param, random_state=seed, **opts)
    if spec.name == "gap":
        return GapPrivatizer(rho=param, v1=w.v1, v2=w.v2, w1=w.w1, w2=w.w2, random_state=seed, **opts)
    if spec.name == "it":
        return ItPrivatizer(mu1=param, w1=w.w1, w2=w.w2, random_state=seed, **opts)
    raise ValueError(f"unknown privatizer {spec.name!r}")


def obfuscate_blocks(cfg: SweepConfig, data: PreparedData, spec: PrivatizerSpec, param: float, seed: int):
    """Fit the privatizer on the pilot block and obfuscate the adversary-training and test blocks."""
    est = make_privatizer(spec, param, seed, cfg)
    est.fit(data.pilot.values, data.pilot.user_ids)
    return est.transform(data.train.values), est.transform(data.test.values)


def train_eval_adversary(cfg: SweepConfig, data: PreparedData, y_train, seed: int, weights=None, labels=None, locs=None):
    w = weights or cfg.weights
    adv = InferenceAdversary(n_users=data.dataset.k, v1=w.v1, v2=w.v2, random_state=seed, **cfg.schedule)
    return adv.fit(y_train, data.train.user_ids if labels is None else labels,
                   data.train.locations if locs is None else locs)


def obfuscated_rmse(data: PreparedData, y_train) -> float:
    """RSS-map RMSE in dBm: model fit on obfuscated training rows, scored on the clean test block."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", rssmap.RankDeficiencyWarning)
        model = rssmap.fit(y_train)
    return rssmap.rmse(model, data.test, data.stats)


def run_one(cfg: SweepConfig, spec: PrivatizerSpec, param: float, seed: int) -> TradeoffRow:
    """One (privatizer, parameter, seed) cell against its Baseline adversary; errors become a failed row."""
    t0 = time.perf_counter()
    try:
        data = prepare(cfg)
        y_tr, y_te = obfuscate_blocks(cfg, data, spec, param, seed)
        adv = train_eval_adversary(cfg, data, y_tr, seed)
        priv = adv.evaluate(y_te, data.test.user_ids, data.test.locations, cfg.weights)
        util = utility_report(data.test.values, y_te, cfg.weights, cfg.u2_block)
        row = TradeoffRow(spec.name, float(param), int(seed), "baseline", priv.p1, priv.p2, priv.composite,
                          util.u1, util.u2, util.composite, obfuscated_rmse(data, y_tr))
    except Exception as exc:  # noqa: BLE001 - a failed cell must not abort the sweep
        log.warning("%s %s=%r seed %d failed: %s", spec.name, spec.param_name, param, seed, exc)
        row = TradeoffRow(spec.name, float(param), int(seed), "baseline", *([_NAN] * 7),
                          status=f"failed: {type(exc).__name__}: {exc}")
    return _with_time(row, time.perf_counter() - t0)


def _with_time(row: TradeoffRow, seconds: float) -> TradeoffRow:
    d = asdict(row)
    d["wall_time"] = round(seconds, 3)
    return TradeoffRow(**d)


def _run_task(args):
    return run_one(*args)


def sweep_tasks(cfg: SweepConfig, privatizers=None, params=None, seeds=None):
    """Canonically ordered ``(cfg, spec, param, seed)`` tasks."""
    names = set(privatizers) if privatizers else None
    seeds = tuple(seeds) if seeds is not None else cfg.seeds
    tasks = []
    for spec in cfg.privatizers:
        if names is not None and spec.name not in names:
            continue
        grid = tuple(params) if params is not None else spec.grid
        for param in sorted(grid):
            for seed in seeds:
                tasks.append((cfg, spec, float(param), int(seed)))
    return tasks


def run_sweep(cfg: SweepConfig, privatizers=None, params=None, seeds=None, workers=None) -> list[TradeoffRow]:
    """Run every grid cell; rows come back in canonical (privatizer, param, seed) order."""
    tasks = sweep_tasks(cfg, privatizers, params, seeds)
    n_workers = workers or cfg.workers
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = [_run_task(t) for t in tasks]
    order = {s.name: i for i, s in enumerate(cfg.privatizers)}
    return sorted(rows, key=lambda r: (order.get(r.privatizer, len(order)), r.param, r.seed))


def recompute_composites(row: TradeoffRow, cfg: SweepConfig) -> tuple[float, float]:
    return composite_privacy(row.p1, row.p2, cfg.weights), composite_utility(row.u1, row.u2, cfg.weights)


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_tradeoff_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRADEOFF_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in TRADEOFF_COLUMNS])


def read_tradeoff_csv(path) -> list[TradeoffRow]:
    types = {f.name: f.type for f in fields(TradeoffRow)}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            vals = {}
            for k, v in raw.items():
                t = types[k]
                vals[k] = int(v) if t in ("int", int) else float(v) if t in ("float", float) else v
            rows.append(TradeoffRow(**vals))
    return rows


def failures(rows) -> list[TradeoffRow]:
    return [r for r in rows if not r.ok]


def spearman_trend(rows, privatizer: str, metric: str) -> float:
    """Mean over seeds of the Spearman correlation between the parameter and ``metric``."""
    from scipy.stats import spearmanr

    by_seed: dict[int, list[TradeoffRow]] = {}
    for r in rows:
        if r.privatizer == privatizer and r.ok:
            by_seed.setdefault(r.seed, []).append(r)
    vals = []
    for seed_rows in by_seed.values():
        x = [r.param for r in seed_rows]
        y = [getattr(r, metric) for r in seed_rows]
        if len(set(x)) > 1:
            vals.append(float(spearmanr(x, y).statistic) if len(set(y)) > 1 else 0.0)
    return float(np.mean(vals)) if vals else float("nan")
