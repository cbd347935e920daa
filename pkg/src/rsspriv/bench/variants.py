"""Privatizer x adversary-variant privacy table at a matched composite utility."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, fields

import numpy as np

from ..metrics import MetricWeights
from .config import SweepConfig
from .frontier import frontier
from .lookup import param_for_utility
from .sweep import obfuscate_blocks, prepare, train_eval_adversary

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariantRow:
    privatizer: str
    param: float
    seed: int
    variant: str
    p1: float
    p2: float
    p: float


VARIANT_COLUMNS = tuple(f.name for f in fields(VariantRow))


def variant_matrix(cfg: SweepConfig, rows, target_utility: float = -2.5, params: dict | None = None):
    """Score every privatizer, at the parameter matching ``target_utility``, against each adversary variant.

    ``rows`` are sweep rows used to invert utility into a parameter; explicit
    ``params`` (name -> value) skip the inversion. Returns ``(rows, notes)``;
    privatizers whose swept utility never reaches the target are omitted and
    named in ``notes``.
    """
    notes = []
    chosen = dict(params or {})
    if not chosen:
        for name, res in param_for_utility(frontier(rows), target_utility).items():
            if res.ok:
                chosen[name] = res.param
            else:
                notes.append(f"{name}: utility {target_utility} not reached ({res.note}); omitted")
    specs = [s for s in cfg.privatizers if s.name in chosen]
    data = prepare(cfg)
    alt = MetricWeights(v1=cfg.alternative_weights[0], v2=cfg.alternative_weights[1])
    out = []
    for seed in cfg.seeds:
        blocks = {s.name: obfuscate_blocks(cfg, data, s, chosen[s.name], seed) for s in specs}
        shared = {}
        if "unobfuscated" in cfg.variants:
            shared["unobfuscated"] = train_eval_adversary(cfg, data, data.train.values, seed)
        if "aggregate" in cfg.variants and blocks:
            pooled = np.vstack([y for y, _ in blocks.values()])
            reps = len(blocks)
            shared["aggregate"] = train_eval_adversary(
                cfg, data, pooled, seed,
                labels=np.tile(data.train.user_ids, reps), locs=np.vstack([data.train.locations] * reps),
            )
        for s in specs:
            y_tr, y_te = blocks[s.name]
            for variant in cfg.variants:
                if variant == "baseline":
                    adv = train_eval_adversary(cfg, data, y_tr, seed)
                elif variant == "alternative":
                    adv = train_eval_adversary(cfg, data, y_tr, seed, weights=alt)
                else:
                    adv = shared[variant]
                # scoring uses the configured weights whatever the adversary trained with
                r = adv.evaluate(y_te, data.test.user_ids, data.test.locations, cfg.weights)
                out.append(VariantRow(s.name, float(chosen[s.name]), int(seed), variant, r.p1, r.p2, r.composite))
    return out, notes


def variant_table(rows) -> dict[str, dict[str, float]]:
    """Seed-mean composite privacy: ``{privatizer: {variant: P}}``."""
    acc: dict[str, dict[str, list[float]]] = {}
    for r in rows:
        acc.setdefault(r.privatizer, {}).setdefault(r.variant, []).append(r.p)
    return {n: {v: float(np.mean(ps)) for v, ps in d.items()} for n, d in acc.items()}


def write_variants_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VARIANT_COLUMNS)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, c) for c in VARIANT_COLUMNS)])


def read_variant_rows(path) -> list[VariantRow]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            out.append(VariantRow(raw["privatizer"], float(raw["param"]), int(raw["seed"]), raw["variant"],
                                  float(raw["p1"]), float(raw["p2"]), float(raw["p"])))
    return out
