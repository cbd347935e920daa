"""Command-line harness: ``rsspriv-bench <verb> [flags]``.

Verbs: ``synth``, ``sweep``, ``frontier``, ``lookup``, ``variants``,
``report``. Exit codes: 0 success, 1 configuration or input error, 2 some
sweep cells failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

from ..dataset import ConfigError, DataError, SchemaError, read_dataset_source, write_rss_grid
from .config import SweepConfig, load_config
from .frontier import frontier, write_frontier_csv, write_svg
from .lookup import param_for_distortion
from .sweep import failures, prepare, read_tradeoff_csv, run_sweep, write_tradeoff_csv
from .variants import read_variant_rows, variant_matrix, variant_table, write_variants_csv

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
log = logging.getLogger("rsspriv.bench")


def _config(args) -> SweepConfig:
    cfg = load_config(args.config) if args.config else SweepConfig()
    if getattr(args, "seed", None):
        cfg = replace(cfg, seeds=tuple(args.seed))
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    return cfg


def _out_dir(args, cfg: SweepConfig | None = None) -> Path:
    if args.out_dir:
        out = Path(args.out_dir)
    elif cfg is not None:
        out = Path(cfg.out_dir)
        if cfg.base_dir is not None and not out.is_absolute():
            out = cfg.base_dir / out
    else:
        out = Path("results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _versions() -> dict:
    import numpy
    import scipy
    import sklearn

    from .. import __version__

    return {"rsspriv": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


def _write_frontiers(rows, out: Path) -> dict:
    curves = frontier(rows)
    for name, pts in curves.items():
        write_frontier_csv(pts, out / f"frontier_{name}.csv")
    write_svg(curves, out / "frontier.svg")
    return curves


def _print_curves(curves) -> None:
    for name, pts in curves.items():
        print(f"{name}:")
        for pt in pts:
            print(f"  param={pt.param:<8g} P={pt.p:.4f}±{pt.p_std:.4f}  U={pt.u:.4f}±{pt.u_std:.4f}  rmse={pt.rmse_dbm:.3f} dBm")


def cmd_synth(args) -> int:
    cfg = _config(args)
    source = json.loads(json.dumps(cfg.dataset))
    if args.seed and "synthetic" in source:
        source["synthetic"]["seed"] = args.seed[0]
    d = read_dataset_source(source, cfg.base_dir)
    out = _out_dir(args, cfg)
    d.to_csv(out / "dataset.csv")
    write_rss_grid(d, out / "rss_grid.csv", cfg.grid_bins)
    print(f"wrote {d.n} rows for {d.k} users to {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    for name in args.privatizer or ():
        cfg.privatizer(name)
    out = _out_dir(args, cfg)
    rows = run_sweep(cfg, privatizers=args.privatizer, params=args.param)
    write_tradeoff_csv(rows, out / "tradeoff.csv")
    _write_frontiers(rows, out)
    data = prepare(cfg)
    write_rss_grid(data.dataset, out / "rss_grid.csv", cfg.grid_bins)
    bad = failures(rows)
    manifest = {
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "seeds": list(args.seed or cfg.seeds),
        "privatizers": args.privatizer or [p.name for p in cfg.privatizers],
        "params_override": args.param,
        "rows": len(rows),
        "failed": len(bad),
        "versions": _versions(),
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(rows)} rows written to {out / 'tradeoff.csv'}")
    for r in bad:
        print(f"FAILED {r.privatizer} param={r.param} seed={r.seed}: {r.status}", file=sys.stderr)
    return EXIT_PARTIAL if bad else EXIT_OK


def _load_rows(out: Path):
    path = out / "tradeoff.csv"
    if not path.exists():
        raise ConfigError(f"{path} not found; run 'sweep' first")
    return read_tradeoff_csv(path)


def cmd_frontier(args) -> int:
    out = _out_dir(args)
    rows = _load_rows(out)
    if args.privatizer:
        rows = [r for r in rows if r.privatizer in args.privatizer]
    _print_curves(_write_frontiers(rows, out))
    return EXIT_OK


def cmd_lookup(args) -> int:
    out = _out_dir(args)
    results = param_for_distortion(_load_rows(out), args.target, args.privatizer)
    for name, res in results.items():
        if res.ok:
            print(f"{name}: param={res.param:.4g} distortion={res.achieved:.4f} P={res.privacy:.4f}")
        else:
            print(f"{name}: out-of-range ({res.note})")
    return EXIT_OK


def cmd_variants(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    params = {}
    for item in args.param or ():
        name, _, value = item.partition("=")
        if not value:
            raise ConfigError(f"--param for variants takes NAME=VALUE, got {item!r}")
        cfg.privatizer(name)
        params[name] = float(value)
    rows = [] if params else _load_rows(out)
    if args.privatizer:
        rows = [r for r in rows if r.privatizer in args.privatizer]
        params = {k: v for k, v in params.items() if k in args.privatizer}
    vrows, notes = variant_matrix(cfg, rows, args.target_utility, params or None)
    write_variants_csv(vrows, out / "variants.csv")
    for note in notes:
        print(f"note: {note}")
    _print_table(variant_table(vrows), cfg.variants)
    return EXIT_OK


def _print_table(table, variants) -> None:
    print("privatizer  " + "  ".join(f"{v:>12}" for v in variants))
    for name, cols in table.items():
        print(f"{name:<10}  " + "  ".join(f"{cols.get(v, float('nan')):>12.4f}" for v in variants))


def cmd_report(args) -> int:
    out = _out_dir(args)
    rows = _load_rows(out)
    curves = frontier(rows)
    print(f"{len(rows)} sweep rows, {len(failures(rows))} failed")
    _print_curves(curves)
    vpath = out / "variants.csv"
    if vpath.exists():
        vrows = read_variant_rows(vpath)
        variants = list(dict.fromkeys(r.variant for r in vrows))
        print("\nadversary variants (composite privacy, seed mean):")
        _print_table(variant_table(vrows), variants)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsspriv-bench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON sweep configuration (defaults are used when omitted)")
            p.add_argument("--seed", type=int, action="append", help="seed override; repeat for several")
        p.add_argument("--out-dir", help="output directory (default: config output.dir)")
        return p

    common(sub.add_parser("synth", help="write the dataset and its RSS grid as CSV"))
    p = common(sub.add_parser("sweep", help="run the parameter sweep"))
    p.add_argument("--privatizer", action="append", help="restrict to this privatizer; repeatable")
    p.add_argument("--param", type=float, action="append", help="override the grid with this value; repeatable")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p = common(sub.add_parser("frontier", help="rebuild frontier CSV/SVG from tradeoff.csv"), config=False)
    p.add_argument("--privatizer", action="append")
    p = common(sub.add_parser("lookup", help="parameter meeting a distortion bound -U1 <= TARGET"), config=False)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--privatizer", action="append")
    p = common(sub.add_parser("variants", help="adversary-variant matrix at a matched utility"))
    p.add_argument("--target-utility", type=float, default=-2.5)
    p.add_argument("--privatizer", action="append")
    p.add_argument("--param", action="append", help="NAME=VALUE operating point instead of inverting the sweep")
    p.add_argument("--workers", type=int)
    common(sub.add_parser("report", help="summarize results in the output directory"), config=False)
    return parser


COMMANDS = {"synth": cmd_synth, "sweep": cmd_sweep, "frontier": cmd_frontier, "lookup": cmd_lookup,
            "variants": cmd_variants, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except (ConfigError, SchemaError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
