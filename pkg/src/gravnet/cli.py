"""Command-line front end.

Exit codes: 0 success, 2 validation or usage error, 3 degenerate model,
4 I/O error. ``GRAVNET_THREADS`` caps how many table columns are fitted
concurrently.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .cluster import agglomerate, build_distance, cut
from .core import DyadTable, RegionTable, SCIMatrix, _fmt, correlation_matrix
from .errors import GravnetError, ValidationError
from .ingest import (
    apply_crosswalk,
    build_availability,
    clean_rail,
    foreign_share,
    merge_years,
    most_recent_year,
    read_crosswalks,
    read_rail_csv,
    split_years,
)
from .manifest import build_manifest, config_digest, write_manifest
from .regress import build_design, drop_separated, format_table, ols_fit, ppml_fit
from .regress.config import ColumnConfig, load_table_config

log = logging.getLogger("gravnet")


def _threads() -> int:
    raw = os.environ.get("GRAVNET_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValidationError(f"GRAVNET_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _read_universe(path) -> List[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0].strip() != "region":
        raise ValidationError(f"{path}: universe file must have a 'region' column first")
    return [r[0].strip() for r in rows[1:] if r]


def cmd_etl_rail(raw_csv, crosswalk_csv=None, out_dir=".", universe_csv=None) -> Dict[str, Path]:
    """Clean raw rail reports, harmonise boundaries, collapse to the most recent year."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = read_rail_csv(raw_csv)
    if not reports:
        raise ValidationError(f"{raw_csv}: no reports")
    availability = build_availability(reports)
    universe = _read_universe(universe_csv) if universe_csv else None
    panel = clean_rail(reports, availability, universe)
    if crosswalk_csv:
        walks = read_crosswalks(crosswalk_csv)
        if None in walks:
            panel = apply_crosswalk(panel, walks[None])
        else:
            per_year = split_years(panel)
            missing = sorted(set(per_year) - set(walks))
            if missing:
                raise ValidationError(f"{crosswalk_csv}: no crosswalk for year(s) {missing}")
            panel = merge_years({y: apply_crosswalk(t, walks[y]) for y, t in per_year.items()})
    written = {}
    for year, table in split_years(panel).items():
        written[f"rail_{year}"] = out / f"rail_{year}.csv"
        _write(written[f"rail_{year}"], table.to_csv_text())
    written["panel"] = out / "rail_panel.csv"
    _write(written["panel"], panel.to_csv_text())
    written["most_recent"] = out / "rail_most_recent.csv"
    _write(written["most_recent"], most_recent_year(panel).to_csv_text())
    written["availability"] = out / "availability.csv"
    _write(written["availability"], availability.to_csv_text())
    inputs = [p for p in (raw_csv, crosswalk_csv, universe_csv) if p]
    params = {"raw": str(raw_csv), "crosswalk": str(crosswalk_csv), "universe": str(universe_csv)}
    written["manifest"] = write_manifest(out, build_manifest("etl-rail", inputs, config_digest(params=params)))
    return written


def _load_sci(path, measure=None) -> SCIMatrix:
    return SCIMatrix.from_dyads(DyadTable.read_csv(path), measure)


def cmd_cluster(sci_csv, k_list: Sequence[int], out_dir=".", measure=None) -> Dict[str, Path]:
    """Average-linkage clustering on ``1/SCI``; one assignment file per ``k``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sci = _load_sci(sci_csv, measure)
    n = len(sci)
    bad = [k for k in k_list if not 1 <= k <= n]
    if bad:
        raise ValidationError(f"k must be between 1 and {n}; got {bad}")
    tree = agglomerate(build_distance(sci))
    if tree.inversions:
        log.warning("merge tree has %d height inversion(s) at steps %s", len(tree.inversions), list(tree.inversions))
    written = {"merge_tree": out / "merge_tree.csv"}
    _write(written["merge_tree"], tree.to_csv_text())
    for k in sorted(set(k_list)):
        written[f"k{k}"] = out / f"clusters_k{k}.csv"
        _write(written[f"k{k}"], cut(tree, k).to_csv_text())
    params = {"sci": str(sci_csv), "k": sorted(set(k_list)), "measure": measure}
    written["manifest"] = write_manifest(out, build_manifest("cluster", [sci_csv], config_digest(params=params)))
    return written


def _load_data(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().split(",")[0].strip()
    if first == "i":
        return DyadTable.read_csv(path)
    if first == "region":
        return RegionTable.read_csv(path)
    raise ValidationError(f"{path}: header must start with 'i,j' (dyads) or 'region'")


def _fit_column(col: ColumnConfig, cache: Dict):
    data = cache[col.data]
    regions = cache[col.regions] if col.regions else None
    dm = build_design(data, col.spec, regions)
    if col.spec.family == "ppml":
        dm, _ = drop_separated(dm)
        res = ppml_fit(dm, **col.options)
    else:
        res = ols_fit(dm)
    res.name = col.spec.name
    return res


def cmd_fit(config_path, out_dir=".", data=None, regions=None) -> Dict[str, Path]:
    """Fit every column of a table config; write ``results.json`` and ``table.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = load_table_config(config_path, Path(data) if data else None, Path(regions) if regions else None)
    cache: Dict[Path, object] = {}
    for col in cfg.columns:
        if col.data not in cache:
            cache[col.data] = _load_data(col.data)
        if col.regions and col.regions not in cache:
            cache[col.regions] = RegionTable.read_csv(col.regions)
    workers = min(_threads(), len(cfg.columns))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _fit_column(c, cache), cfg.columns))
    else:
        results = [_fit_column(c, cache) for c in cfg.columns]
    for r in results:
        if not r.converged:
            log.warning("column %s did not converge", r.name)

    factor_names = list(dict.fromkeys(f.name for c in cfg.columns for f in c.spec.factors))
    decile_names = list(dict.fromkeys(m for c in cfg.columns for m in c.spec.decile_terms))
    rows = {f"{f} FEs": [f in [x.name for x in c.spec.factors] for c in cfg.columns] for f in factor_names}
    rows.update({f"{m} deciles": [m in c.spec.decile_terms for c in cfg.columns] for m in decile_names})
    shown = [
        [t for t in r.terms if not any(t.startswith(f"{m}[d") for m in decile_names)] for r in results
    ]
    view = []
    for r, keep in zip(results, shown):
        clone = type(r)(**{**r.__dict__, "terms": keep})
        view.append(clone)
    written = {"results": out / "results.json", "table": out / "table.txt"}
    payload = {"title": cfg.title, "columns": [r.to_dict() for r in results]}
    _write(written["results"], json.dumps(payload, indent=2, sort_keys=False, allow_nan=True) + "\n")
    _write(written["table"], format_table(view, rows, cfg.title))
    cfg_bytes = Path(config_path).read_bytes()
    params = {"data": str(data), "regions": str(regions)}
    manifest = build_manifest("fit", [Path(config_path), *cfg.data_files], config_digest(cfg_bytes, params))
    written["manifest"] = write_manifest(out, manifest)
    return written


def cmd_foreign_share(sci_csv, weights_csv, out_dir=".", weight_column="weight", measure=None) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shares = foreign_share(_load_sci(sci_csv, measure), RegionTable.read_csv(weights_csv), weight_column)
    table = RegionTable(sorted(shares), {"foreign_share": [shares[r] for r in sorted(shares)]})
    written = {"foreign_share": out / "foreign_share.csv"}
    _write(written["foreign_share"], table.to_csv_text())
    params = {"sci": str(sci_csv), "weights": str(weights_csv), "column": weight_column, "measure": measure}
    manifest = build_manifest("foreign-share", [sci_csv, weights_csv], config_digest(params=params))
    written["manifest"] = write_manifest(out, manifest)
    return written


def cmd_correlate(table_csv, measures: Sequence[str], out_dir=".") -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = DyadTable.read_csv(table_csv)
    names = list(measures) or table.measure_names
    mat = correlation_matrix(table, names)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["measure", *names])
    for name, row in zip(names, mat):
        w.writerow([name, *(_fmt(v) for v in row)])
    written = {"correlations": out / "correlations.csv"}
    _write(written["correlations"], buf.getvalue())
    params = {"table": str(table_csv), "measures": names}
    written["manifest"] = write_manifest(out, build_manifest("correlate", [table_csv], config_digest(params=params)))
    return written


def _k_list(text: str) -> List[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("every k must be a positive integer")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gravnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gravnet {__version__}")
    parser.add_argument("--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("etl-rail", help="clean and harmonise raw rail reports")
    p.add_argument("raw", help="reporter,year,i,j,passengers CSV")
    p.add_argument("--crosswalk", help="old,new,population_share[,year] CSV")
    p.add_argument("--universe", help="CSV whose first column 'region' lists the analysis regions")
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="average-linkage clustering on 1/SCI")
    p.add_argument("sci", help="dyad CSV holding the SCI measure")
    p.add_argument("--k", required=True, type=_k_list, help="comma-separated community counts, e.g. 20,50")
    p.add_argument("--measure", help="SCI column name when the file has several measures")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit the columns of a model table config")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="override the config's data file")
    p.add_argument("--regions", help="override the config's region attribute file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("foreign-share", help="share of connections to other countries, per region")
    p.add_argument("sci")
    p.add_argument("--weights", required=True, help="region CSV with the weight column")
    p.add_argument("--weight-column", default="weight")
    p.add_argument("--measure")
    p.add_argument("--out", required=True)

    p = sub.add_parser("correlate", help="pairwise correlations of dyadic measures")
    p.add_argument("table")
    p.add_argument("--measures", default="", help="comma-separated measure names (default: all)")
    p.add_argument("--out", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        if args.command == "etl-rail":
            written = cmd_etl_rail(args.raw, args.crosswalk, args.out, args.universe)
        elif args.command == "cluster":
            written = cmd_cluster(args.sci, args.k, args.out, args.measure)
        elif args.command == "fit":
            written = cmd_fit(args.config, args.out, args.data, args.regions)
        elif args.command == "foreign-share":
            written = cmd_foreign_share(args.sci, args.weights, args.out, args.weight_column, args.measure)
        else:
            measures = [m.strip() for m in args.measures.split(",") if m.strip()]
            written = cmd_correlate(args.table, measures, args.out)
    except GravnetError as exc:
        print(f"gravnet: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"gravnet: I/O error: {exc}", file=sys.stderr)
        return 4
    for path in written.values():
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
