"""Loading and harmonising external inputs.

Rail flows arrive as one row per (reporting country, year, origin,
destination). Cleaning follows a fixed order:

1. drop pairs touching unknown (``XX``) or extra-regio (``ZZ``) codes and
   country-level rows, except countries consisting of a single region;
2. a (reporter, year, scope) group with at least one non-missing entry is
   *available*: its missing cells and absent pairs become zero, while cells of an
   unavailable group stay missing;
3. an international pair reported by both endpoint countries gets the mean of
   the two reports (inferred zeros included), a single report is taken as is.

Boundary changes are handled afterwards by :func:`apply_crosswalk`.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .core import DyadTable, PathLike, RegionId, RegionTable, SCIMatrix, _parse_float
from .errors import ValidationError

log = logging.getLogger(__name__)

RAIL_YEARS = (2005, 2010, 2015)
DOMESTIC = "domestic"
INTERNATIONAL = "international"
SCOPES = (DOMESTIC, INTERNATIONAL)


def is_unknown_region(code: str) -> bool:
    """True for the unknown (``XX``) and extra-regio (``ZZ``) placeholders, e.g. ``DEZZ``."""
    if code in ("XX", "ZZ"):
        return True
    tail = code[2:]
    return bool(tail) and (set(tail) == {"X"} or set(tail) == {"Z"})


def scope_of(i: str, j: str) -> str:
    return DOMESTIC if i[:2] == j[:2] else INTERNATIONAL


@dataclass(frozen=True)
class RailReport:
    reporter: str
    year: int
    i: str
    j: str
    passengers: float = math.nan

    def __post_init__(self):
        RegionId(self.i)
        RegionId(self.j)
        if not (len(self.reporter) == 2 and self.reporter.isalpha() and self.reporter.isupper()):
            raise ValidationError(f"malformed reporter {self.reporter!r}")
        if self.year not in RAIL_YEARS:
            raise ValidationError(f"year {self.year} not one of {RAIL_YEARS}")
        if self.passengers < 0:
            raise ValidationError(f"negative passenger count {self.passengers} for {self.i}->{self.j}")
        if self.reporter not in (self.i[:2], self.j[:2]):
            raise ValidationError(f"reporter {self.reporter} is not an endpoint country of {self.i}->{self.j}")

    @property
    def scope(self) -> str:
        return scope_of(self.i, self.j)

    @property
    def missing(self) -> bool:
        return math.isnan(self.passengers)


def read_rail_csv(path: PathLike) -> List[RailReport]:
    """Parse ``reporter,year,i,j,passengers``; an empty passengers cell is missing."""
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_rail_csv(fh.read(), source=str(path))


def parse_rail_csv(text: str, source: str = "<text>") -> List[RailReport]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    expected = ["reporter", "year", "i", "j", "passengers"]
    if header is None:
        raise ValidationError(f"{source}: no reports")
    if [h.strip() for h in header] != expected:
        raise ValidationError(f"{source}: header must be {','.join(expected)}")
    reports = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ValidationError(f"{source}:{lineno}: expected 5 fields, got {len(row)}")
        where = f"{source}:{lineno}"
        try:
            year = int(row[1])
        except ValueError:
            raise ValidationError(f"{where}: bad year {row[1]!r}") from None
        try:
            reports.append(
                RailReport(row[0].strip(), year, row[2].strip(), row[3].strip(), _parse_float(row[4], where))
            )
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    return reports


class AvailabilityTable:
    """Which (reporter, year, scope) groups carry at least one non-missing value."""

    def __init__(self, entries: Mapping[Tuple[str, int, str], bool]):
        self.entries = dict(entries)

    def is_available(self, reporter: str, year: int, scope: str) -> bool:
        return self.entries.get((reporter, year, scope), False)

    @property
    def reporters(self) -> List[str]:
        return sorted({k[0] for k in self.entries})

    @property
    def years(self) -> List[int]:
        return sorted({k[1] for k in self.entries}, reverse=True)

    def available_groups(self) -> List[Tuple[str, int, str]]:
        return sorted(k for k, v in self.entries.items() if v)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = [(y, s) for y in self.years for s in SCOPES]
        writer.writerow(["reporter", *(f"{s}{y}" for y, s in cols)])
        for r in self.reporters:
            writer.writerow([r, *(int(self.is_available(r, y, s)) for y, s in cols)])
        return buf.getvalue()


def build_availability(reports: Sequence[RailReport]) -> AvailabilityTable:
    if not reports:
        raise ValidationError("no reports")
    entries: Dict[Tuple[str, int, str], bool] = {}
    for rep in reports:
        key = (rep.reporter, rep.year, rep.scope)
        entries[key] = entries.get(key, False) or not rep.missing
    return AvailabilityTable(entries)


Universe = Union[None, Iterable[str], Mapping[int, Iterable[str]]]


def _universe_for(universe: Universe, year: int, reports: Sequence[RailReport]) -> Set[str]:
    if universe is None:
        codes = {c for r in reports if r.year == year for c in (r.i, r.j)}
        return {c for c in codes if len(c) > 2 and not is_unknown_region(c)}
    if isinstance(universe, Mapping):
        return set(universe.get(year, ()))
    return set(universe)


def _single_region_countries(universe: Set[str]) -> Dict[str, str]:
    by_country: Dict[str, List[str]] = defaultdict(list)
    for code in universe:
        by_country[code[:2]].append(code)
    return {c: regs[0] for c, regs in by_country.items() if len(regs) == 1}


def clean_rail(
    reports: Sequence[RailReport],
    availability: AvailabilityTable,
    universe: Universe = None,
    measure_prefix: str = "passengers",
) -> DyadTable:
    """Clean raw rail reports into one ``<prefix>_<year>`` measure per year.

    ``universe`` is the region set used for zero-filling and membership: a set
    applied to every year, a mapping year -> set, or ``None`` to use the regions
    appearing in each year's reports.
    """
    if not reports:
        raise ValidationError("no reports")
    years = sorted({r.year for r in reports})
    per_year: Dict[int, Dict[Tuple[str, str], float]] = {}
    universes: Dict[int, Set[str]] = {}
    dropped = defaultdict(int)

    for year in years:
        uni = _universe_for(universe, year, reports)
        singles = _single_region_countries(uni)
        universes[year] = uni
        # reporter -> pair -> reported value (NaN = reported as missing)
        reported: Dict[str, Dict[Tuple[str, str], float]] = defaultdict(dict)
        for rep in reports:
            if rep.year != year:
                continue
            if is_unknown_region(rep.i) or is_unknown_region(rep.j):
                dropped["unknown"] += 1
                continue
            i, j = rep.i, rep.j
            if len(i) == 2 or len(j) == 2:
                i, j = singles.get(i, i) if len(i) == 2 else i, singles.get(j, j) if len(j) == 2 else j
                if len(i) == 2 or len(j) == 2:
                    dropped["country_level"] += 1
                    continue
            if i not in uni or j not in uni:
                dropped["outside_universe"] += 1
                continue
            book = reported[rep.reporter]
            prev = book.get((i, j))
            value = rep.passengers
            if prev is not None and not math.isnan(prev):
                if not math.isnan(value) and value != prev:
                    raise ValidationError(
                        f"conflicting reports by {rep.reporter} for {i}->{j} in {year}: {prev} vs {value}"
                    )
                value = prev
            book[(i, j)] = value

        candidates: Set[Tuple[str, str]] = set()
        for book in reported.values():
            candidates.update(book)
        by_country: Dict[str, List[str]] = defaultdict(list)
        for code in sorted(uni):
            by_country[code[:2]].append(code)
        for country, regs in by_country.items():
            foreign = [c for c in uni if c[:2] != country]
            if availability.is_available(country, year, DOMESTIC):
                candidates.update((a, b) for a in regs for b in regs if a != b)
            if availability.is_available(country, year, INTERNATIONAL):
                candidates.update((a, b) for a in regs for b in foreign)
                candidates.update((b, a) for a in regs for b in foreign)

        values: Dict[Tuple[str, str], float] = {}
        for i, j in candidates:
            scope = scope_of(i, j)
            reporters = (i[:2],) if scope == DOMESTIC else (i[:2], j[:2])
            got = []
            for rep in reporters:
                if not availability.is_available(rep, year, scope):
                    continue
                v = reported.get(rep, {}).get((i, j), math.nan)
                got.append(0.0 if math.isnan(v) else v)
            if len(got) == 1:
                values[(i, j)] = got[0]
            elif len(got) == 2:
                values[(i, j)] = (got[0] + got[1]) / 2.0
        per_year[year] = values

    if dropped:
        log.info("rail rows dropped: %s", dict(dropped))
    keys = sorted(set().union(*(v.keys() for v in per_year.values())))
    measures = {
        f"{measure_prefix}_{y}": [per_year[y].get(k, math.nan) for k in keys] for y in years
    }
    all_regions = set().union(*universes.values()) | {c for k in keys for c in k}
    return DyadTable([k[0] for k in keys], [k[1] for k in keys], measures, all_regions)


def reports_from_clean(
    table: DyadTable, availability: AvailabilityTable, measure_prefix: str = "passengers"
) -> List[RailReport]:
    """Re-express cleaned flows as reports by every available endpoint country.

    Used to check that cleaning is idempotent.
    """
    out = []
    for year, name in _year_columns(table, measure_prefix):
        vals = table.measure(name)
        for (i, j), v in zip(table.pairs(), vals):
            if math.isnan(v):
                continue
            scope = scope_of(i, j)
            for rep in sorted({i[:2], j[:2]}):
                if availability.is_available(rep, year, scope):
                    out.append(RailReport(rep, year, i, j, float(v)))
    return out


def _year_columns(table: DyadTable, prefix: str) -> List[Tuple[int, str]]:
    pat = re.compile(rf"^{re.escape(prefix)}_(\d{{4}})$")
    found = []
    for name in table.measure_names:
        m = pat.match(name)
        if m:
            found.append((int(m.group(1)), name))
    return sorted(found)


def split_years(table: DyadTable, measure_prefix: str = "passengers") -> Dict[int, DyadTable]:
    """Wide ``<prefix>_<year>`` table -> one single-measure table per year (missing rows dropped)."""
    out = {}
    for year, name in _year_columns(table, measure_prefix):
        vals = table.measure(name)
        keep = ~np.isnan(vals)
        sub = table.select(keep)
        out[year] = DyadTable(sub.origin, sub.destination, {measure_prefix: sub.measure(name)}, table.universe)
    return out


def merge_years(tables: Mapping[int, DyadTable], measure_prefix: str = "passengers") -> DyadTable:
    keys = sorted(set().union(*(t.pairs() for t in tables.values())))
    universe = set().union(*(t.universe for t in tables.values()))
    measures = {}
    for year in sorted(tables):
        t = tables[year]
        measures[f"{measure_prefix}_{year}"] = [t.value(i, j, measure_prefix) for i, j in keys]
    return DyadTable([k[0] for k in keys], [k[1] for k in keys], measures, universe)


class Crosswalk:
    """Old-to-new region mapping with population shares summing to one per old region."""

    def __init__(self, mappings: Iterable[Tuple[str, str, float]], atol: float = 1e-9):
        self.mappings = [(RegionId(o), RegionId(n), float(s)) for o, n, s in mappings]
        totals: Dict[str, float] = defaultdict(float)
        self._targets: Dict[str, List[Tuple[str, float]]] = defaultdict(list)
        for old, new, share in self.mappings:
            if not (0.0 < share <= 1.0):
                raise ValidationError(f"crosswalk share {share} for {old}->{new} outside (0, 1]")
            if any(n == new for n, _ in self._targets[old]):
                raise ValidationError(f"duplicate crosswalk mapping {old}->{new}")
            totals[old] += share
            self._targets[old].append((new, share))
        bad = sorted(o for o, t in totals.items() if abs(t - 1.0) > atol)
        if bad:
            raise ValidationError(f"crosswalk shares do not sum to 1 for: {', '.join(bad[:10])}")

    @classmethod
    def identity(cls, regions: Iterable[str]) -> "Crosswalk":
        return cls((r, r, 1.0) for r in sorted(set(regions)))

    @classmethod
    def read_csv(cls, path: PathLike) -> "Crosswalk":
        """Read ``old,new,population_share``; see :func:`read_crosswalks` for per-year files."""
        walks = read_crosswalks(path)
        if list(walks) != [None]:
            raise ValidationError(f"{path}: file has a year column; use read_crosswalks")
        return walks[None]

    def targets(self, old: str) -> List[Tuple[str, float]]:
        return self._targets.get(old, [])

    @property
    def old_regions(self) -> Set[str]:
        return set(self._targets)


def read_crosswalks(path: PathLike) -> Dict[Optional[int], Crosswalk]:
    """Read a crosswalk file, optionally with a trailing ``year`` column for vintage-specific maps."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header not in (["old", "new", "population_share"], ["old", "new", "population_share", "year"]):
            raise ValidationError(f"{path}: header must be old,new,population_share[,year]")
        groups: Dict[Optional[int], list] = defaultdict(list)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields")
            share = _parse_float(row[2], f"{path}:{lineno}")
            year = int(row[3]) if len(header) == 4 else None
            groups[year].append((row[0].strip(), row[1].strip(), share))
    out = {}
    for year, rows in groups.items():
        try:
            out[year] = Crosswalk(rows)
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    return out


def apply_crosswalk(flows: DyadTable, cw: Crosswalk) -> DyadTable:
    """Re-express flows on new regions, splitting each endpoint by population share.

    Row ``(a, b, v)`` contributes ``v * share(a->a') * share(b->b')`` to ``(a', b')``.
    Contributions to the same new pair are summed; a missing contribution makes
    the sum missing.
    """
    regions = flows.universe
    unmapped = sorted(r for r in regions if not cw.targets(r))
    if unmapped:
        raise ValidationError(f"regions missing from crosswalk: {', '.join(unmapped)}")
    names = flows.measure_names
    acc: Dict[Tuple[str, str], np.ndarray] = {}
    cols = np.column_stack([flows.measure(m) for m in names]) if names else np.zeros((len(flows), 0))
    for r, (a, b) in enumerate(flows.pairs()):
        v = cols[r]
        for na, sa in cw.targets(a):
            for nb, sb in cw.targets(b):
                contrib = v * (sa * sb)
                key = (na, nb)
                if key in acc:
                    acc[key] = acc[key] + contrib
                else:
                    acc[key] = contrib.copy()
    keys = sorted(acc)
    new_universe = {n for r in regions for n, _ in cw.targets(r)}
    measures = {m: [acc[k][c] for k in keys] for c, m in enumerate(names)}
    return DyadTable([k[0] for k in keys], [k[1] for k in keys], measures, new_universe)


def most_recent_year(panel: DyadTable, measure_prefix: str = "passengers") -> DyadTable:
    """Collapse ``<prefix>_<year>`` columns to the latest non-missing value per pair.

    The output has measures ``<prefix>`` and ``year``; pairs missing in every
    year are absent.
    """
    cols = _year_columns(panel, measure_prefix)
    if not cols:
        raise ValidationError(f"no {measure_prefix}_<year> columns in panel")
    value = np.full(len(panel), np.nan)
    year = np.full(len(panel), np.nan)
    for y, name in cols:  # ascending, so later years overwrite
        v = panel.measure(name)
        ok = ~np.isnan(v)
        value[ok] = v[ok]
        year[ok] = y
    keep = ~np.isnan(value)
    return DyadTable(
        panel.origin[keep], panel.destination[keep], {measure_prefix: value[keep], "year": year[keep]}, panel.universe
    )


def foreign_share(
    sci: SCIMatrix, weights: Union[RegionTable, Mapping[str, float]], column: str = "weight"
) -> Dict[str, float]:
    """Percent of each region's connection mass that goes to other countries.

    The mass between ``i`` and ``j`` is proxied by ``sci[i][j] * w_i * w_j``;
    the own-region term ``sci[i][i] * w_i**2`` enters the denominator only.
    """
    regions = sci.regions
    if isinstance(weights, RegionTable):
        w = np.array([weights.lookup(r, column) for r in regions])
    else:
        w = np.array([float(weights.get(r, math.nan)) for r in regions])
    bad = [r for r, x in zip(regions, w) if not (x > 0)]
    if bad:
        raise ValidationError(f"missing or non-positive weights for: {', '.join(bad[:10])}")
    s = sci.values
    country = np.array([r[:2] for r in regions])
    foreign = country[:, None] != country[None, :]
    off = ~np.eye(len(regions), dtype=bool)
    mass = s * w[:, None] * w[None, :]
    num = np.where(foreign, mass, 0.0).sum(axis=1)
    den = np.where(off, mass, 0.0).sum(axis=1) + np.diag(mass)
    zero = [r for r, d in zip(regions, den) if d <= 0]
    if zero:
        raise ValidationError(f"zero total connection mass for: {', '.join(zero[:10])}")
    share = 100.0 * num / den
    return {r: float(min(100.0, max(0.0, x))) for r, x in zip(regions, share)}


class HistoricalCountries:
    """``region,year,country`` lookup of which (historical) country a region belonged to."""

    def __init__(self, rows: Iterable[Tuple[str, int, str]]):
        self._map: Dict[Tuple[str, int], str] = {}
        for region, year, country in rows:
            key = (str(RegionId(region)), int(year))
            if key in self._map and self._map[key] != country:
                raise ValidationError(f"conflicting historical country for {region} in {year}")
            self._map[key] = country

    @classmethod
    def read_csv(cls, path: PathLike) -> "HistoricalCountries":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            if header != ["region", "year", "country"]:
                raise ValidationError(f"{path}: header must be region,year,country")
            rows = [(r[0].strip(), int(r[1]), r[2].strip()) for r in reader if r]
        return cls(rows)

    def country(self, region: str, year: int) -> Optional[str]:
        return self._map.get((region, year))

    def same_country(self, table: DyadTable, year: int) -> np.ndarray:
        """1.0 if both endpoints shared a country in ``year``, 0.0 if not, NaN if unknown."""
        out = np.full(len(table), np.nan)
        for r, (i, j) in enumerate(table.pairs()):
            ci, cj = self.country(i, year), self.country(j, year)
            if ci is not None and cj is not None:
                out[r] = float(ci == cj)
        return out
