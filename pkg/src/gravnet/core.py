"""Domain types and pure transformations shared by ingestion, clustering and estimation.

Region codes follow the NUTS convention: a two-letter country prefix followed by
up to three alphanumeric characters. Dyadic data live in :class:`DyadTable`,
regional covariates in :class:`RegionTable`, and the social connectedness
matrix in :class:`SCIMatrix`. Every container is immutable after construction;
numeric arrays handed out are read-only views.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import UndefinedCorrelationError, ValidationError

PathLike = Union[str, os.PathLike]

_REGION_RE = re.compile(r"^[A-Z]{2}[A-Z0-9]{0,3}$")

#: attribute names that must be strictly positive when present
POSITIVE_ATTRS = frozenset({"population", "weight", "users"})


class RegionId(str):
    """A validated NUTS-style region code such as ``"FR10"``.

    Ordering is plain lexicographic string ordering, which is what every
    deterministic tie-break in the package relies on.
    """

    __slots__ = ()

    def __new__(cls, code):
        if isinstance(code, RegionId):
            return code
        if not isinstance(code, str) or not _REGION_RE.match(code):
            raise ValidationError(f"malformed region code {code!r}")
        return super().__new__(cls, code)

    @property
    def country(self) -> str:
        return self[:2]


def country_of(code) -> str:
    """Return the two-letter country prefix of a region code."""
    return RegionId(code).country


def _validate_codes(codes: Sequence, what: str) -> None:
    bad = sorted({c for c in codes if not isinstance(c, str) or not _REGION_RE.match(c)}, key=str)
    if bad:
        shown = ", ".join(repr(b) for b in bad[:10])
        raise ValidationError(f"malformed region code(s) in {what}: {shown}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _fmt(value: float) -> str:
    # repr() is the shortest string that round-trips to the same double
    return "" if math.isnan(value) else repr(float(value))


def _parse_float(text: str, where: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ValidationError(f"{where}: non-finite value {text!r}")
    return value


def _check_measures(measures: Mapping[str, np.ndarray], n: int, what: str) -> Dict[str, np.ndarray]:
    out = {}
    for name, values in measures.items():
        if not name or name in ("i", "j", "region"):
            raise ValidationError(f"{what}: invalid measure name {name!r}")
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.shape[0] != n:
            raise ValidationError(f"{what}: measure {name!r} has {arr.shape[0]} values, expected {n}")
        if np.isinf(arr).any():
            raise ValidationError(f"{what}: measure {name!r} contains infinite values")
        out[name] = _readonly(arr)
    return out


class DyadTable:
    """Keyed table of ordered region pairs ``(i, j)`` carrying named float measures.

    ``NaN`` marks a missing value, which is never the same thing as zero.
    """

    __slots__ = ("_i", "_j", "_measures", "_universe", "_index")

    def __init__(
        self,
        origin: Sequence[str],
        destination: Sequence[str],
        measures: Optional[Mapping[str, Sequence[float]]] = None,
        universe: Optional[Iterable[str]] = None,
    ):
        i = np.array([str(c) for c in origin], dtype=object)
        j = np.array([str(c) for c in destination], dtype=object)
        if i.shape != j.shape:
            raise ValidationError("origin and destination lengths differ")
        _validate_codes(i, "origin column")
        _validate_codes(j, "destination column")
        index: Dict[Tuple[str, str], int] = {}
        for r, key in enumerate(zip(i, j)):
            if key in index:
                raise ValidationError(f"duplicate dyad row {key[0]}->{key[1]}")
            index[key] = r
        present = set(i) | set(j)
        if universe is None:
            uni = frozenset(present)
        else:
            uni = frozenset(str(c) for c in universe)
            _validate_codes(list(uni), "region universe")
            missing = sorted(present - uni)
            if missing:
                raise ValidationError(f"regions outside the universe: {', '.join(missing[:10])}")
        self._i = _readonly(i)
        self._j = _readonly(j)
        self._measures = _check_measures(measures or {}, len(i), "DyadTable")
        self._universe = uni
        self._index = index

    # construction helpers -------------------------------------------------

    @classmethod
    def from_rows(cls, rows: Iterable[Tuple[str, str, Mapping[str, float]]], measures=None, universe=None):
        rows = list(rows)
        names = list(measures) if measures is not None else sorted({k for r in rows for k in r[2]})
        cols = {m: [float(r[2].get(m, math.nan)) for r in rows] for m in names}
        return cls([r[0] for r in rows], [r[1] for r in rows], cols, universe)

    @classmethod
    def read_csv(cls, path: PathLike, universe=None) -> "DyadTable":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read(), universe=universe, source=str(path))

    @classmethod
    def from_csv_text(cls, text: str, universe=None, source: str = "<text>") -> "DyadTable":
        reader = csv.reader(io.StringIO(text))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{source}: empty file") from None
        if header[:2] != ["i", "j"]:
            raise ValidationError(f"{source}: dyad header must start with 'i,j', got {header[:2]}")
        names = header[2:]
        if len(set(names)) != len(names):
            raise ValidationError(f"{source}: duplicate measure columns")
        origin, dest = [], []
        cols: List[List[float]] = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}")
            origin.append(row[0].strip())
            dest.append(row[1].strip())
            for k, cell in enumerate(row[2:]):
                cols[k].append(_parse_float(cell, f"{source}:{lineno}"))
        return cls(origin, dest, dict(zip(names, cols)), universe)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = self.measure_names
        writer.writerow(["i", "j", *names])
        cols = [self._measures[m] for m in names]
        for r in range(len(self)):
            writer.writerow([self._i[r], self._j[r], *(_fmt(c[r]) for c in cols)])
        return buf.getvalue()

    def write_csv(self, path: PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())

    # accessors ------------------------------------------------------------

    def __len__(self) -> int:
        return self._i.shape[0]

    def __repr__(self) -> str:
        return f"DyadTable(rows={len(self)}, measures={self.measure_names})"

    @property
    def origin(self) -> np.ndarray:
        return self._i

    @property
    def destination(self) -> np.ndarray:
        return self._j

    @property
    def measure_names(self) -> List[str]:
        return list(self._measures)

    @property
    def universe(self) -> frozenset:
        return self._universe

    def measure(self, name: str) -> np.ndarray:
        try:
            return self._measures[name]
        except KeyError:
            raise ValidationError(f"unknown measure {name!r}; have {self.measure_names}") from None

    def pairs(self) -> List[Tuple[str, str]]:
        return list(zip(self._i, self._j))

    def row_of(self, i: str, j: str) -> Optional[int]:
        return self._index.get((i, j))

    def value(self, i: str, j: str, name: str) -> float:
        r = self._index.get((i, j))
        return math.nan if r is None else float(self.measure(name)[r])

    def columns(self) -> Dict[str, np.ndarray]:
        """Column view used by factor rules and design construction."""
        return {"i": self._i, "j": self._j, **self._measures}

    # transformations --------------------------------------------------------

    def select(self, mask) -> "DyadTable":
        mask = np.asarray(mask)
        return DyadTable(
            self._i[mask], self._j[mask], {k: v[mask] for k, v in self._measures.items()}, self._universe
        )

    def with_measures(self, **measures) -> "DyadTable":
        merged = dict(self._measures)
        merged.update(measures)
        return DyadTable(self._i, self._j, merged, self._universe)

    def sorted(self) -> "DyadTable":
        order = sorted(range(len(self)), key=lambda r: (self._i[r], self._j[r]))
        return self.select(np.array(order, dtype=np.intp))

    def equals(self, other: "DyadTable") -> bool:
        """Row-order-insensitive equality, treating NaN as equal to NaN."""
        if set(self.measure_names) != set(other.measure_names) or len(self) != len(other):
            return False
        for r, key in enumerate(self.pairs()):
            s = other.row_of(*key)
            if s is None:
                return False
            for m in self.measure_names:
                a, b = self._measures[m][r], other.measure(m)[s]
                if not (a == b or (math.isnan(a) and math.isnan(b))):
                    return False
        return True


@dataclass(frozen=True)
class RegionAttributes:
    """Numeric attributes of a single region (population, income, shares, ...)."""

    region: str
    attrs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        RegionId(self.region)
        _check_attr_values(self.region, self.attrs)


def _is_share(name: str) -> bool:
    return "share" in name or name.endswith("_pct")


def _check_attr_values(region: str, attrs: Mapping[str, float]) -> None:
    for name, value in attrs.items():
        if math.isnan(value):
            continue
        if not math.isfinite(value):
            raise ValidationError(f"{region}: attribute {name!r} is not finite")
        if name in POSITIVE_ATTRS and value <= 0:
            raise ValidationError(f"{region}: attribute {name!r} must be positive, got {value}")
        if _is_share(name) and not 0.0 <= value <= 100.0:
            raise ValidationError(f"{region}: share attribute {name!r}={value} outside [0, 100]")


class RegionTable:
    """Collection of :class:`RegionAttributes`, one row per region."""

    __slots__ = ("_regions", "_attrs", "_index")

    def __init__(self, regions: Sequence[str], attrs: Optional[Mapping[str, Sequence[float]]] = None):
        reg = np.array([str(r) for r in regions], dtype=object)
        _validate_codes(reg, "region column")
        index = {}
        for k, r in enumerate(reg):
            if r in index:
                raise ValidationError(f"duplicate region row {r}")
            index[r] = k
        cols = _check_measures(attrs or {}, len(reg), "RegionTable")
        for k, r in enumerate(reg):
            _check_attr_values(r, {name: float(v[k]) for name, v in cols.items()})
        self._regions = _readonly(reg)
        self._attrs = cols
        self._index = index

    @classmethod
    def from_records(cls, records: Iterable[RegionAttributes]) -> "RegionTable":
        records = list(records)
        names = sorted({k for rec in records for k in rec.attrs})
        return cls(
            [rec.region for rec in records],
            {n: [float(rec.attrs.get(n, math.nan)) for rec in records] for n in names},
        )

    @classmethod
    def read_csv(cls, path: PathLike) -> "RegionTable":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read(), source=str(path))

    @classmethod
    def from_csv_text(cls, text: str, source: str = "<text>") -> "RegionTable":
        reader = csv.reader(io.StringIO(text))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{source}: empty file") from None
        if not header or header[0] != "region":
            raise ValidationError(f"{source}: region header must start with 'region'")
        names = header[1:]
        regions: List[str] = []
        cols: List[List[float]] = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}")
            regions.append(row[0].strip())
            for k, cell in enumerate(row[1:]):
                cols[k].append(_parse_float(cell, f"{source}:{lineno}"))
        return cls(regions, dict(zip(names, cols)))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = self.attr_names
        writer.writerow(["region", *names])
        for k, r in enumerate(self._regions):
            writer.writerow([r, *(_fmt(self._attrs[n][k]) for n in names)])
        return buf.getvalue()

    def write_csv(self, path: PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())

    def __len__(self) -> int:
        return self._regions.shape[0]

    def __contains__(self, region) -> bool:
        return region in self._index

    @property
    def regions(self) -> np.ndarray:
        return self._regions

    @property
    def attr_names(self) -> List[str]:
        return list(self._attrs)

    def attr(self, name: str) -> np.ndarray:
        try:
            return self._attrs[name]
        except KeyError:
            raise ValidationError(f"unknown attribute {name!r}; have {self.attr_names}") from None

    def get(self, region: str) -> RegionAttributes:
        k = self._index[region]
        return RegionAttributes(region, {n: float(v[k]) for n, v in self._attrs.items()})

    def lookup(self, region: str, name: str) -> float:
        k = self._index.get(region)
        return math.nan if k is None else float(self.attr(name)[k])

    def columns(self) -> Dict[str, np.ndarray]:
        return {"region": self._regions, **self._attrs}


class SCIMatrix:
    """Dense symmetric connectedness matrix, strictly positive off the diagonal.

    The diagonal (own-region connectedness) may be zero when it is unknown.
    """

    __slots__ = ("_regions", "_values", "_pos")

    def __init__(self, regions: Sequence[str], values, rtol: float = 1e-12):
        reg = tuple(str(r) for r in regions)
        _validate_codes(reg, "SCI regions")
        if len(set(reg)) != len(reg):
            raise ValidationError("duplicate regions in SCI matrix")
        vals = np.array(values, dtype=np.float64)
        n = len(reg)
        if vals.shape != (n, n):
            raise ValidationError(f"SCI matrix shape {vals.shape} does not match {n} regions")
        if not np.isfinite(vals).all():
            bad = np.argwhere(~np.isfinite(vals))[:10]
            raise ValidationError("non-finite SCI entries: " + ", ".join(f"{reg[a]}-{reg[b]}" for a, b in bad))
        off = ~np.eye(n, dtype=bool)
        bad = np.argwhere(off & (vals <= 0))
        bad = [(a, b) for a, b in bad if a < b]
        if bad:
            raise ValidationError(
                "non-positive SCI entries: " + ", ".join(f"{reg[a]}-{reg[b]}" for a, b in bad[:10])
            )
        if (np.diag(vals) < 0).any():
            raise ValidationError("negative own-region SCI entries")
        asym = np.abs(vals - vals.T) > rtol * np.maximum(np.abs(vals), np.abs(vals.T))
        bad = [(a, b) for a, b in np.argwhere(asym) if a < b]
        if bad:
            raise ValidationError(
                "asymmetric SCI entries: " + ", ".join(f"{reg[a]}-{reg[b]}" for a, b in bad[:10])
            )
        vals = 0.5 * (vals + vals.T)
        self._regions = reg
        self._values = _readonly(vals)
        self._pos = {r: k for k, r in enumerate(reg)}

    @classmethod
    def from_dyads(cls, table: DyadTable, measure: Optional[str] = None) -> "SCIMatrix":
        """Assemble the matrix from a long table.

        A pair may be given in one or both directions; both directions must
        agree. Pairs absent in both directions are an error.
        """
        if measure is None:
            if len(table.measure_names) != 1:
                raise ValidationError(f"ambiguous SCI measure; choose one of {table.measure_names}")
            measure = table.measure_names[0]
        values = table.measure(measure)
        regions = sorted(table.universe)
        pos = {r: k for k, r in enumerate(regions)}
        n = len(regions)
        mat = np.full((n, n), np.nan)
        conflicts = []
        for (i, j), v in zip(table.pairs(), values):
            if math.isnan(v):
                continue
            a, b = pos[i], pos[j]
            for x, y in ((a, b), (b, a)):
                if math.isnan(mat[x, y]) or (x == y):
                    mat[x, y] = v
                elif mat[x, y] != v and abs(mat[x, y] - v) > 1e-12 * max(abs(v), abs(mat[x, y])):
                    conflicts.append((min(i, j), max(i, j)))
        if conflicts:
            shown = ", ".join(f"{a}-{b}" for a, b in sorted(set(conflicts))[:10])
            raise ValidationError(f"asymmetric SCI entries: {shown}")
        missing = [(regions[a], regions[b]) for a, b in np.argwhere(np.isnan(mat)) if a < b]
        if missing:
            shown = ", ".join(f"{a}-{b}" for a, b in missing[:10])
            raise ValidationError(f"missing SCI pairs ({len(missing)}): {shown}")
        np.fill_diagonal(mat, np.where(np.isnan(np.diag(mat)), 0.0, np.diag(mat)))
        return cls(regions, mat)

    def to_dyads(self, measure: str = "sci", include_diagonal: bool = True) -> DyadTable:
        n = len(self._regions)
        rows_i, rows_j, vals = [], [], []
        for a in range(n):
            for b in range(n):
                if a == b and not include_diagonal:
                    continue
                rows_i.append(self._regions[a])
                rows_j.append(self._regions[b])
                vals.append(self._values[a, b])
        return DyadTable(rows_i, rows_j, {measure: vals})

    @property
    def regions(self) -> Tuple[str, ...]:
        return self._regions

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self) -> int:
        return len(self._regions)

    def __getitem__(self, key: Tuple[str, str]) -> float:
        i, j = key
        return float(self._values[self._pos[i], self._pos[j]])

    def index(self, region: str) -> int:
        return self._pos[region]

    def subset(self, regions: Sequence[str]) -> "SCIMatrix":
        idx = [self._pos[r] for r in regions]
        return SCIMatrix(regions, self._values[np.ix_(idx, idx)])


# factor rules ---------------------------------------------------------------

_FACTOR_RULES = (
    "origin",
    "destination",
    "pair",
    "country_pair",
    "origin_country",
    "destination_country",
    "region",
    "country",
)


@dataclass(frozen=True)
class FactorSpec:
    """Rule assigning every row a categorical level.

    ``rule`` is one of ``origin``, ``destination``, ``pair`` (the ordered dyad),
    ``country_pair`` (ordered country pair), ``origin_country``,
    ``destination_country`` for dyad tables; ``region`` and ``country`` for region
    tables; or ``column:<name>`` for a custom column of either.
    """

    name: str
    rule: str

    def __post_init__(self):
        if self.rule not in _FACTOR_RULES and not (self.rule.startswith("column:") and len(self.rule) > 7):
            raise ValidationError(f"unknown factor rule {self.rule!r}")

    @classmethod
    def parse(cls, text: str) -> "FactorSpec":
        """Parse ``rule`` or ``name=rule``."""
        name, _, rule = text.partition("=")
        if not rule:
            name, rule = text, text
        return cls(name.strip(), rule.strip())

    @property
    def column(self) -> Optional[str]:
        return self.rule[7:] if self.rule.startswith("column:") else None

    def labels(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """String label per row for a column view (see ``DyadTable.columns``)."""
        col = self.column
        if col is not None:
            if col not in columns:
                raise ValidationError(f"factor {self.name!r}: unknown column {col!r}")
            vals = columns[col]
            if vals.dtype.kind == "f":
                if np.isnan(vals).any():
                    raise ValidationError(f"factor {self.name!r}: column {col!r} has missing values")
                return np.array([repr(float(v)) for v in vals], dtype=object)
            return np.array([str(v) for v in vals], dtype=object)
        dyadic = "i" in columns
        need_dyad = self.rule not in ("region", "country")
        if dyadic != need_dyad:
            kind = "dyad" if need_dyad else "region"
            raise ValidationError(f"factor rule {self.rule!r} needs a {kind} table")
        if self.rule == "region":
            return np.asarray(columns["region"], dtype=object)
        if self.rule == "country":
            return np.array([r[:2] for r in columns["region"]], dtype=object)
        i, j = columns["i"], columns["j"]
        if self.rule == "origin":
            return np.asarray(i, dtype=object)
        if self.rule == "destination":
            return np.asarray(j, dtype=object)
        if self.rule == "pair":
            return np.array([f"{a}|{b}" for a, b in zip(i, j)], dtype=object)
        if self.rule == "country_pair":
            return np.array([f"{a[:2]}|{b[:2]}" for a, b in zip(i, j)], dtype=object)
        if self.rule == "origin_country":
            return np.array([a[:2] for a in i], dtype=object)
        return np.array([b[:2] for b in j], dtype=object)

    def level_ids(self, columns: Mapping[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """Dense level ids ``0..L-1`` (sorted label order) and the label of each id."""
        labels = self.labels(columns)
        uniq, inv = np.unique(labels.astype(str), return_inverse=True)
        return inv.astype(np.intp), uniq.astype(object)


# pure transformations -------------------------------------------------------


def decile_indicators(values) -> np.ndarray:
    """Empirical decile bucket (1..10) of each value.

    Bucket ``b`` holds values in ``(q_{(b-1)/10}, q_{b/10}]`` with ``q`` the
    inverse-CDF quantiles of the input, so the minimum lands in bucket 1 and a
    value tied with a boundary falls to the lower bucket. Computed on ranks:
    ``bucket = floor(10 * #{x < v} / n) + 1``, which is exact in integers.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValidationError("decile_indicators needs at least one value")
    if not np.isfinite(v).all():
        raise ValidationError("decile_indicators: values must be finite (no NaN)")
    below = np.searchsorted(np.sort(v), v, side="left")
    return (10 * below) // v.size + 1


def _unordered(table: DyadTable, measure: str) -> Dict[Tuple[str, str], float]:
    acc: Dict[Tuple[str, str], List[float]] = {}
    for (i, j), v in zip(table.pairs(), table.measure(measure)):
        if i == j or math.isnan(v):
            continue
        acc.setdefault((min(i, j), max(i, j)), []).append(float(v))
    return {k: sum(vs) / len(vs) for k, vs in acc.items()}


def correlate_measures(a: DyadTable, measure_a: str, b: DyadTable, measure_b: str) -> float:
    """Pearson correlation of two dyadic measures over shared unordered pairs.

    Each unordered pair ``{i, j}`` with ``i != j`` counts once; when both
    directions are present their values are averaged.
    """
    ua, ub = _unordered(a, measure_a), _unordered(b, measure_b)
    keys = sorted(ua.keys() & ub.keys())
    if not keys:
        raise ValidationError("no shared pairs between the two measures")
    if len(keys) < 2:
        raise ValidationError("correlation needs at least two shared pairs")
    x = np.array([ua[k] for k in keys])
    y = np.array([ub[k] for k in keys])
    x = x - x.mean()
    y = y - y.mean()
    sxx, syy = float(x @ x), float(y @ y)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined: a measure has zero variance")
    r = float(x @ y) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def correlation_matrix(table: DyadTable, measures: Sequence[str]) -> np.ndarray:
    k = len(measures)
    out = np.eye(k)
    for p in range(k):
        for q in range(p + 1, k):
            out[p, q] = out[q, p] = correlate_measures(table, measures[p], table, measures[q])
    return out
