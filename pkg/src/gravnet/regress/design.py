"""Model specifications and design-matrix construction."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from ..core import DyadTable, FactorSpec, RegionTable, decile_indicators
from ..errors import CollinearityError, ValidationError
from .absorb import Absorber, dense_levels

FAMILIES = ("ols", "ppml")
PIVOT_TOL = 1e-10

_TERM_RE = re.compile(r"^\s*(log)\(\s*([^()]+?)\s*\)\s*$")


@dataclass(frozen=True)
class Term:
    measure: str
    transform: str = "identity"

    def __post_init__(self):
        if self.transform not in ("identity", "log"):
            raise ValidationError(f"unknown transform {self.transform!r}")

    @classmethod
    def parse(cls, text: str) -> "Term":
        """``"log(sci)"`` -> log term, anything else -> identity term."""
        m = _TERM_RE.match(text)
        if m:
            return cls(m.group(2), "log")
        return cls(text.strip())

    @property
    def name(self) -> str:
        return f"log({self.measure})" if self.transform == "log" else self.measure


@dataclass(frozen=True)
class ModelSpec:
    outcome: str
    continuous_terms: Tuple[Term, ...] = ()
    decile_terms: Tuple[str, ...] = ()
    factors: Tuple[FactorSpec, ...] = ()
    cluster_dims: Tuple[FactorSpec, ...] = ()
    family: str = "ols"
    name: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if len(self.cluster_dims) > 2:
            raise ValidationError("at most two cluster dimensions are supported")
        object.__setattr__(self, "continuous_terms", tuple(
            t if isinstance(t, Term) else Term.parse(t) for t in self.continuous_terms))
        object.__setattr__(self, "decile_terms", tuple(self.decile_terms))
        object.__setattr__(self, "factors", tuple(
            f if isinstance(f, FactorSpec) else FactorSpec.parse(f) for f in self.factors))
        object.__setattr__(self, "cluster_dims", tuple(
            f if isinstance(f, FactorSpec) else FactorSpec.parse(f) for f in self.cluster_dims))
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate factor names")

    def referenced_measures(self) -> List[str]:
        out = [self.outcome]
        out += [t.measure for t in self.continuous_terms]
        out += list(self.decile_terms)
        out += [f.column for f in (*self.factors, *self.cluster_dims) if f.column]
        return list(dict.fromkeys(out))


@dataclass(frozen=True)
class DesignMatrix:
    """Numeric inputs of one regression.

    ``factor_levels`` hold dense level ids of the absorbed factors. With no
    factors the intercept is absorbed through a single constant level.
    """

    y: np.ndarray
    X: np.ndarray
    columns: Tuple[str, ...]
    factor_levels: Tuple[np.ndarray, ...]
    factor_names: Tuple[str, ...]
    cluster_ids: Tuple[np.ndarray, ...]
    cluster_names: Tuple[str, ...]
    row_keys: Tuple
    family: str = "ols"
    n_missing: int = 0
    n_dropped_by_fe: int = 0
    n_total: int = field(default=-1)

    def __post_init__(self):
        if self.n_total < 0:
            object.__setattr__(self, "n_total", int(self.y.shape[0]))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def absorb_levels(self) -> Tuple[np.ndarray, ...]:
        if self.factor_levels:
            return self.factor_levels
        return (np.zeros(self.n, dtype=np.intp),)

    @property
    def n_absorbed(self) -> int:
        return sum(int(l.max()) + 1 for l in self.absorb_levels if l.size)

    def select(self, keep: np.ndarray, n_dropped: int = 0) -> "DesignMatrix":
        """Row subset with factor ids re-densified; ``n_dropped`` adds to the FE-drop count."""
        keep = np.asarray(keep, dtype=bool)
        keys = tuple(k for k, ok in zip(self.row_keys, keep) if ok)
        return replace(
            self,
            y=self.y[keep],
            X=self.X[keep],
            factor_levels=tuple(dense_levels(l[keep]) for l in self.factor_levels),
            cluster_ids=tuple(dense_levels(c[keep]) for c in self.cluster_ids),
            row_keys=keys,
            n_dropped_by_fe=self.n_dropped_by_fe + n_dropped,
        )


Data = Union[DyadTable, RegionTable]


def _column_view(data: Data, regions: Optional[RegionTable]) -> Dict[str, np.ndarray]:
    cols = dict(data.columns())
    if regions is None or not isinstance(data, DyadTable):
        return cols
    i, j = data.origin, data.destination
    for name in regions.attr_names:
        vi = np.array([regions.lookup(r, name) for r in i])
        vj = np.array([regions.lookup(r, name) for r in j])
        cols.setdefault(f"i.{name}", vi)
        cols.setdefault(f"j.{name}", vj)
        cols.setdefault(f"absdiff.{name}", np.abs(vi - vj))
    return cols


def _row_keys(data: Data) -> List:
    if isinstance(data, DyadTable):
        return data.pairs()
    return list(data.regions)


def build_design(data: Data, spec: ModelSpec, regions: Optional[RegionTable] = None) -> DesignMatrix:
    """Assemble ``y``, ``X``, factor ids and cluster ids for ``spec``.

    Dyad tables can reference endpoint attributes from ``regions`` as
    ``i.<attr>``, ``j.<attr>`` and ``absdiff.<attr>``. Rows missing any
    referenced value are deleted list-wise and counted in ``n_missing``.
    Columns come out as continuous terms in spec order, then decile indicators
    ``<measure>[d2]..[d10]`` (bucket 1 is the reference).
    """
    cols = _column_view(data, regions)
    absent = [m for m in spec.referenced_measures() if m not in cols]
    if absent:
        raise ValidationError(f"measures not found in data: {', '.join(absent)}")
    keys = _row_keys(data)
    ok = np.ones(len(keys), dtype=bool)
    for m in spec.referenced_measures():
        ok &= ~np.isnan(cols[m])
    n_missing = int((~ok).sum())
    if not ok.any():
        raise ValidationError("empty design: every row has a missing referenced value")
    sub = {k: np.asarray(v)[ok] for k, v in cols.items()}
    keys = [k for k, good in zip(keys, ok) if good]

    y = sub[spec.outcome].astype(np.float64)
    if spec.family == "ppml" and (y < 0).any():
        raise ValidationError("PPML outcome must be non-negative")

    names: List[str] = []
    blocks: List[np.ndarray] = []
    for term in spec.continuous_terms:
        v = sub[term.measure].astype(np.float64)
        if term.transform == "log":
            bad = np.flatnonzero(v <= 0)
            if bad.size:
                shown = ", ".join(str(keys[b]) for b in bad[:10])
                raise ValidationError(f"log of non-positive {term.measure!r} in rows: {shown}")
            v = np.log(v)
        names.append(term.name)
        blocks.append(v)
    for m in spec.decile_terms:
        buckets = decile_indicators(sub[m])
        for b in range(2, 11):
            hit = buckets == b
            if hit.any():
                names.append(f"{m}[d{b}]")
                blocks.append(hit.astype(np.float64))
    X = np.column_stack(blocks) if blocks else np.zeros((len(y), 0))

    factor_levels = tuple(dense_levels(f.labels(sub)) for f in spec.factors)
    cluster_ids = tuple(dense_levels(f.labels(sub)) for f in spec.cluster_dims)
    dm = DesignMatrix(
        y=y,
        X=X,
        columns=tuple(names),
        factor_levels=factor_levels,
        factor_names=tuple(f.name for f in spec.factors),
        cluster_ids=cluster_ids,
        cluster_names=tuple(f.name for f in spec.cluster_dims),
        row_keys=tuple(keys),
        family=spec.family,
        n_missing=n_missing,
    )
    check_rank(dm)
    return dm


def collinear_columns(X: np.ndarray, Xt: np.ndarray, names: Sequence[str], tol: float = PIVOT_TOL) -> List[str]:
    """Names of columns that are (near) linear combinations of the others after absorption.

    ``Xt`` is ``X`` after absorption. A column is dropped when its absorbed
    norm is below ``tol`` times its raw norm, or when its pivot in a
    column-pivoted QR of the raw-norm-scaled ``Xt`` is below ``tol``.
    """
    if X.shape[1] == 0:
        return []
    raw = np.linalg.norm(X, axis=0)
    kept = np.linalg.norm(Xt, axis=0)
    dead = [k for k in range(X.shape[1]) if raw[k] == 0 or kept[k] <= tol * raw[k]]
    alive = [k for k in range(X.shape[1]) if k not in dead]
    if alive:
        Z = Xt[:, alive] / raw[alive]
        _, R, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        dead += [alive[piv[p]] for p in range(len(alive)) if p >= diag.size or diag[p] < tol]
    return [names[k] for k in sorted(dead)]


def check_rank(dm: DesignMatrix, weights: Optional[np.ndarray] = None) -> None:
    if dm.X.shape[1] == 0:
        return
    Xt = Absorber(dm.absorb_levels, weights=weights).residualize(dm.X)
    bad = collinear_columns(dm.X, Xt, dm.columns)
    if bad:
        raise CollinearityError(bad)
