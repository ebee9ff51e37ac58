"""Declarative multi-column model configs (YAML).

Top-level keys act as defaults for every entry of ``columns``::

    title: Social connectedness and rail travel
    family: ppml
    data: rail_most_recent.csv
    regions: region_attrs.csv        # optional, joined as i.<attr>, j.<attr>, absdiff.<attr>
    outcome: passengers
    cluster: [origin, destination]
    columns:
      - name: "(1)"
        terms: [log(sci)]
        factors: [origin, destination]
      - name: "(2)"
        terms: [log(sci), log(distance_km)]
        factors: [origin, destination, country_pair]

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from ..errors import ValidationError
from .design import ModelSpec

_KEYS = {
    "name", "family", "data", "regions", "outcome", "terms", "decile_terms",
    "factors", "cluster", "pseudo_r2_null", "max_iter", "tol",
}
_TOP_ONLY = {"title", "columns"}


@dataclass
class ColumnConfig:
    spec: ModelSpec
    data: Path
    regions: Optional[Path] = None
    options: Dict = field(default_factory=dict)


@dataclass
class TableConfig:
    title: str
    columns: List[ColumnConfig]
    source: Optional[Path] = None

    @property
    def data_files(self) -> List[Path]:
        files = []
        for c in self.columns:
            for p in (c.data, c.regions):
                if p is not None and p not in files:
                    files.append(p)
        return files


def _as_list(value, key):
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ValidationError(f"config key {key!r} must be a string or a list of strings")
    return value


def parse_table_config(
    raw: Dict,
    base_dir: Path = Path("."),
    data_override: Optional[Path] = None,
    regions_override: Optional[Path] = None,
) -> TableConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping")
    unknown = set(raw) - _KEYS - _TOP_ONLY
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    defaults = {k: v for k, v in raw.items() if k in _KEYS}
    entries = raw.get("columns") or [{}]
    if not isinstance(entries, list):
        raise ValidationError("'columns' must be a list")
    columns = []
    for idx, entry in enumerate(entries, start=1):
        if not isinstance(entry, dict):
            raise ValidationError(f"column {idx} must be a mapping")
        bad = set(entry) - _KEYS
        if bad:
            raise ValidationError(f"column {idx}: unknown keys {', '.join(sorted(bad))}")
        c = {**defaults, **entry}
        if "outcome" not in c:
            raise ValidationError(f"column {idx}: no outcome given")
        data = data_override or c.get("data")
        if data is None:
            raise ValidationError(f"column {idx}: no data file given")
        regions = regions_override or c.get("regions")
        options = {}
        if c.get("family", "ols") == "ppml":
            for key in ("pseudo_r2_null", "max_iter", "tol"):
                if key in c:
                    options[key] = c[key]
        spec = ModelSpec(
            outcome=str(c["outcome"]),
            continuous_terms=tuple(_as_list(c.get("terms"), "terms")),
            decile_terms=tuple(_as_list(c.get("decile_terms"), "decile_terms")),
            factors=tuple(_as_list(c.get("factors"), "factors")),
            cluster_dims=tuple(_as_list(c.get("cluster"), "cluster")),
            family=str(c.get("family", "ols")),
            name=str(c.get("name", f"({idx})")),
        )
        columns.append(
            ColumnConfig(
                spec=spec,
                data=(base_dir / data) if data_override is None else Path(data),
                regions=None if regions is None else (
                    (base_dir / regions) if regions_override is None else Path(regions)),
                options=options,
            )
        )
    return TableConfig(title=str(raw.get("title", "")), columns=columns)


def load_table_config(
    path, data_override: Optional[Path] = None, regions_override: Optional[Path] = None
) -> TableConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML: {exc}") from None
    cfg = parse_table_config(raw, path.parent, data_override, regions_override)
    cfg.source = path
    return cfg
