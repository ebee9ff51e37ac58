"""Fit results, JSON serialisation and a side-by-side text table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats


@dataclass
class FitResult:
    terms: List[str]
    coefficients: Dict[str, float]
    vcov: np.ndarray
    se: Dict[str, float]
    fit_stat: float
    n_total: int
    n_dropped_by_fe: int
    n_used: int
    residuals: np.ndarray
    converged: bool
    iterations: int
    family: str
    name: str = ""
    fitted: Optional[np.ndarray] = None
    metadata: Dict = field(default_factory=dict)

    @property
    def fit_stat_name(self) -> str:
        return "pseudo-R2" if self.family == "ppml" else "R2"

    def pvalues(self) -> Dict[str, float]:
        """Two-sided p-values from the normal approximation."""
        out = {}
        for t in self.terms:
            s = self.se[t]
            out[t] = float(2 * stats.norm.sf(abs(self.coefficients[t] / s))) if s > 0 else math.nan
        return out

    def to_dict(self, include_residuals: bool = False) -> Dict:
        d = {
            "name": self.name,
            "family": self.family,
            "terms": list(self.terms),
            "coefficients": {t: self.coefficients[t] for t in self.terms},
            "se": {t: self.se[t] for t in self.terms},
            "pvalues": self.pvalues(),
            "vcov": [[float(v) for v in row] for row in np.asarray(self.vcov)],
            "fit_stat": {"name": self.fit_stat_name, "value": self.fit_stat},
            "n_total": self.n_total,
            "n_dropped_by_fe": self.n_dropped_by_fe,
            "n_used": self.n_used,
            "converged": self.converged,
            "iterations": self.iterations,
            "metadata": self.metadata,
        }
        if include_residuals:
            d["residuals"] = [float(r) for r in self.residuals]
        return d


def stars(p: float) -> str:
    if not p < 0.10:
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*"


def format_table(
    results: Sequence[FitResult],
    indicator_rows: Optional[Dict[str, Sequence[bool]]] = None,
    title: str = "",
) -> str:
    """Coefficients with stars, standard errors in parentheses, one column per fit."""
    terms: List[str] = []
    for r in results:
        terms += [t for t in r.terms if t not in terms]
    label_w = max([len(t) for t in terms] + [len(k) for k in (indicator_rows or {})] + [22]) + 2
    col_w = 14
    heads = [r.name or f"({k + 1})" for k, r in enumerate(results)]
    lines = []
    if title:
        lines.append(title)
    rule = "=" * (label_w + col_w * len(results))
    lines += [rule, " " * label_w + "".join(h.center(col_w) for h in heads), "-" * len(rule)]
    for t in terms:
        cells, ses = [], []
        for r in results:
            if t in r.coefficients:
                p = r.pvalues()[t]
                cells.append(f"{r.coefficients[t]:.3f}{stars(p)}")
                ses.append(f"({r.se[t]:.3f})")
            else:
                cells.append("")
                ses.append("")
        lines.append(t.ljust(label_w) + "".join(c.center(col_w) for c in cells))
        lines.append(" " * label_w + "".join(c.center(col_w) for c in ses))
    if indicator_rows:
        lines.append("")
        for label, flags in indicator_rows.items():
            lines.append(label.ljust(label_w) + "".join(("Y" if f else "").center(col_w) for f in flags))
    lines.append("-" * len(rule))
    stat_names = {r.fit_stat_name for r in results}
    stat_label = stat_names.pop() if len(stat_names) == 1 else "R2 / pseudo-R2"
    lines.append(stat_label.ljust(label_w) + "".join(f"{r.fit_stat:.3f}".center(col_w) for r in results))
    lines.append("Number of Observations".ljust(label_w) + "".join(f"{r.n_used:,}".center(col_w) for r in results))
    if any(r.family == "ppml" for r in results):
        lines.append(
            "N Explained by FEs".ljust(label_w) + "".join(f"{r.n_dropped_by_fe:,}".center(col_w) for r in results)
        )
    if any(not r.converged for r in results):
        lines.append(
            "Converged".ljust(label_w) + "".join(("yes" if r.converged else "NO").center(col_w) for r in results)
        )
    lines.append(rule)
    lines.append("Significance: *(p<0.10), **(p<0.05), ***(p<0.01)")
    return "\n".join(lines) + "\n"
