"""Design construction and estimation: OLS and PPML with absorbed fixed effects."""

from typing import Optional

from ..core import RegionTable
from .absorb import Absorber
from .design import DesignMatrix, ModelSpec, Term, build_design, check_rank, collinear_columns
from .ols import ols_fit
from .ppml import drop_separated, ppml_fit
from .results import FitResult, format_table
from .vcov import cluster_vcov


def fit(data, spec: ModelSpec, regions: Optional[RegionTable] = None, **kwargs) -> FitResult:
    """Build the design for ``spec`` and run the matching estimator."""
    dm = build_design(data, spec, regions)
    if spec.family == "ppml":
        dm, _ = drop_separated(dm)
        result = ppml_fit(dm, **kwargs)
    else:
        result = ols_fit(dm, **kwargs)
    result.name = spec.name
    return result


__all__ = [
    "Absorber",
    "DesignMatrix",
    "FitResult",
    "ModelSpec",
    "Term",
    "build_design",
    "check_rank",
    "cluster_vcov",
    "collinear_columns",
    "drop_separated",
    "fit",
    "format_table",
    "ols_fit",
    "ppml_fit",
]
