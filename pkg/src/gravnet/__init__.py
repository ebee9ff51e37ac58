"""Dyadic region-pair econometrics: rail-flow ETL, connectedness clustering, PPML and OLS with absorbed fixed effects."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DyadTable,
    FactorSpec,
    RegionAttributes,
    RegionId,
    RegionTable,
    SCIMatrix,
    correlate_measures,
    country_of,
    decile_indicators,
)
from .errors import (  # noqa: E402
    CollinearityError,
    DegenerateModelError,
    GravnetError,
    UndefinedCorrelationError,
    ValidationError,
)

__all__ = [
    "CollinearityError",
    "DegenerateModelError",
    "DyadTable",
    "FactorSpec",
    "GravnetError",
    "RegionAttributes",
    "RegionId",
    "RegionTable",
    "SCIMatrix",
    "UndefinedCorrelationError",
    "ValidationError",
    "correlate_measures",
    "country_of",
    "decile_indicators",
]
