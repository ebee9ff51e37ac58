"""Least squares with absorbed fixed effects."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import CollinearityError, ValidationError
from .absorb import Absorber
from .design import DesignMatrix, collinear_columns
from .results import FitResult
from .vcov import cluster_vcov


def ols_fit(dm: DesignMatrix, cluster_ids: Optional[Sequence[np.ndarray]] = None) -> FitResult:
    """OLS of ``y`` on ``X`` with ``dm``'s factors absorbed.

    ``cluster_ids`` overrides ``dm.cluster_ids``; with neither, the variance is
    the heteroskedasticity-robust sandwich (every row its own cluster).
    R-squared is measured against the raw outcome's total variation.
    """
    n, p = dm.X.shape
    if p == 0:
        raise ValidationError("OLS needs at least one regressor")
    if n <= p + dm.n_absorbed:
        raise ValidationError(f"too few observations ({n}) for {p} regressors and {dm.n_absorbed} absorbed levels")
    absorber = Absorber(dm.absorb_levels)
    M = absorber.residualize(np.column_stack([dm.y, dm.X]))
    yt, Xt = M[:, 0], M[:, 1:]
    bad = collinear_columns(dm.X, Xt, dm.columns)
    if bad:
        raise CollinearityError(bad)
    beta, *_ = np.linalg.lstsq(Xt, yt, rcond=None)
    resid = yt - Xt @ beta
    ssr = float(resid @ resid)
    tss = float(((dm.y - dm.y.mean()) ** 2).sum())
    tss_within = float(yt @ yt)
    r2 = 1.0 - ssr / tss if tss > 0 else float("nan")

    ids = dm.cluster_ids if cluster_ids is None else tuple(cluster_ids)
    V, info = cluster_vcov(Xt * resid[:, None], Xt.T @ Xt, ids, dof_k=p)
    terms = list(dm.columns)
    se = np.sqrt(np.clip(np.diag(V), 0.0, None))
    return FitResult(
        terms=terms,
        coefficients={t: float(b) for t, b in zip(terms, beta)},
        vcov=V,
        se={t: float(s) for t, s in zip(terms, se)},
        fit_stat=r2,
        n_total=dm.n_total,
        n_dropped_by_fe=dm.n_dropped_by_fe,
        n_used=n,
        residuals=resid,
        converged=True,
        iterations=1,
        family="ols",
        fitted=dm.y - resid,
        metadata={
            "fit_stat": "R2 = 1 - SSR / sum((y - mean(y))^2)",
            "within_r2": 1.0 - ssr / tss_within if tss_within > 0 else float("nan"),
            "absorbed": list(dm.factor_names) or ["intercept"],
            "n_absorbed_levels": dm.n_absorbed,
            "n_missing": dm.n_missing,
            "vcov": _vcov_label(dm.cluster_names if cluster_ids is None else None, len(ids)),
            "small_sample": "G/(G-1) * (n-1)/(n-k) per piece, k = number of slope coefficients",
            **info,
        },
    )


def _vcov_label(names, ndims: int) -> str:
    if ndims == 0:
        return "heteroskedasticity-robust (HC1)"
    label = " and ".join(names) if names else f"{ndims} supplied dimension(s)"
    return ("two-way" if ndims == 2 else "one-way") + f" clustered by {label}"
