"""Poisson pseudo-maximum likelihood with high-dimensional fixed effects.

Estimation is IRLS: each iteration takes weights ``mu = exp(eta)`` and the
working response ``z = eta + (y - mu) / mu``, absorbs the factors from ``z``
and ``X`` by weighted alternating projections, and solves the weighted least
squares problem. The new linear predictor is ``z`` minus the WLS residual.
"""

from __future__ import annotations

import math
import warnings
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from ..errors import CollinearityError, DegenerateModelError, ValidationError
from .absorb import Absorber
from .design import DesignMatrix, collinear_columns
from .ols import _vcov_label
from .results import FitResult
from .vcov import cluster_vcov

ETA_MIN = math.log(np.finfo(float).tiny)
ETA_MAX = 700.0
PSEUDO_R2_NULLS = ("constant", "factors")


def _separated_rows(y: np.ndarray, levels: Sequence[np.ndarray], alive: np.ndarray) -> np.ndarray:
    """Rows (among ``alive``) in an all-zero-outcome level or a singleton level of any factor."""
    bad = np.zeros_like(alive)
    for lev in levels:
        L = int(lev.max()) + 1 if lev.size else 0
        cnt = np.bincount(lev[alive], minlength=L)
        tot = np.bincount(lev[alive], weights=y[alive], minlength=L)
        flag = (cnt == 1) | ((cnt > 0) & (tot == 0))
        bad |= alive & flag[lev]
    return bad


def drop_separated(dm: DesignMatrix) -> Tuple[DesignMatrix, int]:
    """Drop observations whose outcome is fitted exactly by the fixed effects.

    A factor level whose outcomes are all zero, or that holds a single
    observation, is fitted perfectly by its own effect. Removing such rows can
    expose new ones in other factors, so the scan repeats until nothing changes.
    """
    if (dm.y < 0).any():
        raise ValidationError("PPML outcome must be non-negative")
    levels = dm.absorb_levels
    alive = np.ones(dm.n, dtype=bool)
    while True:
        bad = _separated_rows(dm.y, levels, alive)
        if not bad.any():
            break
        alive &= ~bad
        if not alive.any():
            raise DegenerateModelError("every observation is fully explained by the fixed effects")
    n_dropped = int(dm.n - alive.sum())
    if n_dropped == 0:
        return dm, 0
    return dm.select(alive, n_dropped), n_dropped


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def poisson_loglik(y: np.ndarray, eta: np.ndarray) -> float:
    return float(np.sum(y * eta - np.exp(eta) - gammaln(y + 1.0)))


def _irls(y, X, levels, tol, max_iter):
    pos = y[y > 0]
    eta = np.log(y + 0.5 * (pos.mean() if pos.size else 1.0))
    eta = np.clip(eta, ETA_MIN, ETA_MAX)
    mu = np.exp(eta)
    dev_old = poisson_deviance(y, mu)
    beta = np.zeros(X.shape[1])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = eta + (y - mu) / mu
        M = Absorber(levels, weights=mu).residualize(np.column_stack([z, X]))
        zt, Xt = M[:, 0], M[:, 1:]
        sw = np.sqrt(mu)
        if X.shape[1]:
            beta, *_ = np.linalg.lstsq(Xt * sw[:, None], zt * sw, rcond=None)
            resid = zt - Xt @ beta
        else:
            resid = zt
        eta = np.clip(z - resid, ETA_MIN, ETA_MAX)
        mu = np.exp(eta)
        dev = poisson_deviance(y, mu)
        if abs(dev - dev_old) / max(min(dev, dev_old), 0.1) <= tol:
            converged = True
            break
        dev_old = dev
    return beta, eta, mu, dev, converged, it


def ppml_fit(
    dm: DesignMatrix,
    cluster_ids: Optional[Sequence[np.ndarray]] = None,
    tol: float = 1e-8,
    max_iter: int = 100,
    pseudo_r2_null: str = "constant",
) -> FitResult:
    """Fit a Poisson pseudo-likelihood model with ``dm``'s factors absorbed.

    Separated observations are dropped first (idempotent if already done).
    ``pseudo_r2_null`` picks the null model of the McFadden pseudo-R2: an
    intercept-only model (``"constant"``) or the factors-only model
    (``"factors"``); both values are recorded in ``metadata``.
    """
    if pseudo_r2_null not in PSEUDO_R2_NULLS:
        raise ValidationError(f"pseudo_r2_null must be one of {PSEUDO_R2_NULLS}")
    if (dm.y < 0).any():
        raise ValidationError("PPML outcome must be non-negative")
    dm, _ = drop_separated(dm)
    y, X = dm.y, dm.X
    n, p = X.shape
    levels = dm.absorb_levels
    if p:
        Xt0 = Absorber(levels).residualize(X)
        bad = collinear_columns(X, Xt0, dm.columns)
        if bad:
            raise CollinearityError(bad)

    beta, eta, mu, dev, converged, iters = _irls(y, X, levels, tol, max_iter)
    if not converged:
        warnings.warn(f"PPML did not converge in {max_iter} iterations", RuntimeWarning)

    Xt = Absorber(levels, weights=mu).residualize(X)
    score_resid = y - mu
    ids = dm.cluster_ids if cluster_ids is None else tuple(cluster_ids)
    if p:
        V, info = cluster_vcov(Xt * score_resid[:, None], (Xt * mu[:, None]).T @ Xt, ids, dof_k=p)
    else:
        V, info = np.zeros((0, 0)), {}

    ll = poisson_loglik(y, eta)
    ybar = y.mean()
    ll_const = poisson_loglik(y, np.full(n, math.log(ybar)))
    if p:
        _, eta0, _, _, _, _ = _irls(y, np.zeros((n, 0)), levels, tol, max_iter)
        ll_factors = poisson_loglik(y, eta0)
    else:
        ll_factors = ll
    pr2 = {"constant": 1.0 - ll / ll_const, "factors": 1.0 - ll / ll_factors}

    moment = X.T @ (y - mu) if p else np.zeros(0)
    moment_scale = np.abs(X).T @ np.abs(y) if p else np.zeros(0)
    fe_gap = 0.0
    for lev in levels:
        sy = np.bincount(lev, weights=y)
        smu = np.bincount(lev, weights=mu)
        fe_gap = max(fe_gap, float(np.max(np.abs(sy - smu) / np.maximum(sy, 1e-300))))

    terms = list(dm.columns)
    se = np.sqrt(np.clip(np.diag(V), 0.0, None)) if p else np.zeros(0)
    return FitResult(
        terms=terms,
        coefficients={t: float(b) for t, b in zip(terms, beta)},
        vcov=V,
        se={t: float(s) for t, s in zip(terms, se)},
        fit_stat=float(pr2[pseudo_r2_null]),
        n_total=dm.n_total,
        n_dropped_by_fe=dm.n_dropped_by_fe,
        n_used=n,
        residuals=y - mu,
        converged=converged,
        iterations=iters,
        family="ppml",
        fitted=mu,
        metadata={
            "fit_stat": f"McFadden pseudo-R2 = 1 - LL/LL0, null = {pseudo_r2_null}-only model",
            "pseudo_r2_constant_null": float(pr2["constant"]),
            "pseudo_r2_factors_null": float(pr2["factors"]),
            "log_likelihood": ll,
            "deviance": dev,
            "absorbed": list(dm.factor_names) or ["intercept"],
            "n_absorbed_levels": dm.n_absorbed,
            "n_missing": dm.n_missing,
            "max_moment_violation": float(np.max(np.abs(moment) / np.maximum(moment_scale, 1e-300))) if p else 0.0,
            "max_fe_moment_violation": fe_gap,
            "vcov": _vcov_label(dm.cluster_names if cluster_ids is None else None, len(ids)),
            "small_sample": "G/(G-1) * (n-1)/(n-k) per piece, k = number of slope coefficients",
            **info,
        },
    )
