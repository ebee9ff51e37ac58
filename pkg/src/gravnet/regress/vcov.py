"""One-way and two-way (Cameron-Gelbach-Miller) clustered sandwich variances."""

from __future__ import annotations

from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..errors import ValidationError
from .absorb import dense_levels


def _meat(scores: np.ndarray, ids: np.ndarray) -> Tuple[np.ndarray, int]:
    ids = dense_levels(ids)
    G = int(ids.max()) + 1
    sums = np.zeros((G, scores.shape[1]))
    np.add.at(sums, ids, scores)
    return sums.T @ sums, G


def _intersect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = dense_levels(a)
    b = dense_levels(b)
    return dense_levels(a.astype(np.int64) * (int(b.max()) + 1) + b)


def cluster_vcov(
    scores: np.ndarray,
    bread: np.ndarray,
    cluster_ids: Sequence[np.ndarray],
    dof_k: Optional[int] = None,
    small_sample: bool = True,
) -> Tuple[np.ndarray, Dict]:
    """Sandwich ``B^-1 M B^-1`` with cluster-summed scores in ``M``.

    ``cluster_ids`` holds one or two id vectors; an empty sequence means every
    row is its own cluster. Two dimensions give ``V_1 + V_2 - V_12`` with
    ``V_12`` clustered on the intersection. Each piece is scaled by
    ``G/(G-1) * (n-1)/(n-k)`` when ``small_sample`` is set, ``k = dof_k``
    (defaults to the number of columns). An indefinite result is repaired by
    clipping negative eigenvalues at zero and reported in the returned info.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValidationError("scores must be a 2-d array")
    n, p = scores.shape
    k = p if dof_k is None else int(dof_k)
    bread_inv = np.linalg.inv(np.asarray(bread, dtype=np.float64))
    dims = list(cluster_ids) if cluster_ids else [np.arange(n)]
    if len(dims) > 2:
        raise ValidationError("at most two cluster dimensions are supported")
    for d in dims:
        if np.asarray(d).shape[0] != n:
            raise ValidationError("cluster ids must have one entry per row")
        if np.unique(d).size < 2:
            raise ValidationError("each cluster dimension needs at least two clusters")

    def piece(ids):
        meat, G = _meat(scores, ids)
        c = 1.0
        if small_sample:
            c = G / (G - 1) * ((n - 1) / (n - k) if n > k else 1.0)
        return c * bread_inv @ meat @ bread_inv, G

    if len(dims) == 1:
        V, G = piece(dims[0])
        counts = [G]
    else:
        V1, G1 = piece(dims[0])
        V2, G2 = piece(dims[1])
        V12, G12 = piece(_intersect(dims[0], dims[1]))
        V = V1 + V2 - V12
        counts = [G1, G2, G12]
    V = 0.5 * (V + V.T)
    info = {"n_clusters": counts, "psd_repaired": False, "min_eigenvalue": None}
    if p:
        evals, evecs = np.linalg.eigh(V)
        info["min_eigenvalue"] = float(evals.min())
        top = max(float(np.abs(evals).max()), np.finfo(float).tiny)
        if evals.min() < -1e-12 * top:
            V = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
            V = 0.5 * (V + V.T)
            info["psd_repaired"] = True
    return V, info
