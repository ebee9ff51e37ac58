"""Fixed-effect absorption by (weighted) alternating projections."""

from __future__ import annotations

import warnings
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class Absorber:
    """Residualize columns on one or more sets of categorical dummies.

    With weights ``w`` the result is the ``W``-orthogonal projection onto the
    complement of the dummy span, i.e. the residual from a weighted regression
    on every factor jointly. A single factor is handled exactly in one pass;
    several factors are swept until the per-sweep update is below ``tol``
    relative to each column's scale.
    """

    def __init__(
        self,
        levels: Sequence[np.ndarray],
        weights: Optional[np.ndarray] = None,
        tol: float = 1e-14,
        max_iter: int = 100_000,
    ):
        self.levels = [np.asarray(l, dtype=np.intp) for l in levels]
        self.n = self.levels[0].shape[0] if self.levels else 0
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0
        self._ind: List[sp.csr_matrix] = []
        self._wsum: List[np.ndarray] = []
        w = np.ones(self.n) if self.weights is None else self.weights
        for lev in self.levels:
            L = int(lev.max()) + 1 if lev.size else 0
            ind = sp.csr_matrix((np.ones(self.n), (np.arange(self.n), lev)), shape=(self.n, L))
            wsum = np.bincount(lev, weights=w, minlength=L)
            self._ind.append(ind)
            self._wsum.append(wsum)

    def _means(self, k: int, M: np.ndarray) -> np.ndarray:
        WM = M if self.weights is None else M * self.weights[:, None]
        sums = self._ind[k].T @ WM
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / self._wsum[k][:, None]
        return np.nan_to_num(means)

    def residualize(self, M: np.ndarray) -> np.ndarray:
        M = np.array(M, dtype=np.float64)
        squeeze = M.ndim == 1
        if squeeze:
            M = M[:, None]
        if not self.levels or M.shape[1] == 0:
            return M[:, 0] if squeeze else M
        scale = np.abs(M).max(axis=0)
        scale[scale == 0] = 1.0
        if len(self.levels) == 1:
            M -= self._means(0, M)[self.levels[0]]
            self.iterations = 1
            return M[:, 0] if squeeze else M
        for it in range(1, self.max_iter + 1):
            prev = M.copy()
            for k, lev in enumerate(self.levels):
                M -= self._means(k, M)[lev]
            change = (np.abs(M - prev).max(axis=0) / scale).max()
            if change <= self.tol:
                break
        else:
            warnings.warn(f"fixed-effect absorption stopped after {self.max_iter} sweeps", RuntimeWarning)
        self.iterations = it
        return M[:, 0] if squeeze else M


def dense_levels(labels) -> np.ndarray:
    """Map arbitrary labels to dense ids ``0..L-1`` in sorted-label order."""
    _, inv = np.unique(np.asarray(labels), return_inverse=True)
    return inv.astype(np.intp).reshape(-1)
