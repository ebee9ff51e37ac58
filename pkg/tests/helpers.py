"""Shared fixture generators for the test-suite."""

import numpy as np


def region_codes(n, country_size=None):
    """``n`` valid region codes; with ``country_size`` they are spread over several countries."""
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    out = []
    for k in range(n):
        c = 0 if country_size is None else k // country_size
        out.append(f"{letters[c // 26]}{letters[c % 26]}{k:03d}")
    return out


def random_distances(rng, n):
    """Symmetric positive dissimilarities with a zero diagonal."""
    a = rng.lognormal(size=(n, n))
    d = np.triu(a, 1)
    return d + d.T


def gravity_panel(rng, n_regions, beta=(1.5, -0.5), fe_scale=0.5):
    """Poisson outcomes on all ordered pairs with origin and destination effects.

    Returns ``(y, X, origin, destination)`` with ``log mu = X @ beta + a_i + b_j``.
    """
    i, j = np.meshgrid(np.arange(n_regions), np.arange(n_regions), indexing="ij")
    keep = i != j
    i, j = i[keep], j[keep]
    a = rng.normal(scale=fe_scale, size=n_regions)
    b = rng.normal(scale=fe_scale, size=n_regions)
    X = np.column_stack([rng.normal(size=len(i)), rng.normal(size=len(i))])
    mu = np.exp(X @ np.asarray(beta) + a[i] + b[j] + 1.0)
    y = rng.poisson(mu).astype(float)
    return y, X, i, j


def make_design(y, X, levels=(), clusters=(), family="ols", columns=None):
    """DesignMatrix straight from arrays, bypassing table construction."""
    from gravnet.regress import DesignMatrix
    from gravnet.regress.absorb import dense_levels

    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    return DesignMatrix(
        y=y,
        X=X,
        columns=tuple(columns or (f"x{k}" for k in range(X.shape[1]))),
        factor_levels=tuple(dense_levels(l) for l in levels),
        factor_names=tuple(f"f{k}" for k in range(len(levels))),
        cluster_ids=tuple(dense_levels(c) for c in clusters),
        cluster_names=tuple(f"c{k}" for k in range(len(clusters))),
        row_keys=tuple(range(len(y))),
        family=family,
    )


def random_fe_case(rng, max_rows=500, max_factors=3):
    """Random regression problem: ``(X, levels, eta_without_noise)``."""
    n = int(rng.integers(40, max_rows + 1))
    n_factors = int(rng.integers(1, max_factors + 1))
    levels = [rng.integers(0, int(rng.integers(2, max(3, n // 8))), n) for _ in range(n_factors)]
    p = int(rng.integers(1, 4))
    X = rng.normal(size=(n, p))
    effects = sum(rng.normal(scale=0.3, size=l.max() + 1)[l] for l in levels)
    beta = rng.uniform(-1, 1, p)
    return X, levels, X @ beta + effects
