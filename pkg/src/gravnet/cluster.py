"""Average-linkage agglomerative clustering of regions by social connectedness.

Distances are ``1 / SCI``. Cluster dissimilarity is the mean over all cross
pairs (UPGMA), maintained with the Lance-Williams recurrence

    D(A+B, C) = (|A| D(A, C) + |B| D(B, C)) / (|A| + |B|).

Minimum-distance ties (within a relative ``tie_rtol``) go to the pair whose
(smaller canonical region, larger canonical region) sorts first, where a
cluster's canonical region is its lexicographically smallest member.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .core import SCIMatrix, _fmt
from .errors import ValidationError

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class DistanceMatrix:
    regions: Tuple[str, ...]
    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=np.float64)
        n = len(self.regions)
        if d.shape != (n, n):
            raise ValidationError(f"distance matrix shape {d.shape} does not match {n} regions")
        if len(set(self.regions)) != n:
            raise ValidationError("duplicate regions in distance matrix")
        if not np.isfinite(d).all():
            raise ValidationError("distance matrix has non-finite entries")
        if (np.diag(d) != 0).any():
            raise ValidationError("distance matrix diagonal must be zero")
        off = ~np.eye(n, dtype=bool)
        bad = [(a, b) for a, b in np.argwhere(off & (d <= 0)) if a < b]
        if bad:
            pairs = ", ".join(f"{self.regions[a]}-{self.regions[b]}" for a, b in bad[:10])
            raise ValidationError(f"non-positive distances: {pairs}")
        if not np.array_equal(d, d.T):
            bad = [(a, b) for a, b in np.argwhere(d != d.T) if a < b]
            pairs = ", ".join(f"{self.regions[a]}-{self.regions[b]}" for a, b in bad[:10])
            raise ValidationError(f"asymmetric distances: {pairs}")
        d.setflags(write=False)
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "d", d)

    def __len__(self):
        return len(self.regions)


def build_distance(sci: SCIMatrix) -> DistanceMatrix:
    """``d[i][j] = 1 / sci[i][j]`` off the diagonal, zero on it."""
    s = sci.values
    n = len(sci)
    off = ~np.eye(n, dtype=bool)
    bad = [(a, b) for a, b in np.argwhere(off & (s <= 0)) if a < b]
    if bad:
        pairs = ", ".join(f"{sci.regions[a]}-{sci.regions[b]}" for a, b in bad[:10])
        raise ValidationError(f"SCI must be positive to invert; offending pairs: {pairs}")
    d = np.zeros((n, n))
    d[off] = 1.0 / s[off]
    return DistanceMatrix(sci.regions, d)


@dataclass(frozen=True)
class MergeStep:
    left: int
    right: int
    height: float
    new_id: int


@dataclass(frozen=True)
class MergeTree:
    """Ordered merges; leaves are ``0..N-1`` in region order, merge ``s`` creates id ``N+s``.

    ``left`` is the cluster whose canonical region sorts first. Heights may
    decrease between steps (average linkage on non-metric input); such steps
    are listed in ``inversions``.
    """

    regions: Tuple[str, ...]
    steps: Tuple[MergeStep, ...]
    inversions: Tuple[int, ...] = field(default=())

    def __len__(self):
        return len(self.steps)

    @property
    def heights(self) -> np.ndarray:
        return np.array([s.height for s in self.steps])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "left", "right", "height", "new_id"])
        for k, s in enumerate(self.steps, start=1):
            w.writerow([k, s.left, s.right, _fmt(s.height), s.new_id])
        return buf.getvalue()

    def members(self) -> Dict[int, Tuple[int, ...]]:
        """Leaf indices under every cluster id."""
        out = {k: (k,) for k in range(len(self.regions))}
        for s in self.steps:
            out[s.new_id] = tuple(sorted(out[s.left] + out[s.right]))
        return out


def agglomerate(dm: DistanceMatrix, tie_rtol: float = TIE_RTOL) -> MergeTree:
    n = len(dm)
    if n < 2:
        raise ValidationError("clustering needs at least two regions")
    # canon[k]: rank of the smallest region in live cluster slot k
    rank = {r: k for k, r in enumerate(sorted(dm.regions))}
    canon = np.array([rank[r] for r in dm.regions], dtype=np.int64)
    size = np.ones(n)
    ids = np.arange(n)
    D = np.array(dm.d, dtype=np.float64)
    live = np.ones(n, dtype=bool)
    iu = np.triu_indices(n, 1)
    steps: List[MergeStep] = []
    inversions: List[int] = []
    for step in range(n - 1):
        a_idx, b_idx = iu
        ok = live[a_idx] & live[b_idx]
        ai, bi = a_idx[ok], b_idx[ok]
        vals = D[ai, bi]
        m = vals.min()
        cand = vals <= m + tie_rtol * abs(m)
        ai, bi = ai[cand], bi[cand]
        lo = np.minimum(canon[ai], canon[bi])
        hi = np.maximum(canon[ai], canon[bi])
        pick = np.lexsort((hi, lo))[0]
        a, b = int(ai[pick]), int(bi[pick])
        if canon[b] < canon[a]:
            a, b = b, a
        height = float(D[a, b])
        if steps and height < steps[-1].height:
            inversions.append(step)
        new_id = n + step
        steps.append(MergeStep(int(ids[a]), int(ids[b]), height, new_id))
        # slot a becomes the merged cluster, slot b retires
        na, nb = size[a], size[b]
        row = (na * D[a] + nb * D[b]) / (na + nb)
        D[a, :] = row
        D[:, a] = row
        D[a, a] = 0.0
        live[b] = False
        size[a] = na + nb
        canon[a] = min(canon[a], canon[b])
        ids[a] = new_id
    return MergeTree(tuple(dm.regions), tuple(steps), tuple(inversions))


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: Dict[str, int]

    def communities(self) -> List[List[str]]:
        groups: Dict[int, List[str]] = {}
        for r, lab in self.labels.items():
            groups.setdefault(lab, []).append(r)
        return [sorted(groups[lab]) for lab in sorted(groups)]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["region", "community"])
        for r in sorted(self.labels):
            w.writerow([r, self.labels[r]])
        return buf.getvalue()


def canonical_labels(groups: Sequence[Sequence[str]]) -> Dict[str, int]:
    """Label groups 1..k in order of their smallest member."""
    ordered = sorted((sorted(g) for g in groups if g), key=lambda g: g[0])
    return {r: lab for lab, g in enumerate(ordered, start=1) for r in g}


def cut(tree: MergeTree, k: int) -> ClusterAssignment:
    """Assignment with ``k`` communities: apply the first ``N - k`` merges."""
    n = len(tree.regions)
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
        raise ValidationError(f"k must be between 1 and {n}, got {k!r}")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s in tree.steps[: n - k]:
        parent[find(s.left)] = s.new_id
        parent[find(s.right)] = s.new_id
    groups: Dict[int, List[str]] = {}
    for leaf, region in enumerate(tree.regions):
        groups.setdefault(find(leaf), []).append(region)
    return ClusterAssignment(int(k), canonical_labels(list(groups.values())))


def cluster_regions(sci: SCIMatrix, ks: Sequence[int]) -> Tuple[MergeTree, Dict[int, ClusterAssignment]]:
    tree = agglomerate(build_distance(sci))
    return tree, {k: cut(tree, k) for k in ks}
