"""Euclidean distances and Ward agglomerative clustering.

Two Ward variants are supported:

``ward-d2``
    The Lance-Williams recurrence runs on squared Euclidean distances and
    the reported merge height is the square root of the merge cost. The
    increase of the within-cluster error sum of squares at a merge equals
    half the squared height.
``ward-d``
    The same recurrence applied directly to unsquared distances; the
    merge cost is reported as the height.

The agglomeration is a naive O(n^3) scan over all active cluster pairs.
Pairs whose cost ties with the minimum (within a relative 1e-10) are
resolved by taking the lexicographically least (smaller id, larger id)
pair, where a cluster's id is the smallest original leaf index it holds.
"""
from __future__ import annotations

import io
import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import CsvSource, DatasetError, FeatureMatrix, InstitutionRecord, EsfriArea, _read_rows, _write_rows

LINKAGES = ("ward-d2", "ward-d")
TIE_RTOL = 1e-10


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class DistanceMatrix:
    ids: tuple[str, ...]
    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float, copy=True)
        n = len(self.ids)
        if d.shape != (n, n):
            raise ClusteringError(f"distance matrix shape {d.shape} does not match {n} ids")
        d.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "d", d)

    def validate(self) -> None:
        d = self.d
        if not np.all(np.isfinite(d)):
            raise ClusteringError("distance matrix has non-finite entries")
        if (d < 0).any():
            raise ClusteringError("distance matrix has negative entries")
        if not np.array_equal(d, d.T):
            raise ClusteringError("distance matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise ClusteringError("distance matrix has a nonzero diagonal")


@dataclass(frozen=True)
class Merge:
    """One agglomeration step.

    Nodes ``0..n-1`` are leaves; merge ``m`` creates node ``n + m``.
    """

    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    leaf_ids: tuple[str, ...]
    merges: tuple[Merge, ...]
    linkage: str = "ward-d2"

    @property
    def n(self) -> int:
        return len(self.leaf_ids)

    def to_json(self) -> str:
        doc = {
            "linkage": self.linkage,
            "leaves": list(self.leaf_ids),
            "merges": [
                {"node": self.n + m, "left": mg.left, "right": mg.right,
                 "height": mg.height, "size": mg.size}
                for m, mg in enumerate(self.merges)
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_dot(self) -> str:
        """Graphviz digraph; leaves carry ids, internal nodes their height."""
        out = io.StringIO()
        out.write("digraph dendrogram {\n")
        out.write("  node [shape=box];\n")
        for i, rid in enumerate(self.leaf_ids):
            out.write(f'  n{i} [label="{_dot_escape(rid)}"];\n')
        for m, mg in enumerate(self.merges):
            node = self.n + m
            out.write(f'  n{node} [shape=point, xlabel="{mg.height:.4f}"];\n')
            out.write(f"  n{node} -> n{mg.left};\n")
            out.write(f"  n{node} -> n{mg.right};\n")
        out.write("}\n")
        return out.getvalue()


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


@dataclass(frozen=True)
class Partition:
    ids: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "labels", tuple(int(l) for l in self.labels))
        if len(self.ids) != len(self.labels):
            raise ClusteringError("ids and labels differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ClusteringError("partition ids must be unique")
        k = max(self.labels, default=0)
        if set(self.labels) != set(range(1, k + 1)):
            raise ClusteringError(f"cluster labels must cover 1..{k} with no empty cluster")

    @property
    def k(self) -> int:
        return max(self.labels, default=0)

    def sizes(self) -> list[int]:
        c = Counter(self.labels)
        return [c[g] for g in range(1, self.k + 1)]

    def members(self, label: int) -> list[str]:
        return [i for i, l in zip(self.ids, self.labels) if l == label]

    def label_of(self) -> dict[str, int]:
        return dict(zip(self.ids, self.labels))

    def reorder(self, ids: Sequence[str]) -> Partition:
        lab = self.label_of()
        if set(ids) != set(lab) or len(ids) != len(lab):
            raise ClusteringError("partition ids do not match")
        return Partition(tuple(ids), tuple(lab[i] for i in ids))


# --------------------------------------------------------------------------

def euclidean_distances(X: FeatureMatrix) -> DistanceMatrix:
    v = X.values
    if v.size == 0:
        raise ClusteringError("cannot compute distances of an empty matrix")
    diff = v[:, None, :] - v[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return DistanceMatrix(X.row_ids, d)


def ward_cluster(D: DistanceMatrix, linkage: str = "ward-d2") -> Dendrogram:
    if linkage not in LINKAGES:
        raise ClusteringError(f"unknown linkage {linkage!r}; choose from {LINKAGES}")
    D.validate()
    n = len(D.ids)
    if n < 2:
        raise ClusteringError("need at least two observations to cluster")

    work = D.d ** 2 if linkage == "ward-d2" else D.d.copy()
    work = np.array(work, dtype=float)
    np.fill_diagonal(work, np.inf)
    size = np.ones(n, dtype=np.int64)
    node = list(range(n))          # dendrogram node currently held by slot
    active = np.ones(n, dtype=bool)
    merges: list[Merge] = []

    # slot i always holds the cluster whose smallest leaf index is i
    for _ in range(n - 1):
        idx = np.flatnonzero(active)
        sub = work[np.ix_(idx, idx)]
        iu = np.triu_indices(len(idx), k=1)
        costs = sub[iu]
        best = costs.min()
        tied = np.flatnonzero(costs <= best + TIE_RTOL * abs(best))
        # triu_indices enumerates pairs in lexicographic order already
        t = tied[0]
        i, j = idx[iu[0][t]], idx[iu[1][t]]
        cost = work[i, j]

        ni, nj = size[i], size[j]
        others = idx[(idx != i) & (idx != j)]
        nc = size[others]
        updated = ((ni + nc) * work[i, others] + (nj + nc) * work[j, others]
                   - nc * cost) / (ni + nj + nc)
        work[i, others] = updated
        work[others, i] = updated
        work[j, :] = np.inf
        work[:, j] = np.inf
        active[j] = False

        height = math.sqrt(max(cost, 0.0)) if linkage == "ward-d2" else float(cost)
        left, right = sorted((node[i], node[j]))
        merges.append(Merge(left, right, height, int(ni + nj)))
        node[i] = n + len(merges) - 1
        size[i] = ni + nj

    return Dendrogram(D.ids, tuple(merges), linkage)


def cut(tree: Dendrogram, k: int) -> Partition:
    """Undo the last k-1 merges; label clusters by their smallest leaf."""
    n = tree.n
    if not 1 <= k <= n:
        raise ClusteringError(f"k={k} outside 1..{n}")
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    rep = list(range(n + len(tree.merges)))  # node -> some leaf inside it
    for m, mg in enumerate(tree.merges[: n - k]):
        a, b = find(rep[mg.left]), find(rep[mg.right])
        parent[max(a, b)] = min(a, b)
        rep[n + m] = min(a, b)

    roots = [find(i) for i in range(n)]
    order = {r: g + 1 for g, r in enumerate(sorted(set(roots)))}
    return Partition(tree.leaf_ids, tuple(order[r] for r in roots))


def adjusted_rand(a: Partition, b: Partition) -> float:
    """Hubert-Arabie adjusted Rand index."""
    if set(a.ids) != set(b.ids) or len(a.ids) != len(b.ids):
        raise ClusteringError("partitions are defined over different ids")
    b = b.reorder(a.ids)
    n = len(a.ids)
    table = np.zeros((a.k, b.k), dtype=np.int64)
    for la, lb in zip(a.labels, b.labels):
        table[la - 1, lb - 1] += 1

    def c2(x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(x * (x - 1) / 2))

    index = c2(table)
    row, col = c2(table.sum(1)), c2(table.sum(0))
    total = n * (n - 1) / 2
    if total == 0:
        return 1.0
    expected = row * col / total
    maximum = (row + col) / 2
    if maximum == expected:
        # only reachable when both are all-singletons or both a single cluster
        return 1.0
    return (index - expected) / (maximum - expected)


def disagreements(reference: Partition, found: Partition) -> list[tuple[str, int, int]]:
    """Ids whose found cluster differs from the best label matching.

    Each found cluster is mapped to the reference cluster it overlaps
    most; returns (id, reference label, mapped found label) for misfits.
    """
    found = found.reorder(reference.ids)
    overlap = Counter(zip(found.labels, reference.labels))
    mapping = {}
    for f in range(1, found.k + 1):
        best = max(range(1, reference.k + 1), key=lambda r: (overlap[(f, r)], -r))
        mapping[f] = best
    return [(i, r, mapping[f]) for i, r, f in zip(reference.ids, reference.labels, found.labels)
            if mapping[f] != r]


def domain_partition(records: Sequence[InstitutionRecord], k: int) -> Partition:
    """Partition institutions by the domain rules used to describe clusters.

    k=2: (1) Environment, Health & Food, Social & Cultural, e-RI;
         (2) PSE and Energy.
    k=5: (1) Environment; (2) Health & Food; (3) national PSE;
         (4) pan-European PSE and Energy; (5) Social & Cultural and e-RI.
    """
    A = EsfriArea
    labels = []
    for r in records:
        if k == 2:
            labels.append(2 if r.esfri_area in (A.PSE, A.ENERGY) else 1)
        elif k == 5:
            if r.esfri_area == A.ENVIRONMENT:
                labels.append(1)
            elif r.esfri_area == A.HEALTH_FOOD:
                labels.append(2)
            elif r.esfri_area == A.PSE and not r.pan_european:
                labels.append(3)
            elif r.esfri_area in (A.PSE, A.ENERGY):
                labels.append(4)
            else:
                labels.append(5)
        else:
            raise ClusteringError("domain rules are defined for k=2 and k=5 only")
    return Partition(tuple(r.id for r in records), tuple(labels))


# --------------------------------------------------------------------------
# partition CSV

def load_partition(source: CsvSource) -> Partition:
    header, rows = _read_rows(source)
    if header != ["id", "cluster"]:
        raise DatasetError("line 1: partition header must be id,cluster")
    ids, labels = [], []
    for line, row in rows:
        if len(row) != 2:
            raise DatasetError(f"line {line}: expected 2 columns, got {len(row)}")
        try:
            labels.append(int(row[1]))
        except ValueError:
            raise DatasetError(f"line {line}, column cluster: {row[1]!r} is not an integer") from None
        ids.append(row[0].strip())
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DatasetError(f"duplicate id {dup!r} in partition")
    try:
        return Partition(tuple(ids), tuple(labels))
    except ClusteringError as exc:
        raise DatasetError(str(exc)) from None


def save_partition(part: Partition, dest: CsvSource) -> None:
    _write_rows(dest, ("id", "cluster"), zip(part.ids, part.labels))
