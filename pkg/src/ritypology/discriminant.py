"""Canonical linear discriminant analysis over a partition.

Pipeline: :func:`scatter` builds the within/between/total scatter
matrices, :func:`solve_discriminants` solves ``B v = lambda W v`` by
Cholesky whitening and Jacobi diagonalization, and
:func:`finalize_model` adds scores, structural loadings, centroids and
Wilks' lambda tests. :func:`fit` runs all three.

Conventions
-----------
* Coefficients are scaled so every discriminant has unit pooled
  within-group variance (within scatter divided by ``n - k``).
* Each discriminant is signed so its largest-magnitude coefficient is
  positive.
* Scores are computed on predictors centered at the grand mean, so the
  size-weighted mean of the centroids is zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset import DatasetError, FeatureMatrix
from .hcluster import Partition
from .linalg import NotPositiveDefinite, whitened_geneig
from .special import f_cdf_complement
from .stats import StatsError, pearson

EIGEN_RTOL = 1e-10
RIDGE_START = 1e-8
RIDGE_LIMIT = 1e-2
SINGULAR_RTOL = 1e-12
PRIORS = ("equal", "proportional")


class StatisticalError(ValueError):
    """A statistical precondition does not hold (singleton group, too few df...)."""


@dataclass(frozen=True)
class ScatterPair:
    W: np.ndarray
    B: np.ndarray
    T: np.ndarray
    group_sizes: tuple[int, ...]
    group_means: np.ndarray
    grand_mean: np.ndarray
    n: int
    k: int
    p: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class SignificanceTest:
    start_dim: int
    wilks_lambda: float
    F: float
    df1: float
    df2: float
    p_value: float
    method: str

    def describe(self) -> str:
        return f"F({_df(self.df1)},{_df(self.df2)}) = {self.F:.2f}"


def _df(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.2f}"


@dataclass(frozen=True)
class ConfusionTable:
    labels: tuple[int, ...]
    counts: np.ndarray

    @classmethod
    def from_counts(cls, counts) -> ConfusionTable:
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion counts must be a square matrix")
        return cls(tuple(range(1, counts.shape[0] + 1)), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else float("nan")


@dataclass(frozen=True)
class DiscriminantModel:
    eigenvalues: np.ndarray            # leading min(k-1, p), descending
    coefficients: np.ndarray           # p x r
    grand_mean: np.ndarray
    group_labels: tuple[int, ...]
    group_sizes: tuple[int, ...]
    n: int
    k: int
    p: int
    col_labels: tuple[str, ...] = ()
    row_ids: tuple[str, ...] = ()
    scores: np.ndarray | None = None               # n x r
    structural_loadings: np.ndarray | None = None  # p x r
    centroids: np.ndarray | None = None            # k x r
    significance: tuple[SignificanceTest, ...] = ()
    ridge_log: tuple[float, ...] = ()              # every ridge epsilon tried
    warnings: tuple[str, ...] = ()
    priors: str = "equal"

    @property
    def r(self) -> int:
        return self.coefficients.shape[1]

    @property
    def regularization_applied(self) -> bool:
        return bool(self.ridge_log)

    @property
    def ridge(self) -> float:
        """Magnitude of the ridge that was finally used (0 if none)."""
        return self.ridge_log[-1] if self.ridge_log else 0.0

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.p:
            raise ValueError(f"expected {self.p} predictors, got {x.shape[-1]}")
        return (x - self.grand_mean) @ self.coefficients

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {
            "n": self.n, "k": self.k, "p": self.p, "r": self.r,
            "predictors": list(self.col_labels),
            "group_labels": list(self.group_labels),
            "group_sizes": list(self.group_sizes),
            "priors": self.priors,
            "eigenvalues": arr(self.eigenvalues),
            "grand_mean": arr(self.grand_mean),
            "coefficients": arr(self.coefficients),
            "structural_loadings": arr(self.structural_loadings),
            "centroids": arr(self.centroids),
            "significance": [
                {"start_dim": t.start_dim, "wilks_lambda": t.wilks_lambda, "F": t.F,
                 "df1": t.df1, "df2": t.df2, "p_value": t.p_value, "method": t.method}
                for t in self.significance
            ],
            "regularization": {
                "applied": self.regularization_applied,
                "ridge": self.ridge,
                "log": list(self.ridge_log),
            },
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> DiscriminantModel:
        p, r = doc["p"], doc["r"]
        coef = np.asarray(doc["coefficients"], dtype=float).reshape(p, r)
        return cls(
            eigenvalues=np.asarray(doc["eigenvalues"], dtype=float),
            coefficients=coef,
            grand_mean=np.asarray(doc["grand_mean"], dtype=float),
            group_labels=tuple(doc["group_labels"]),
            group_sizes=tuple(doc["group_sizes"]),
            n=doc["n"], k=doc["k"], p=p,
            col_labels=tuple(doc.get("predictors", ())),
            structural_loadings=None if doc.get("structural_loadings") is None
            else np.asarray(doc["structural_loadings"], dtype=float).reshape(p, r),
            centroids=np.asarray(doc["centroids"], dtype=float).reshape(-1, r),
            significance=tuple(SignificanceTest(**t) for t in doc.get("significance", ())),
            ridge_log=tuple(doc.get("regularization", {}).get("log", ())),
            warnings=tuple(doc.get("warnings", ())),
            priors=doc.get("priors", "equal"),
        )


# --------------------------------------------------------------------------

def _aligned(X: FeatureMatrix, part: Partition) -> tuple[np.ndarray, np.ndarray]:
    if set(X.row_ids) != set(part.ids) or len(X.row_ids) != len(part.ids):
        missing = sorted(set(part.ids) ^ set(X.row_ids))
        raise DatasetError(f"ids differ between predictors and partition: {', '.join(missing[:5])}")
    labels = np.array(part.reorder(X.row_ids).labels)
    return X.values, labels


def scatter(X: FeatureMatrix, part: Partition) -> ScatterPair:
    values, labels = _aligned(X, part)
    n, p = values.shape
    k = part.k
    if n <= k:
        raise StatisticalError(f"need more observations ({n}) than groups ({k})")
    sizes = tuple(int(np.sum(labels == g)) for g in range(1, k + 1))
    singles = [g for g, s in zip(range(1, k + 1), sizes) if s < 2]
    if singles:
        raise StatisticalError(f"cluster {singles[0]} has fewer than two members")

    grand = values.mean(axis=0)
    means = np.vstack([values[labels == g].mean(axis=0) for g in range(1, k + 1)])
    W = np.zeros((p, p))
    B = np.zeros((p, p))
    for g in range(1, k + 1):
        dev = values[labels == g] - means[g - 1]
        W += dev.T @ dev
        d = (means[g - 1] - grand)[:, None]
        B += sizes[g - 1] * (d @ d.T)
    dev = values - grand
    T = dev.T @ dev

    warnings = []
    for j in range(p):
        if np.all(values[:, j] == values[0, j]):
            warnings.append(f"predictor {X.col_labels[j]} is constant")
    return ScatterPair(W, B, T, sizes, means, grand, n, k, p, tuple(warnings))


def solve_discriminants(s: ScatterPair) -> DiscriminantModel:
    """Generalized eigenvectors of (B, W); ridge W when it is singular."""
    if s.k < 2:
        raise StatisticalError("discriminant analysis needs at least two clusters")
    p = s.p
    trace_w = float(np.trace(s.W))
    ridge_log: list[float] = []
    eps = 0.0
    while True:
        try:
            lam, V = whitened_geneig(s.B, s.W + eps * np.eye(p), SINGULAR_RTOL)
            break
        except NotPositiveDefinite:
            scale = trace_w / p
            if scale <= 0:
                raise StatisticalError("within-group scatter is zero; no discriminant exists") from None
            eps = RIDGE_START * scale if not ridge_log else eps * 10
            if eps > RIDGE_LIMIT * scale * (1 + 1e-9):
                raise StatisticalError(
                    "within-group scatter is singular even after ridge "
                    f"{ridge_log[-1]:.3e}") from None
            ridge_log.append(eps)

    q = min(s.k - 1, p)
    lam = np.clip(lam[:q], 0.0, None)
    V = V[:, :q]
    lam_max = lam[0] if q else 0.0
    keep = int(np.sum(lam > EIGEN_RTOL * lam_max)) if lam_max > 0 else 0
    V = V[:, :keep] * math.sqrt(s.n - s.k)
    for d in range(keep):
        lead = int(np.argmax(np.abs(V[:, d])))
        if V[lead, d] < 0:
            V[:, d] = -V[:, d]

    warnings = list(s.warnings)
    warnings += [f"within-group scatter singular; ridge {e:.3e} added" for e in ridge_log]
    return DiscriminantModel(
        eigenvalues=lam, coefficients=V, grand_mean=s.grand_mean.copy(),
        group_labels=tuple(range(1, s.k + 1)), group_sizes=s.group_sizes,
        n=s.n, k=s.k, p=p, ridge_log=tuple(ridge_log), warnings=tuple(warnings))


def finalize_model(model: DiscriminantModel, X: FeatureMatrix, part: Partition,
                   priors: str = "equal") -> DiscriminantModel:
    if priors not in PRIORS:
        raise ValueError(f"priors must be one of {PRIORS}")
    values, labels = _aligned(X, part)
    scores = model.project(values)
    r = model.r
    loadings = np.zeros((model.p, r))
    warnings = list(model.warnings)
    for j in range(model.p):
        for d in range(r):
            try:
                loadings[j, d] = pearson(values[:, j], scores[:, d])
            except StatsError:
                msg = f"loading of {X.col_labels[j]} undefined (zero variance); set to 0"
                if msg not in warnings:
                    warnings.append(msg)
    centroids = np.vstack([scores[labels == g].mean(axis=0) for g in model.group_labels]) \
        if r else np.zeros((model.k, 0))
    tests = tuple(
        wilks_f(model.eigenvalues, model.n, model.k, model.p, j)
        for j in range(1, max(r, 1) + 1))
    return replace(model, scores=scores, structural_loadings=loadings, centroids=centroids,
                   significance=tests, warnings=tuple(warnings), priors=priors,
                   col_labels=X.col_labels, row_ids=X.row_ids)


def fit(X: FeatureMatrix, part: Partition, priors: str = "equal") -> DiscriminantModel:
    return finalize_model(solve_discriminants(scatter(X, part)), X, part, priors)


# --------------------------------------------------------------------------
# significance

def wilks_f(eigenvalues: Sequence[float], n: int, k: int, p: int, start_dim: int = 1
            ) -> SignificanceTest:
    """Wilks' lambda for discriminants ``start_dim..`` and its F transform.

    Two groups, whole model: exact F with df (p, n-p-1). Otherwise Rao's
    approximation, where the test of the dimensions from ``start_dim`` on
    uses a lambda distribution with p-start_dim+1 variables, k-start_dim
    hypothesis df and n-k-start_dim+1 error df.
    """
    eig = np.asarray(eigenvalues, dtype=float)
    if n <= p + k - 1:
        raise StatisticalError("insufficient degrees of freedom")
    if not 1 <= start_dim <= max(len(eig), 1):
        raise ValueError(f"start_dim {start_dim} outside 1..{max(len(eig), 1)}")
    lam = float(np.prod(1.0 / (1.0 + eig[start_dim - 1:])))

    if k == 2 and start_dim == 1:
        df1, df2 = float(p), float(n - p - 1)
        F = (1 - lam) / lam * df2 / df1
        method = "exact"
    else:
        P = p - start_dim + 1
        Q = k - start_dim
        E = n - k - start_dim + 1
        num, den = P * P * Q * Q - 4, P * P + Q * Q - 5
        t = math.sqrt(num / den) if num > 0 and den > 0 else 1.0
        w = E + Q - (P + Q + 1) / 2
        df1 = float(P * Q)
        df2 = w * t - (P * Q - 2) / 2
        if df2 <= 0:
            raise StatisticalError("insufficient degrees of freedom")
        y = lam ** (1 / t)
        F = (1 - y) / y * df2 / df1
        method = "rao"
    F = max(F, 0.0)
    return SignificanceTest(start_dim, lam, F, df1, df2, f_cdf_complement(F, df1, df2), method)


# --------------------------------------------------------------------------
# classification

def _nearest(model: DiscriminantModel, z: np.ndarray) -> int:
    d2 = np.sum((model.centroids - z) ** 2, axis=1)
    if model.priors == "proportional":
        crit = 0.5 * d2 - np.log(np.asarray(model.group_sizes) / model.n)
    else:
        crit = d2
    best = crit.min()
    tied = np.flatnonzero(crit <= best + 1e-12 * max(1.0, abs(best)))
    return model.group_labels[int(tied[0])]


def classify(model: DiscriminantModel, x) -> int:
    """Label of the nearest centroid in discriminant space (ties: smaller label)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.p:
        raise ValueError(f"expected {model.p} predictors, got {x.size}")
    return _nearest(model, model.project(x))


def predict(model: DiscriminantModel, X: FeatureMatrix) -> dict[str, int]:
    Z = model.project(X.values)
    return {rid: _nearest(model, z) for rid, z in zip(X.row_ids, Z)}


def loo_predict(X: FeatureMatrix, part: Partition, priors: str = "equal") -> dict[str, int]:
    """Leave-one-out predictions: each row classified by a model fit without it."""
    part = part.reorder(X.row_ids)
    out = {}
    for i, rid in enumerate(X.row_ids):
        keep = [j for j in range(len(X.row_ids)) if j != i]
        sub_ids = [X.row_ids[j] for j in keep]
        sub_labels = [part.labels[j] for j in keep]
        if len(set(sub_labels)) != part.k:
            raise StatisticalError(f"leaving out {rid} empties its cluster")
        sub = Partition(tuple(sub_ids), tuple(sub_labels))
        m = fit(X.rows(sub_ids), sub, priors)
        out[rid] = classify(m, X.values[i])
    return out


def confusion(reference: Partition, predicted: Partition | Mapping[str, int]) -> ConfusionTable:
    """Cross-tabulate reference clusters (rows) against predictions (columns)."""
    if isinstance(predicted, Partition):
        if predicted.k != reference.k:
            raise ValueError(f"partitions have different k ({reference.k} vs {predicted.k})")
        predicted = predicted.label_of()
    if set(predicted) != set(reference.ids):
        raise DatasetError("reference and predicted partitions cover different ids")
    k = reference.k
    counts = np.zeros((k, k), dtype=np.int64)
    for rid, r in zip(reference.ids, reference.labels):
        pl = predicted[rid]
        if not 1 <= pl <= k:
            raise ValueError(f"predicted label {pl} outside 1..{k}")
        counts[r - 1, pl - 1] += 1
    return ConfusionTable(tuple(range(1, k + 1)), counts)
