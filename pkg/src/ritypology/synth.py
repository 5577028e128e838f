"""Seeded synthetic rating matrices with cluster-conditional distributions.

Sampling contract (part of the reproducibility guarantee):

* the generator is splitmix64 seeded with the config seed;
* each draw uses one 64-bit output ``z`` mapped to ``u = (z >> 11) / 2**53``;
* cells are drawn cluster by cluster, row by row within a cluster and
  indicator by indicator within a row;
* a level is chosen by inverse CDF over the cell's weights.

Marginal-anchored tilting
-------------------------
:func:`marginal_config` starts from pooled level proportions
``pi_l`` of each indicator and cluster shares ``w_g = n_g / n``. Level
``l`` gets the centered score ``c_l = (l - 3) / 3`` and cluster ``g`` the
tilt ``theta_gj = separation * MAX_TILT * z_gj`` with ``z_gj`` in
[-1, 1] (clusters are ranked differently on each indicator by a cyclic
shift, so separation spreads over several discriminant directions). The
joint table ``M_gl = a_g b_l w_g pi_l exp(theta_gj c_l)`` is fitted by
iterative proportional scaling so that its row sums are ``w_g`` and its
column sums ``pi_l``; the cluster distribution is ``M_gl / w_g``. Hence
the size-weighted mixture of cluster distributions reproduces ``pi``
exactly while clusters drift apart as ``separation`` grows.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import RATING_LEVELS, FeatureMatrix, RatingCountTable
from .hcluster import Partition

MASK64 = (1 << 64) - 1
MAX_TILT = 12.0


class SynthError(ValueError):
    pass


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class SynthConfig:
    cluster_sizes: tuple[int, ...]
    weights: np.ndarray                 # clusters x indicators x 7
    seed: int = 0
    indicators: tuple[int, ...] = ()
    row_ids: tuple[str, ...] = ()       # cluster-major order; generated if empty

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        sizes = tuple(int(s) for s in self.cluster_sizes)
        if w.ndim != 3 or w.shape[0] != len(sizes) or w.shape[2] != len(RATING_LEVELS):
            raise SynthError(
                f"weights must have shape (clusters, indicators, {len(RATING_LEVELS)}); got {w.shape}")
        if any(s < 0 for s in sizes):
            raise SynthError("cluster sizes must be nonnegative")
        if not np.all(np.isfinite(w)) or (w < 0).any():
            raise SynthError("weights must be finite and nonnegative")
        if (w.sum(axis=2) <= 0).any():
            g, j = np.argwhere(w.sum(axis=2) <= 0)[0]
            raise SynthError(f"zero-weight distribution for cluster {g + 1}, indicator column {j + 1}")
        indicators = tuple(self.indicators) or tuple(range(1, w.shape[1] + 1))
        if len(indicators) != w.shape[1]:
            raise SynthError("indicator list does not match weight array")
        if self.row_ids and len(self.row_ids) != sum(sizes):
            raise SynthError("row_ids length must equal the total cluster size")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cluster_sizes", sizes)
        object.__setattr__(self, "indicators", indicators)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    @property
    def n(self) -> int:
        return sum(self.cluster_sizes)

    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum(axis=2, keepdims=True)

    def with_seed(self, seed: int) -> SynthConfig:
        return SynthConfig(self.cluster_sizes, self.weights, seed, self.indicators, self.row_ids)

    def to_dict(self) -> dict:
        doc = {
            "seed": self.seed,
            "cluster_sizes": list(self.cluster_sizes),
            "indicators": list(self.indicators),
            "weights": self.weights.tolist(),
        }
        if self.row_ids:
            doc["row_ids"] = list(self.row_ids)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> SynthConfig:
        try:
            return cls(
                cluster_sizes=tuple(doc["cluster_sizes"]),
                weights=np.asarray(doc["weights"], dtype=float),
                seed=int(doc.get("seed", 0)),
                indicators=tuple(int(i) for i in doc.get("indicators", ())),
                row_ids=tuple(doc.get("row_ids", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SynthError):
                raise
            raise SynthError(f"invalid synth config: {exc}") from None


def load_config(path: str | os.PathLike) -> SynthConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SynthError(f"config is not valid JSON: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SynthError("config must be a JSON object")
    return SynthConfig.from_dict(doc)


def _draw(rng: SplitMix64, cdf: Sequence[float]) -> int:
    u = rng.uniform() * cdf[-1]
    for l, c in enumerate(cdf):
        if u < c:
            return l
    return len(cdf) - 1


def generate(cfg: SynthConfig) -> tuple[FeatureMatrix, Partition]:
    rng = SplitMix64(cfg.seed)
    m = len(cfg.indicators)
    cdfs = [[list(np.cumsum(cfg.weights[g, j])) for j in range(m)]
            for g in range(len(cfg.cluster_sizes))]
    rows, labels = [], []
    for g, size in enumerate(cfg.cluster_sizes):
        for _ in range(size):
            rows.append([RATING_LEVELS[_draw(rng, cdfs[g][j])] for j in range(m)])
            labels.append(g + 1)
    ids = cfg.row_ids or tuple(f"S{i + 1:04d}" for i in range(cfg.n))
    values = np.array(rows, dtype=float).reshape(cfg.n, m)
    matrix = FeatureMatrix(ids, tuple(f"ind_{i}" for i in cfg.indicators), values)
    # relabel so that empty clusters do not leave gaps
    present = sorted(set(labels))
    relabel = {g: i + 1 for i, g in enumerate(present)}
    return matrix, Partition(ids, tuple(relabel[g] for g in labels))


# --------------------------------------------------------------------------

def _fit_table(row_target: np.ndarray, col_target: np.ndarray, seed_table: np.ndarray,
               tol: float = 1e-15, max_iter: int = 100_000) -> np.ndarray:
    """Iterative proportional fitting of a positive table to given margins."""
    M = seed_table.copy()
    for _ in range(max_iter):
        M *= (row_target / M.sum(axis=1))[:, None]
        M *= col_target / M.sum(axis=0)
        if np.max(np.abs(M.sum(axis=1) - row_target)) < tol:
            break
    return M


def marginal_config(counts: RatingCountTable, part: Partition, separation: float,
                          seed: int = 0) -> SynthConfig:
    """Cluster-conditional distributions whose mixture equals the count marginals."""
    if not 0.0 <= separation <= 1.0:
        raise SynthError(f"separation {separation} outside [0, 1]")
    n = len(part.ids)
    totals = set(counts.totals.tolist())
    if totals != {n}:
        raise SynthError(f"count totals {sorted(totals)} do not match partition size {n}")
    k = part.k
    sizes = np.array(part.sizes(), dtype=float)
    share = sizes / n
    pi = counts.proportions()
    m = pi.shape[0]
    c = (np.arange(len(RATING_LEVELS)) - 3) / 3.0

    weights = np.zeros((k, m, len(RATING_LEVELS)))
    for j in range(m):
        if separation == 0 or k == 1:
            weights[:, j, :] = pi[j]
            continue
        support = pi[j] > 0
        rank = (np.arange(k) + j) % k
        z = 2.0 * rank / (k - 1) - 1.0
        theta = separation * MAX_TILT * z
        seed_table = share[:, None] * pi[j][support][None, :] * np.exp(theta[:, None] * c[support][None, :])
        M = _fit_table(share, pi[j][support], seed_table)
        weights[:, j, support] = M / share[:, None]

    ids = tuple(i for g in range(1, k + 1) for i in part.members(g))
    return SynthConfig(tuple(int(s) for s in sizes), weights, seed, counts.indicators, ids)


def expected_marginals(cfg: SynthConfig) -> np.ndarray:
    """Size-weighted mixture of the cluster distributions, per indicator."""
    share = np.array(cfg.cluster_sizes, dtype=float) / cfg.n
    return np.einsum("g,gjl->jl", share, cfg.probabilities())


def point_mass_config(cluster_sizes: Sequence[int], levels: Sequence[Sequence[float]],
                      indicators: Sequence[int] = (), seed: int = 0) -> SynthConfig:
    """Config where every cell of cluster g, indicator j is ``levels[g][j]``."""
    k, m = len(levels), len(levels[0])
    w = np.zeros((k, m, len(RATING_LEVELS)))
    for g in range(k):
        for j in range(m):
            w[g, j, RATING_LEVELS.index(float(levels[g][j]))] = 1.0
    return SynthConfig(tuple(cluster_sizes), w, seed, tuple(indicators))


def level_frequencies(matrix: FeatureMatrix) -> np.ndarray:
    """Per-column empirical proportions over the seven levels."""
    v = matrix.values
    return np.stack([np.mean(v == lv, axis=0) for lv in RATING_LEVELS], axis=1)
