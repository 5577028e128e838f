"""Markdown and CSV renderings of summaries and discriminant results."""
from __future__ import annotations

import csv
import io
from typing import Sequence

import numpy as np

from .dataset import RATING_LEVELS, IndicatorRegistry, RatingCountTable, expand_counts, format_rating
from .discriminant import ConfusionTable, DiscriminantModel, SignificanceTest
from .stats import IndicatorSummary, fmt, summarize


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]], align: str | None = None) -> str:
    align = align or "l" + "r" * (len(header) - 1)
    rule = ["---:" if a == "r" else ":---" for a in align]
    lines = ["| " + " | ".join(header) + " |", "| " + " | ".join(rule) + " |"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def summarize_counts(table: RatingCountTable) -> list[IndicatorSummary]:
    E = expand_counts(table)
    return [summarize(E.values[:, j], num) for j, num in enumerate(table.indicators)]


def summary_markdown(table: RatingCountTable, summaries: Sequence[IndicatorSummary]) -> str:
    header = ["Indicator", *(format_rating(v) for v in RATING_LEVELS), "median", "mean", "sd"]
    rows = []
    for num, counts, s in zip(table.indicators, table.counts, summaries):
        rows.append([f"Indicator {num}", *(str(int(c)) for c in counts),
                     f"{s.median:g}", fmt(s.mean, 1), fmt(s.sd, 1)])
    return ("# Distributions of the indicator ratings\n\n"
            "Ratings from 1 (not relevant) to 4 (highly relevant); "
            "sd is the sample standard deviation.\n\n" + _md_table(header, rows))


def summary_csv(table: RatingCountTable, summaries: Sequence[IndicatorSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["indicator", *(format_rating(v) for v in RATING_LEVELS), "median", "mean", "sd"])
    for num, counts, s in zip(table.indicators, table.counts, summaries):
        w.writerow([num, *(int(c) for c in counts), repr(s.median), repr(s.mean), repr(s.sd)])
    return buf.getvalue()


def significance_line(t: SignificanceTest) -> str:
    p = "p < 0.001" if t.p_value < 0.001 else f"p = {fmt(t.p_value, 3)}"
    dims = f"D{t.start_dim}" if t.start_dim == 1 else f"D{t.start_dim}.."
    return (f"- {dims}: Wilks' lambda = {fmt(t.wilks_lambda, 4)}, "
            f"{t.describe()}, {p} ({t.method})")


def confusion_markdown(table: ConfusionTable, names: dict[int, str] | None = None) -> str:
    names = names or {}
    labels = table.labels
    header = ["Reference \\ Predicted", *(str(l) for l in labels), "Sum"]
    rows = []
    for i, l in enumerate(labels):
        name = f"{l} - {names[l]}" if l in names else str(l)
        rows.append([name, *(str(int(c)) for c in table.counts[i]), str(int(table.counts[i].sum()))])
    colsum = table.counts.sum(axis=0)
    rows.append(["Sum", *(str(int(c)) for c in colsum), str(table.total)])
    return _md_table(header, rows)


def loadings_markdown(model: DiscriminantModel, registry: IndicatorRegistry | None = None) -> str:
    dims = [f"D{d + 1}" for d in range(model.r)]
    rows = []
    for j, col in enumerate(model.col_labels):
        label = ""
        if registry is not None and col.startswith("ind_"):
            try:
                label = registry.label(int(col[4:]))
            except (KeyError, ValueError):
                label = ""
        name = col.replace("ind_", "Indicator ") if col.startswith("ind_") else col
        rows.append([name, label, *(fmt(v) for v in model.structural_loadings[j])])
    return _md_table(["Indicator", "Label", *dims], rows, "ll" + "r" * len(dims))


def centroid_markdown(model: DiscriminantModel) -> str:
    dims = [f"D{d + 1}" for d in range(model.r)]
    rows = [[str(g), str(n), *(fmt(v) for v in model.centroids[i])]
            for i, (g, n) in enumerate(zip(model.group_labels, model.group_sizes))]
    return _md_table(["Cluster", "Size", *dims], rows)


def discriminant_markdown(model: DiscriminantModel, resub: ConfusionTable,
                          registry: IndicatorRegistry | None = None,
                          loo: ConfusionTable | None = None,
                          cluster_names: dict[int, str] | None = None) -> str:
    out = io.StringIO()
    out.write("# Discriminant analysis\n\n")
    out.write(f"- observations: {model.n}\n- clusters: {model.k}\n- predictors: {model.p}\n")
    out.write(f"- discriminants retained: {model.r} (at most min(k-1, p) = {min(model.k - 1, model.p)})\n")
    out.write(f"- priors: {model.priors}\n")
    if model.regularization_applied:
        out.write(f"- ridge added to within-group scatter: {model.ridge:.3e}\n")
    out.write("\n## Eigenvalues\n\n")
    total = float(np.sum(model.eigenvalues))
    rows = []
    for d, lam in enumerate(model.eigenvalues):
        share = 100 * lam / total if total > 0 else 0.0
        rows.append([f"D{d + 1}", fmt(lam), fmt(share), fmt(np.sqrt(lam / (1 + lam)))])
    out.write(_md_table(["Function", "Eigenvalue", "% of variance", "Canonical correlation"], rows))
    out.write("\n## Significance\n\n")
    for t in model.significance:
        out.write(significance_line(t) + "\n")
    if model.r:
        out.write("\n## Structural loadings\n\n")
        out.write("Pearson correlations between each predictor and the discriminant scores.\n\n")
        out.write(loadings_markdown(model, registry))
        out.write("\n## Centroids\n\n")
        out.write("Mean discriminant score of each cluster.\n\n")
        out.write(centroid_markdown(model))
    out.write("\n## Classification (resubstitution)\n\n")
    out.write(confusion_markdown(resub, cluster_names))
    out.write(f"\nCorrectly classified: {fmt(100 * resub.accuracy)} %\n")
    if loo is not None:
        out.write("\n## Classification (leave-one-out cross-validation)\n\n")
        out.write("Not comparable to the resubstitution figure above.\n\n")
        out.write(confusion_markdown(loo, cluster_names))
        out.write(f"\nCorrectly classified: {fmt(100 * loo.accuracy)} %\n")
    if model.warnings:
        out.write("\n## Warnings\n\n")
        for w in model.warnings:
            out.write(f"- {w}\n")
    return out.getvalue()
