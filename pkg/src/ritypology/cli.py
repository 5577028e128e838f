"""Command-line interface.

Exit codes: 0 ok, 2 input error, 3 invalid parameter, 4 statistical
precondition failed. Failures print one line ``ERROR:<code>: message``
on stderr.

Any path argument may be written ``bundled:<name>`` to read one of the
packaged resources (``annex1.csv``, ``table3_counts.csv``).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from . import dataset as ds
from . import discriminant as da
from . import hcluster as hc
from . import report
from . import synth as sy
from .stats import StatsError, summarize

EXIT_OK, EXIT_INPUT, EXIT_PARAM, EXIT_STAT = 0, 2, 3, 4

PIPELINE_FILES = {
    "partition": "partition.csv",
    "dendrogram": "dendrogram.dot",
    "model": "model.json",
    "report": "report.md",
    "run": "run.json",
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _input_error(exc: Exception) -> CliError:
    return CliError(EXIT_INPUT, str(exc))


class _Inputs:
    """Resolves ``bundled:`` paths and keeps the temporary files alive."""

    def __init__(self, stack: ExitStack):
        self.stack = stack

    def path(self, raw: str) -> Path:
        if raw.startswith("bundled:"):
            name = raw.split(":", 1)[1]
            try:
                return self.stack.enter_context(ds.bundled_path(name))
            except FileNotFoundError:
                raise CliError(EXIT_INPUT, f"no bundled resource named {name!r}") from None
        p = Path(raw)
        if not p.is_file():
            raise CliError(EXIT_INPUT, f"cannot read {raw}")
        return p


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunReport:
    inputs: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    nondefault: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "tool": "ritypology",
            "version": __version__,
            "inputs": self.inputs,
            "options": self.options,
            "nondefault_options": self.nondefault,
            "artifacts": self.artifacts,
            "metrics": self.metrics,
            "events": self.events,
        }
        return json.dumps(doc, indent=2) + "\n"


# --------------------------------------------------------------------------
# commands

def cmd_summarize(args, inputs: _Inputs) -> int:
    try:
        if args.ratings:
            matrix = ds.load_ratings(inputs.path(args.ratings), impute=args.impute)
            if matrix.shape[0] == 0:
                raise CliError(EXIT_INPUT, f"{args.ratings}: no rating rows")
            table = ds.counts_from_matrix(matrix)
            summaries = [summarize(matrix.values[:, j], n)
                         for j, n in enumerate(table.indicators)]
        else:
            table = ds.load_counts(inputs.path(args.counts))
            summaries = report.summarize_counts(table)
    except (ds.DatasetError, StatsError) as exc:
        raise _input_error(exc) from None
    out = Path(args.out)
    out.with_suffix(".md").write_text(report.summary_markdown(table, summaries), encoding="utf-8")
    out.with_suffix(".csv").write_text(report.summary_csv(table, summaries), encoding="utf-8")
    return EXIT_OK


def _cluster(attributes: Path, k: int, linkage: str):
    try:
        records = ds.load_institutions(attributes)
        if not records:
            raise CliError(EXIT_INPUT, f"{attributes}: no institutions")
        X = ds.encode_attributes(records)
    except ds.DatasetError as exc:
        raise _input_error(exc) from None
    if not 1 <= k <= len(records):
        raise CliError(EXIT_PARAM, f"k={k} outside 1..{len(records)}")
    if len(records) < 2:
        raise CliError(EXIT_PARAM, "need at least two institutions to cluster")
    tree = hc.ward_cluster(hc.euclidean_distances(X), linkage)
    return records, tree, hc.cut(tree, k)


def _compare(reference_path: Path, part: hc.Partition) -> tuple[float, list]:
    try:
        ref = hc.load_partition(reference_path)
        ari = hc.adjusted_rand(ref, part)
    except (ds.DatasetError, hc.ClusteringError) as exc:
        raise _input_error(exc) from None
    return ari, hc.disagreements(ref, part)


def cmd_cluster(args, inputs: _Inputs) -> int:
    _, tree, part = _cluster(inputs.path(args.attributes), args.k, args.linkage)
    hc.save_partition(part, args.out)
    if args.dendrogram:
        Path(args.dendrogram).write_text(tree.to_dot(), encoding="utf-8")
    if args.merges:
        Path(args.merges).write_text(tree.to_json(), encoding="utf-8")
    print(f"k={part.k} sizes={','.join(map(str, part.sizes()))}")
    if args.reference:
        ari, diff = _compare(inputs.path(args.reference), part)
        print(f"ARI={ari:.6f}")
        for rid, r, f in diff:
            print(f"DISAGREE {rid} reference={r} found={f}")
    return EXIT_OK


def _discriminate(ratings: ds.FeatureMatrix, part: hc.Partition, priors: str, loo: bool,
                  registry: ds.IndicatorRegistry):
    if set(ratings.row_ids) != set(part.ids):
        extra = sorted(set(ratings.row_ids) ^ set(part.ids))
        raise CliError(EXIT_INPUT, f"ids differ between ratings and partition: {', '.join(extra[:5])}")
    try:
        model = da.fit(ratings, part, priors)
        resub = da.confusion(part, da.predict(model, ratings))
        cv = da.confusion(part, da.loo_predict(ratings, part, priors)) if loo else None
    except da.StatisticalError as exc:
        raise CliError(EXIT_STAT, str(exc)) from None
    text = report.discriminant_markdown(model, resub, registry, cv)
    return model, resub, cv, text


def cmd_discriminate(args, inputs: _Inputs) -> int:
    registry = ds.default_registry()
    try:
        ratings = ds.load_ratings(inputs.path(args.ratings), registry, impute=args.impute)
        part = hc.load_partition(inputs.path(args.partition))
    except ds.DatasetError as exc:
        raise _input_error(exc) from None
    model, resub, _, text = _discriminate(ratings, part, args.priors, args.loo, registry)
    Path(args.out_model).write_text(model.to_json(), encoding="utf-8")
    Path(args.report).write_text(text, encoding="utf-8")
    t = model.significance[0]
    print(f"accuracy={100 * resub.accuracy:.2f}% {t.describe()} p={t.p_value:.6g}")
    return EXIT_OK


def cmd_pipeline(args, inputs: _Inputs) -> int:
    registry = ds.default_registry()
    attr_path = inputs.path(args.attributes)
    ratings_path = inputs.path(args.ratings)
    records, tree, part = _cluster(attr_path, args.k, args.linkage)
    try:
        ratings = ds.load_ratings(ratings_path, registry, impute=args.impute)
    except ds.DatasetError as exc:
        raise _input_error(exc) from None
    if set(ratings.row_ids) != set(part.ids):
        extra = sorted(set(ratings.row_ids) ^ set(part.ids))
        raise CliError(EXIT_INPUT, f"ids differ between ratings and attributes: {', '.join(extra[:5])}")
    ratings = ratings.rows(part.ids)
    if part.k < 2:
        raise CliError(EXIT_STAT, "discriminant analysis needs at least two clusters")
    model, resub, cv, text = _discriminate(ratings, part, args.priors, args.loo, registry)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hc.save_partition(part, out / PIPELINE_FILES["partition"])
    (out / PIPELINE_FILES["dendrogram"]).write_text(tree.to_dot(), encoding="utf-8")
    (out / PIPELINE_FILES["model"]).write_text(model.to_json(), encoding="utf-8")
    (out / PIPELINE_FILES["report"]).write_text(text, encoding="utf-8")

    run = RunReport()
    run.inputs = {
        "attributes": {"path": args.attributes, "sha256": _digest(attr_path)},
        "ratings": {"path": args.ratings, "sha256": _digest(ratings_path)},
    }
    defaults = {"linkage": "ward-d2", "priors": "equal", "loo": False, "impute": False}
    run.options = {"k": args.k, "linkage": args.linkage, "priors": args.priors,
                   "loo": args.loo, "impute": args.impute}
    run.nondefault = [key for key, val in defaults.items() if run.options[key] != val]
    run.artifacts = dict(PIPELINE_FILES)
    t = model.significance[0]
    run.metrics = {
        "n": model.n, "k": model.k, "p": model.p, "discriminants": model.r,
        "cluster_sizes": part.sizes(),
        "accuracy": resub.accuracy,
        "wilks_lambda": t.wilks_lambda, "F": t.F, "df1": t.df1, "df2": t.df2,
        "p_value": t.p_value,
    }
    if cv is not None:
        run.metrics["loo_accuracy"] = cv.accuracy
    if args.reference:
        ari, diff = _compare(inputs.path(args.reference), part)
        run.inputs["reference"] = {"path": args.reference, "sha256": _digest(inputs.path(args.reference))}
        run.metrics["ari_vs_reference"] = ari
        if diff:
            run.events.append({"event": "partition_divergence", "disagreements": [
                {"id": i, "reference": r, "found": f} for i, r, f in diff]})
    for eps in model.ridge_log:
        run.events.append({"event": "ridge", "epsilon": eps})
    for rid, col in ratings.imputed:
        run.events.append({"event": "imputed", "id": rid, "column": col})
    for w in model.warnings:
        run.events.append({"event": "warning", "message": w})
    (out / PIPELINE_FILES["run"]).write_text(run.to_json(), encoding="utf-8")
    print(f"wrote {len(PIPELINE_FILES)} files to {out}")
    return EXIT_OK


def cmd_synth(args, inputs: _Inputs) -> int:
    try:
        cfg = sy.load_config(inputs.path(args.config))
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        matrix, part = sy.generate(cfg)
    except (sy.SynthError, ds.DatasetError) as exc:
        raise _input_error(exc) from None
    out = Path(args.out)
    ds.save_ratings(matrix, out)
    part_out = Path(args.partition_out) if args.partition_out else out.with_suffix(".partition.csv")
    hc.save_partition(part, part_out)
    return EXIT_OK


def cmd_synth_config(args, inputs: _Inputs) -> int:
    if not 0.0 <= args.separation <= 1.0:
        raise CliError(EXIT_PARAM, f"separation {args.separation} outside [0, 1]")
    try:
        counts = ds.load_counts(inputs.path(args.counts))
        if args.partition:
            part = hc.load_partition(inputs.path(args.partition))
        else:
            _, _, part = _cluster(inputs.path(args.attributes), args.k, "ward-d2")
        cfg = sy.marginal_config(counts, part, args.separation, args.seed)
    except (sy.SynthError, ds.DatasetError) as exc:
        raise _input_error(exc) from None
    Path(args.out).write_text(cfg.to_json(), encoding="utf-8")
    return EXIT_OK


# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one line only, so callers can parse the prefix
        self.exit(EXIT_INPUT, f"ERROR:{EXIT_INPUT}: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ritypology",
        description="Ward clustering and canonical discriminant analysis of institutions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("summarize", help="per-indicator counts, median, mean and sd")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ratings")
    src.add_argument("--counts")
    p.add_argument("--out", required=True, help="output stem; writes .md and .csv")
    p.add_argument("--impute", action="store_true", help="column-mean imputation of missing ratings")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("cluster", help="Ward clustering of the binary attributes")
    p.add_argument("--attributes", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--linkage", choices=hc.LINKAGES, default="ward-d2")
    p.add_argument("--out", required=True, help="partition CSV")
    p.add_argument("--dendrogram", help="DOT file")
    p.add_argument("--merges", help="JSON merge list")
    p.add_argument("--reference", help="partition CSV to compare against (prints ARI)")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("discriminate", help="canonical discriminant analysis of ratings")
    p.add_argument("--ratings", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--priors", choices=da.PRIORS, default="equal")
    p.add_argument("--loo", action="store_true", help="add leave-one-out classification")
    p.add_argument("--impute", action="store_true")
    p.set_defaults(func=cmd_discriminate)

    p = sub.add_parser("pipeline", help="cluster, then discriminate; writes a run report")
    p.add_argument("--attributes", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--linkage", choices=hc.LINKAGES, default="ward-d2")
    p.add_argument("--priors", choices=da.PRIORS, default="equal")
    p.add_argument("--loo", action="store_true")
    p.add_argument("--impute", action="store_true")
    p.add_argument("--reference", help="partition CSV; ARI and disagreements go to run.json")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("synth", help="sample a rating matrix from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", required=True, help="rating CSV")
    p.add_argument("--partition-out", help="partition CSV (default: <out>.partition.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("synth-config", help="build a config anchored to rating-count marginals")
    p.add_argument("--counts", default="bundled:table3_counts.csv")
    p.add_argument("--partition", help="partition CSV (default: Ward cut of --attributes)")
    p.add_argument("--attributes", default="bundled:annex1.csv")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--separation", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    with ExitStack() as stack:
        try:
            return args.func(args, _Inputs(stack))
        except CliError as exc:
            msg = " ".join(str(exc).split())
            print(f"ERROR:{exc.code}: {msg}", file=sys.stderr)
            return exc.code
        except OSError as exc:
            print(f"ERROR:{EXIT_INPUT}: {' '.join(str(exc).split())}", file=sys.stderr)
            return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
