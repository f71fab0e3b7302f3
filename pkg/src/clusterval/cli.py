"""Command-line interface.

Exit codes: 0 success, 1 domain or I/O error (JSON record on stderr),
2 usage error. Every command that writes an output directory also writes
``resolved_config.json`` with all defaults and seeds filled in.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from pathlib import Path

import yaml

from . import __version__
from .cluster import ClusterModel, apply_method
from .core import ClusteringMethod
from .errors import ClusterValError, ConfigError
from .io import (
    dataset_csv_text,
    dumps_json,
    matrix_csv_text,
    partition_csv_text,
    read_dataset,
    read_matrix_csv,
    write_text,
)

log = logging.getLogger("clusterval")


def _ratio(s):
    try:
        r = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}")
    if not 0 < r < 1:
        raise argparse.ArgumentTypeError(f"ratio must lie strictly between 0 and 1, got {s}")
    return r


def _seed(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _add_seed(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seed", type=_seed, help="master seed; all randomness derives from it")
    g.add_argument("--seed-from-entropy", action="store_true",
                   help="draw a seed from system entropy and record it")


def _resolve_seed(args, parser, required=True):
    if args.seed is not None:
        return args.seed
    if args.seed_from_entropy:
        return secrets.randbits(63)
    if required:
        parser.error("--seed is required (or pass --seed-from-entropy)")
    return None


def _add_method(p):
    p.add_argument("--algorithm", choices=("kmeans", "hierarchical", "pam"), required=True)
    p.add_argument("--k", type=_positive, required=True)
    p.add_argument("--linkage", choices=("single", "complete", "average"))
    p.add_argument("--restarts", type=_positive, default=10)
    p.add_argument("--max-iter", type=_positive, default=100)
    p.add_argument("--standardize", action="store_true")


def _method_from_args(args, parser, seed):
    prep = "standardize" if args.standardize else "none"
    if args.algorithm == "kmeans":
        return ClusteringMethod("kmeans", args.k, prep, None, seed, args.max_iter, args.restarts)
    if args.algorithm == "hierarchical":
        return ClusteringMethod("hierarchical", args.k, prep, args.linkage or "average")
    if args.linkage:
        parser.error("--linkage only applies to hierarchical clustering")
    return ClusteringMethod("pam", args.k, prep)


def _load_doc(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc


def _write_resolved(out, command, resolved):
    write_text(Path(out) / "resolved_config.json",
               dumps_json({"command": command, "toolkit_version": __version__, **resolved}))


# ---------------------------------------------------------------------------
# subcommands


def cmd_split(args, parser):
    from .split import split

    seed = _resolve_seed(args, parser)
    data = read_dataset(args.data, args.form)
    pair = split(data, args.mode, args.ratio, seed)
    out = Path(args.out)
    files = {"discovery": write_text(out / "discovery.csv", dataset_csv_text(pair.discovery)),
             "validation": write_text(out / "validation.csv", dataset_csv_text(pair.validation))}
    if pair.cross_block is not None:
        files["cross_block"] = write_text(
            out / "cross_block.csv",
            matrix_csv_text(pair.cross_block, pair.discovery.object_ids,
                            pair.validation.object_ids))
    manifest = pair.manifest()
    manifest["files"] = {role: {"path": f"{role}.csv", "sha256": h} for role, h in files.items()}
    write_text(out / "manifest.json", dumps_json(manifest))
    _write_resolved(out, "split", {"data": str(args.data), "form": args.form, "mode": args.mode,
                                   "ratio": args.ratio, "seed": seed})
    return 0


def cmd_ingest(args, parser):
    from .io import file_sha256
    from .split import ingest_pair

    pair = ingest_pair(args.discovery, args.validation, args.mode, args.form)
    manifest = pair.manifest()
    manifest["files"] = {"discovery": {"path": str(args.discovery),
                                       "sha256": file_sha256(args.discovery)},
                         "validation": {"path": str(args.validation),
                                        "sha256": file_sha256(args.validation)}}
    out = Path(args.out)
    write_text(out / "manifest.json", dumps_json(manifest))
    _write_resolved(out, "ingest", {"discovery": str(args.discovery),
                                    "validation": str(args.validation),
                                    "mode": args.mode, "form": args.form})
    return 0


def cmd_cluster(args, parser):
    seed = _resolve_seed(args, parser, required=args.algorithm == "kmeans")
    method = _method_from_args(args, parser, seed)
    model = apply_method(read_dataset(args.data, args.form), method)
    out = Path(args.out)
    write_text(out / "partition.csv", partition_csv_text(model.partition))
    write_text(out / "model.json", dumps_json(model.to_dict()))
    _write_resolved(out, "cluster", {"data": str(args.data), "form": args.form,
                                     "method": method.to_dict()})
    return 0


def cmd_transfer(args, parser):
    from .split import SplitPair
    from .transfer import TransferRule, default_rule, transfer

    spec = json.loads(Path(args.model).read_text(encoding="utf-8"))
    d1 = read_dataset(args.discovery, args.form) if args.discovery else None
    d2 = read_dataset(args.validation, args.form)
    if args.form == "dissimilarity" and d1 is None:
        raise ConfigError("dissimilarity transfer needs --discovery and --cross-block")
    model = ClusterModel.from_dict(spec, d1 if args.form == "feature" else None)
    if d1 is None:
        d1 = d2  # placeholder; nearest_centroid reads only the model
    cross = None
    if args.cross_block:
        cross, rows, cols = read_matrix_csv(args.cross_block)
        if rows != list(d1.object_ids) or cols != list(d2.object_ids):
            raise ConfigError("cross block ids must match discovery rows and validation columns")
    rule = (TransferRule(args.rule, args.knn_k if args.rule == "knn" else None)
            if args.rule else default_rule(model.method, args.mode))
    pair = SplitPair(d1, d2, args.mode, 0.5, None, cross)
    part = transfer(model, pair, rule)
    write_text(args.out, partition_csv_text(part))
    return 0


def _candidates_from(doc):
    if isinstance(doc, dict):
        doc = doc.get("candidates")
    if not isinstance(doc, list):
        raise ConfigError("candidates file must hold a list of candidate methods")
    return doc


def cmd_select(args, parser):
    from .engine.protocol import SEED_METHODS, derive_seed, expand_candidates, select_method

    seed = _resolve_seed(args, parser)
    candidates = expand_candidates(_candidates_from(_load_doc(args.candidates)),
                                   derive_seed(seed, SEED_METHODS))
    d1 = read_dataset(args.data, args.form)
    sel = select_method(d1, candidates, args.criterion)
    out = Path(args.out)
    write_text(out / "selection.json", dumps_json(sel.to_dict()))
    write_text(out / "model.json", dumps_json(sel.model.to_dict()))
    write_text(out / "partition.csv", partition_csv_text(sel.model.partition))
    _write_resolved(out, "select", {"data": str(args.data), "form": args.form, "seed": seed,
                                    "criterion": args.criterion,
                                    "candidates": [c.to_dict() for c in candidates]})
    return 0


def cmd_validate(args, parser):
    from .engine import ProtocolConfig, run_protocol, write_report

    doc = _load_doc(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    if args.seed is not None or args.seed_from_entropy:
        doc["seed"] = _resolve_seed(args, parser)
    elif doc.get("seed") is None:
        parser.error("config has no seed: pass --seed or --seed-from-entropy")
    cfg = ProtocolConfig.from_dict(doc, base_dir=Path(args.config).resolve().parent)
    report = run_protocol(cfg, workers=args.workers)
    out = Path(args.out) if args.out else Path(args.config).resolve().parent / "validation_out"
    write_report(report, out, report.provenance["resolved_config"])
    return 0


def cmd_test_null(args, parser):
    from .nulltest import monte_carlo_test

    seed = _resolve_seed(args, parser)
    method = _method_from_args(args, parser, seed)
    data = read_dataset(args.data, "feature")
    res = monte_carlo_test(data, method, args.statistic, args.null, args.M, seed, args.workers)
    out = Path(args.out)
    write_text(out / "null_test.json", dumps_json(res.to_dict()))
    _write_resolved(out, "test-null", {"data": str(args.data), "method": method.to_dict(),
                                       "statistic": args.statistic, "null": args.null,
                                       "M": args.M, "seed": seed})
    return 0


def cmd_report(args, parser):
    from .engine import report_json, report_markdown

    d = json.loads(Path(args.report).read_text(encoding="utf-8"))
    text = report_markdown(d) if args.format == "markdown" else report_json(d)
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterval",
                                     description="Validate clustering results on validation data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="split a dataset into discovery and validation parts")
    p.add_argument("--data", required=True)
    p.add_argument("--form", choices=("feature", "dissimilarity"), default="feature")
    p.add_argument("--mode", choices=("inferential", "descriptive"), default="inferential")
    p.add_argument("--ratio", type=_ratio, default=0.5)
    _add_seed(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("ingest", help="pair independently collected datasets")
    p.add_argument("--discovery", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--form", choices=("feature", "dissimilarity"), default="feature")
    p.add_argument("--mode", choices=("inferential", "descriptive"), default="inferential")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cluster", help="run one clustering method")
    p.add_argument("--data", required=True)
    p.add_argument("--form", choices=("feature", "dissimilarity"), default="feature")
    _add_method(p)
    _add_seed(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("transfer", help="transfer a discovery clustering to validation data")
    p.add_argument("--model", required=True)
    p.add_argument("--discovery")
    p.add_argument("--validation", required=True)
    p.add_argument("--cross-block")
    p.add_argument("--form", choices=("feature", "dissimilarity"), default="feature")
    p.add_argument("--mode", choices=("inferential", "descriptive"), default="inferential")
    p.add_argument("--rule", choices=("nearest_centroid", "nearest_medoid", "knn", "identity"))
    p.add_argument("--knn-k", type=_positive, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("select", help="Step 1: choose a method on discovery data")
    p.add_argument("--data", required=True)
    p.add_argument("--form", choices=("feature", "dissimilarity"), default="feature")
    p.add_argument("--candidates", required=True, help="YAML/JSON list of candidate methods")
    p.add_argument("--criterion", default="asw",
                   choices=("asw", "ch", "homogeneity", "separation"))
    _add_seed(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("validate", help="run the full two-step protocol from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=_positive, default=1)
    _add_seed(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("test-null", help="Monte-Carlo test against a homogeneous null model")
    p.add_argument("--data", required=True)
    _add_method(p)
    p.add_argument("--statistic", default="asw",
                   choices=("asw", "ch", "homogeneity", "separation", "stability"))
    p.add_argument("--null", choices=("uniform", "gaussian"), default="uniform")
    p.add_argument("--M", type=_positive, default=99)
    p.add_argument("--workers", type=_positive, default=1)
    _add_seed(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_test_null)

    p = sub.add_parser("report", help="render a report JSON as JSON or Markdown")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("json", "markdown"), default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2))
        return args.func(args, parser)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except ClusterValError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return 1
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "io-error", "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
