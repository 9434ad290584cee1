"""Command-line front end.

Exit status: 0 on success, 1 for an analysis error, 2 for an input, config
or I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__, pipeline
from .config import PipelineConfig
from .errors import AnalysisError, FetchError, InputError

COMMANDS = ("ingest", "segment", "features", "select", "cluster", "classify",
            "behavior", "fitdist", "report", "run", "print-config")


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subparser from resetting flags given before the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON config file (see print-config)")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--granularity", help="granularity name (Day, Week, ..., All)")
    common.add_argument("--transactions", help="transaction file (csv or jsonl)")
    common.add_argument("--labels", help="label file (account,label,kind)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="tgdetect", parents=[common],
                                 description="Temporal graph features and malicious-account detection.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="canonicalise inputs and write the manifest")
    sub.add_parser("segment", parents=[common], help="write segment tables")
    p = sub.add_parser("features", parents=[common], help="extract per-account features")
    p.add_argument("--sd", default="all", help="sub-dataset index or 'all'")
    sub.add_parser("select", parents=[common], help="Gini ranking, correlation pruning and PCA")
    p = sub.add_parser("cluster", parents=[common], help="k sweep and suspect flagging")
    p.add_argument("--epsilon", type=float, help="override the similarity tolerance")
    sub.add_parser("classify", parents=[common], help="train and evaluate ExtraTrees")
    sub.add_parser("behavior", parents=[common], help="behaviour vectors per granularity")
    p = sub.add_parser("fitdist", parents=[common], help="power-law fit of a distribution")
    p.add_argument("--series", choices=pipeline.FIT_SERIES, default="indegree")
    sub.add_parser("report", parents=[common], help="collect stage summaries")
    p = sub.add_parser("run", parents=[common], help="run several stages in order")
    p.add_argument("--stages", default="ingest,features,select,cluster,classify,behavior,report")
    sub.add_parser("print-config", parents=[common], help="print the effective config")
    return ap


def _config(args) -> PipelineConfig:
    for name in ("config", "seed", "out", "granularity", "transactions", "labels", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, None)
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out:
        over["output_dir"] = args.out
    if args.transactions:
        over["transactions"] = args.transactions
    if args.labels:
        over["labels"] = args.labels
    if args.granularity and args.command not in ("features", "segment"):
        over["analysis_granularity"] = args.granularity
    return cfg.replace(**over) if over else cfg.validate()


def _dispatch(args, cfg):
    c = args.command
    if c == "print-config":
        return cfg.to_dict()
    if c == "ingest":
        m = pipeline.cmd_ingest(cfg)
        return {k: m[k] for k in ("n_transactions", "n_accounts", "block_range", "labels")}
    if c == "segment":
        return {g: len(rows) for g, rows in pipeline.cmd_segment(cfg, args.granularity).items()}
    if c == "features":
        return [str(p) for p in pipeline.cmd_features(cfg, args.granularity, args.sd)]
    if c == "select":
        return pipeline.cmd_select(cfg)
    if c == "cluster":
        r = pipeline.cmd_cluster(cfg, args.epsilon)
        return {k: r[k] for k in ("best_k", "best_silhouette", "cluster", "malicious_in_cluster")} | {
            "n_flagged": len(r["flagged"])}
    if c == "classify":
        return pipeline.cmd_classify(cfg)["rows"]
    if c == "behavior":
        return pipeline.cmd_behavior(cfg)
    if c == "fitdist":
        return pipeline.cmd_fitdist(cfg, args.series)
    if c == "report":
        return pipeline.cmd_report(cfg)
    if c == "run":
        pipeline.run_all(cfg, [s.strip() for s in args.stages.split(",") if s.strip()])
        return {"output_dir": cfg.output_dir}
    raise AssertionError(c)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        result = _dispatch(args, cfg)
    except InputError as exc:
        print(f"tgdetect: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"tgdetect: error: {where}{exc.strerror or exc}", file=sys.stderr)
        return 2
    except (AnalysisError, FetchError) as exc:
        print(f"tgdetect: analysis error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
