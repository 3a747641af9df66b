"""Command-line entry point: run pipeline stages over a working directory.

Global flags: --config PATH, --workdir PATH, --seed N (also the MINE_WORKDIR
and MINE_SEED environment variables, with flags taking precedence). Errors
exit nonzero with a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import pipeline as pl
from . import prompts
from .calibration import SelectionPolicy

log = logging.getLogger("insightmine")

STAGES = [
    "synth", "extract", "pair", "score", "cluster", "stratify", "annotate-auto",
    "calibrate", "finetune-matcher", "build-train", "train-mine", "infer", "eval",
    "annotate-serve", "curves",
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="insightmine",
        description="Weakly-supervised multimodal insight extraction pipeline",
    )
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--workdir", help="artifact directory (or MINE_WORKDIR)")
    parser.add_argument("--seed", type=int, help="run seed (or MINE_SEED)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="stage", required=True)

    sub.add_parser("synth", help="generate the synthetic corpus, images and gold labels")
    sub.add_parser("extract", help="preprocess, segment and filter verbatims")
    sub.add_parser("pair", help="enumerate (verbatim, image) pairs per review")
    sub.add_parser("score", help="score all pairs with the current matcher")
    sub.add_parser("cluster", help="greedy leader clustering of verbatims")
    p = sub.add_parser("stratify", help="stratified sample for annotation")
    p.add_argument("--sample-k", type=int, help="per-category sampling budget")
    p = sub.add_parser("annotate-auto", help="simulate two annotators from gold labels")
    p.add_argument("--disagree-rate", type=float, help="second annotator flip rate")
    p = sub.add_parser("calibrate", help="sweep thresholds and select one by policy")
    p.add_argument("--grid", help="start:stop:step or comma list")
    p.add_argument("--policy", help="max_f1 | precision_floor:<p> | fixed:<t>")
    sub.add_parser("finetune-matcher", help="contrastive training on annotated positives")
    p = sub.add_parser("build-train", help="weak-label pairs and serialize targets")
    p.add_argument("--threshold", type=float, help="override the calibrated threshold")
    p.add_argument("--prompt-kind", choices=list(prompts.PROMPT_KINDS))
    p = sub.add_parser("train-mine", help="train the fused encoder/decoder")
    p.add_argument("--epochs", type=int)
    p = sub.add_parser("infer", help="decode verbatims for a split")
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--beam-size", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--top-p", type=float)
    p.add_argument("--method", choices=["greedy", "beam", "top_k", "nucleus"])
    p.add_argument("--prompt-kind", choices=list(prompts.PROMPT_KINDS))
    p = sub.add_parser("eval", help="score outputs against gold labels")
    p.add_argument("--prompt-kind", choices=list(prompts.PROMPT_KINDS))
    p = sub.add_parser("annotate-serve", help="start the annotation HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8420)
    p = sub.add_parser("curves", help="export the live threshold curve as CSV")
    p.add_argument("--grid", help="start:stop:step or comma list")
    return parser


def parse_policy(spec: str) -> SelectionPolicy:
    kind, _, value = spec.partition(":")
    return SelectionPolicy(kind=kind, value=float(value) if value else None)


def effective_config(args: argparse.Namespace) -> pl.PipelineConfig:
    cfg = pl.PipelineConfig.load(args.config) if args.config else pl.PipelineConfig()
    workdir = args.workdir or os.environ.get("MINE_WORKDIR")
    if workdir:
        cfg.workdir = workdir
    seed = args.seed if args.seed is not None else os.environ.get("MINE_SEED")
    if seed is not None:
        cfg.seed = int(seed)
    if getattr(args, "sample_k", None) is not None:
        cfg.sample_k = args.sample_k
    if getattr(args, "disagree_rate", None) is not None:
        cfg.disagree_rate = args.disagree_rate
    if getattr(args, "grid", None):
        cfg.grid = args.grid
    if getattr(args, "policy", None):
        cfg.policy = parse_policy(args.policy)
    if getattr(args, "prompt_kind", None):
        cfg.prompt_kind = args.prompt_kind
    if getattr(args, "epochs", None) is not None:
        cfg.mine_train = dataclasses.replace(cfg.mine_train, epochs=args.epochs)
    decode_over = {}
    for name, attr in [("beam_size", "beam_size"), ("top_k", "k"), ("top_p", "p"),
                       ("method", "method")]:
        if getattr(args, name, None) is not None:
            decode_over[attr] = getattr(args, name)
    if decode_over:
        cfg.decode = dataclasses.replace(cfg.decode, **decode_over)
    return cfg


def run_stage(args: argparse.Namespace, cfg: pl.PipelineConfig) -> dict:
    wd = pl.Workdir(cfg.workdir)
    stage = args.stage
    if stage == "synth":
        pl.stage_synth(wd, cfg)
    elif stage == "extract":
        pl.stage_extract(wd, cfg)
    elif stage == "pair":
        pl.stage_pair(wd, cfg)
    elif stage == "score":
        pl.stage_score(wd, cfg)
    elif stage == "cluster":
        pl.stage_cluster(wd, cfg)
    elif stage == "stratify":
        pl.stage_stratify(wd, cfg)
    elif stage == "annotate-auto":
        pl.stage_annotate_auto(wd, cfg)
    elif stage == "calibrate":
        threshold = pl.stage_calibrate(wd, cfg)
        return {"stage": stage, "threshold": threshold}
    elif stage == "finetune-matcher":
        trace = pl.stage_finetune_matcher(wd, cfg)
        return {"stage": stage, "steps": len(trace),
                "first_loss": trace[0] if trace else None,
                "final_loss": trace[-1] if trace else None}
    elif stage == "build-train":
        n = pl.stage_build_train(wd, cfg, getattr(args, "threshold", None))
        return {"stage": stage, "examples": n}
    elif stage == "train-mine":
        trace = pl.stage_train_mine(wd, cfg)
        return {"stage": stage, "epochs": len(trace),
                "final_loss": trace[-1] if trace else None}
    elif stage == "infer":
        n = pl.stage_infer(wd, cfg, split=args.split)
        return {"stage": stage, "contexts": n}
    elif stage == "eval":
        report = pl.stage_eval(wd, cfg)
        return {"stage": stage, "precision": report.precision, "recall": report.recall,
                "f1": report.f1, "completeness": report.completeness}
    elif stage == "curves":
        points = pl.stage_curves(wd, cfg)
        return {"stage": stage, "points": len(points)}
    elif stage == "annotate-serve":
        import uvicorn

        from .service import create_app

        app = create_app(cfg.workdir, cfg)
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {"stage": stage, "ok": True}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        result = run_stage(args, cfg)
        print(json.dumps(result))
        return 0
    except Exception as e:  # machine-readable error contract
        err = {"error": {"type": type(e).__name__, "message": str(e), "stage": args.stage}}
        print(json.dumps(err), file=sys.stderr)
        log.debug("stage failed", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
