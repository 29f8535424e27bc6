"""Command-line pipeline: synthesize corpora, train, evaluate, compare.

Every command is reproducible: identical inputs and seed produce identical
output files. Timestamps appear only in the ``run.log`` sidecar. The
``MDAFORGE_LOG`` environment variable controls console log verbosity and
nothing else.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from .corpus import Corpus, load_corpus, split_target
from .featurize import featurize_all
from .metrics import METRIC_NAMES, ConfusionMatrix, RunResult
from .networks import load_checkpoint, predict_indices, save_checkpoint
from .ranking import ScoreGroup, cohens_d, scott_knott_esd
from .synth import SynthConfig, synth_corpus, write_corpus_jsonl
from .training import TrainConfig, train

logger = logging.getLogger("mdaforge")

COMPARE_METRICS = ("acc", "mcc", "kappa", "wf1")


def _setup_logging() -> None:
    level_name = os.environ.get("MDAFORGE_LOG", "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _attach_run_log(out_dir: Path) -> logging.Handler:
    handler = logging.FileHandler(out_dir / "run.log", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler.setLevel(logging.INFO)
    root = logging.getLogger()
    root.addHandler(handler)
    if root.level > logging.INFO:
        logging.getLogger("mdaforge").setLevel(logging.INFO)
    return handler


def _hash_config(data: dict) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ---- subcommands -----------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig.from_json(args.config)
    corpus = synth_corpus(cfg)
    written = write_corpus_jsonl(corpus, args.out)
    for path in written:
        logger.info("wrote %s", path)
    print(f"wrote {len(written) - 1} project files + provenance to {args.out}")
    return 0


def _resolve_corpus(args: argparse.Namespace) -> tuple[Corpus, dict]:
    if args.corpus:
        if not args.target:
            raise UsageError("--target is required with --corpus")
        corpus = load_corpus(args.corpus, args.target)
        return corpus, {"kind": "jsonl", "path": str(args.corpus), "target": args.target}
    cfg = SynthConfig.from_json(args.synth)
    corpus = synth_corpus(cfg)
    if args.target and args.target != corpus.target_project:
        raise UsageError(f"synthetic corpora fix the target project as "
                         f"{corpus.target_project!r}; got --target {args.target!r}")
    return corpus, {"kind": "synth", "config": cfg.to_dict()}


def _train_config(args: argparse.Namespace) -> TrainConfig:
    use_at = not args.no_at
    use_wmmd = not args.no_wmmd
    if args.baseline == "source-only":
        use_at = use_wmmd = False
    return TrainConfig(
        alpha=args.alpha,
        lr=args.lr,
        per_domain_batch=args.per_domain_batch,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        use_at=use_at,
        use_wmmd=use_wmmd,
        feature_dim=args.feature_dim,
        ngram_max=args.ngram_max,
        hidden1=args.hidden1,
        hidden2=args.hidden2,
    )


def _evaluate_split(bundle, corpus: Corpus, cfg: TrainConfig, which: str) -> ConfusionMatrix:
    val, test = split_target(corpus, cfg.seed)
    samples = val if which == "val" else test
    feats = featurize_all([s.tokens for s in samples], cfg.feature_dim, cfg.ngram_max)
    pred = predict_indices(bundle, feats)
    index = {cwe: i for i, cwe in enumerate(corpus.labels)}
    true = [index[s.label.id] for s in samples]
    return ConfusionMatrix.from_predictions(true, pred, corpus.labels)


def cmd_train(args: argparse.Namespace) -> int:
    corpus, corpus_desc = _resolve_corpus(args)
    cfg = _train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = _attach_run_log(out)
    try:
        experiment = {
            "command": "train",
            "corpus": corpus_desc,
            "target": corpus.target_project,
            "method": cfg.method_name,
            "train": cfg.to_dict(),
        }
        config_hash = _hash_config(experiment)
        experiment["config_hash"] = config_hash
        _write_json(out / "config.json", experiment)
        if corpus_desc["kind"] == "synth":
            write_corpus_jsonl(corpus, out / "corpus")

        bundle, report = train(corpus, cfg)
        report.write(out / "report.json")

        cm = _evaluate_split(bundle, corpus, cfg, "test")
        result = RunResult.from_confusion(cfg.method_name, corpus.target_project,
                                          cfg.seed, cm, config_hash)
        result.write(out / "result.json")

        meta = {
            "config": cfg.to_dict(),
            "config_hash": config_hash,
            "corpus": corpus_desc,
            "target": corpus.target_project,
            "labels": list(corpus.labels),
            "method": cfg.method_name,
            "best_epoch": report.best_epoch,
        }
        save_checkpoint(out / "checkpoint.json", bundle, meta)

        logger.info("finished: best_epoch=%d stop=%s", report.best_epoch, report.stop_reason)
        print(f"{cfg.method_name} target={corpus.target_project} seed={cfg.seed} "
              f"acc={result.metrics['acc']:.4f} mcc={result.metrics['mcc']:.4f} "
              f"kappa={result.metrics['kappa']:.4f} wf1={result.metrics['wf1']:.4f}")
        return 0
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


def cmd_evaluate(args: argparse.Namespace) -> int:
    bundle, meta = load_checkpoint(args.checkpoint)
    cfg = TrainConfig.from_dict(meta["config"])
    target = args.target or meta["target"]
    if target != meta["target"]:
        raise ConfigMismatch(f"checkpoint was trained with target {meta['target']!r}, "
                             f"got --target {target!r}")
    corpus = load_corpus(args.corpus, target) if args.corpus else None
    if corpus is None:
        if meta["corpus"]["kind"] != "synth":
            raise UsageError("--corpus is required for checkpoints trained on JSONL corpora")
        corpus = synth_corpus(SynthConfig(**{
            **meta["corpus"]["config"],
            "shift": tuple(meta["corpus"]["config"]["shift"]),
        }))
    if corpus.num_sources != bundle.num_sources:
        raise ConfigMismatch(f"corpus has {corpus.num_sources} sources but the checkpoint "
                             f"was trained with {bundle.num_sources}")
    if list(corpus.labels) != meta["labels"]:
        raise ConfigMismatch("corpus label space differs from the checkpoint's; "
                             "refusing to evaluate against mismatched classes")

    cm = _evaluate_split(bundle, corpus, cfg, args.split)
    result = RunResult.from_confusion(meta["method"], target, cfg.seed, cm,
                                      meta["config_hash"])
    text = result.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    scores: dict[str, list[float]] = {}
    for path in args.results:
        result = RunResult.read(path)
        if args.metric not in result.metrics:
            raise ValueError(f"{path}: metric {args.metric!r} absent "
                             f"(has {sorted(result.metrics)})")
        scores.setdefault(result.method, []).append(result.metrics[args.metric])

    groups = [ScoreGroup(method, tuple(vals)) for method, vals in sorted(scores.items())]
    table = scott_knott_esd(groups)

    by_method = {g.method: g for g in groups}
    ordered = [m for entry in table.entries for m in entry.methods]
    pairwise = []
    for first, second in zip(ordered, ordered[1:]):
        d, label = cohens_d(by_method[first].scores, by_method[second].scores)
        pairwise.append((first, second, d, label))

    payload = table.to_dict()
    payload["metric"] = args.metric
    payload["pairwise_d"] = [
        {"a": a, "b": b, "d": d, "magnitude": label} for a, b, d, label in pairwise
    ]
    if args.out:
        _write_json(Path(args.out), payload)
    print(table.to_text(pairwise), end="")
    return 0


# ---- argument parsing ------------------------------------------------------

class UsageError(Exception):
    """Bad flag combination detected after argparse."""


class ConfigMismatch(Exception):
    """Checkpoint and corpus/flags disagree; evaluation refused."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdaforge",
        description="Multi-source domain-adaptive defect category prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic multi-project corpus")
    p_synth.add_argument("--config", required=True, help="SynthConfig JSON file")
    p_synth.add_argument("--out", required=True, help="output directory for JSONL files")
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train a model and evaluate the target test split")
    src = p_train.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="directory of per-project JSONL files")
    src.add_argument("--synth", help="SynthConfig JSON file to generate a corpus from")
    p_train.add_argument("--target", help="target project name (required with --corpus)")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--no-at", action="store_true", help="drop the adversarial loss")
    p_train.add_argument("--no-wmmd", action="store_true", help="drop the alignment loss")
    p_train.add_argument("--baseline", choices=["source-only"],
                         help="train the plain source-only classifier")
    p_train.add_argument("--alpha", type=float, default=0.01)
    p_train.add_argument("--epochs", type=int, default=30)
    p_train.add_argument("--lr", type=float, default=5e-5)
    p_train.add_argument("--patience", type=int, default=2)
    p_train.add_argument("--per-domain-batch", type=int, default=8)
    p_train.add_argument("--feature-dim", type=int, default=2048)
    p_train.add_argument("--ngram-max", type=int, default=3)
    p_train.add_argument("--hidden1", type=int, default=256)
    p_train.add_argument("--hidden2", type=int, default=128)
    p_train.add_argument("--out", required=True, help="run output directory")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="recompute metrics from a saved checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--corpus", help="corpus directory (optional for synthetic runs)")
    p_eval.add_argument("--target", help="must match the checkpoint's target")
    p_eval.add_argument("--split", choices=["val", "test"], default="test")
    p_eval.add_argument("--out", help="write the RunResult JSON here instead of stdout")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="rank methods across result files")
    p_cmp.add_argument("results", nargs="+", help="RunResult JSON files")
    p_cmp.add_argument("--metric", choices=COMPARE_METRICS, required=True)
    p_cmp.add_argument("--out", help="write the rank table JSON here")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with code 2
        return 2  # unreachable; keeps type checkers content
    except Exception as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
