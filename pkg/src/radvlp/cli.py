"""Command-line entry point: ``radvlp <command> [options]``.

Every command validates its configuration first, then creates a timestamped
run directory holding the echoed config (``config.json``), a log, and the
command's outputs (checkpoints, ``trace.csv``, ``metrics.json``...).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .corpus.manifest import ManifestError, read_manifest, replace_labels, write_manifest
from .corpus.preprocess import PRESETS, get_preset
from .corpus.synth import synth_corpus
from .labels.clients import ChatCompletionsClient, KeywordMockClient
from .labels.extraction import Backoff, extract_corpus, read_label_file, write_label_file
from .labels.schemas import get_schema
from .models.dual import CheckpointError, build_model, load_checkpoint, save_checkpoint
from .models.text import Tokenizer
from .training.data import CorpusArrays
from .training.loops import (
    DivergenceError,
    run_joint_baseline,
    run_stage1_text,
    run_stage1_vision,
    run_stage2_align,
    val_clip_loss,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 0, 2, 3, 4

log = logging.getLogger("radvlp")


class DataError(RuntimeError):
    pass


# --- run directories -------------------------------------------------------------


def make_run_dir(args, command: str) -> Path:
    if args.run_dir:
        run = Path(args.run_dir)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        run = Path(args.runs_root) / f"{stamp}-{command}"
        n = 1
        while run.exists():
            n += 1
            run = Path(args.runs_root) / f"{stamp}-{command}-{n}"
    run.mkdir(parents=True, exist_ok=True)
    return run


def _attach_log(run: Path):
    handler = logging.FileHandler(run / "log.txt", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    return handler


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --- shared data plumbing -------------------------------------------------------


def load_corpus(args, cfg: RunConfig) -> CorpusArrays:
    spec = get_preset(cfg.preset)
    records = read_manifest(args.manifest, min_slices=spec.min_slices)
    if not records:
        raise DataError(f"{args.manifest}: no usable studies")
    labels_path = getattr(args, "labels", None)
    if labels_path:
        schema = records[0].labels.schema
        try:
            new = read_label_file(labels_path, schema)
        except FileNotFoundError:
            raise DataError(f"label file not found: {labels_path}") from None
        except ValueError as exc:
            raise DataError(str(exc)) from None
        records = replace_labels(records, new)
    return CorpusArrays.from_records(records, spec)


def corpus_tokenizer(data: CorpusArrays, cfg: RunConfig) -> Tokenizer:
    max_tokens = cfg.text.get("max_tokens", 64)
    return Tokenizer.build([data.reports[i] for i in data.indices("train")], max_tokens=max_tokens)


def fresh_model(data: CorpusArrays, cfg: RunConfig, use_seg: bool):
    schema = data.records[0].labels.schema
    return build_model(
        schema, corpus_tokenizer(data, cfg), cfg.vision_config(), cfg.text_config(), use_seg=use_seg, seed=cfg.seed
    )


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None


def _emit(report, args, run: Path, name: str):
    (run / f"{name}.json").write_text(report.to_json() + "\n")
    print(report.to_json() if args.json else report.to_table())


# --- commands -------------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig, run: Path):
    schema = get_schema(cfg.schema)
    n = args.n or cfg.n_studies
    records = synth_corpus(cfg.seed, n, schema, cfg=cfg.synth_config())
    out = Path(args.out) if args.out else run / "corpus"
    path = write_manifest(records, out / "manifest.jsonl")
    _write_json(run / "metrics.json", {"n_studies": n, "manifest": str(path)})
    print(path)


def cmd_extract_labels(args, cfg: RunConfig, run: Path):
    records = read_manifest(args.manifest)
    if not records:
        raise DataError(f"{args.manifest}: no studies")
    schema = records[0].labels.schema
    ex = cfg.extraction
    if ex.get("client", "mock") == "http":
        if "base_url" not in ex or "model" not in ex:
            raise ConfigError("config error at extraction: http client needs base_url and model")
        client = ChatCompletionsClient(
            ex["base_url"], ex["model"], ex.get("api_key_env", "LLM_API_KEY"), timeout=ex.get("timeout", 60.0)
        )
    else:
        client = KeywordMockClient()
    outcomes = extract_corpus(
        client,
        {r.study_id: r.report for r in records},
        schema,
        max_attempts=ex.get("max_attempts", 3),
        backoff=Backoff(base_delay=ex.get("base_delay", 0.5)),
        workers=args.workers,
    )
    out = Path(args.out) if args.out else run / "labels.jsonl"
    write_label_file(outcomes, schema, out)
    flagged = sorted(sid for sid, oc in outcomes.items() if not oc.ok)
    _write_json(run / "metrics.json", {"n_studies": len(outcomes), "n_flagged": len(flagged), "flagged": flagged})
    print(out)


def _finish_training(result, run: Path, ckpt_name: str, data, extra=None):
    result.trace.to_csv(run / "trace.csv")
    save_checkpoint(result.model, run / ckpt_name)
    metrics = {"best_epoch": result.best_epoch, "best_val_total": result.best_val, **(extra or {})}
    _write_json(run / "metrics.json", metrics)
    print(run / ckpt_name)


def cmd_pretrain_vision(args, cfg, run):
    data = load_corpus(args, cfg)
    tcfg = cfg.training_config("vision_pretrain")
    model = fresh_model(data, cfg, use_seg=tcfg.use_seg)
    _finish_training(run_stage1_vision(data, tcfg, model), run, "vision.npz", data)


def cmd_pretrain_text(args, cfg, run):
    data = load_corpus(args, cfg)
    model = fresh_model(data, cfg, use_seg=False)
    _finish_training(run_stage1_text(data, cfg.training_config("text_pretrain"), model), run, "text.npz", data)


def cmd_align(args, cfg, run):
    data = load_corpus(args, cfg)
    model = fresh_model(data, cfg, use_seg=False)
    for p in (args.vision_ckpt, args.text_ckpt):
        if not Path(p).exists():
            raise DataError(f"checkpoint not found: {p}")
    result = run_stage2_align(data, cfg.training_config("align"), model, args.vision_ckpt, args.text_ckpt)
    _finish_training(result, run, "align.npz", data, {"val_clip": val_clip_loss(result.model, data)})


def cmd_joint(args, cfg, run):
    data = load_corpus(args, cfg)
    tcfg = cfg.training_config("joint_baseline")
    model = fresh_model(data, cfg, use_seg=tcfg.use_seg)
    result = run_joint_baseline(data, tcfg, model)
    _finish_training(result, run, "joint.npz", data, {"val_clip": val_clip_loss(result.model, data)})


def cmd_eval_zeroshot(args, cfg, run):
    from .evaluation.zeroshot import eval_zero_shot, prompt_bank

    data = load_corpus(args, cfg)
    model = _load_ckpt(args.ckpt)
    prompt = prompt_bank()[(args.prompt_index or cfg.eval_option("prompt_index")) - 1]
    threshold = cfg.eval_option("threshold") if args.threshold is None else args.threshold
    report = eval_zero_shot(model, data, args.split or cfg.eval_option("split"), prompt, threshold)
    _emit(report, args, run, "metrics")


def cmd_eval_retrieval(args, cfg, run):
    from .evaluation.zeroshot import eval_retrieval

    data = load_corpus(args, cfg)
    model = _load_ckpt(args.ckpt)
    ks = tuple(args.ks or cfg.eval_option("recall_ks"))
    report = eval_retrieval(model, data, args.split or cfg.eval_option("split"), ks)
    _emit(report, args, run, "metrics")


def cmd_probe_alignment(args, cfg, run):
    from .evaluation.probe import alignment_probe

    data = load_corpus(args, cfg)
    model = _load_ckpt(args.ckpt)
    filters = ("related", "unrelated") if args.filter == "both" else (args.filter,)
    out = {}
    for f in filters:
        res = alignment_probe(model, data, args.split or "val", f, use_tags=args.method == "tags")
        out[f] = {"loss": res.loss, "n_used": res.n_used, "n_skipped": res.n_skipped}
    if {"related", "unrelated"} <= out.keys():
        out["unrelated_over_related"] = out["unrelated"]["loss"] / out["related"]["loss"]
    _write_json(run / "metrics.json", out)
    print(json.dumps(out, indent=2, sort_keys=True) if args.json else "\n".join(f"{k}: {v}" for k, v in out.items()))


def cmd_gradcam(args, cfg, run):
    from .interpret import gradcam, overlay_export

    data = load_corpus(args, cfg)
    model = _load_ckpt(args.ckpt)
    if args.study not in data.study_ids:
        raise DataError(f"study {args.study!r} not in {args.manifest}")
    if args.pathology not in model.schema.categories:
        raise ConfigError(f"unknown pathology {args.pathology!r}; schema has {list(model.schema.categories)}")
    if "{pathology}" not in args.prompt:
        raise ConfigError("--prompt must contain the {pathology} slot")
    i = data.study_ids.index(args.study)
    volume = data.center_volume(i)
    prompt = args.prompt.replace("{pathology}", args.pathology)
    heat = gradcam(volume, prompt, model)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.study}-{args.pathology.replace(' ', '_')}"
    np.save(out / f"{stem}.npy", heat.data)
    png = overlay_export(heat, volume, out / f"{stem}.png")
    _write_json(run / "metrics.json", {"study": args.study, "prompt": prompt, "score": heat.score, "png": str(png)})
    print(png)


COMMANDS = {
    "synth": cmd_synth,
    "extract-labels": cmd_extract_labels,
    "pretrain-vision": cmd_pretrain_vision,
    "pretrain-text": cmd_pretrain_text,
    "align": cmd_align,
    "joint": cmd_joint,
    "eval-zeroshot": cmd_eval_zeroshot,
    "eval-retrieval": cmd_eval_retrieval,
    "probe-alignment": cmd_probe_alignment,
    "gradcam": cmd_gradcam,
}


# --- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON (validated before any work starts)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--preset", choices=sorted(PRESETS), help="override the preprocessing preset")
    common.add_argument("--runs-root", default="runs", help="parent of timestamped run directories (default: runs)")
    common.add_argument("--run-dir", help="use this run directory instead of a timestamped one")
    common.add_argument("--workers", type=int, default=1, help="worker threads where parallelism applies (default 1)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--manifest", required=True, help="corpus manifest.jsonl")
    data.add_argument("--labels", help="label file from extract-labels; replaces manifest labels")

    ev = argparse.ArgumentParser(add_help=False)
    ev.add_argument("--ckpt", required=True, help="model checkpoint (.npz)")
    ev.add_argument("--split", choices=["train", "val", "test"], help="evaluation split")
    ev.add_argument("--json", action="store_true", help="print machine-readable JSON instead of a table")

    parser = argparse.ArgumentParser(prog="radvlp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--n", type=int, help="number of studies (default from config: 500)")
    p.add_argument("--out", help="corpus directory (default: <run>/corpus)")

    p = sub.add_parser("extract-labels", parents=[common], help="label reports with an LLM client")
    p.add_argument("--manifest", required=True, help="corpus manifest.jsonl")
    p.add_argument("--out", help="label file path (default: <run>/labels.jsonl)")

    sub.add_parser("pretrain-vision", parents=[common, data], help="Stage 1: supervised vision pre-training")
    sub.add_parser("pretrain-text", parents=[common, data], help="Stage 1: supervised report pre-training")
    p = sub.add_parser("align", parents=[common, data], help="Stage 2: contrastive alignment")
    p.add_argument("--vision-ckpt", required=True, help="checkpoint from pretrain-vision")
    p.add_argument("--text-ckpt", required=True, help="checkpoint from pretrain-text")
    sub.add_parser("joint", parents=[common, data], help="joint multi-task baseline from scratch")

    p = sub.add_parser("eval-zeroshot", parents=[common, data, ev], help="zero-shot diagnosis metrics")
    p.add_argument("--prompt-index", type=int, choices=range(1, 6), metavar="{1..5}", help="prompt pair")
    p.add_argument("--threshold", type=float, help="decision threshold on P(c|I) (default 0.5)")
    p = sub.add_parser("eval-retrieval", parents=[common, data, ev], help="report-to-volume Recall@k")
    p.add_argument("--ks", type=int, nargs="+", help="k values (default 1 5 10 50 100)")
    p = sub.add_parser("probe-alignment", parents=[common, data, ev], help="label-related vs unrelated probe")
    p.add_argument("--filter", choices=["all", "related", "unrelated", "both"], default="both")
    p.add_argument("--method", choices=["tags", "keyword"], default="keyword", help="sentence classifier")

    p = sub.add_parser("gradcam", parents=[common, data], help="prompt-conditioned Grad-CAM overlay")
    p.add_argument("--ckpt", required=True, help="aligned model checkpoint")
    p.add_argument("--study", required=True, help="study_id")
    p.add_argument("--prompt", default="There is {pathology}.", help="template with a {pathology} slot")
    p.add_argument("--pathology", required=True, help="category name from the schema")
    p.add_argument("--out", help="output directory (default: the run directory)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg.seed = args.seed
    if args.preset:
        cfg.preset = args.preset
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    if getattr(args, "threshold", None) is not None and not 0 <= args.threshold <= 1:
        raise ConfigError("--threshold must lie in [0, 1]")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    run = make_run_dir(args, args.command)
    (run / "config.json").write_text(cfg.to_json())
    handler = _attach_log(run)
    log.info("command %s, run directory %s", args.command, run)
    try:
        COMMANDS[args.command](args, cfg, run)
        return EXIT_OK
    except ConfigError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ManifestError, CheckpointError, FileNotFoundError) as exc:
        log.error("%s", exc)
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        exc.trace.to_csv(run / "trace.csv")
        log.error("%s", exc)
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
