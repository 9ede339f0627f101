"""Command-line entry point: ``avdwf {gen,train,eval,infer,balance,gradcheck,ablate}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .dataio.config import PRESETS, RunConfig, load_run_config
from .dataio.manifest import (
    SampleManifest,
    balance,
    build_manifest,
    load_entries,
    load_sample_dir,
    write_sample_dir,
)
from .errors import AUCUndefinedError, BalanceError
from .gradsuite import run_gradient_suite
from .model import FUSION_MODES, TOKENIZER_MODES, AVDetector, ModelConfig
from .fusion import WEIGHT_MODES, weights_csv
from .numerics import Tensor, load_checkpoint, no_grad, save_checkpoint
from .training.experiment import (
    ExperimentSpec,
    SPLITS,
    ablation_csv,
    audio_forged_subset,
    median_by,
    run_ablation,
    stratified_split,
)
from .training.synthetic import generate_dataset
from .training.trainer import FeatureSet, evaluate, prepare_features, train


# -- argument parsing ------------------------------------------------------------
def _common(p: argparse.ArgumentParser, out_default: str | None = "out") -> None:
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--preset", choices=PRESETS, default="desk")
    p.add_argument("--seed", type=int, help="overrides the configured seed")
    p.add_argument("--out", metavar="DIR", default=out_default, help="output directory")
    p.add_argument("--fusion-mode", choices=FUSION_MODES)
    p.add_argument("--tokenizer", choices=TOKENIZER_MODES)
    p.add_argument("--weight-mode", choices=WEIGHT_MODES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-samples", type=int, help="synthetic dataset size")


def _data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data", metavar="DIR", help="root of per-sample directories")
    g.add_argument("--manifest", metavar="PATH", help="JSON Lines sample manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avdwf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset and its manifest")
    _common(p)
    p.add_argument("--png", action="store_true", help="PNG frames and WAV audio instead of packed float32")

    p = sub.add_parser("train", help="train a detector and save a checkpoint")
    _common(p)
    _data_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    _data_flags(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--split", choices=SPLITS, default="test")

    p = sub.add_parser("infer", help="P(fake) and fusion weights for one sample directory")
    _common(p, out_default=None)
    p.add_argument("sample", metavar="SAMPLE_DIR")
    p.add_argument("--checkpoint", metavar="PATH",
                   help="trained weights (default: freshly initialised from --seed)")

    p = sub.add_parser("balance", help="rebalance a manifest to a real:fake ratio")
    _common(p)
    p.add_argument("manifest_in", metavar="MANIFEST")
    p.add_argument("--target", default="1:1", help="real:fake target ratio, e.g. 43:57")
    p.add_argument("--strategy", choices=("subsample", "oversample"), default="subsample")

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    _common(p, out_default=None)
    p.add_argument("--points", type=int, default=10, help="random points per check")

    p = sub.add_parser("ablate", help="fusion x tokenizer ablation over several seeds")
    _common(p)
    p.add_argument("--seeds", default="1,2,3", help="comma-separated seeds")
    return parser


def run_config_from(args) -> RunConfig:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    train_over = {k: v for k, v in (("fusion_mode", args.fusion_mode),
                                    ("tokenizer_mode", args.tokenizer),
                                    ("weight_mode", args.weight_mode),
                                    ("epochs", args.epochs)) if v is not None}
    if train_over:
        overrides["train"] = train_over
    if args.n_samples is not None:
        overrides["data"] = {"n_samples": args.n_samples}
    if getattr(args, "data", None):
        overrides.setdefault("data", {})["data_dir"] = args.data
    if getattr(args, "manifest", None):
        overrides.setdefault("data", {})["manifest"] = args.manifest
    return load_run_config(args.config, args.preset, overrides)


# -- helpers ---------------------------------------------------------------------
def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_splits(cfg: RunConfig) -> dict[str, FeatureSet]:
    """Feature sets per split from a manifest, a sample root, or the synthetic generator."""
    if cfg.data.manifest or cfg.data.data_dir:
        manifest = (SampleManifest.load(cfg.data.manifest) if cfg.data.manifest
                    else build_manifest(cfg.data.data_dir, cfg.data.split_ratio, cfg.seed))
        for r in manifest.rejects:
            print(f"rejected {r['path']}: {r['reason']}", file=sys.stderr)
        return {s: prepare_features(load_entries(manifest.split(s)), cfg.model, cfg.seed)
                for s in SPLITS if manifest.split(s)}
    samples = generate_dataset(cfg.data.n_samples, cfg.seed)
    features = prepare_features(samples, cfg.model, cfg.seed)
    parts = stratified_split(features.labels, cfg.data.split_ratio, cfg.seed)
    return {s: features.subset(parts[s]) for s in SPLITS if parts[s].size}


def save_model(path: Path, model: AVDetector, cfg: RunConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(path, list(model.state_dict().items()),
                    {"model": model.config.to_dict(), "seed": cfg.seed})


def load_model(path) -> AVDetector:
    arrays, meta = load_checkpoint(path)
    model = AVDetector(ModelConfig.from_dict(meta["model"]), seed=int(meta.get("seed", 0)))
    model.load_state_dict(dict(arrays))
    return model


def _evaluate(model: AVDetector, data: FeatureSet) -> dict:
    try:
        return evaluate(model, data)
    except AUCUndefinedError as exc:
        return dict(exc.metrics or {}, auc=None)


def _metrics(model: AVDetector, data: FeatureSet) -> dict:
    out = _evaluate(model, data)
    if "audio_only" in data.forgery:
        out["audio_forged"] = _evaluate(model, audio_forged_subset(data))
    return out


def _fusion_weights(model: AVDetector, data: FeatureSet):
    if model.config.fusion_mode != "av_dwf":
        return None
    with no_grad():
        pred = model.forward(Tensor(data.frames), Tensor(data.audio))
    return pred.fusion.layers


# -- subcommands -----------------------------------------------------------------
def cmd_gen(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    samples = generate_dataset(cfg.data.n_samples, cfg.seed)
    for s in samples:
        write_sample_dir(out / "samples" / s.sample_id, s.face_block, s.audio, s.label,
                         s.forgery_type, packed=not args.png)
    manifest = build_manifest(out / "samples", cfg.data.split_ratio, cfg.seed)
    manifest.save(out / "manifest.jsonl")
    _write(out / "stats.json", _json(manifest.stats()))
    print(_json({"samples": len(manifest), "rejects": len(manifest.rejects),
                 "stats": manifest.stats()}), end="")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    data = load_splits(cfg)
    model_cfg = replace(cfg.model, fusion_mode=cfg.train.fusion_mode,
                        tokenizer_mode=cfg.train.tokenizer_mode, weight_mode=cfg.train.weight_mode)
    model = AVDetector(model_cfg, seed=cfg.seed)
    result = train(model, data["train"], cfg.train, val=data.get("val"))
    save_model(out / "model.ckpt", model, cfg)
    _write(out / "config.json", _json(cfg.to_dict()))
    _write(out / "history.csv", result.history_csv())
    metrics = {"final_train_loss": result.final_loss, "steps": result.steps}
    if "test" in data:
        metrics["test"] = _metrics(model, data["test"])
        layers = _fusion_weights(model, data["test"])
        if layers is not None:
            _write(out / "weights.csv", weights_csv(layers))
    _write(out / "metrics.json", _json(metrics))
    print(_json(metrics), end="")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    model = load_model(args.checkpoint)
    cfg.model = model.config
    data = load_splits(cfg)
    if args.split not in data:
        print(f"split {args.split!r} is empty", file=sys.stderr)
        return 2
    metrics = _metrics(model, data[args.split])
    if args.out:
        _write(Path(args.out) / "metrics.json", _json(metrics))
    print(_json(metrics), end="")
    return 0


def cmd_infer(cfg: RunConfig, args) -> int:
    if args.checkpoint:
        model = load_model(args.checkpoint)
        if args.weight_mode:
            model.config.weight_mode = args.weight_mode
    else:
        model = AVDetector(replace(cfg.model, fusion_mode=cfg.train.fusion_mode,
                                   weight_mode=cfg.train.weight_mode), seed=cfg.seed)
    sample = load_sample_dir(args.sample)
    feats = prepare_features([sample], replace(model.config, tokenizer_mode=cfg.train.tokenizer_mode),
                             cfg.seed)
    with no_grad():
        pred = model.forward(Tensor(feats.frames[0]), Tensor(feats.audio[0]))
    report = {"sample": sample.sample_id, "p_fake": float(pred.prob.data), "layers": []}
    print(f"P(fake) = {report['p_fake']:.6f}")
    if pred.fusion is not None:
        for i, w in enumerate(pred.fusion.layers, start=1):
            wf, wa = float(w.wf.data), float(w.wa.data)
            report["layers"].append({"layer": i, "W_F": wf, "W_A": wa,
                                     "heads_W_F": w.head_wf.data.tolist(),
                                     "heads_W_A": w.head_wa.data.tolist()})
            print(f"layer {i}: W_F = {wf:.6f}  W_A = {wa:.6f}")
    if args.out:
        _write(Path(args.out) / "infer.json", _json(report))
    return 0


def cmd_balance(cfg: RunConfig, args) -> int:
    try:
        target = tuple(float(x) for x in args.target.split(":"))
    except ValueError:
        target = ()
    if len(target) != 2:
        print(f"--target must look like REAL:FAKE, got {args.target!r}", file=sys.stderr)
        return 2
    try:
        out, report = balance(SampleManifest.load(args.manifest_in), target, args.strategy,
                              seed=cfg.seed)
    except BalanceError as exc:
        print(f"cannot balance: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out.save(out_dir / "manifest.jsonl")
    _write(out_dir / "balance.txt", report.table() + "\n")
    print(report.table())
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    results = run_gradient_suite(seed=cfg.seed, points=args.points)
    for r in results:
        print(r)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def cmd_ablate(cfg: RunConfig, args) -> int:
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        print(f"--seeds must be comma-separated integers, got {args.seeds!r}", file=sys.stderr)
        return 2
    spec = ExperimentSpec(n_samples=cfg.data.n_samples, epochs=cfg.train.epochs, lr=cfg.train.lr,
                          batch_size=cfg.train.batch_size, weight_mode=cfg.train.weight_mode,
                          split_ratio=cfg.data.split_ratio, model=cfg.model)

    def progress(run):
        row = run.row()
        print(f"seed {row['seed']} {row['fusion_mode']:<11} {row['tokenizer_mode']:<5} "
              f"acc {row['acc']:.3f} auc {row['auc']:.3f} "
              f"audio-forged auc {row['audio_forged_auc']:.3f}", flush=True)

    runs = run_ablation(seeds, spec=spec, progress=progress)
    out = Path(cfg.out_dir)
    _write(out / "ablation.csv", ablation_csv(runs))
    summary = {f"{fm}/{tok}": {"median_auc": auc,
                               "median_audio_forged_auc": median_by(runs, "audio_forged_auc")[(fm, tok)],
                               "median_acc": median_by(runs, "acc")[(fm, tok)]}
               for (fm, tok), auc in median_by(runs).items()}
    _write(out / "summary.json", _json(summary))
    print(_json(summary), end="")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer, "balance": cmd_balance,
            "gradcheck": cmd_gradcheck, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = run_config_from(args)
    except ValueError as exc:
        parser.error(str(exc))
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
