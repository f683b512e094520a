"""Unified command-line entry point.

Exit codes: 0 success, 1 domain/data errors, 2 usage errors (argparse).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .distort import (DistortionSpec, build_manifest, load_manifest,
                      save_manifest)
from .errors import SplatQAError
from .losses import LossConfig
from .metrics import all_metrics, fit_logistic
from .network import ModelHyper, QualityModel, load_checkpoint, save_checkpoint
from .ply_io import read_ply, write_ply
from .regions import RegionParams, extract_regions, save_regions
from .rng import make_rng
from .subjective import (compute_mos, export_manifest_mos, load_ratings_csv,
                         save_mos_csv, screen_participants)
from .train import (EvalReport, TrainConfig, load_or_extract_regions,
                    make_folds, run_benchmark, summarize_predictions,
                    train_fold)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatqa",
        description="No-reference perceptual quality assessment for 3D Gaussian Splatting models.",
    )
    parser.add_argument("--version", action="version",
                        version=f"splatqa {__version__} (python {sys.version.split()[0]}, numpy {np.__version__})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distort", help="apply one synthesis distortion to a PLY model")
    p.add_argument("--in", dest="input", required=True, help="input PLY path")
    p.add_argument("--kind", required=True,
                   choices=["downsample", "spatial_noise", "color_noise"])
    p.add_argument("--level", type=float, required=True,
                   help="fraction for downsample, sigma for spatial noise, delta for color noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output PLY path")
    p.add_argument("--encoding", choices=["binary-LE", "ascii"], default="binary-LE")

    p = sub.add_parser("dataset", help="dataset construction commands")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    b = dsub.add_parser("build", help="expand base models over the default distortion grid")
    b.add_argument("--bases", required=True, help="directory of base PLY models")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--manifest", default=None,
                   help="manifest path (default: <out>/manifest.json)")

    p = sub.add_parser("preprocess", help="extract a region batch from a PLY model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--p-pre", type=int, default=8192)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output region container (.rgn)")

    p = sub.add_parser("train", help="train fold models from a manifest with MOS")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", default="all", help="fold index or 'all'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for checkpoints")
    p.add_argument("--regions", default=None, help="region cache dir (default <out>/regions)")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--lambda-lin", type=float, default=0.5)
    p.add_argument("--lambda-mon", type=float, default=0.5)
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--kg", type=int, default=8)
    p.add_argument("--p-pre", type=int, default=8192)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--log", default=None, help="line-delimited JSON training log path")

    p = sub.add_parser("predict", help="predict the quality score of one PLY model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--float32", action="store_true", help="use the float32 inference path")

    p = sub.add_parser("evaluate", help="evaluate fold checkpoints on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpts", required=True, help="directory containing fold<i>.ckpt")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.add_argument("--regions", default=None, help="region cache dir (default <ckpts>/regions)")
    p.add_argument("--per-fold-average", action="store_true",
                   help="average per-fold metrics instead of pooling predictions")

    p = sub.add_parser("metrics", help="PLCC/SRCC/KRCC/RMSE between two score CSVs")
    p.add_argument("--pred", required=True, help="CSV with one prediction per line")
    p.add_argument("--target", required=True, help="CSV with one target per line")
    p.add_argument("--logistic-map", action="store_true",
                   help="fit a monotone 4-parameter logistic before PLCC/RMSE")

    p = sub.add_parser("mos", help="screen ratings and compute mean opinion scores")
    p.add_argument("--ratings", required=True, help="ratings CSV")
    p.add_argument("--out", required=True, help="output MOS CSV")
    p.add_argument("--manifest", default=None, help="optional manifest to annotate")
    p.add_argument("--manifest-out", default=None, help="annotated manifest output path")

    p = sub.add_parser("serve", help="host rating sessions over HTTP")
    p.add_argument("--stimuli", required=True, help="directory containing stimulus videos")
    p.add_argument("--index", required=True, help="stimulus index JSON")
    p.add_argument("--ratings", required=True, help="append-only ratings CSV path")
    p.add_argument("--sessions", default=None, help="session journal (default <ratings>.sessions.jsonl)")
    p.add_argument("--port", type=int, default=int(os.environ.get("SPLATQA_PORT", "8750")))
    p.add_argument("--host", default="127.0.0.1")
    return parser


def _load_score_csv(path: str) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            token = line.strip().split(",")[0]
            if not token:
                continue
            try:
                values.append(float(token))
            except ValueError:
                continue  # header line
    return np.array(values)


def _cmd_distort(args) -> int:
    cloud = read_ply(args.input)
    spec = DistortionSpec(kind=args.kind, level_param=args.level, seed=args.seed)
    from .distort import apply_distortion

    write_ply(apply_distortion(cloud, spec), args.out, encoding=args.encoding)
    print(json.dumps({"out": args.out, "kind": args.kind,
                      "level": args.level, "splats": None}))
    return 0


def _cmd_dataset_build(args) -> int:
    names = sorted(f for f in os.listdir(args.bases) if f.endswith(".ply"))
    if not names:
        raise SplatQAError(f"no .ply files in {args.bases}")
    bases = []
    for fname in names:
        path = os.path.join(args.bases, fname)
        bases.append((os.path.splitext(fname)[0], read_ply(path), path))
    manifest = build_manifest(bases, args.out, seed=args.seed)
    manifest_path = args.manifest or os.path.join(args.out, "manifest.json")
    save_manifest(manifest, manifest_path)
    print(json.dumps({"manifest": manifest_path, "entries": len(manifest.entries),
                      "executable": len(manifest.executable_entries())}))
    return 0


def _cmd_preprocess(args) -> int:
    cloud = read_ply(args.input)
    params = RegionParams(p_pre=args.p_pre, n_regions=args.n, k_neighbors=args.k, seed=args.seed)
    batch = extract_regions(cloud, params)
    save_regions(batch, args.out)
    print(json.dumps({"out": args.out, "n": batch.n_regions, "k": batch.k_neighbors}))
    return 0


def _train_configs(args) -> tuple[TrainConfig, LossConfig, ModelHyper, RegionParams]:
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, peak_lr=args.lr,
                      weight_decay=args.weight_decay, seed=args.seed)
    loss_cfg = LossConfig(lambda_lin=args.lambda_lin, lambda_mon=args.lambda_mon)
    hyper = ModelHyper(d=args.d, heads=args.heads, k_g=args.kg)
    region_params = RegionParams(p_pre=args.p_pre, n_regions=args.n,
                                 k_neighbors=args.k, seed=args.seed)
    return cfg, loss_cfg, hyper, region_params


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg, loss_cfg, hyper, region_params = _train_configs(args)
    os.makedirs(args.out, exist_ok=True)
    cache_dir = args.regions or os.path.join(args.out, "regions")
    regions = load_or_extract_regions(manifest, cache_dir, region_params)
    stimuli = [e for e in manifest.executable_entries()]
    missing = [e.entry_id for e in stimuli if e.mos is None]
    if missing:
        raise SplatQAError(f"missing MOS for stimuli: {', '.join(sorted(missing))}")
    mos = {e.entry_id: float(e.mos) for e in stimuli}
    plan = make_folds(manifest.base_names(), cfg.seed,
                      entries=[(e.entry_id, e.base) for e in stimuli])
    folds = range(plan.n_folds) if args.fold == "all" else [int(args.fold)]
    log_lines = []
    from dataclasses import replace

    for f in folds:
        fold_cfg = replace(cfg, seed=int(np.random.SeedSequence(
            entropy=int(cfg.seed), spawn_key=(1000 + f,)).generate_state(1, np.uint64)[0]))
        train_set = [(regions[i], mos[i]) for i in plan.train_ids[f]]
        params, log = train_fold(train_set, fold_cfg, loss_cfg, hyper=hyper)
        ckpt = os.path.join(args.out, f"fold{f}.ckpt")
        save_checkpoint(params, ckpt, sidecar={
            "fold_index": f, "seed": cfg.seed,
            "preprocess": asdict(region_params),
            "train": asdict(cfg), "loss": asdict(loss_cfg),
        })
        for entry in log:
            log_lines.append(json.dumps({"fold": f, **entry}))
        print(json.dumps({"fold": f, "ckpt": ckpt, "final": log[-1]}))
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")
    return 0


def _cmd_predict(args) -> int:
    params, sidecar = load_checkpoint(args.ckpt)
    pre = sidecar.get("preprocess", {})
    region_params = RegionParams(
        p_pre=int(pre.get("p_pre", 8192)), n_regions=int(pre.get("n_regions", 64)),
        k_neighbors=int(pre.get("k_neighbors", 32)), seed=int(pre.get("seed", 0)),
    )
    cloud = read_ply(args.input)
    batch = extract_regions(cloud, region_params)
    score = QualityModel(params).predict(batch, float32=args.float32)
    print(json.dumps({"score": score}))
    return 0


def _cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    ckpts = sorted(f for f in os.listdir(args.ckpts)
                   if f.startswith("fold") and f.endswith(".ckpt"))
    if not ckpts:
        raise SplatQAError(f"no fold checkpoints in {args.ckpts}")
    first_params, first_side = load_checkpoint(os.path.join(args.ckpts, ckpts[0]))
    seed = int(first_side.get("seed", 0))
    pre = first_side.get("preprocess", {})
    region_params = RegionParams(
        p_pre=int(pre.get("p_pre", 8192)), n_regions=int(pre.get("n_regions", 64)),
        k_neighbors=int(pre.get("k_neighbors", 32)), seed=int(pre.get("seed", 0)),
    )
    cache_dir = args.regions or os.path.join(args.ckpts, "regions")
    regions = load_or_extract_regions(manifest, cache_dir, region_params)
    stimuli = manifest.executable_entries()
    missing = [e.entry_id for e in stimuli if e.mos is None]
    if missing:
        raise SplatQAError(f"missing MOS for stimuli: {', '.join(sorted(missing))}")
    mos = {e.entry_id: float(e.mos) for e in stimuli}
    kinds = {e.entry_id: e.spec.kind for e in stimuli}
    plan = make_folds(manifest.base_names(), seed,
                      entries=[(e.entry_id, e.base) for e in stimuli])

    predictions: dict[str, float] = {}
    for fname in ckpts:
        params, side = load_checkpoint(os.path.join(args.ckpts, fname))
        f = int(side.get("fold_index", int(fname[4:-5])))
        model = QualityModel(params)
        for sid in plan.test_ids[f]:
            predictions[sid] = model.predict(regions[sid])

    mode = "fold-averaged" if args.per_fold_average else "fold-pooled"
    covered = [list(plan.test_ids[i]) for i in range(plan.n_folds)
               if all(sid in predictions for sid in plan.test_ids[i])]
    overall, per_type, per_fold = summarize_predictions(
        predictions, {k: mos[k] for k in predictions},
        kinds, fold_test_ids=covered, mode=mode)
    report = EvalReport(overall=overall, per_type=per_type, per_fold=per_fold,
                        n_stimuli=len(predictions), mode=mode,
                        config={"seed": seed, "preprocess": asdict(region_params)},
                        predictions=predictions)
    with open(args.report, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    print(report.format_table())
    return 0


def _cmd_metrics(args) -> int:
    pred = _load_score_csv(args.pred)
    target = _load_score_csv(args.target)
    used = pred
    if args.logistic_map:
        used = fit_logistic(pred, target)
    out = all_metrics(used, target)
    out["logistic_map"] = bool(args.logistic_map)
    print(json.dumps(out))
    return 0


def _cmd_mos(args) -> int:
    table = load_ratings_csv(args.ratings)
    screened = screen_participants(table)
    mos = compute_mos(screened)
    save_mos_csv(mos, args.out)
    result = {"out": args.out, "stimuli": len(mos.mos),
              "excluded_participants": sorted(screened.excluded)}
    if args.manifest:
        manifest = load_manifest(args.manifest)
        annotated = export_manifest_mos(mos, manifest)
        out_path = args.manifest_out or args.manifest
        save_manifest(annotated, out_path)
        result["manifest_out"] = out_path
    print(json.dumps(result))
    return 0


def _cmd_serve(args) -> int:
    from .service import ServiceConfig, run_server

    config = ServiceConfig(
        index_path=args.index,
        stimuli_dir=args.stimuli,
        ratings_csv=args.ratings,
        sessions_log=args.sessions or args.ratings + ".sessions.jsonl",
    )
    run_server(config, port=args.port, host=args.host)
    return 0


_HANDLERS = {
    "distort": _cmd_distort,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "metrics": _cmd_metrics,
    "mos": _cmd_mos,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "dataset":
            return _cmd_dataset_build(args)
        return _HANDLERS[args.command](args)
    except SplatQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
