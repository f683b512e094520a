"""Training loop, five-fold benchmark protocol, and evaluation reports."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import stack
from .distort import EXECUTABLE_KINDS, DatasetManifest
from .errors import DataError, DomainError, UndefinedMetricError
from .losses import LossConfig, loss_total
from .metrics import all_metrics, plcc, srcc
from .network import ModelHyper, ModelParams, QualityModel, init_params, save_checkpoint
from .optim import AdamW, OneCycleSchedule
from .ply_io import read_ply
from .regions import RegionBatch, RegionParams, extract_regions, load_regions, save_regions

#: report blocks mirroring the four distortion families
DISTORTION_GROUPS: dict[str, tuple[str, ...]] = {
    "reconstruction": ("reduced_viewports", "limited_training"),
    "downsampling": ("downsample",),
    "gaussian_noise": ("spatial_noise",),
    "color_noise": ("color_noise",),
}

METRIC_NAMES = ("plcc", "srcc", "krcc", "rmse")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    peak_lr: float = 1e-4
    weight_decay: float = 1e-4
    warmup_frac: float = 0.3
    div_factor: float = 25.0
    seed: int = 0
    # optional early-stop thresholds on train-set correlation
    stop_plcc: float | None = None
    stop_srcc: float | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise DomainError(f"batch size must be >= 2 for pairwise losses, got {self.batch_size}")
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class FoldPlan:
    fold_bases: list[list[str]]
    train_ids: list[list[str]] = field(default_factory=list)
    test_ids: list[list[str]] = field(default_factory=list)

    @property
    def n_folds(self) -> int:
        return len(self.fold_bases)


def make_folds(base_names: list[str], seed: int,
               entries: list[tuple[str, str]] | None = None) -> FoldPlan:
    """Seeded partition of the bases into 5 disjoint groups.

    ``entries`` is an optional list of (stimulus_id, base_name); when given,
    per-fold train/test stimulus lists are filled in (test = the fold's
    bases' variants, train = everything else).
    """
    names = list(base_names)
    if len(names) == 0 or len(names) % 5 != 0:
        raise DomainError(f"base count must be a positive multiple of 5, got {len(names)}")
    if len(set(names)) != len(names):
        raise DomainError("base names must be unique")
    from .rng import make_rng

    order = make_rng(seed).permutation(len(names))
    group = len(names) // 5
    fold_bases = [[names[order[f * group + j]] for j in range(group)] for f in range(5)]
    plan = FoldPlan(fold_bases=fold_bases)
    if entries is not None:
        for bases in fold_bases:
            base_set = set(bases)
            plan.test_ids.append([sid for sid, b in entries if b in base_set])
            plan.train_ids.append([sid for sid, b in entries if b not in base_set])
    return plan


def train_fold(
    train_set: list[tuple[RegionBatch, float]],
    cfg: TrainConfig,
    loss_cfg: LossConfig = LossConfig(),
    hyper: ModelHyper | None = None,
    params: ModelParams | None = None,
) -> tuple[ModelParams, list[dict]]:
    """Train on (regions, MOS) pairs; returns final params and per-epoch log.

    Per-epoch shuffling is seeded; an epoch's final batch is dropped when it
    has fewer than 2 samples. The log records loss, train PLCC/SRCC, and the
    step size at each epoch's last update.
    """
    if not train_set:
        raise DomainError("training set is empty")
    if len(train_set) < 2:
        raise DomainError("training needs at least 2 stimuli for the pairwise losses")
    if params is None:
        params = init_params(hyper or ModelHyper(), seed=cfg.seed)
    model = QualityModel(params)

    n = len(train_set)
    b = cfg.batch_size
    starts = list(range(0, n, b))
    batch_sizes = [min(b, n - s) for s in starts]
    batch_sizes = [size for size in batch_sizes if size >= 2]
    if not batch_sizes:
        raise DomainError("no batch of size >= 2 can be formed")
    steps_per_epoch = len(batch_sizes)
    schedule = OneCycleSchedule(cfg.peak_lr, cfg.epochs * steps_per_epoch,
                                warmup_frac=cfg.warmup_frac, div_factor=cfg.div_factor)
    opt = AdamW(params, lr=schedule.lr_at(0), weight_decay=cfg.weight_decay)

    from .rng import make_rng

    shuffle_rng = make_rng(cfg.seed, 1)
    targets = np.array([mos for _, mos in train_set], dtype=np.float64)
    log: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        # predictions collected as the epoch runs; cheap but one step stale
        seen_preds = np.full(n, np.nan)
        for s in range(0, n, b):
            chunk = order[s:s + b]
            if len(chunk) < 2:
                continue
            preds = stack([model.score_tensor(train_set[i][0])[0] for i in chunk])
            seen_preds[chunk] = preds.data
            loss = loss_total(preds, targets[chunk], loss_cfg)
            params.zero_grad()
            loss.backward()
            opt.lr = schedule.lr_at(step)
            opt.step()
            step += 1
            epoch_losses.append(float(loss.data))

        seen = ~np.isnan(seen_preds)
        try:
            ep_plcc = plcc(seen_preds[seen], targets[seen])
            ep_srcc = srcc(seen_preds[seen], targets[seen])
        except (UndefinedMetricError, DomainError):
            ep_plcc = ep_srcc = None
        entry = {
            "epoch": epoch,
            "loss": float(np.mean(epoch_losses)),
            "train_plcc": ep_plcc,
            "train_srcc": ep_srcc,
            "lr": opt.lr,
        }
        log.append(entry)
        if (cfg.stop_plcc is not None and cfg.stop_srcc is not None
                and ep_plcc is not None and ep_srcc is not None
                and ep_plcc >= cfg.stop_plcc and ep_srcc >= cfg.stop_srcc):
            # confirm with fresh predictions before stopping early
            fresh = np.array([model.predict(batch) for batch, _ in train_set])
            try:
                fresh_plcc = plcc(fresh, targets)
                fresh_srcc = srcc(fresh, targets)
            except UndefinedMetricError:
                continue
            if fresh_plcc >= cfg.stop_plcc and fresh_srcc >= cfg.stop_srcc:
                entry["early_stop"] = True
                entry["train_plcc"] = fresh_plcc
                entry["train_srcc"] = fresh_srcc
                break
    return params, log


@dataclass
class EvalReport:
    overall: dict[str, float | None]
    per_type: dict[str, dict]
    per_fold: list[dict]
    n_stimuli: int
    mode: str
    config: dict
    predictions: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "schema": "splatqa.eval_report.v1",
            "mode": self.mode,
            "n_stimuli": self.n_stimuli,
            "overall": self.overall,
            "per_type": self.per_type,
            "per_fold": self.per_fold,
            "config": self.config,
            "predictions": self.predictions,
        }

    def format_table(self) -> str:
        cols = ["overall"] + list(DISTORTION_GROUPS)
        width = max(len(c) for c in cols) + 2
        lines = ["".ljust(8) + "".join(c.rjust(width) for c in cols)]
        for metric in METRIC_NAMES:
            cells = []
            for col in cols:
                block = self.overall if col == "overall" else self.per_type[col]
                value = block.get(metric)
                cells.append(("-" if value is None else f"{value:.4f}").rjust(width))
            lines.append(metric.upper().ljust(8) + "".join(cells))
        return "\n".join(lines)


def _safe_metrics(preds: np.ndarray, targets: np.ndarray) -> dict[str, float | None]:
    if len(preds) < 2:
        return {m: None for m in METRIC_NAMES}
    try:
        return dict(all_metrics(preds, targets))
    except UndefinedMetricError:
        out: dict[str, float | None] = {}
        for name in METRIC_NAMES:
            try:
                from . import metrics as _metrics

                out[name] = getattr(_metrics, name)(preds, targets)
            except UndefinedMetricError:
                out[name] = None
        return out


def summarize_predictions(
    predictions: dict[str, float],
    mos: dict[str, float],
    kinds: dict[str, str],
    fold_test_ids: list[list[str]] | None = None,
    mode: str = "fold-pooled",
) -> tuple[dict, dict, list[dict]]:
    """Overall + per-distortion-type metric blocks from pooled predictions.

    ``mode`` 'fold-averaged' computes each metric per fold and averages, as
    an alternative reading of the protocol; pooling is the default.
    """
    ids = sorted(predictions)
    preds = np.array([predictions[i] for i in ids])
    targets = np.array([mos[i] for i in ids])

    per_fold: list[dict] = []
    if fold_test_ids:
        for f, test_ids in enumerate(fold_test_ids):
            fp = np.array([predictions[i] for i in test_ids])
            ft = np.array([mos[i] for i in test_ids])
            per_fold.append({"fold": f, "n": len(test_ids), **_safe_metrics(fp, ft)})

    if mode == "fold-averaged" and per_fold:
        overall: dict[str, float | None] = {}
        for m in METRIC_NAMES:
            vals = [e[m] for e in per_fold if e[m] is not None]
            overall[m] = float(np.mean(vals)) if vals else None
    elif mode == "fold-pooled" or not per_fold:
        overall = _safe_metrics(preds, targets)
    else:
        raise DomainError(f"unknown summary mode {mode!r}")

    per_type: dict[str, dict] = {}
    for group, group_kinds in DISTORTION_GROUPS.items():
        sel = [i for i in ids if kinds[i] in group_kinds]
        gp = np.array([predictions[i] for i in sel])
        gt = np.array([mos[i] for i in sel])
        per_type[group] = {"n": len(sel), **_safe_metrics(gp, gt)}
    return overall, per_type, per_fold


def region_cache_path(cache_dir: str, entry_id: str) -> str:
    return os.path.join(cache_dir, f"{entry_id}.rgn")


def load_or_extract_regions(manifest: DatasetManifest, cache_dir: str,
                            region_params: RegionParams) -> dict[str, RegionBatch]:
    """RegionBatch per executable entry, cached on disk.

    Per-entry region seeds derive from (region_params.seed, entry stream) so
    the cache is reproducible regardless of computation order.
    """
    os.makedirs(cache_dir, exist_ok=True)
    out: dict[str, RegionBatch] = {}
    for entry in manifest.executable_entries():
        path = region_cache_path(cache_dir, entry.entry_id)
        if os.path.exists(path):
            out[entry.entry_id] = load_regions(path)
            continue
        child_seed = int(np.random.SeedSequence(
            entropy=int(region_params.seed), spawn_key=(entry.stream,)
        ).generate_state(1, np.uint64)[0])
        params = RegionParams(
            p_pre=region_params.p_pre, n_regions=region_params.n_regions,
            k_neighbors=region_params.k_neighbors, seed=child_seed,
            standardize=region_params.standardize,
        )
        batch = extract_regions(read_ply(entry.output), params)
        save_regions(batch, path)
        out[entry.entry_id] = batch
    return out


def run_benchmark(
    manifest: DatasetManifest,
    work_dir: str,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig = LossConfig(),
    hyper: ModelHyper | None = None,
    region_params: RegionParams | None = None,
    mode: str = "fold-pooled",
    save_checkpoints: bool = False,
) -> EvalReport:
    """Five-fold cross-validated evaluation over a manifest with MOS.

    Trains one model per fold on that fold's train stimuli, predicts its
    held-out stimuli, pools all held-out predictions, and reports
    PLCC/SRCC/KRCC/RMSE overall and per distortion family.
    """
    hyper = hyper or ModelHyper()
    region_params = region_params or RegionParams()
    stimuli = manifest.executable_entries()
    if not stimuli:
        raise DataError("manifest has no executable stimuli to evaluate")
    missing = [e.entry_id for e in stimuli if e.mos is None]
    if missing:
        raise DataError(f"missing MOS for stimuli: {', '.join(sorted(missing))}")

    regions = load_or_extract_regions(manifest, os.path.join(work_dir, "regions"), region_params)
    mos = {e.entry_id: float(e.mos) for e in stimuli}
    kinds = {e.entry_id: e.spec.kind for e in stimuli}
    plan = make_folds(manifest.base_names(), train_cfg.seed,
                      entries=[(e.entry_id, e.base) for e in stimuli])

    predictions: dict[str, float] = {}
    from dataclasses import replace

    for f in range(plan.n_folds):
        fold_cfg = replace(train_cfg, seed=int(np.random.SeedSequence(
            entropy=int(train_cfg.seed), spawn_key=(1000 + f,)).generate_state(1, np.uint64)[0]))
        train_set = [(regions[i], mos[i]) for i in plan.train_ids[f]]
        params, _ = train_fold(train_set, fold_cfg, loss_cfg, hyper=hyper)
        model = QualityModel(params)
        for sid in plan.test_ids[f]:
            if sid in predictions:
                raise DataError(f"stimulus {sid} predicted twice across folds")
            predictions[sid] = model.predict(regions[sid])
        if save_checkpoints:
            os.makedirs(os.path.join(work_dir, "ckpts"), exist_ok=True)
            save_checkpoint(params, os.path.join(work_dir, "ckpts", f"fold{f}.ckpt"), sidecar={
                "fold_index": f,
                "seed": train_cfg.seed,
                "preprocess": asdict(region_params),
                "train": asdict(train_cfg),
                "loss": asdict(loss_cfg),
            })

    if set(predictions) != set(mos):
        raise DataError("fold predictions do not cover every stimulus exactly once")

    overall, per_type, per_fold = summarize_predictions(
        predictions, mos, kinds, fold_test_ids=plan.test_ids, mode=mode)
    return EvalReport(
        overall=overall, per_type=per_type, per_fold=per_fold,
        n_stimuli=len(stimuli), mode=mode,
        config={
            "hyper": asdict(hyper), "train": asdict(train_cfg),
            "loss": asdict(loss_cfg), "preprocess": asdict(region_params),
        },
        predictions=predictions,
    )
