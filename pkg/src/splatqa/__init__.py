"""splatqa: no-reference perceptual quality assessment for 3D Gaussian Splatting.

The toolkit covers the full pipeline: PLY I/O for native splat models,
controlled distortion synthesis, region preprocessing, a differentiable
quality-prediction network with exact gradients, correlation losses and a
five-fold benchmark harness, rank-correlation metrics, and the
subjective-study MOS pipeline with its HTTP rating service.
"""

__version__ = "0.1.0"

from .distort import (DatasetManifest, DistortionSpec, build_manifest,
                      downsample_poisson, load_manifest, perturb_positions,
                      perturb_sh, save_manifest)
from .losses import LossConfig, loss_lin, loss_mon, loss_total
from .metrics import all_metrics, krcc, plcc, rmse, srcc
from .network import ModelHyper, QualityModel, init_params, load_checkpoint, save_checkpoint
from .ply_io import read_ply, write_ply
from .regions import (RegionBatch, RegionParams, assemble_embeddings,
                      extract_regions, fps, grouping_space, knn_regions,
                      load_regions, pre_downsample, save_regions)
from .splats import GaussianCloud, GaussianSplat, bounding_volume
from .subjective import (MosTable, RatingTable, compute_mos,
                         export_manifest_mos, screen_participants)
from .train import (EvalReport, FoldPlan, TrainConfig, make_folds,
                    run_benchmark, train_fold)

__all__ = [
    "__version__",
    "GaussianCloud", "GaussianSplat", "bounding_volume",
    "read_ply", "write_ply",
    "DistortionSpec", "DatasetManifest", "downsample_poisson",
    "perturb_positions", "perturb_sh", "build_manifest", "save_manifest", "load_manifest",
    "RegionBatch", "RegionParams", "pre_downsample", "grouping_space", "fps",
    "knn_regions", "assemble_embeddings", "extract_regions", "save_regions", "load_regions",
    "ModelHyper", "QualityModel", "init_params", "save_checkpoint", "load_checkpoint",
    "LossConfig", "loss_lin", "loss_mon", "loss_total",
    "plcc", "srcc", "krcc", "rmse", "all_metrics",
    "TrainConfig", "FoldPlan", "make_folds", "train_fold", "run_benchmark", "EvalReport",
    "RatingTable", "MosTable", "screen_participants", "compute_mos", "export_manifest_mos",
]
