"""Video demoireing toolkit: frequency-selective restoration network,
synthetic data, losses, metrics, and a training/evaluation CLI."""

from .errors import (
    CheckpointMismatchError,
    ConfigurationError,
    DemoireError,
    IngestionError,
    InvalidInputError,
    ShapeError,
    TrainingDivergedError,
)
from .frequency import Spectrum, decompose, polar_to_spatial, recompose, swap_components
from .blocks import (
    CrossScaleFusionModule,
    FrequencySelectionModule,
    FrequencySpatialFusionBlock,
    SimpleFeatureExtractionBlock,
)
from .alignment import DeformableConv2d, OffsetPredictor, PostAlignModule, deform_conv2d
from .model import (
    ModelConfig,
    VideoDemoireNet,
    load_model,
    parameter_census,
    save_model,
)
from .losses import LossWeights, frequency_loss, perceptual_loss, spatial_loss, total_loss
from .metrics import (
    MetricsReport,
    color_histogram_correlation,
    fsim,
    fvd,
    lpips,
    psnr,
    ssim,
    y_psnr,
)
from .backbones import FrozenFeatureExtractor, RandomVideoEmbedder, load_feature_extractor
from .data import (
    DatasetSpec,
    FrameTriplet,
    MoireParams,
    TripletDataset,
    load_dataset,
    make_synthetic_benchmark,
    moire_pattern,
    synthesize_moire,
)
from .training import (
    TrainConfig,
    TrainResult,
    ablate,
    ablation_config,
    config_fingerprint,
    demo_swap,
    evaluate,
    evaluate_checkpoint,
    train,
    warm_restart_lr,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointMismatchError", "ConfigurationError", "DemoireError",
    "IngestionError", "InvalidInputError", "ShapeError", "TrainingDivergedError",
    "Spectrum", "decompose", "polar_to_spatial", "recompose", "swap_components",
    "CrossScaleFusionModule", "FrequencySelectionModule",
    "FrequencySpatialFusionBlock", "SimpleFeatureExtractionBlock",
    "DeformableConv2d", "OffsetPredictor", "PostAlignModule", "deform_conv2d",
    "ModelConfig", "VideoDemoireNet", "load_model", "parameter_census", "save_model",
    "LossWeights", "frequency_loss", "perceptual_loss", "spatial_loss", "total_loss",
    "MetricsReport", "color_histogram_correlation", "fsim", "fvd", "lpips",
    "psnr", "ssim", "y_psnr",
    "FrozenFeatureExtractor", "RandomVideoEmbedder", "load_feature_extractor",
    "DatasetSpec", "FrameTriplet", "MoireParams", "TripletDataset",
    "load_dataset", "make_synthetic_benchmark", "moire_pattern", "synthesize_moire",
    "TrainConfig", "TrainResult", "ablate", "ablation_config", "config_fingerprint",
    "demo_swap", "evaluate", "evaluate_checkpoint", "train", "warm_restart_lr",
]
