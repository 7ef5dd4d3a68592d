"""Color-name descriptors and cross-view subspace learning for re-id.

The pipeline: load raster images and foreground masks, soft-map pixels
onto a 16-entry color-name palette under a fitted discrepancy Gaussian,
pool and stripe the resulting maps into an image representation, learn
a coupled cross-view subspace from matched pairs, and score/evaluate
with CMC curves.  See the demos/ scripts for guided tours.
"""

from .ccl import (
    CclModel,
    CoupledStats,
    PairedSample,
    accumulate_stats,
    load_models,
    project,
    save_models,
    score,
    score_matrix,
    solve_subspace,
)
from .descriptor import (
    ExtractionConfig,
    ImageRepresentation,
    LayoutRecord,
    build_maps,
    export_csv,
    extract_color_histogram,
    extract_features,
    extract_sgm,
    extract_siltp,
    fuse,
    load_descriptors,
    max_pool,
    save_descriptors,
    stripe_descriptor,
)
from .evalkit import (
    CmcReport,
    DatasetManifest,
    ManifestEntry,
    SplitSpec,
    SynthSpec,
    cmc_multi_shot,
    cmc_single_shot,
    evaluate_multi_shot,
    evaluate_single_shot,
    load_manifest,
    make_splits,
    report,
    synth_dataset,
)
from .imaging import (
    ColorSpace,
    ForegroundMask,
    PixelSet,
    RasterImage,
    convert,
    load_image,
    load_mask,
)
from .sgm import (
    ColorNamePalette,
    GaussianMapModel,
    default_palette,
    eig3_symmetric,
    fit_model,
    identity_model,
    load_palette,
    model_from_sigma,
    pixel_likelihoods,
    soft_map,
    transform_space,
)

__version__ = "0.1.0"

__all__ = [
    "CclModel",
    "CmcReport",
    "ColorNamePalette",
    "ColorSpace",
    "CoupledStats",
    "DatasetManifest",
    "ExtractionConfig",
    "ForegroundMask",
    "GaussianMapModel",
    "ImageRepresentation",
    "LayoutRecord",
    "ManifestEntry",
    "PairedSample",
    "PixelSet",
    "RasterImage",
    "SplitSpec",
    "SynthSpec",
    "accumulate_stats",
    "build_maps",
    "cmc_multi_shot",
    "cmc_single_shot",
    "convert",
    "default_palette",
    "eig3_symmetric",
    "evaluate_multi_shot",
    "evaluate_single_shot",
    "export_csv",
    "extract_color_histogram",
    "extract_features",
    "extract_sgm",
    "extract_siltp",
    "fit_model",
    "fuse",
    "identity_model",
    "load_descriptors",
    "load_image",
    "load_manifest",
    "load_mask",
    "load_models",
    "load_palette",
    "make_splits",
    "max_pool",
    "model_from_sigma",
    "pixel_likelihoods",
    "project",
    "report",
    "save_descriptors",
    "save_models",
    "score",
    "score_matrix",
    "soft_map",
    "solve_subspace",
    "stripe_descriptor",
    "synth_dataset",
    "transform_space",
]
