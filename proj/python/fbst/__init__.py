"""Forward-backward style transfer anomaly detection.

Images are float arrays of shape (H, W, C) in [0, 1]; score maps and masks
are (H, W); feature maps are (C, H, W).
"""

import json

from ._core import (
    FeatureExtractor,
    auroc,
    average_precision,
    contrast_ratio,
    cycle_consistency_loss,
    difference_map,
    gram_matrix,
    load_image,
    noise_level,
    run_cli,
    save_image,
    synthesize_dataset,
)
from ._core import stylize as _stylize

__all__ = [
    "FeatureExtractor",
    "auroc",
    "average_precision",
    "contrast_ratio",
    "cycle_consistency_loss",
    "difference_map",
    "gram_matrix",
    "load_image",
    "noise_level",
    "run_cli",
    "save_image",
    "stylize",
    "synthesize_dataset",
]


def stylize(content, style, **params):
    """NST with keyword parameters (content_weight, style_weight, iterations,
    step_size, init, seed, extractor). Returns (image, trace, best_iteration)."""
    return _stylize(content, style, json.dumps(params) if params else "")
