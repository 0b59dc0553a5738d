"""Python bindings for qsmlab.

Volumes are float64 numpy arrays indexed [x, y, z] (C order, z fastest).
"""

import json

from ._core import (
    ConfigError,
    Error,
    IoError,
    Model,
    NumericalError,
    __version__,
    corpus,
    dipole_kernel,
    forward_field,
    hfen,
    load_volume,
    medi,
    psnr,
    rmse,
    save_volume,
    sphere_field,
    ssim,
    uncertainty_error_agreement,
)
from ._core import lesion_phantom as _lesion_phantom
from ._core import phantom as _phantom


def phantom(spec):
    """Rasterise a phantom from a spec dict (or JSON string)."""
    return _phantom(spec if isinstance(spec, str) else json.dumps(spec))


def lesion_phantom(lesion, shape=(64, 64, 32), seed=0):
    return _lesion_phantom(lesion if isinstance(lesion, str) else json.dumps(lesion), tuple(shape), seed)


def model_config(model):
    return json.loads(model.config_json)


__all__ = [
    "ConfigError",
    "Error",
    "IoError",
    "Model",
    "NumericalError",
    "__version__",
    "corpus",
    "dipole_kernel",
    "forward_field",
    "hfen",
    "lesion_phantom",
    "load_volume",
    "medi",
    "model_config",
    "phantom",
    "psnr",
    "rmse",
    "save_volume",
    "sphere_field",
    "ssim",
    "uncertainty_error_agreement",
]
