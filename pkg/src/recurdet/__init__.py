"""Detection and counting of repeating objects in a single image.

The pipeline mines recurrent patches, recovers a deformable part model from
occurrence-map correlation statistics, proposes candidate occurrences by
vote clustering, and classifies them with an actively-learned linear
separator driven by a human or a scripted oracle.
"""

from .errors import RecurdetError
from .image_core import (
    BinaryMap,
    CorrelationMap,
    GrayImage,
    Patch,
    auto_correlation,
    cross_correlate_binary,
    lag_origin,
    load_image,
    ncc_map,
    non_max_suppress,
    save_png,
)

__all__ = [
    "RecurdetError",
    "BinaryMap",
    "CorrelationMap",
    "GrayImage",
    "Patch",
    "auto_correlation",
    "cross_correlate_binary",
    "lag_origin",
    "load_image",
    "ncc_map",
    "non_max_suppress",
    "save_png",
]

__version__ = "0.1.0"
