"""Edge maps used as structural guidance.

A difference-of-Gaussians band-pass flags line-art strokes; the normalized
Euclidean distance transform of the thresholded response encodes proximity
to the nearest detected edge on a unit scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, InvalidInputError
from .imaging import edt


@dataclass(frozen=True)
class EdgeParams:
    """Band-pass and distance-falloff parameters.

    sigma is the base blur; the second blur uses k_sigma * sigma.  k_t scales
    the band-pass response around the 0.5 offset.  d is the distance (pixels)
    at which the normalized transform reaches 1 - 1/e.
    """

    k_sigma: float = 1.6
    k_t: float = 2.0
    sigma: float = 1.0
    dog_threshold: float = 0.5
    d: float = 15.0

    def __post_init__(self):
        if not self.k_sigma > 1.0:
            raise ConfigError(f"EdgeParams: k_sigma must exceed 1, got {self.k_sigma}")
        if not self.sigma > 0.0:
            raise ConfigError(f"EdgeParams: sigma must be positive, got {self.sigma}")
        if not self.d > 0.0:
            raise ConfigError(f"EdgeParams: d must be positive, got {self.d}")


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), replicated edges."""
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x**2) / (2.0 * sigma**2))
    kernel /= kernel.sum()
    out = ndimage.correlate1d(img, kernel, axis=0, mode="nearest")
    return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")


def dog(img: np.ndarray, p: EdgeParams | None = None) -> np.ndarray:
    """Difference-of-Gaussians response, offset to 0.5 and clamped to [0, 1].

    The DC level is removed before blurring (blurs are linear, so this does
    not change the response) so that a constant image maps to exactly 0.5.
    """
    p = p or EdgeParams()
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError("dog: expected a single-channel image")
    ac = img - img[0, 0]
    band = gaussian_blur(ac, p.k_sigma * p.sigma) - gaussian_blur(ac, p.sigma)
    return np.clip(0.5 + p.k_t * band, 0.0, 1.0)


def nedt(img: np.ndarray, p: EdgeParams | None = None) -> np.ndarray:
    """Normalized distance to the detected edge set: 1 - exp(-EDT/d).

    Edge pixels are those with band-pass response strictly above the
    threshold, so constant regions (response exactly 0.5) are never edges.
    With no edges at all the distance sentinel saturates the map at 1.
    """
    p = p or EdgeParams()
    response = dog(img, p)
    edge_set = (response > p.dog_threshold).astype(np.float64)
    distance = edt(edge_set)
    return 1.0 - np.exp(-distance / p.d)
