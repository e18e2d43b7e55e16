"""Image containers and classical pixel operations.

Images are float64 numpy arrays with intensities in [0, 1]: shape (H, W) for
grayscale or (H, W, 3) for RGB.  Masks are (H, W) arrays in [0, 1]; binary
masks contain only {0, 1}.  All operations here are pure and deterministic.
"""

from __future__ import annotations

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import InvalidInputError

# Conventional luminance weights; any fixed affine combination would do for
# the downstream motion metrics, so we use the familiar ITU-R 601 triple.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

PSNR_CAP_DB = 99.0


def channel_count(img: np.ndarray) -> int:
    if img.ndim == 2:
        return 1
    if img.ndim == 3:
        return img.shape[2]
    raise InvalidInputError(f"expected 2-D or 3-D image array, got ndim={img.ndim}")


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the unit-interval image invariants and return the array."""
    img = np.asarray(img, dtype=np.float64)
    c = channel_count(img)
    if c not in (1, 3):
        raise InvalidInputError(f"{name}: channel count must be 1 or 3, got {c}")
    if not np.all(np.isfinite(img)):
        raise InvalidInputError(f"{name}: contains non-finite values")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise InvalidInputError(f"{name}: intensities outside [0, 1]")
    return img


def validate_mask(mask: np.ndarray, name: str = "mask", binary: bool = False) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise InvalidInputError(f"{name}: must be 2-D, got ndim={mask.ndim}")
    if not np.all(np.isfinite(mask)):
        raise InvalidInputError(f"{name}: contains non-finite values")
    if mask.size and (mask.min() < 0.0 or mask.max() > 1.0):
        raise InvalidInputError(f"{name}: values outside [0, 1]")
    if binary and mask.size and not np.all((mask == 0.0) | (mask == 1.0)):
        raise InvalidInputError(f"{name}: binary mask contains values other than 0/1")
    return mask


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Collapse an image to one channel.

    3-channel input is combined with the luminance weights; 1-channel input
    passes through unchanged (a trailing singleton axis is squeezed).
    """
    img = np.asarray(img, dtype=np.float64)
    c = channel_count(img)
    if c == 1:
        return img if img.ndim == 2 else img[:, :, 0]
    if c != 3:
        raise InvalidInputError(f"to_grayscale: channel count must be 1 or 3, got {c}")
    w = np.asarray(LUMA_WEIGHTS)
    return img @ w


def morph(img: np.ndarray, op: str, se_size: int) -> np.ndarray:
    """Grayscale morphology with a flat square structuring element.

    erode = window minimum, dilate = window maximum, open = dilate(erode).
    Borders are handled by edge replication.  The input may hold values
    outside [0, 1] (signed difference images are opened before thresholding).
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError("morph: expected a single-channel image")
    if se_size < 1 or se_size % 2 == 0:
        raise InvalidInputError(f"morph: structuring element size must be odd >= 1, got {se_size}")
    size = (se_size, se_size)
    if op == "erode":
        return ndimage.grey_erosion(img, size=size, mode="nearest")
    if op == "dilate":
        return ndimage.grey_dilation(img, size=size, mode="nearest")
    if op == "open":
        eroded = ndimage.grey_erosion(img, size=size, mode="nearest")
        return ndimage.grey_dilation(eroded, size=size, mode="nearest")
    raise InvalidInputError(f"morph: unknown operation {op!r}")


OTSU_BINS = 256


def otsu_threshold(img: np.ndarray) -> float:
    """Threshold maximizing between-class variance over a 256-bin histogram.

    Returns the center of the winning bin.  Well-separated modes leave the
    criterion flat across the empty valley; the middle of that maximizing
    plateau is used so the split lands between the modes.  A constant image
    has no class split; its own value is returned as the degenerate
    threshold, so a strictly-greater comparison yields an empty mask.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.size == 0:
        raise InvalidInputError("otsu_threshold: empty image")
    flat = img.ravel()
    if flat.min() == flat.max():
        return float(flat[0])
    bins = np.minimum((flat * OTSU_BINS).astype(np.int64), OTSU_BINS - 1)
    hist = np.bincount(bins, minlength=OTSU_BINS).astype(np.float64)
    centers = (np.arange(OTSU_BINS) + 0.5) / OTSU_BINS

    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    mass0 = np.cumsum(hist * centers)
    mass1 = mass0[-1] - mass0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = mass0 / w0
        mu1 = mass1 / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = -1.0
    maximizers = np.flatnonzero(between == between.max())
    k = int(round(float(maximizers.mean())))
    return float(centers[k])


def edt(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (pixels) to the nearest foreground pixel.

    Foreground is mask == 1; foreground pixels map to 0.  An all-zero mask
    yields the sentinel float64 max everywhere ("infinitely far").
    """
    mask = validate_mask(mask, "edt mask", binary=True)
    fg = mask == 1.0
    if not fg.any():
        return np.full(mask.shape, np.finfo(np.float64).max)
    return ndimage.distance_transform_edt(~fg).astype(np.float64)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0, capped at 99 dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))


SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _ssim_single(a: np.ndarray, b: np.ndarray) -> float:
    # Gaussian-weighted moments, valid windows only (border cropped).
    r = SSIM_WINDOW // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2.0 * SSIM_SIGMA**2))
    g /= g.sum()

    def win(x):
        y = ndimage.correlate1d(x, g, axis=0, mode="nearest")
        y = ndimage.correlate1d(y, g, axis=1, mode="nearest")
        return y[r:-r, r:-r]

    mu_a = win(a)
    mu_b = win(b)
    var_a = win(a * a) - mu_a**2
    var_b = win(b * b) - mu_b**2
    cov = win(a * b) - mu_a * mu_b
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity, 11x11 Gaussian window (sigma 1.5).

    Constants K1=0.01, K2=0.03, dynamic range 1.0; channels averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise InvalidInputError(
            f"ssim: image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    if a.ndim == 2:
        return _ssim_single(a, b)
    return float(np.mean([_ssim_single(a[:, :, c], b[:, :, c]) for c in range(a.shape[2])]))


def read_png(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG as a unit-interval float image."""
    with PILImage.open(path) as im:
        if im.mode == "P":
            im = im.convert("RGB")
        if im.mode not in ("L", "RGB"):
            raise InvalidInputError(
                f"read_png: unsupported mode {im.mode!r} in {path} (want 8-bit L or RGB)"
            )
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr


def write_png(img: np.ndarray, path) -> None:
    """Write a unit-interval image as an 8-bit PNG (round(v*255))."""
    img = validate_image(img, "write_png image")
    data = np.rint(img * 255.0).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    PILImage.fromarray(data, mode=mode).save(path, format="PNG")
