"""Dense optical flow, warping, and flow file I/O.

Flow fields are (H, W, 2) float arrays holding per-pixel (u, v) displacement
in pixels: u along columns (x), v along rows (y).  Estimation is a classical
coarse-to-fine Horn-Schunck solver; externally computed flows can be injected
through the Middlebury .flo format, read and written bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, FloFormatError, InvalidInputError
from .imaging import morph, to_grayscale

SPLAT_EPS = 1e-7
FLO_MAGIC = 202021.25


@dataclass(frozen=True)
class FlowParams:
    """Coarse-to-fine Horn-Schunck settings.

    iterations_per_level relaxation sweeps are split across three
    warp-and-relinearize rounds at every pyramid level.
    """

    pyramid_levels: int = 4
    iterations_per_level: int = 100
    smoothness: float = 0.1
    downscale: float = 0.5

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ConfigError("FlowParams: pyramid_levels must be >= 1")
        if self.iterations_per_level < 1:
            raise ConfigError("FlowParams: iterations_per_level must be >= 1")
        if not self.smoothness > 0.0:
            raise ConfigError("FlowParams: smoothness must be positive")
        if not 0.0 < self.downscale < 1.0:
            raise ConfigError("FlowParams: downscale must lie in (0, 1)")


def _resize(img: np.ndarray, shape: tuple[int, int], antialias: bool) -> np.ndarray:
    if img.shape == shape:
        return img
    ratio = min(shape[0] / img.shape[0], shape[1] / img.shape[1])
    if antialias and ratio < 1.0:
        sigma = np.sqrt((1.0 / ratio) ** 2 - 1.0) / 2.0
        img = ndimage.gaussian_filter(img, sigma, mode="nearest")
    factors = (shape[0] / img.shape[0], shape[1] / img.shape[1])
    return ndimage.zoom(img, factors, order=1, mode="nearest", grid_mode=True)


def _hs_level(a: np.ndarray, b: np.ndarray, flow: np.ndarray, p: FlowParams) -> np.ndarray:
    """Run warp/relinearize rounds of Horn-Schunck relaxation at one scale."""
    avg_kernel = np.array(
        [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]]
    )
    rounds = 3
    iters = [p.iterations_per_level // rounds] * rounds
    iters[0] += p.iterations_per_level - sum(iters)
    for n_iter in iters:
        warped = backward_warp(b, flow)
        base = 0.5 * (a + warped)
        ix = np.gradient(base, axis=1)
        iy = np.gradient(base, axis=0)
        it = warped - a
        denom = p.smoothness + ix**2 + iy**2
        du = np.zeros_like(a)
        dv = np.zeros_like(a)
        for _ in range(n_iter):
            du_avg = ndimage.correlate(du, avg_kernel, mode="nearest")
            dv_avg = ndimage.correlate(dv, avg_kernel, mode="nearest")
            frac = (ix * du_avg + iy * dv_avg + it) / denom
            du = du_avg - ix * frac
            dv = dv_avg - iy * frac
        flow = flow + np.stack([du, dv], axis=-1)
        flow[:, :, 0] = ndimage.median_filter(flow[:, :, 0], size=3, mode="nearest")
        flow[:, :, 1] = ndimage.median_filter(flow[:, :, 1], size=3, mode="nearest")
    return flow


def estimate_flow(a: np.ndarray, b: np.ndarray, p: FlowParams | None = None) -> np.ndarray:
    """Dense displacement a -> b from brightness constancy plus smoothness.

    Deterministic coarse-to-fine estimation; flow is upscaled (and its
    components rescaled) between pyramid levels.
    """
    p = p or FlowParams()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"estimate_flow: shape mismatch {a.shape} vs {b.shape}")
    ga, gb = to_grayscale(a), to_grayscale(b)

    shapes = [ga.shape]
    for _ in range(1, p.pyramid_levels):
        h, w = shapes[-1]
        nh, nw = max(1, round(h * p.downscale)), max(1, round(w * p.downscale))
        if min(nh, nw) < 12:
            break
        shapes.append((nh, nw))
    shapes.reverse()  # coarse to fine

    pyr_a = [_resize(ga, s, antialias=True) for s in shapes]
    pyr_b = [_resize(gb, s, antialias=True) for s in shapes]

    flow = np.zeros(shapes[0] + (2,), dtype=np.float64)
    for level, (la, lb) in enumerate(zip(pyr_a, pyr_b)):
        if level > 0:
            prev_h, prev_w = shapes[level - 1]
            h, w = shapes[level]
            u = _resize(flow[:, :, 0], (h, w), antialias=False) * (w / prev_w)
            v = _resize(flow[:, :, 1], (h, w), antialias=False) * (h / prev_h)
            flow = np.stack([u, v], axis=-1)
        flow = _hs_level(la, lb, flow, p)
    return flow


def flow_magnitude(f: np.ndarray) -> np.ndarray:
    """Per-pixel Euclidean norm of the displacement."""
    f = np.asarray(f, dtype=np.float64)
    return np.sqrt(f[:, :, 0] ** 2 + f[:, :, 1] ** 2)


def backward_warp(img: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Bilinear sampling of img at p + f(p); out-of-bounds clamps to border."""
    img = np.asarray(img, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if img.shape[:2] != f.shape[:2]:
        raise InvalidInputError(f"backward_warp: shape mismatch {img.shape} vs {f.shape}")
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [yy + f[:, :, 1], xx + f[:, :, 0]]
    if img.ndim == 2:
        return ndimage.map_coordinates(img, coords, order=1, mode="nearest")
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.map_coordinates(img[:, :, c], coords, order=1, mode="nearest")
    return out


def importance_z(i0: np.ndarray, i1: np.ndarray, f01: np.ndarray) -> np.ndarray:
    """Brightness-constancy occlusion score: -0.1 * L1(i0 - warp(i1, f01)).

    The L1 norm sums over channels, so values are always <= 0.
    """
    i0 = np.asarray(i0, dtype=np.float64)
    diff = i0 - backward_warp(i1, f01)
    l1 = np.abs(diff) if diff.ndim == 2 else np.abs(diff).sum(axis=2)
    return -0.1 * l1


def _splat_accumulate(img: np.ndarray, f: np.ndarray, z: np.ndarray, scale: float):
    """Accumulate softmax-splat contributions; returns (numerator, denominator)."""
    h, w = img.shape[:2]
    channels = 1 if img.ndim == 2 else img.shape[2]
    values = img.reshape(h * w, channels)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    tx = (xx + scale * f[:, :, 0]).ravel()
    ty = (yy + scale * f[:, :, 1]).ravel()
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    fx = tx - x0
    fy = ty - y0
    importance = np.exp(z).ravel()

    num = np.zeros((h * w, channels), dtype=np.float64)
    den = np.zeros(h * w, dtype=np.float64)
    corners = (
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    )
    for cx, cy, bilinear in corners:
        valid = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        weight = bilinear[valid] * importance[valid]
        idx = cy[valid] * w + cx[valid]
        np.add.at(den, idx, weight)
        np.add.at(num, idx, weight[:, None] * values[valid])
    return num.reshape(img.shape[:2] + (channels,)), den.reshape(h, w)


def softmax_splat(
    img: np.ndarray, f: np.ndarray, z: np.ndarray, scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Forward-warp img along scale * f with exp(z) collision weighting.

    Each source pixel splats bilinearly onto its four target neighbors;
    colliding contributions form a weighted average.  Pixels receiving no
    weight are 0 in the image and 0 in the returned validity mask.
    """
    img = np.asarray(img, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if img.shape[:2] != f.shape[:2] or img.shape[:2] != z.shape[:2]:
        raise InvalidInputError("softmax_splat: image, flow and z shapes must match")
    num, den = _splat_accumulate(img, f, z, scale)
    valid = den > SPLAT_EPS
    out = np.where(valid[:, :, None], num / np.where(valid, den, 1.0)[:, :, None], 0.0)
    if img.ndim == 2:
        out = out[:, :, 0]
    return out, valid.astype(np.float64)


def occlusion_mask(f: np.ndarray, scale: float) -> np.ndarray:
    """Validity mask from splatting an all-ones image with uniform weights.

    The accumulated splat weight is binarized at 0.5 and cleaned with a 5x5
    morphological opening to drop small dotted artifacts.
    """
    f = np.asarray(f, dtype=np.float64)
    h, w = f.shape[:2]
    ones = np.ones((h, w), dtype=np.float64)
    _, den = _splat_accumulate(ones, f, np.zeros((h, w)), scale)
    binary = (den > 0.5).astype(np.float64)
    return morph(binary, "open", 5)


def read_flo(path) -> np.ndarray:
    """Read a Middlebury .flo file (little-endian float32, row-major)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise FloFormatError("truncated header", len(blob))
    (magic,) = struct.unpack_from("<f", blob, 0)
    if magic != FLO_MAGIC:  # exactly representable in float32
        raise FloFormatError(f"bad magic {magic!r}, want {FLO_MAGIC}", 0)
    width, height = struct.unpack_from("<ii", blob, 4)
    if width <= 0 or height <= 0:
        raise FloFormatError(f"invalid dimensions {width}x{height}", 4)
    expected = 12 + 8 * width * height
    if len(blob) < expected:
        raise FloFormatError(
            f"truncated payload: have {len(blob)} bytes, want {expected}", len(blob)
        )
    data = np.frombuffer(blob, dtype="<f4", count=2 * width * height, offset=12)
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data))[0])
        raise FloFormatError("non-finite flow value", 12 + 4 * bad)
    return data.reshape(height, width, 2).astype(np.float64)


def write_flo(f: np.ndarray, path) -> None:
    """Write a flow field as a Middlebury .flo file (exact inverse of read)."""
    f = np.asarray(f)
    if f.ndim != 3 or f.shape[2] != 2:
        raise InvalidInputError(f"write_flo: expected (H, W, 2) field, got {f.shape}")
    if not np.all(np.isfinite(f)):
        bad = int(np.flatnonzero(~np.isfinite(f.reshape(-1)))[0])
        raise FloFormatError("non-finite flow value", 12 + 4 * bad)
    h, w = f.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(np.ascontiguousarray(f, dtype="<f4").tobytes())
