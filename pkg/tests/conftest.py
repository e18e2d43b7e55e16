"""Shared synthetic inputs for the test suite."""

import numpy as np
import pytest
from scipy import ndimage

from mird.synthdata import SceneSpec, Shape


def multiscale_texture(h: int, w: int, seed: int = 0) -> np.ndarray:
    """Smooth random texture with structure at several scales.

    Coarse content matters: the pyramid flow estimator needs something to
    lock onto at low resolution before refining.
    """
    rng = np.random.default_rng(seed)
    tex = np.zeros((h, w))
    for sigma, amp in ((1.5, 0.35), (6.0, 0.75), (20.0, 1.0)):
        layer = ndimage.gaussian_filter(rng.random((h, w)), sigma)
        layer = (layer - layer.mean()) / (layer.std() + 1e-12)
        tex += amp * layer
    return (tex - tex.min()) / (tex.max() - tex.min())


def translation_triplet(d_total: int, d_mid: int, h: int = 140, w: int = 200, seed: int = 0):
    """Whole-frame uniform translation: crops of one big texture.

    Returns grayscale (i0, imid, i1) where the content moves d_mid pixels
    between i0 and imid and d_total pixels between i0 and i1.
    """
    big = multiscale_texture(h + 2 * d_total + 8, w + 2 * d_total + 8, seed)
    o = 4
    i0 = big[o : o + h, o : o + w].copy()
    imid = big[o : o + h, o + d_mid : o + d_mid + w].copy()
    i1 = big[o : o + h, o + d_total : o + d_total + w].copy()
    return i0, imid, i1


def moving_scene(seed: int, h: int = 256, w: int = 448, speed=(9.0, 18.0)) -> SceneSpec:
    """Random cartoon scene: outlined flat shapes on a light background."""
    rng = np.random.default_rng(seed)
    shapes = []
    half_max = min(30.0, min(h, w) / 5.0)
    for _ in range(int(rng.integers(5, 8))):
        kind = rng.choice(["disc", "rect"])
        ang = rng.uniform(0, 2 * np.pi)
        vel = np.array([np.cos(ang), np.sin(ang)]) * rng.uniform(*speed)
        half = float(rng.uniform(0.5 * half_max, half_max))
        lo_x = half + 2 + max(0.0, -vel[0])
        hi_x = w - half - 2 - max(0.0, vel[0])
        lo_y = half + 2 + max(0.0, -vel[1])
        hi_y = h - half - 2 - max(0.0, vel[1])
        if lo_x >= hi_x or lo_y >= hi_y:
            continue  # shape + motion cannot fit this canvas
        cx = float(rng.uniform(lo_x, hi_x))
        cy = float(rng.uniform(lo_y, hi_y))
        fill = tuple(rng.uniform(0.15, 0.85, size=3))
        outline = tuple(np.clip(np.array(fill) - 0.4, 0.0, 1.0))
        if kind == "disc":
            shapes.append(Shape("disc", fill, outline, 2.0, tuple(vel),
                                center=(cx, cy), radius=half))
        else:
            shapes.append(Shape("rect", fill, outline, 2.0, tuple(vel),
                                center=(cx, cy), size=(2 * half * 0.8, 2 * half * 0.8)))
    bg = tuple(np.random.default_rng(seed + 1).uniform(0.8, 0.97, size=3))
    return SceneSpec(height=h, width=w, background=bg, shapes=tuple(shapes), seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
