"""Deterministic synthetic cartoon triplets with analytic motion.

Scenes are flat-shaded shapes (cel-animation statistics: uniform fills with
darker outlines) moving on linear trajectories, rendered with supersampled
anti-aliasing confined to shape boundaries.  Ground-truth displacement and
temporal position come for free, which is what the evaluation needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib.path import Path as MplPath
from scipy import ndimage

from .errors import GenerationError, InvalidInputError
from .imaging import read_png

SUPERSAMPLE = 4


@dataclass(frozen=True)
class Shape:
    """One moving flat-shaded shape.

    kind is disc (center/radius), rect (center/size), or polygon (points).
    Geometry fields are in pixels at s=0; position(s) = start + velocity * s.
    """

    kind: str
    fill: tuple[float, float, float]
    outline: tuple[float, float, float]
    outline_width: float = 0.0
    velocity: tuple[float, float] = (0.0, 0.0)
    center: tuple[float, float] | None = None
    radius: float | None = None
    size: tuple[float, float] | None = None
    points: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind == "disc":
            if self.center is None or self.radius is None or self.radius <= 0:
                raise InvalidInputError("disc shape needs a center and a positive radius")
        elif self.kind == "rect":
            if self.center is None or self.size is None or min(self.size) <= 0:
                raise InvalidInputError("rect shape needs a center and a positive size")
        elif self.kind == "polygon":
            if self.points is None or len(self.points) < 3:
                raise InvalidInputError("polygon shape needs at least three points")
        else:
            raise InvalidInputError(f"unknown shape kind {self.kind!r}")
        for color in (self.fill, self.outline):
            if len(color) != 3 or min(color) < 0.0 or max(color) > 1.0:
                raise InvalidInputError(f"shape color outside [0, 1]: {color}")

    def bounds(self, s: float) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the shape support at time s."""
        dx, dy = self.velocity[0] * s, self.velocity[1] * s
        if self.kind == "disc":
            cx, cy = self.center[0] + dx, self.center[1] + dy
            return cx - self.radius, cy - self.radius, cx + self.radius, cy + self.radius
        if self.kind == "rect":
            cx, cy = self.center[0] + dx, self.center[1] + dy
            hw, hh = self.size[0] / 2.0, self.size[1] / 2.0
            return cx - hw, cy - hh, cx + hw, cy + hh
        pts = np.asarray(self.points, dtype=np.float64) + [dx, dy]
        return pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max()

    def membership(self, xs: np.ndarray, ys: np.ndarray, s: float) -> np.ndarray:
        """Boolean containment of sample points (same shape as xs/ys)."""
        dx, dy = self.velocity[0] * s, self.velocity[1] * s
        if self.kind == "disc":
            cx, cy = self.center[0] + dx, self.center[1] + dy
            return (xs - cx) ** 2 + (ys - cy) ** 2 <= self.radius**2
        if self.kind == "rect":
            cx, cy = self.center[0] + dx, self.center[1] + dy
            hw, hh = self.size[0] / 2.0, self.size[1] / 2.0
            return (np.abs(xs - cx) <= hw) & (np.abs(ys - cy) <= hh)
        pts = np.asarray(self.points, dtype=np.float64) + [dx, dy]
        path = MplPath(pts)
        flat = np.column_stack([xs.ravel(), ys.ravel()])
        return path.contains_points(flat).reshape(xs.shape)


@dataclass(frozen=True)
class SceneSpec:
    """Canvas plus a painter's-order list of moving shapes."""

    height: int
    width: int
    background: tuple[float, float, float] = (0.92, 0.92, 0.92)
    shapes: tuple[Shape, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise InvalidInputError("SceneSpec: canvas must be at least 1x1")
        if min(self.background) < 0.0 or max(self.background) > 1.0:
            raise InvalidInputError("SceneSpec: background color outside [0, 1]")
        for shape in self.shapes:
            for s in (0.0, 1.0):
                xmin, ymin, xmax, ymax = shape.bounds(s)
                if xmin < 0 or ymin < 0 or xmax > self.width or ymax > self.height:
                    raise GenerationError(
                        f"shape {shape.kind} leaves the canvas at s={s}: "
                        f"bounds ({xmin:.1f}, {ymin:.1f}, {xmax:.1f}, {ymax:.1f})"
                    )

    @staticmethod
    def from_json(text: str) -> "SceneSpec":
        raw = json.loads(text)
        shapes = tuple(
            Shape(
                kind=s["kind"],
                fill=tuple(s["fill"]),
                outline=tuple(s.get("outline", s["fill"])),
                outline_width=float(s.get("outline_width", 0.0)),
                velocity=tuple(s.get("velocity", (0.0, 0.0))),
                center=tuple(s["center"]) if "center" in s else None,
                radius=s.get("radius"),
                size=tuple(s["size"]) if "size" in s else None,
                points=tuple(tuple(p) for p in s["points"]) if "points" in s else None,
            )
            for s in raw.get("shapes", [])
        )
        bg = raw.get("background", (0.92, 0.92, 0.92))
        if isinstance(bg, (int, float)):
            bg = (float(bg),) * 3
        return SceneSpec(
            height=int(raw["height"]),
            width=int(raw["width"]),
            background=tuple(bg),
            shapes=shapes,
            seed=int(raw.get("seed", 0)),
        )


@dataclass
class TripletSample:
    """(I_0, I_tau, I_1) plus whatever ground truth the source provides."""

    i0: np.ndarray
    i_tau: np.ndarray
    i1: np.ndarray
    tau_true: float | None = None
    gt_flow_01: np.ndarray | None = None
    source: str = "synthetic"
    name: str = ""


def _coverage(mask_hi: np.ndarray) -> np.ndarray:
    """Mean subsample occupancy per output pixel."""
    ss = SUPERSAMPLE
    h, w = mask_hi.shape[0] // ss, mask_hi.shape[1] // ss
    return mask_hi.reshape(h, ss, w, ss).mean(axis=(1, 3))


def render(spec: SceneSpec, s: float) -> np.ndarray:
    """Render the scene at time s in [0, 1]; bit-identical across calls.

    Shapes are composited in list order; each paints its interior with the
    fill color and an outline_width-wide inner band with the outline color.
    """
    ss = SUPERSAMPLE
    hi_h, hi_w = spec.height * ss, spec.width * ss
    ys, xs = np.mgrid[0:hi_h, 0:hi_w]
    xs = (xs + 0.5) / ss
    ys = (ys + 0.5) / ss

    out = np.ones((spec.height, spec.width, 3)) * np.asarray(spec.background)
    for shape in spec.shapes:
        member = shape.membership(xs, ys, s)
        if shape.outline_width > 0.0:
            inner_limit = shape.outline_width * ss
            interior = ndimage.distance_transform_edt(member) > inner_limit
        else:
            interior = member
        cov_full = _coverage(member)
        cov_fill = _coverage(interior)
        cov_outline = cov_full - cov_fill
        out = (
            out * (1.0 - cov_full)[:, :, None]
            + np.asarray(shape.fill) * cov_fill[:, :, None]
            + np.asarray(shape.outline) * cov_outline[:, :, None]
        )
    return np.clip(out, 0.0, 1.0)


def analytic_flow(spec: SceneSpec, s_from: float = 0.0, s_to: float = 1.0) -> np.ndarray:
    """Piecewise ground-truth displacement between two scene times.

    Each shape's velocity fills its (binary) support at s_from, painter's
    order; background pixels carry zero displacement.
    """
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    xs += 0.5
    ys += 0.5
    flow = np.zeros((spec.height, spec.width, 2), dtype=np.float64)
    dt = s_to - s_from
    for shape in spec.shapes:
        member = shape.membership(xs, ys, s_from)
        flow[member, 0] = shape.velocity[0] * dt
        flow[member, 1] = shape.velocity[1] * dt
    return flow


def gen_triplet(spec: SceneSpec, tau: float) -> TripletSample:
    """Render frames at s in {0, tau, 1} with analytic flow attached."""
    if not 0.0 < tau < 1.0:
        raise InvalidInputError(f"gen_triplet: tau must lie in (0, 1), got {tau}")
    return TripletSample(
        i0=render(spec, 0.0),
        i_tau=render(spec, tau),
        i1=render(spec, 1.0),
        tau_true=tau,
        gt_flow_01=analytic_flow(spec),
        source="synthetic",
    )


def load_triplets(directory) -> tuple[list[TripletSample], list[str]]:
    """Load frame1/2/3.png triplets from subdirectories, lexicographically.

    Returns (samples, errors); a broken subdirectory is reported in errors
    and skipped, the rest continue loading.
    """
    root = Path(directory)
    if not root.is_dir():
        raise InvalidInputError(f"load_triplets: {root} is not a directory")
    samples: list[TripletSample] = []
    errors: list[str] = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            frames = [read_png(sub / f"frame{i}.png") for i in (1, 2, 3)]
        except (OSError, InvalidInputError) as exc:
            errors.append(f"{sub.name}: {exc}")
            continue
        samples.append(
            TripletSample(
                i0=frames[0], i_tau=frames[1], i1=frames[2],
                source="disk", name=sub.name,
            )
        )
    return samples, errors
