"""Temporal-position estimate of a middle frame from motion mass.

Critical regions are found by opening the grayscale frame difference and
thresholding its magnitude adaptively; the flow-magnitude mass accumulated
in those regions on each side of the triplet is normalized into a ratio
in [0, 1] measuring how much of the motion has already happened.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .flow import FlowParams, estimate_flow, flow_magnitude
from .imaging import morph, otsu_threshold, to_grayscale

MOTION_KERNEL = 5


@dataclass(frozen=True)
class TauEstimate:
    """Estimated position plus the two motion masses behind it."""

    tau: float
    mass_0: float
    mass_1: float
    degenerate: bool = False


def motion_mask(i_a: np.ndarray, i_tau: np.ndarray) -> np.ndarray:
    """Binary mask of regions with significant change between two frames.

    The signed grayscale difference is opened with a flat 5x5 window (so
    large structures survive and isolated specks do not), then the absolute
    response is thresholded strictly above its adaptive split point.
    """
    a = to_grayscale(np.asarray(i_a, dtype=np.float64))
    b = to_grayscale(np.asarray(i_tau, dtype=np.float64))
    if a.shape != b.shape:
        raise InvalidInputError(f"motion_mask: shape mismatch {a.shape} vs {b.shape}")
    delta = b - a
    opened = np.abs(morph(delta, "open", MOTION_KERNEL))
    threshold = otsu_threshold(opened)
    return (opened > threshold).astype(np.float64)


def tau_ifd(
    i0: np.ndarray,
    i_tau: np.ndarray,
    i1: np.ndarray,
    flows: tuple[np.ndarray, np.ndarray] | None = None,
    flow_params: FlowParams | None = None,
) -> TauEstimate:
    """Inter-frame-distance estimate of the middle frame's position.

    flows, when given, are (F_{0->tau}, F_{1->tau}) displacement fields
    (e.g. loaded from .flo files); otherwise both are estimated.  A static
    triplet (both masses zero) returns the midpoint with a degeneracy flag.
    """
    i0 = np.asarray(i0, dtype=np.float64)
    i_tau = np.asarray(i_tau, dtype=np.float64)
    i1 = np.asarray(i1, dtype=np.float64)
    if i0.shape != i_tau.shape or i1.shape != i_tau.shape:
        raise InvalidInputError("tau_ifd: frame shapes must match")
    if flows is not None:
        f0t, f1t = (np.asarray(f, dtype=np.float64) for f in flows)
        if f0t.shape[:2] != i0.shape[:2] or f1t.shape[:2] != i0.shape[:2]:
            raise InvalidInputError("tau_ifd: injected flow shapes must match the frames")
    else:
        f0t = estimate_flow(i0, i_tau, flow_params)
        f1t = estimate_flow(i1, i_tau, flow_params)

    mass_0 = float(np.sum(flow_magnitude(f0t) * motion_mask(i0, i_tau)))
    mass_1 = float(np.sum(flow_magnitude(f1t) * motion_mask(i1, i_tau)))
    total = mass_0 + mass_1
    if total == 0.0:
        return TauEstimate(tau=0.5, mass_0=0.0, mass_1=0.0, degenerate=True)
    return TauEstimate(tau=mass_0 / total, mass_0=mass_0, mass_1=mass_1)
