"""Map-aware filtering and validation gating.

The pipeline is two hard decisions applied to each frame's pooled detections:

1. mask: drop every detection whose back-projected position falls inside the
   static map dilated by the margin ``g`` (when masking is enabled);
2. gate: a target counts as detected when any surviving detection lies within
   the Euclidean gate ``g_det`` of its true position, and a surviving
   detection counts as a false alarm when no true target lies within
   ``g_det`` of it.

Gating is a pure distance-threshold test per side; there is deliberately no
one-to-one assignment between detections and targets.  Distances are compared
in squared form everywhere so the per-frame and batch implementations agree
bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import StaticMap, WorldPoint, in_dilated_map
from .measurement import WorldDetection
from .scenario import Frame


@dataclass(frozen=True, slots=True)
class FilterConfig:
    """Fusion knobs: mask margin, validation gate, and the mask switch."""

    mask_margin_g: float = 0.0
    gate_g_det: float = 3.0
    mask_enabled: bool = True

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mask_margin_g) and self.mask_margin_g >= 0.0):
            raise ValueError(f"mask_margin_g must be finite and >= 0, got {self.mask_margin_g}")
        if not (math.isfinite(self.gate_g_det) and self.gate_g_det > 0.0):
            raise ValueError(f"gate_g_det must be finite and > 0, got {self.gate_g_det}")


@dataclass(frozen=True)
class GateOutcome:
    """Gating result for one frame.

    ``detected`` is keyed by in-area target id; ``accepted`` holds the
    detections that survived the mask (the population the gate ran on).
    """

    detected: dict[int, bool]
    unmatched_count: int
    accepted: tuple[WorldDetection, ...]

    def __post_init__(self) -> None:
        if not (0 <= self.unmatched_count <= len(self.accepted)):
            raise ValueError(
                f"unmatched_count {self.unmatched_count} outside [0, {len(self.accepted)}]"
            )


def apply_hard_mask(
    detections: Sequence[WorldDetection], static_map: StaticMap, g: float
) -> list[WorldDetection]:
    """Remove detections inside the map dilated by ``g``; order is preserved."""
    return [d for d in detections if not in_dilated_map(d.point, static_map, g)]


def gate_detections(
    detections: Sequence[WorldDetection],
    truth: Sequence[tuple[int, WorldPoint]],
    g_det: float,
) -> GateOutcome:
    """Euclidean validation gate between detections and true target positions.

    Boundary hits (distance exactly g_det) count as inside the gate on both
    the detection side and the false-alarm side.
    """
    if not (math.isfinite(g_det) and g_det > 0.0):
        raise ValueError(f"g_det must be finite and > 0, got {g_det}")
    gate_sq = g_det * g_det
    detected = {tid: False for tid, _ in truth}
    unmatched = 0
    for det in detections:
        matched = False
        for tid, pos in truth:
            dx = det.point.x - pos.x
            dy = det.point.y - pos.y
            if dx * dx + dy * dy <= gate_sq:
                detected[tid] = True
                matched = True
        if not matched:
            unmatched += 1
    return GateOutcome(detected=detected, unmatched_count=unmatched, accepted=tuple(detections))


def process_frame(frame: Frame, static_map: StaticMap, fc: FilterConfig) -> GateOutcome:
    """Mask (strictly first, when enabled) then gate one frame."""
    if fc.mask_enabled:
        accepted = apply_hard_mask(frame.detections, static_map, fc.mask_margin_g)
    else:
        accepted = list(frame.detections)
    return gate_detections(accepted, frame.truth, fc.gate_g_det)


# ---------------------------------------------------------------------------
# Batch kernel.  A sweep re-evaluates identical frames under many (g, g_det)
# pairs, so distances are precomputed once per realization and each grid cell
# reduces to boolean thresholding.  evaluate_distances is equivalent to
# running process_frame frame by frame; the test suite asserts exact
# agreement.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameDistances:
    """Squared-distance tensors for a sequence of frames.

    Shapes: (T, J) for detection-to-map and validity, (T, J, N) for
    detection-to-target, (T, N) for target in-area flags, where J is the
    maximum detection count over the frames and N the number of distinct
    target ids observed.  Padding entries carry +inf distances and False
    validity.
    """

    map_dist_sq: np.ndarray
    target_dist_sq: np.ndarray
    det_valid: np.ndarray
    target_inbounds: np.ndarray
    target_ids: tuple[int, ...]


def precompute_distances(frames: Sequence[Frame], static_map: StaticMap) -> FrameDistances:
    """Extract the distance tensors that masking and gating threshold against."""
    t_steps = len(frames)
    ids = sorted({tid for f in frames for tid, _ in f.truth})
    col = {tid: i for i, tid in enumerate(ids)}
    n_targets = len(ids)
    j_max = max((len(f.detections) for f in frames), default=0)

    map_dist_sq = np.full((t_steps, j_max), np.inf)
    target_dist_sq = np.full((t_steps, j_max, n_targets), np.inf)
    det_valid = np.zeros((t_steps, j_max), dtype=bool)
    target_inbounds = np.zeros((t_steps, n_targets), dtype=bool)

    for t, frame in enumerate(frames):
        n_det = len(frame.detections)
        if n_det:
            xy = np.array([(d.point.x, d.point.y) for d in frame.detections])
            det_valid[t, :n_det] = True
            map_dist_sq[t, :n_det] = static_map.min_distance_sq_many(xy)
            if frame.truth:
                txy = np.array([(p.x, p.y) for _, p in frame.truth])
                diff = xy[:, None, :] - txy[None, :, :]
                dist_sq = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
                cols = [col[tid] for tid, _ in frame.truth]
                target_dist_sq[t, :n_det, cols] = dist_sq.T
        for tid, _ in frame.truth:
            target_inbounds[t, col[tid]] = True

    return FrameDistances(
        map_dist_sq=map_dist_sq,
        target_dist_sq=target_dist_sq,
        det_valid=det_valid,
        target_inbounds=target_inbounds,
        target_ids=tuple(ids),
    )


def evaluate_distances(
    fd: FrameDistances, fc: FilterConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Threshold precomputed distances under one filter configuration.

    Returns ``(detected, unmatched)`` where detected is (T, N) bool aligned
    with ``fd.target_ids`` and unmatched is the per-frame false-alarm count.
    """
    if fc.mask_enabled:
        g_sq = fc.mask_margin_g * fc.mask_margin_g
        keep = fd.det_valid & (fd.map_dist_sq > g_sq)
    else:
        keep = fd.det_valid
    gate_sq = fc.gate_g_det * fc.gate_g_det
    within = fd.target_dist_sq <= gate_sq  # padding is +inf, never within
    detected = (within & keep[:, :, None]).any(axis=1)
    unmatched = (keep & ~within.any(axis=2)).sum(axis=1)
    return detected, unmatched
