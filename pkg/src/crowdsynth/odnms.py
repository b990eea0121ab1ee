"""Greedy NMS, the dynamic overlay-depth threshold, and depth-aware NMS.

Depth-aware NMS cancels a suppression when the two boxes' overlay depths
differ by more than ``delta * exp(psi * IoU)``: heavily overlapped boxes in
clearly different depths are treated as distinct objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .geometry import BBox


@dataclass(frozen=True)
class Detection:
    """A predicted box with confidence and predicted overlay depth.

    ``od=0`` is an "unknown" sentinel acceptable only on plain-NMS paths.
    """

    bbox: BBox
    score: float
    od: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"score must lie in [0, 1], got {self.score}")
        if self.od < 0.0:
            raise InvalidInputError(f"od must be >= 0, got {self.od}")


@dataclass(frozen=True)
class NmsConfig:
    th_iou: float = 0.5
    delta: float = 0.001
    psi: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.th_iou < 1.0):
            raise ConfigurationError(f"th_iou must lie in (0, 1), got {self.th_iou}")
        if self.delta <= 0.0:
            raise ConfigurationError(f"delta must be > 0, got {self.delta}")


def od_threshold(iou: float, cfg: NmsConfig) -> float:
    """Dynamic depth threshold ``delta * exp(psi * iou)``."""
    return cfg.delta * math.exp(cfg.psi * iou)


def _boxes_array(dets: Sequence[Detection]) -> np.ndarray:
    return np.array([d.bbox.as_tuple() for d in dets], dtype=np.float64).reshape(-1, 4)


def _iou_row(boxes: np.ndarray, areas: np.ndarray, i: int) -> np.ndarray:
    """IoU of box i against all boxes (vectorized)."""
    x0 = np.maximum(boxes[i, 0], boxes[:, 0])
    y0 = np.maximum(boxes[i, 1], boxes[:, 1])
    x1 = np.minimum(boxes[i, 2], boxes[:, 2])
    y1 = np.minimum(boxes[i, 3], boxes[:, 3])
    inter = np.clip(x1 - x0, 0.0, None) * np.clip(y1 - y0, 0.0, None)
    return inter / (areas[i] + areas - inter)


def _greedy(
    boxes: np.ndarray,
    scores: np.ndarray,
    th_iou: float,
    ods: np.ndarray | None,
    cfg: NmsConfig | None,
) -> list[int]:
    n = len(scores)
    if n == 0:
        return []
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    # ties broken by ascending original index: stable sort on -score
    order = np.argsort(-scores, kind="stable")
    alive = np.ones(n, dtype=bool)
    kept: list[int] = []
    for m in order:
        if not alive[m]:
            continue
        alive[m] = False
        kept.append(int(m))
        ious = _iou_row(boxes, areas, m)
        suppress = alive & (ious >= th_iou)
        if ods is not None:
            assert cfg is not None
            suppress &= np.abs(ods - ods[m]) <= cfg.delta * np.exp(cfg.psi * ious)
        alive[suppress] = False
    return kept


def standard_nms_indices(dets: Sequence[Detection], th_iou: float) -> list[int]:
    """Kept indices (descending score) under plain greedy NMS."""
    boxes = _boxes_array(dets)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    return _greedy(boxes, scores, th_iou, None, None)


def standard_nms(dets: Sequence[Detection], th_iou: float) -> list[Detection]:
    return [dets[i] for i in standard_nms_indices(dets, th_iou)]


def od_nms_indices(dets: Sequence[Detection], cfg: NmsConfig) -> list[int]:
    """Kept indices under depth-aware NMS: a box is suppressed only when the
    IoU condition holds AND its depth is within the dynamic threshold of the
    keeper's."""
    boxes = _boxes_array(dets)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    ods = np.array([d.od for d in dets], dtype=np.float64)
    return _greedy(boxes, scores, cfg.th_iou, ods, cfg)


def od_nms(dets: Sequence[Detection], cfg: NmsConfig) -> list[Detection]:
    return [dets[i] for i in od_nms_indices(dets, cfg)]
