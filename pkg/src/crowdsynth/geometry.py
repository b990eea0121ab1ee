"""Axis-aligned box arithmetic, occluder sets, overlay depth and occlusion ratio.

All quantities are defined on boxes, not masks.  Overlay depth uses the
literal per-occluder sum (it may double-count where occluders overlap each
other); occlusion ratio uses the exact union of the in-front boxes, computed
by coordinate compression, so it never exceeds 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import InstanceNotFoundError, InvalidGeometryError


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in image coordinates (y grows downward)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise InvalidGeometryError(f"non-finite coordinate in {self!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidGeometryError(
                f"box must have strictly positive extent, got "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def area(b: BBox) -> float:
    """Box area in pixels squared."""
    return b.width * b.height


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the geometric intersection; 0 when disjoint."""
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union, in [0, 1]."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (area(a) + area(b) - inter)


@dataclass
class ObjectInstance:
    """One ground-truth object in a scene.

    ``depth_rank`` orders objects along the pseudo depth axis (larger means
    nearer to the camera); pasted instances are ranked above all originals in
    paste order.  ``od_gt`` is only ever filled for pasted instances.
    """

    id: int
    bbox: BBox
    category: str = "person"
    is_pasted: bool = False
    depth_rank: int = 0
    patch_id: Optional[int] = None
    od_gt: Optional[float] = None
    occlusion_ratio: Optional[float] = None

    def __post_init__(self):
        if self.od_gt is not None and self.od_gt < 1.0:
            raise InvalidGeometryError(
                f"instance {self.id}: od_gt must be >= 1.0, got {self.od_gt}"
            )
        if self.occlusion_ratio is not None and not (0.0 <= self.occlusion_ratio <= 1.0):
            raise InvalidGeometryError(
                f"instance {self.id}: occlusion_ratio must lie in [0, 1], "
                f"got {self.occlusion_ratio}"
            )


@dataclass
class Scene:
    """An image's objects plus the seed that synthesized it (0 = unaugmented)."""

    image_width: float
    image_height: float
    instances: list[ObjectInstance] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        ids = [inst.id for inst in self.instances]
        if len(ids) != len(set(ids)):
            raise InvalidGeometryError("instance ids must be unique within a scene")
        frame = BBox(0.0, 0.0, float(self.image_width), float(self.image_height)) \
            if self.image_width > 0 and self.image_height > 0 else None
        if frame is None:
            raise InvalidGeometryError("scene must have positive image extent")
        for inst in self.instances:
            if intersection_area(inst.bbox, frame) <= 0.0:
                raise InvalidGeometryError(
                    f"instance {inst.id} lies entirely outside the image"
                )

    def instance(self, target_id: int) -> ObjectInstance:
        for inst in self.instances:
            if inst.id == target_id:
                return inst
        raise InstanceNotFoundError(f"no instance with id {target_id}")

    @property
    def originals(self) -> list[ObjectInstance]:
        return [inst for inst in self.instances if not inst.is_pasted]

    @property
    def pasted(self) -> list[ObjectInstance]:
        return [inst for inst in self.instances if inst.is_pasted]


def occluder_set(scene: Scene, target_id: int) -> set[int]:
    """Ids of instances strictly in front of the target that overlap it.

    Overlay is directional: only objects with a strictly greater depth rank
    can overlay the target.
    """
    target = scene.instance(target_id)
    out = set()
    for inst in scene.instances:
        if inst.id == target_id:
            continue
        if inst.depth_rank <= target.depth_rank:
            continue
        if intersection_area(target.bbox, inst.bbox) > 0.0:
            out.add(inst.id)
    return out


def compute_od(scene: Scene, target_id: int) -> float:
    """Overlay depth: 1 plus the size-normalized sum of in-front overlaps.

    The per-occluder areas are summed without deduplication, so the result
    can exceed 1 + occlusion_ratio when occluders overlap each other.
    """
    target = scene.instance(target_id)
    total = 0.0
    for occ_id in occluder_set(scene, target_id):
        total += intersection_area(target.bbox, scene.instance(occ_id).bbox)
    return 1.0 + total / area(target.bbox)


def union_area(rects: Iterable[tuple[float, float, float, float]]) -> float:
    """Exact area of a union of axis-aligned rectangles (coordinate compression)."""
    rects = [r for r in rects if r[2] > r[0] and r[3] > r[1]]
    if not rects:
        return 0.0
    xs = np.unique(np.array([r[0] for r in rects] + [r[2] for r in rects]))
    ys = np.unique(np.array([r[1] for r in rects] + [r[3] for r in rects]))
    covered = np.zeros((len(xs) - 1, len(ys) - 1), dtype=bool)
    for x0, y0, x1, y1 in rects:
        i0 = np.searchsorted(xs, x0)
        i1 = np.searchsorted(xs, x1)
        j0 = np.searchsorted(ys, y0)
        j1 = np.searchsorted(ys, y1)
        covered[i0:i1, j0:j1] = True
    dx = np.diff(xs)
    dy = np.diff(ys)
    return float((covered * np.outer(dx, dy)).sum())


def occlusion_ratio(scene: Scene, target_id: int) -> float:
    """Fraction of the target covered by the union of in-front instances."""
    target = scene.instance(target_id)
    clipped = []
    for occ_id in occluder_set(scene, target_id):
        b = scene.instance(occ_id).bbox
        x0 = max(b.x_min, target.bbox.x_min)
        y0 = max(b.y_min, target.bbox.y_min)
        x1 = min(b.x_max, target.bbox.x_max)
        y1 = min(b.y_max, target.bbox.y_max)
        clipped.append((x0, y0, x1, y1))
    return union_area(clipped) / area(target.bbox)
