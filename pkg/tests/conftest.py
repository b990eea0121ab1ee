import numpy as np
import pytest

from crowdsynth.geometry import BBox, ObjectInstance, Scene
from crowdsynth.synthesis import Patch, PatchLibrary


def raster_coverage(target, others, resolution=1):
    """Pixel-counting oracle: fraction of `target` covered by the union of
    `others`, on an integer grid scaled by `resolution` sub-pixels."""
    x0 = int(np.floor(target.x_min * resolution))
    y0 = int(np.floor(target.y_min * resolution))
    x1 = int(np.ceil(target.x_max * resolution))
    y1 = int(np.ceil(target.y_max * resolution))
    grid = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    for b in others:
        bx0 = max(int(np.floor(b.x_min * resolution)), x0)
        by0 = max(int(np.floor(b.y_min * resolution)), y0)
        bx1 = min(int(np.ceil(b.x_max * resolution)), x1)
        by1 = min(int(np.ceil(b.y_max * resolution)), y1)
        if bx1 > bx0 and by1 > by0:
            grid[by0 - y0 : by1 - y0, bx0 - x0 : bx1 - x0] = True
    return grid.sum() / resolution**2


def raster_area(box, resolution=1):
    """Pixel-counting area oracle (box coordinates must be multiples of
    1/resolution)."""
    return raster_coverage(box, [box], resolution=resolution)


def raster_intersection(a, b, resolution=1):
    return raster_coverage(a, [b], resolution=resolution)


def make_scene(boxes, ranks=None, width=200, height=200, occ=None, ods=None):
    """Scene from corner-form boxes; depth_rank defaults to list order."""
    ranks = ranks if ranks is not None else list(range(len(boxes)))
    instances = []
    for i, (box, rank) in enumerate(zip(boxes, ranks)):
        instances.append(
            ObjectInstance(
                id=i + 1,
                bbox=BBox(*box),
                depth_rank=rank,
                occlusion_ratio=None if occ is None else occ[i],
                od_gt=None if ods is None else ods[i],
                is_pasted=ods is not None,
            )
        )
    return Scene(image_width=width, image_height=height, instances=instances)


def checker_patch(patch_id=1, size=16, category="person"):
    """Opaque square patch with a deterministic color pattern."""
    rgba = np.zeros((size, size, 4), dtype=np.uint8)
    rgba[:, :, 0] = (np.arange(size * size).reshape(size, size) * 7) % 256
    rgba[:, :, 1] = 80
    rgba[:, :, 2] = 160
    rgba[:, :, 3] = 255
    return Patch(patch_id=patch_id, rgba=rgba, native_size=0.2, category=category)


@pytest.fixture
def small_library():
    patches = {}
    for pid, size in [(1, 16), (2, 24), (3, 12)]:
        patches[pid] = checker_patch(patch_id=pid, size=size)
    return PatchLibrary(patches=patches, source="test")


@pytest.fixture
def base_scene():
    boxes = [
        (20, 30, 60, 110),
        (90, 40, 130, 130),
        (140, 80, 180, 170),
        (30, 120, 75, 190),
    ]
    return make_scene(boxes, ranks=[0, 0, 0, 0])
