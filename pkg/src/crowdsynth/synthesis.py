"""Crowdedness-oriented copy-paste synthesis.

Group centers are sampled from original objects; members are pasted around
each center with Gaussian sizes and uniform offsets tight enough that every
member is guaranteed to overlap its center.  Each overlaid member gets an
overlap-free twin re-pasted elsewhere in the image, forming the pairs used
for consensus learning.  Everything is a pure function of (inputs, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from . import geometry
from .errors import (
    ConfigurationError,
    InvalidInputError,
    InvalidPatchError,
    PatchNotFoundError,
)
from .geometry import BBox, ObjectInstance, Scene


@dataclass(frozen=True)
class SynthesisConfig:
    """All knobs of the copy-paste sampler (defaults: N=3, M=5, tau=4,
    epsilon=2, sigma=0.2)."""

    max_groups: int = 3
    max_members: int = 5
    tau: float = 4.0
    epsilon: float = 2.0
    sigma: float = 0.2
    size_clip: tuple[float, float] = (0.05, 0.9)
    max_resample: int = 20
    min_inside_fraction: float = 0.5

    def __post_init__(self):
        if self.max_groups < 0 or self.max_members < 0:
            raise ConfigurationError("max_groups and max_members must be >= 0")
        if self.tau <= 1.0 or self.epsilon <= 1.0:
            raise ConfigurationError("tau and epsilon must be > 1")
        if self.sigma <= 0.0:
            raise ConfigurationError("sigma must be > 0")
        lo, hi = self.size_clip
        if not (0.0 < lo < hi <= 1.0):
            raise ConfigurationError(f"size_clip must satisfy 0 < lo < hi <= 1, got {self.size_clip}")
        if self.max_resample < 1:
            raise ConfigurationError("max_resample must be >= 1")
        if not (0.0 < self.min_inside_fraction <= 1.0):
            raise ConfigurationError("min_inside_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class GroupSpec:
    """A group center: box center coordinates plus normalized size of the
    original object it was sampled from."""

    x: float
    y: float
    s: float
    source_instance: int


@dataclass
class Patch:
    """A reusable RGBA cutout; alpha is the binary object mask."""

    patch_id: int
    rgba: np.ndarray  # (h, w, 4) uint8
    native_size: float
    category: str = "person"

    def __post_init__(self):
        if self.rgba.ndim != 3 or self.rgba.shape[2] != 4:
            raise InvalidPatchError(f"patch {self.patch_id}: rgba must be (h, w, 4)")
        alpha = self.rgba[:, :, 3]
        if not np.isin(alpha, (0, 255)).all():
            raise InvalidPatchError(f"patch {self.patch_id}: alpha must be binary")
        if not alpha.any():
            raise InvalidPatchError(f"patch {self.patch_id}: empty mask")

    @property
    def mask_bbox(self) -> tuple[int, int, int, int]:
        """Tight (x0, y0, x1, y1) bounds of the mask, exclusive on the right."""
        ys, xs = np.nonzero(self.rgba[:, :, 3])
        return (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)

    @property
    def mask_aspect(self) -> float:
        x0, y0, x1, y1 = self.mask_bbox
        return (x1 - x0) / (y1 - y0)


@dataclass
class PatchLibrary:
    patches: dict[int, Patch] = field(default_factory=dict)
    source: str = ""

    def __post_init__(self):
        for pid, patch in self.patches.items():
            if pid != patch.patch_id:
                raise InvalidPatchError(f"patch key {pid} != patch_id {patch.patch_id}")

    def __len__(self) -> int:
        return len(self.patches)

    def get(self, patch_id: int) -> Patch:
        try:
            return self.patches[patch_id]
        except KeyError:
            raise PatchNotFoundError(f"no patch with id {patch_id}") from None

    @property
    def ordered_ids(self) -> list[int]:
        return sorted(self.patches)


@dataclass(frozen=True)
class ConsensusPair:
    """An overlaid pasted member and its overlap-free re-pasted twin."""

    overlaid_id: int
    free_id: int
    patch_id: int


def normalized_size(bbox: BBox, image_width: float, image_height: float) -> float:
    """sqrt(box area) / sqrt(image area): a linear-scale size in (0, 1]."""
    return math.sqrt(geometry.area(bbox)) / math.sqrt(image_width * image_height)


def sample_group_centers(
    scene: Scene, cfg: SynthesisConfig, rng: np.random.Generator
) -> list[GroupSpec]:
    """Pick up to N distinct original objects as group centers."""
    originals = scene.originals
    count = int(rng.integers(0, cfg.max_groups + 1))
    count = min(count, len(originals))
    if count == 0:
        return []
    chosen = rng.choice(len(originals), size=count, replace=False)
    centers = []
    for idx in chosen:
        inst = originals[int(idx)]
        cx, cy = inst.bbox.center
        centers.append(
            GroupSpec(
                x=cx,
                y=cy,
                s=normalized_size(inst.bbox, scene.image_width, scene.image_height),
                source_instance=inst.id,
            )
        )
    return centers


def sample_member_size(
    s_center: float, cfg: SynthesisConfig, rng: np.random.Generator
) -> float:
    """Gaussian around the center size, rejection-truncated to size_clip."""
    lo, hi = cfg.size_clip
    for _ in range(cfg.max_resample):
        s = float(rng.normal(s_center, cfg.sigma))
        if lo <= s <= hi:
            return s
    return min(max(s_center, lo), hi)


def sample_member_position(
    center: GroupSpec,
    member_w: float,
    member_h: float,
    center_w: float,
    center_h: float,
    cfg: SynthesisConfig,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Uniform offsets that always keep the member overlapping the center.

    d_w and d_h are the largest center shifts at which the two boxes still
    intersect; dividing by tau > 1 and epsilon > 1 keeps the draw strictly
    inside that range.
    """
    d_w = (center_w + member_w) / 2.0
    d_h = (center_h + member_h) / 2.0
    x = float(rng.uniform(center.x - d_w / cfg.tau, center.x + d_w / cfg.tau))
    y = float(rng.uniform(center.y - d_h / cfg.epsilon, center.y + d_h / cfg.epsilon))
    return x, y


def _member_extent(patch: Patch, s: float, image_w: float, image_h: float) -> tuple[float, float]:
    """Box extent (w, h) whose normalized size is s, at the patch's mask aspect."""
    target_area = s * s * image_w * image_h
    aspect = patch.mask_aspect
    h = math.sqrt(target_area / aspect)
    return aspect * h, h


def _inside_fraction(bbox: BBox, image_w: float, image_h: float) -> float:
    frame = BBox(0.0, 0.0, image_w, image_h)
    return geometry.intersection_area(bbox, frame) / geometry.area(bbox)


def synthesize_scene(
    base: Scene,
    lib: PatchLibrary,
    cfg: SynthesisConfig,
    seed: int,
) -> tuple[Scene, list[ConsensusPair]]:
    """Paste crowded groups onto a scene and build consensus pairs.

    The output is fully determined by (base, lib, cfg, seed).  Pasted
    instances carry increasing depth ranks above all originals, overlay-depth
    ground truth and occlusion ratios.  Overlaid members are twinned by an
    identical patch re-pasted with zero overlap against everything; a pair is
    dropped when no clean spot is found within the retry budget.
    """
    W = float(base.image_width)
    H = float(base.image_height)
    rng = np.random.default_rng(seed)

    if cfg.max_groups > 0 and base.originals and len(lib) == 0:
        raise ConfigurationError("patch library is empty but max_groups > 0")

    instances = [
        ObjectInstance(
            id=inst.id,
            bbox=inst.bbox,
            category=inst.category,
            is_pasted=inst.is_pasted,
            depth_rank=inst.depth_rank,
            patch_id=inst.patch_id,
            od_gt=inst.od_gt,
            occlusion_ratio=inst.occlusion_ratio,
        )
        for inst in base.instances
    ]
    next_id = max((inst.id for inst in instances), default=0) + 1
    next_rank = max((inst.depth_rank for inst in instances), default=0) + 1
    patch_ids = lib.ordered_ids

    centers = sample_group_centers(base, cfg, rng)
    members: list[ObjectInstance] = []
    member_sizes: dict[int, float] = {}

    for center in centers:
        source = base.instance(center.source_instance)
        n_members = int(rng.integers(0, cfg.max_members + 1))
        for _ in range(n_members):
            pid = patch_ids[int(rng.integers(len(patch_ids)))]
            patch = lib.get(pid)
            placed = None
            for _ in range(cfg.max_resample):
                s = sample_member_size(center.s, cfg, rng)
                mw, mh = _member_extent(patch, s, W, H)
                mx, my = sample_member_position(
                    center, mw, mh, source.bbox.width, source.bbox.height, cfg, rng
                )
                bbox = BBox(mx - mw / 2, my - mh / 2, mx + mw / 2, my + mh / 2)
                if _inside_fraction(bbox, W, H) >= cfg.min_inside_fraction:
                    placed = (bbox, s)
                    break
            if placed is None:
                continue
            inst = ObjectInstance(
                id=next_id,
                bbox=placed[0],
                category=patch.category,
                is_pasted=True,
                depth_rank=next_rank,
                patch_id=pid,
            )
            member_sizes[next_id] = placed[1]
            next_id += 1
            next_rank += 1
            instances.append(inst)
            members.append(inst)

    scene = Scene(image_width=W, image_height=H, instances=instances, seed=seed)
    for inst in scene.instances:
        inst.occlusion_ratio = geometry.occlusion_ratio(scene, inst.id)
        if inst.is_pasted:
            inst.od_gt = geometry.compute_od(scene, inst.id)

    # overlap-free twins for every overlaid member
    pairs: list[ConsensusPair] = []
    for member in members:
        if not geometry.occluder_set(scene, member.id):
            continue
        mw, mh = member.bbox.width, member.bbox.height
        if mw > W or mh > H:
            continue
        twin_bbox = None
        for _ in range(cfg.max_resample):
            tx = float(rng.uniform(mw / 2, W - mw / 2)) if mw < W else W / 2
            ty = float(rng.uniform(mh / 2, H - mh / 2)) if mh < H else H / 2
            candidate = BBox(tx - mw / 2, ty - mh / 2, tx + mw / 2, ty + mh / 2)
            if all(
                geometry.intersection_area(candidate, other.bbox) == 0.0
                for other in scene.instances
            ):
                twin_bbox = candidate
                break
        if twin_bbox is None:
            continue
        twin = ObjectInstance(
            id=next_id,
            bbox=twin_bbox,
            category=member.category,
            is_pasted=True,
            depth_rank=next_rank,
            patch_id=member.patch_id,
            od_gt=1.0,
            occlusion_ratio=0.0,
        )
        next_id += 1
        next_rank += 1
        scene.instances.append(twin)
        pairs.append(
            ConsensusPair(
                overlaid_id=member.id, free_id=twin.id, patch_id=member.patch_id
            )
        )
    return scene, pairs


def derive_scene_seed(batch_seed: int, image_id: int) -> int:
    """Stable per-image sub-seed so batch parallelism never changes results."""
    ss = np.random.SeedSequence([batch_seed & 0xFFFFFFFFFFFFFFFF, image_id])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def render(scene: Scene, base_image: np.ndarray, lib: PatchLibrary) -> np.ndarray:
    """Composite all pasted patches over a base raster, nearest ascending
    depth rank drawn last (on top)."""
    if base_image.shape[0] != int(scene.image_height) or base_image.shape[1] != int(
        scene.image_width
    ):
        raise InvalidInputError(
            f"base image {base_image.shape[1]}x{base_image.shape[0]} does not match "
            f"scene {int(scene.image_width)}x{int(scene.image_height)}"
        )
    out = base_image.copy()
    for inst in sorted(scene.pasted, key=lambda i: i.depth_rank):
        if inst.patch_id is None:
            raise PatchNotFoundError(f"pasted instance {inst.id} has no patch_id")
        patch = lib.get(inst.patch_id)
        x0p, y0p, x1p, y1p = patch.mask_bbox
        crop = patch.rgba[y0p:y1p, x0p:x1p]
        tw = max(1, int(round(inst.bbox.width)))
        th = max(1, int(round(inst.bbox.height)))
        color = np.asarray(
            Image.fromarray(crop[:, :, :3]).resize((tw, th), Image.BILINEAR)
        )
        alpha = np.asarray(
            Image.fromarray(crop[:, :, 3]).resize((tw, th), Image.NEAREST)
        )
        dx0 = int(round(inst.bbox.x_min))
        dy0 = int(round(inst.bbox.y_min))
        sx0 = max(0, -dx0)
        sy0 = max(0, -dy0)
        ex0 = max(0, dx0)
        ey0 = max(0, dy0)
        w = min(tw - sx0, out.shape[1] - ex0)
        h = min(th - sy0, out.shape[0] - ey0)
        if w <= 0 or h <= 0:
            continue
        mask = alpha[sy0 : sy0 + h, sx0 : sx0 + w] > 0
        region = out[ey0 : ey0 + h, ex0 : ex0 + w]
        region[mask] = color[sy0 : sy0 + h, sx0 : sx0 + w][mask]
    return out
