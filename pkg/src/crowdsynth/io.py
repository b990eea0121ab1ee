"""Canonical on-disk formats: annotations, detections, patch libraries, CSV.

JSON documents are written with sorted keys, compact separators and floats
rounded to 6 decimals, so save -> load -> save is byte-identical and
determinism claims extend to artifacts on disk.  Boxes are stored COCO-style
as [x, y, w, h] and converted to corner form in memory.  Saves are atomic
(temp file + rename).
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import (
    IntegrityError,
    InvalidPatchError,
    ParseError,
    PatchNotFoundError,
    SchemaError,
)
from .geometry import BBox, ObjectInstance, Scene
from .odnms import Detection
from .synthesis import Patch, PatchLibrary

FORMAT_VERSION = 1


def _round_floats(obj: Any) -> Any:
    if isinstance(obj, float):
        return round(obj, 6)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def canonical_dumps(doc: Any) -> str:
    return json.dumps(_round_floats(doc), sort_keys=True, separators=(",", ":")) + "\n"


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require(mapping: dict, key: str, context: str) -> Any:
    if key not in mapping:
        raise SchemaError(f"{context}: missing required field '{key}'")
    return mapping[key]


def _load_json(path: str | Path) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e


def scenes_to_document(
    scenes: Sequence[Scene],
    image_ids: Optional[Sequence[int]] = None,
    synthesis_meta: Optional[dict] = None,
) -> dict:
    if image_ids is None:
        image_ids = list(range(len(scenes)))
    images = []
    annotations = []
    ann_id = 1
    for img_id, scene in zip(image_ids, scenes):
        images.append(
            {
                "id": img_id,
                "width": scene.image_width,
                "height": scene.image_height,
                "seed": scene.seed,
            }
        )
        for inst in scene.instances:
            b = inst.bbox
            entry = {
                "id": ann_id,
                "image_id": img_id,
                "bbox": [b.x_min, b.y_min, b.width, b.height],
                "category": inst.category,
                "is_pasted": inst.is_pasted,
                "depth_rank": inst.depth_rank,
                "instance_id": inst.id,
            }
            if inst.od_gt is not None:
                entry["od"] = inst.od_gt
            if inst.occlusion_ratio is not None:
                entry["occlusion_ratio"] = inst.occlusion_ratio
            if inst.patch_id is not None:
                entry["patch_id"] = inst.patch_id
            annotations.append(entry)
            ann_id += 1
    doc = {
        "format_version": FORMAT_VERSION,
        "images": images,
        "annotations": annotations,
    }
    if synthesis_meta is not None:
        doc["synthesis"] = synthesis_meta
    return doc


def document_to_scenes(doc: dict, context: str = "annotations") -> tuple[list[Scene], list[int]]:
    images = _require(doc, "images", context)
    anns = _require(doc, "annotations", context)
    by_image: dict[int, list[ObjectInstance]] = {}
    image_meta: dict[int, dict] = {}
    for img in images:
        img_id = _require(img, "id", f"{context}.images")
        image_meta[img_id] = img
        by_image[img_id] = []
    for ann in anns:
        ann_id = _require(ann, "id", f"{context}.annotations")
        img_id = _require(ann, "image_id", f"{context}.annotations[{ann_id}]")
        if img_id not in image_meta:
            raise IntegrityError(
                f"{context}: annotation {ann_id} references unknown image_id {img_id}"
            )
        x, y, w, h = _require(ann, "bbox", f"{context}.annotations[{ann_id}]")
        if w <= 0 or h <= 0:
            raise SchemaError(
                f"{context}: annotation {ann_id} has non-positive bbox size {w}x{h}"
            )
        inst = ObjectInstance(
            id=ann.get("instance_id", ann_id),
            bbox=BBox(x, y, x + w, y + h),
            category=ann.get("category", "object"),
            is_pasted=ann.get("is_pasted", False),
            depth_rank=ann.get("depth_rank", 0),
            patch_id=ann.get("patch_id"),
            od_gt=ann.get("od"),
            occlusion_ratio=ann.get("occlusion_ratio"),
        )
        by_image[img_id].append(inst)
    scenes = []
    ids = sorted(image_meta)
    for img_id in ids:
        meta = image_meta[img_id]
        scenes.append(
            Scene(
                image_width=_require(meta, "width", f"{context}.images[{img_id}]"),
                image_height=_require(meta, "height", f"{context}.images[{img_id}]"),
                instances=by_image[img_id],
                seed=meta.get("seed", 0),
            )
        )
    return scenes, ids


def save_annotations(
    scenes: Sequence[Scene],
    path: str | Path,
    image_ids: Optional[Sequence[int]] = None,
    synthesis_meta: Optional[dict] = None,
) -> None:
    atomic_write_text(path, canonical_dumps(scenes_to_document(scenes, image_ids, synthesis_meta)))


def load_annotations(path: str | Path) -> tuple[list[Scene], list[int]]:
    return document_to_scenes(_load_json(path), context=str(path))


def detections_to_document(per_image: dict[int, Sequence[Detection]]) -> dict:
    out = {}
    for img_id, dets in per_image.items():
        out[str(img_id)] = [
            {
                "bbox": [d.bbox.x_min, d.bbox.y_min, d.bbox.width, d.bbox.height],
                "score": d.score,
                "od": d.od,
            }
            for d in dets
        ]
    return {"format_version": FORMAT_VERSION, "detections": out}


def document_to_detections(doc: dict, context: str = "detections") -> dict[int, list[Detection]]:
    dets = _require(doc, "detections", context)
    out: dict[int, list[Detection]] = {}
    for img_key, rows in dets.items():
        lst = []
        for i, row in enumerate(rows):
            x, y, w, h = _require(row, "bbox", f"{context}[{img_key}][{i}]")
            lst.append(
                Detection(
                    bbox=BBox(x, y, x + w, y + h),
                    score=_require(row, "score", f"{context}[{img_key}][{i}]"),
                    od=row.get("od", 0.0),
                )
            )
        out[int(img_key)] = lst
    return out


def save_detections(per_image: dict[int, Sequence[Detection]], path: str | Path) -> None:
    atomic_write_text(path, canonical_dumps(detections_to_document(per_image)))


def load_detections(path: str | Path) -> dict[int, list[Detection]]:
    return document_to_detections(_load_json(path), context=str(path))


def load_patch_library(directory: str | Path) -> PatchLibrary:
    """Load a manifest + RGBA PNG directory; alpha binarized at 128."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise PatchNotFoundError(f"no manifest.json in {directory}")
    manifest = _load_json(manifest_path)
    patches: dict[int, Patch] = {}
    for key, meta in _require(manifest, "patches", str(manifest_path)).items():
        pid = int(key)
        fname = _require(meta, "file", f"{manifest_path}.patches[{key}]")
        fpath = directory / fname
        if not fpath.exists():
            raise PatchNotFoundError(f"patch {pid}: file {fpath} not found")
        rgba = np.asarray(Image.open(fpath).convert("RGBA")).copy()
        rgba[:, :, 3] = np.where(rgba[:, :, 3] >= 128, 255, 0)
        if not rgba[:, :, 3].any():
            raise InvalidPatchError(f"patch {pid}: mask is empty after binarization")
        patches[pid] = Patch(
            patch_id=pid,
            rgba=rgba,
            native_size=_require(meta, "native_size", f"{manifest_path}.patches[{key}]"),
            category=meta.get("category", "object"),
        )
    return PatchLibrary(patches=patches, source=manifest.get("source", str(directory)))


def save_patch_library(lib: PatchLibrary, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, Any] = {"source": lib.source, "count": len(lib), "patches": {}}
    for pid in lib.ordered_ids:
        patch = lib.get(pid)
        fname = f"patch_{pid:05d}.png"
        Image.fromarray(patch.rgba).save(directory / fname)
        manifest["patches"][str(pid)] = {
            "file": fname,
            "native_size": patch.native_size,
            "category": patch.category,
        }
    atomic_write_text(directory / "manifest.json", canonical_dumps(manifest))


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)
