"""Command line surface: synthesize, render, suppress, simulate, report.

Precedence: built-in defaults < --config file < explicit command-line flags.
Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import evaluation, io, synthesis
from .errors import CrowdSynthError
from .evaluation import SimConfig
from .odnms import Detection, NmsConfig, od_nms_indices, standard_nms_indices
from .synthesis import SynthesisConfig


def _fail_runtime(e: Exception) -> "click.ClickException":
    exc = click.ClickException(str(e))
    exc.exit_code = 1
    return exc


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise click.UsageError(f"--config {path}: expected a JSON object")
    return data


def _build(cls, section: dict, overrides: dict):
    """Merge config-file section with explicit CLI overrides (flags win)."""
    known = {f.name for f in dataclasses.fields(cls)}
    for key in section:
        if key not in known:
            raise click.UsageError(f"--config: unknown {cls.__name__} field '{key}'")
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**merged)
    except CrowdSynthError as e:
        raise click.UsageError(str(e))


def _jobs_option(f):
    return click.option(
        "--jobs",
        type=int,
        default=lambda: int(os.environ.get("CROWDSYNTH_JOBS", "1")),
        help="Worker processes; never changes any output byte.",
    )(f)


@click.group()
def main():
    """Crowded-scene synthesis, overlay-depth labels, and depth-aware NMS."""


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--patches", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--pairs-out", type=click.Path(dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--max-groups", type=int, default=None, help="Override N.")
@click.option("--max-members", type=int, default=None, help="Override M.")
@click.option("--tau", type=float, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--sigma", type=float, default=None)
@_jobs_option
def synth(in_path, patches, out_path, pairs_out, seed, config_path, max_groups,
          max_members, tau, epsilon, sigma, jobs):
    """Augment annotations with crowded copy-paste groups and consensus pairs."""
    cfg = _build(
        SynthesisConfig,
        _load_config_file(config_path).get("synthesis", {}),
        {"max_groups": max_groups, "max_members": max_members, "tau": tau,
         "epsilon": epsilon, "sigma": sigma},
    )
    try:
        scenes, image_ids = io.load_annotations(in_path)
        lib = io.load_patch_library(patches) if patches else synthesis.PatchLibrary()
        results = _run_parallel(
            functools.partial(_synth_job, lib=lib, cfg=cfg, seed=seed),
            list(zip(scenes, image_ids)),
            jobs,
            patches,
        )
        out_scenes = [r[0] for r in results]
        meta = {"seed": seed, "config": dataclasses.asdict(cfg)}
        io.save_annotations(out_scenes, out_path, image_ids=image_ids, synthesis_meta=meta)
        if pairs_out:
            doc = {
                "pairs": {
                    str(img_id): [dataclasses.asdict(p) for p in r[1]]
                    for img_id, r in zip(image_ids, results)
                }
            }
            io.atomic_write_text(pairs_out, io.canonical_dumps(doc))
    except CrowdSynthError as e:
        raise _fail_runtime(e)


def _synth_job(item, lib, cfg, seed):
    scene, img_id = item
    return synthesis.synthesize_scene(
        scene, lib, cfg, synthesis.derive_scene_seed(seed, img_id)
    )


def _run_parallel(fn, items, jobs, _patches_hint=None):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--patches", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--image-id", type=int, default=None, help="Image to render (default: first).")
@click.option("--base", "base_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Base raster; a mid-gray canvas when omitted.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def render(in_path, patches, image_id, base_path, out_path):
    """Composite a synthesized scene's pasted patches into a PNG."""
    from PIL import Image

    try:
        scenes, ids = io.load_annotations(in_path)
        if image_id is None:
            image_id = ids[0]
        if image_id not in ids:
            raise _fail_runtime(CrowdSynthError(f"image_id {image_id} not in {in_path}"))
        scene = scenes[ids.index(image_id)]
        lib = io.load_patch_library(patches)
        if base_path:
            base = np.asarray(Image.open(base_path).convert("RGB"))
        else:
            base = np.full(
                (int(scene.image_height), int(scene.image_width), 3), 128, np.uint8
            )
        out = synthesis.render(scene, base, lib)
        Image.fromarray(out).save(out_path)
    except CrowdSynthError as e:
        raise _fail_runtime(e)


def _positive(name):
    def check(ctx, param, value):
        if value is not None and value <= 0:
            raise click.UsageError(f"--{name}: must satisfy {name} > 0")
        return value
    return check


def _nms_io(dets_path, out_path, indices_out, th_iou, keep_fn):
    per_image = io.load_detections(dets_path)
    kept_doc: dict[int, list[Detection]] = {}
    idx_doc: dict[str, list[int]] = {}
    for img_id in sorted(per_image):
        idx = keep_fn(per_image[img_id])
        kept_doc[img_id] = [per_image[img_id][i] for i in idx]
        idx_doc[str(img_id)] = idx
    io.save_detections(kept_doc, out_path)
    if indices_out:
        io.atomic_write_text(indices_out, io.canonical_dumps({"kept": idx_doc}))


@main.command()
@click.option("--dets", "dets_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--th-iou", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--indices-out", type=click.Path(dir_okay=False), default=None)
def nms(dets_path, th_iou, out_path, indices_out):
    """Plain greedy NMS over a detection file."""
    if not (0.0 < th_iou < 1.0):
        raise click.UsageError("--th-iou: must satisfy 0 < th_iou < 1")
    try:
        _nms_io(dets_path, out_path, indices_out, th_iou,
                lambda d: standard_nms_indices(d, th_iou))
    except CrowdSynthError as e:
        raise _fail_runtime(e)


@main.command()
@click.option("--dets", "dets_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--th-iou", type=float, default=0.5, show_default=True)
@click.option("--delta", type=float, default=0.001, show_default=True,
              callback=_positive("delta"))
@click.option("--psi", type=float, default=10.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--indices-out", type=click.Path(dir_okay=False), default=None)
def odnms(dets_path, th_iou, delta, psi, out_path, indices_out):
    """Overlay-depth-aware NMS over a detection file."""
    if not (0.0 < th_iou < 1.0):
        raise click.UsageError("--th-iou: must satisfy 0 < th_iou < 1")
    cfg = NmsConfig(th_iou=th_iou, delta=delta, psi=psi)
    try:
        _nms_io(dets_path, out_path, indices_out, th_iou,
                lambda d: od_nms_indices(d, cfg))
    except CrowdSynthError as e:
        raise _fail_runtime(e)


def _sim_options(f):
    for name, typ in [
        ("--proposals", int), ("--iou-low", float), ("--score-slope", float),
        ("--score-bias", float), ("--noise-base", float), ("--noise-occ", float),
        ("--duplicate-rate", float), ("--od-noise", float),
    ]:
        f = click.option(name, type=typ, default=None)(f)
    return f


def _sim_config(config_path, seed, proposals, iou_low, score_slope, score_bias,
                noise_base, noise_occ, duplicate_rate, od_noise):
    return _build(
        SimConfig,
        _load_config_file(config_path).get("sim", {}),
        {
            "proposals_per_object": proposals, "iou_low": iou_low,
            "score_slope": score_slope, "score_bias": score_bias,
            "noise_base": noise_base, "noise_occ": noise_occ,
            "duplicate_rate": duplicate_rate, "od_noise": od_noise,
            "seed": seed,
        },
    )


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@_sim_options
def simulate(in_path, out_path, seed, config_path, **sim_kwargs):
    """Generate synthetic detections for annotated scenes."""
    sim = _sim_config(config_path, seed, **_sim_kwargs_order(sim_kwargs))
    try:
        scenes, ids = io.load_annotations(in_path)
        per_image = {}
        for i, (scene, img_id) in enumerate(zip(scenes, ids)):
            dets, _ = evaluation.simulate_detections(
                scene, sim, rng=evaluation.derive_sim_rng(sim, i)
            )
            per_image[img_id] = dets
        io.save_detections(per_image, out_path)
    except CrowdSynthError as e:
        raise _fail_runtime(e)


def _sim_kwargs_order(kw):
    return {
        "proposals": kw["proposals"], "iou_low": kw["iou_low"],
        "score_slope": kw["score_slope"], "score_bias": kw["score_bias"],
        "noise_base": kw["noise_base"], "noise_occ": kw["noise_occ"],
        "duplicate_rate": kw["duplicate_rate"], "od_noise": kw["od_noise"],
    }


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@_sim_options
def icd(in_path, out_path, svg_path, seed, config_path, **sim_kwargs):
    """IoU/confidence histogram report (CSV, optional SVG)."""
    sim = _sim_config(config_path, seed, **_sim_kwargs_order(sim_kwargs))
    try:
        scenes, _ = io.load_annotations(in_path)
        hist, summary = evaluation.run_icd_experiment(scenes, sim)
        rows = []
        for band in range(3):
            for b in range(evaluation.N_BINS):
                rows.append([
                    band, b, b / 100.0, int(hist.counts[band, b]),
                    "" if hist.counts[band, b] == 0 else round(float(hist.means[band, b]), 6),
                    "" if hist.counts[band, b] == 0 else round(float(hist.stds[band, b]), 6),
                ])
        io.write_csv(out_path, ["band", "bin", "iou_lo", "count", "mean", "std"], rows)
        click.echo("band_avg_std: " + ", ".join(f"{v:.6f}" for v in summary["band_avg_std"]))
        if svg_path:
            _plot_icd(hist, svg_path)
    except CrowdSynthError as e:
        raise _fail_runtime(e)


def _plot_icd(hist, svg_path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    x = (np.arange(evaluation.N_BINS) + 0.5) / 100.0
    for band, label in enumerate(["occ 0-0.33", "occ 0.33-0.66", "occ 0.66-1"]):
        mask = hist.counts[band] > 0
        ax.plot(x[mask], hist.stds[band][mask], label=label)
    ax.set_xlabel("IoU")
    ax.set_ylabel("score std")
    ax.legend()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)


@main.command(name="eval")
@click.option("--dets", "dets_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--iou-th", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def eval_cmd(dets_path, gt_path, iou_th, out_path):
    """AP (all-point PR integration) and MR^-2 for a detection file."""
    try:
        scenes, ids = io.load_annotations(gt_path)
        per_image = io.load_detections(dets_path)
        dets = [per_image.get(img_id, []) for img_id in ids]
        ap = evaluation.average_precision(dets, scenes, iou_th)
        mr = evaluation.mr2(dets, scenes, iou_th)
        click.echo(f"AP@{iou_th:g} (all-point): {ap:.6f}")
        click.echo(f"MR^-2@{iou_th:g}: {mr:.6f}")
        if out_path:
            io.write_csv(out_path, ["metric", "iou_th", "value"],
                         [["ap_all_point", iou_th, round(ap, 6)],
                          ["mr2", iou_th, round(mr, 6)]])
    except CrowdSynthError as e:
        raise _fail_runtime(e)


@main.command(name="recall-exp")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--th-iou", type=float, default=0.5, show_default=True)
@click.option("--delta", type=float, default=0.001, show_default=True,
              callback=_positive("delta"))
@click.option("--psi", type=float, default=10.0, show_default=True)
@_sim_options
def recall_exp(in_path, out_path, svg_path, seed, config_path, th_iou, delta, psi, **sim_kwargs):
    """Plain vs depth-aware NMS on identical simulated detections."""
    sim = _sim_config(config_path, seed, **_sim_kwargs_order(sim_kwargs))
    nms_cfg = _build(NmsConfig, _load_config_file(config_path).get("nms", {}),
                     {"th_iou": th_iou, "delta": delta, "psi": psi})
    try:
        scenes, _ = io.load_annotations(in_path)
        report = evaluation.run_recall_experiment(scenes, sim, nms_cfg)
        io.write_csv(out_path, ["metric", "value"],
                     [[k, round(v, 6)] for k, v in sorted(report.items())])
        for k in sorted(report):
            click.echo(f"{k}: {report[k]:.6f}")
        if svg_path:
            _plot_recall(report, svg_path)
    except CrowdSynthError as e:
        raise _fail_runtime(e)


def _plot_recall(report, svg_path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    keys = ["recall_nms", "recall_odnms", "ap_nms", "ap_odnms"]
    ax.bar(keys, [report[k] for k in keys])
    ax.set_ylabel("value")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)


if __name__ == "__main__":
    main()
