import math

import numpy as np
import pytest

from crowdsynth.errors import ConfigurationError, InvalidInputError
from crowdsynth.geometry import BBox, iou
from crowdsynth.odnms import (
    Detection,
    NmsConfig,
    od_nms,
    od_nms_indices,
    od_threshold,
    standard_nms,
    standard_nms_indices,
)


def naive_nms(dets, th_iou, cfg=None):
    """Straightforward reference: python greedy loop, scalar box arithmetic."""
    boxes = [(d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max) for d in dets]
    areas = [(b[2] - b[0]) * (b[3] - b[1]) for b in boxes]
    ods = [d.od for d in dets]
    remaining = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept = []
    while remaining:
        m = remaining.pop(0)
        kept.append(m)
        mx0, my0, mx1, my1 = boxes[m]
        survivors = []
        for i in remaining:
            bx0, by0, bx1, by1 = boxes[i]
            w = min(mx1, bx1) - max(mx0, bx0)
            h = min(my1, by1) - max(my0, by0)
            v = w * h / (areas[m] + areas[i] - w * h) if w > 0 and h > 0 else 0.0
            if cfg is None:
                suppress = v >= th_iou
            else:
                th_od = cfg.delta * math.exp(cfg.psi * v)
                suppress = v >= cfg.th_iou and abs(ods[i] - ods[m]) <= th_od
            if not suppress:
                survivors.append(i)
        remaining = survivors
    return kept


def random_dets(rng, n, spread=60):
    dets = []
    for _ in range(n):
        x = rng.uniform(0, spread)
        y = rng.uniform(0, spread)
        w = rng.uniform(2, 30)
        h = rng.uniform(2, 30)
        dets.append(
            Detection(
                bbox=BBox(x, y, x + w, y + h),
                score=float(rng.uniform()),
                od=float(rng.uniform(1.0, 4.0)),
            )
        )
    return dets


class TestDetection:
    def test_score_range_enforced(self):
        with pytest.raises(InvalidInputError):
            Detection(bbox=BBox(0, 0, 1, 1), score=1.5)

    def test_config_invariants(self):
        with pytest.raises(ConfigurationError):
            NmsConfig(delta=0.0)
        with pytest.raises(ConfigurationError):
            NmsConfig(th_iou=1.5)


class TestStandardNms:
    def test_single_kept(self):
        d = [Detection(BBox(0, 0, 10, 10), 0.7)]
        assert standard_nms(d, 0.5) == d

    def test_disjoint_both_kept(self):
        d = [Detection(BBox(0, 0, 10, 10), 0.7), Detection(BBox(50, 50, 60, 60), 0.6)]
        assert len(standard_nms(d, 0.5)) == 2

    def test_heavy_overlap_suppressed(self):
        d = [
            Detection(BBox(0, 0, 10, 10), 0.9),
            Detection(BBox(0, 0, 10, 9), 0.8),  # IoU 0.9
        ]
        kept = standard_nms(d, 0.5)
        assert kept == [d[0]]

    def test_empty(self):
        assert standard_nms([], 0.5) == []

    def test_tie_broken_by_input_index(self):
        d = [
            Detection(BBox(0, 0, 10, 10), 0.8),
            Detection(BBox(0, 0, 10, 10), 0.8),
        ]
        assert standard_nms_indices(d, 0.5) == [0]

    def test_output_sorted_subsequence(self):
        rng = np.random.default_rng(3)
        d = random_dets(rng, 50)
        idx = standard_nms_indices(d, 0.5)
        scores = [d[i].score for i in idx]
        assert scores == sorted(scores, reverse=True)
        assert len(set(idx)) == len(idx)

    def test_pairwise_guarantee(self):
        rng = np.random.default_rng(4)
        d = random_dets(rng, 80)
        idx = standard_nms_indices(d, 0.5)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                assert iou(d[idx[a]].bbox, d[idx[b]].bbox) < 0.5

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        d = random_dets(rng, 60)
        kept = standard_nms(d, 0.5)
        assert standard_nms(kept, 0.5) == kept


class TestOdThreshold:
    def test_zero_iou(self):
        assert od_threshold(0.0, NmsConfig()) == pytest.approx(0.001)

    def test_exponential_values(self):
        cfg = NmsConfig()
        assert od_threshold(0.6, cfg) == pytest.approx(0.001 * math.exp(6), abs=1e-5)
        assert od_threshold(0.6, cfg) == pytest.approx(0.40343, abs=1e-5)
        assert od_threshold(1.0, cfg) == pytest.approx(22.026, abs=1e-3)


def two_overlapping_dets(target_iou, od_a, od_b, scores=(0.9, 0.8)):
    """Two 10x10 boxes translated along x to an exact IoU."""
    d = 10.0 * (1 - target_iou) / (1 + target_iou)
    return [
        Detection(BBox(0, 0, 10, 10), scores[0], od_a),
        Detection(BBox(d, 0, 10 + d, 10), scores[1], od_b),
    ]


class TestOdNms:
    def test_equal_ods_match_standard(self):
        rng = np.random.default_rng(11)
        dets = [
            Detection(d.bbox, d.score, 1.5) for d in random_dets(rng, 70)
        ]
        assert od_nms_indices(dets, NmsConfig()) == standard_nms_indices(dets, 0.5)

    def test_large_depth_gap_cancels_suppression(self):
        dets = two_overlapping_dets(0.6, 1.0, 2.2)
        assert len(od_nms(dets, NmsConfig())) == 2

    def test_small_depth_gap_suppresses(self):
        dets = two_overlapping_dets(0.6, 1.0, 1.2)
        kept = od_nms(dets, NmsConfig())
        assert kept == [dets[0]]

    def test_huge_delta_reduces_to_standard(self):
        rng = np.random.default_rng(12)
        dets = random_dets(rng, 100)
        cfg = NmsConfig(delta=1e9)
        assert od_nms_indices(dets, cfg) == standard_nms_indices(dets, 0.5)

    def test_pairwise_guarantee(self):
        rng = np.random.default_rng(13)
        dets = random_dets(rng, 80)
        cfg = NmsConfig()
        idx = od_nms_indices(dets, cfg)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                v = iou(dets[idx[a]].bbox, dets[idx[b]].bbox)
                th_od = od_threshold(v, cfg)
                assert not (
                    v >= cfg.th_iou
                    and abs(dets[idx[b]].od - dets[idx[a]].od) <= th_od
                )

    def test_idempotent(self):
        rng = np.random.default_rng(14)
        dets = random_dets(rng, 60)
        cfg = NmsConfig()
        kept = od_nms(dets, cfg)
        assert od_nms(kept, cfg) == kept


class TestAgainstNaiveReference:
    def test_standard_matches_reference(self):
        rng = np.random.default_rng(21)
        for _ in range(300):
            dets = random_dets(rng, int(rng.integers(0, 60)))
            th = float(rng.uniform(0.2, 0.8))
            assert standard_nms_indices(dets, th) == naive_nms(dets, th)

    def test_od_matches_reference(self):
        rng = np.random.default_rng(22)
        for _ in range(300):
            dets = random_dets(rng, int(rng.integers(0, 60)))
            cfg = NmsConfig(
                th_iou=float(rng.uniform(0.2, 0.8)),
                delta=float(rng.uniform(1e-4, 1e-2)),
                psi=float(rng.uniform(5, 15)),
            )
            assert od_nms_indices(dets, cfg) == naive_nms(dets, cfg.th_iou, cfg)
