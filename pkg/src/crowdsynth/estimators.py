"""Scikit-learn style wrappers so the samplers and suppressors compose with
Pipeline / get_params tooling.  They are thin adapters over the functional
core; fit is a no-op beyond validation."""

from __future__ import annotations

from typing import Optional, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from . import evaluation, synthesis
from .geometry import Scene
from .odnms import Detection, NmsConfig, od_nms, standard_nms
from .synthesis import PatchLibrary, SynthesisConfig


class CrowdedCopyPaste(BaseEstimator, TransformerMixin):
    """Transform a list of scenes into their crowd-augmented versions.

    After transform, ``pairs_`` holds the per-scene consensus pairs.
    """

    def __init__(
        self,
        patch_library: Optional[PatchLibrary] = None,
        max_groups: int = 3,
        max_members: int = 5,
        tau: float = 4.0,
        epsilon: float = 2.0,
        sigma: float = 0.2,
        size_clip: tuple = (0.05, 0.9),
        max_resample: int = 20,
        min_inside_fraction: float = 0.5,
        seed: int = 0,
    ):
        self.patch_library = patch_library
        self.max_groups = max_groups
        self.max_members = max_members
        self.tau = tau
        self.epsilon = epsilon
        self.sigma = sigma
        self.size_clip = size_clip
        self.max_resample = max_resample
        self.min_inside_fraction = min_inside_fraction
        self.seed = seed

    def _config(self) -> SynthesisConfig:
        return SynthesisConfig(
            max_groups=self.max_groups,
            max_members=self.max_members,
            tau=self.tau,
            epsilon=self.epsilon,
            sigma=self.sigma,
            size_clip=tuple(self.size_clip),
            max_resample=self.max_resample,
            min_inside_fraction=self.min_inside_fraction,
        )

    def fit(self, X: Sequence[Scene], y=None):
        self._config()  # validate
        return self

    def transform(self, X: Sequence[Scene]) -> list[Scene]:
        cfg = self._config()
        lib = self.patch_library or PatchLibrary()
        out, pairs = [], []
        for i, scene in enumerate(X):
            augmented, scene_pairs = synthesis.synthesize_scene(
                scene, lib, cfg, synthesis.derive_scene_seed(self.seed, i)
            )
            out.append(augmented)
            pairs.append(scene_pairs)
        self.pairs_ = pairs
        return out


class OverlayDepthNms(BaseEstimator, TransformerMixin):
    """Per-image detection de-duplication; plain NMS when use_od=False."""

    def __init__(self, th_iou: float = 0.5, delta: float = 0.001,
                 psi: float = 10.0, use_od: bool = True):
        self.th_iou = th_iou
        self.delta = delta
        self.psi = psi
        self.use_od = use_od

    def fit(self, X, y=None):
        self._config()
        return self

    def _config(self) -> NmsConfig:
        return NmsConfig(th_iou=self.th_iou, delta=self.delta, psi=self.psi)

    def transform(self, X: Sequence[Sequence[Detection]]) -> list[list[Detection]]:
        cfg = self._config()
        if self.use_od:
            return [od_nms(dets, cfg) for dets in X]
        return [standard_nms(dets, cfg.th_iou) for dets in X]


class DetectionSimulator(BaseEstimator, TransformerMixin):
    """Stand-in detector: scenes in, per-image detection lists out."""

    def __init__(self, proposals_per_object: int = 3, iou_low: float = 0.5,
                 score_slope: float = 1.0, score_bias: float = 0.0,
                 noise_base: float = 0.0, noise_occ: float = 0.0,
                 duplicate_rate: float = 0.0, od_noise: float = 0.0,
                 seed: int = 0):
        self.proposals_per_object = proposals_per_object
        self.iou_low = iou_low
        self.score_slope = score_slope
        self.score_bias = score_bias
        self.noise_base = noise_base
        self.noise_occ = noise_occ
        self.duplicate_rate = duplicate_rate
        self.od_noise = od_noise
        self.seed = seed

    def _config(self) -> evaluation.SimConfig:
        return evaluation.SimConfig(
            proposals_per_object=self.proposals_per_object,
            iou_low=self.iou_low,
            score_slope=self.score_slope,
            score_bias=self.score_bias,
            noise_base=self.noise_base,
            noise_occ=self.noise_occ,
            duplicate_rate=self.duplicate_rate,
            od_noise=self.od_noise,
            seed=self.seed,
        )

    def fit(self, X: Sequence[Scene], y=None):
        self._config()
        return self

    def transform(self, X: Sequence[Scene]) -> list[list[Detection]]:
        cfg = self._config()
        out = []
        for i, scene in enumerate(X):
            dets, _ = evaluation.simulate_detections(
                scene, cfg, rng=evaluation.derive_sim_rng(cfg, i)
            )
            out.append(dets)
        return out
