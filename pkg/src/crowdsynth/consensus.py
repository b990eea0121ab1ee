"""Proposal-score statistics and the loss arithmetic of consensus learning.

These are pure arithmetic helpers; how proposals get matched to objects is
the caller's business (the eval simulator uses max-IoU matching with a 0.5
floor).  The standard deviation is the population one (divisor m), exactly
as the score statistics are defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import InvalidInputError


@dataclass(frozen=True)
class ProposalScores:
    """Confidence scores of the proposals matched to one object."""

    object_id: int
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.scores) == 0:
            raise InvalidInputError("proposal score set must be non-empty")
        for s in self.scores:
            if not (0.0 <= s <= 1.0):
                raise InvalidInputError(f"score {s} outside [0, 1]")


@dataclass(frozen=True)
class ScoreStats:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise InvalidInputError("sigma must be non-negative")


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the combined detection loss."""

    alpha: float = 1.0
    gamma: float = 1.0
    eta: float = 0.1

    def __post_init__(self):
        for name in ("alpha", "gamma", "eta"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise InvalidInputError(f"{name} must be finite and >= 0, got {v}")


def score_stats(p: ProposalScores) -> ScoreStats:
    """Population mean and standard deviation of a proposal score set."""
    m = len(p.scores)
    mu = sum(p.scores) / m
    var = sum((c - mu) ** 2 for c in p.scores) / m
    return ScoreStats(mu=mu, sigma=math.sqrt(var))


def consensus_loss(pairs: Sequence[tuple[ScoreStats, ScoreStats]]) -> float:
    """MSE between overlaid and overlap-free score statistics, averaged over pairs.

    The second element of each pair (the free twin) is the target; no
    gradient semantics at this layer.
    """
    if len(pairs) == 0:
        raise InvalidInputError("consensus_loss needs at least one pair")
    total = 0.0
    for overlaid, free in pairs:
        total += (overlaid.mu - free.mu) ** 2 + (overlaid.sigma - free.sigma) ** 2
    return total / len(pairs)


def od_loss(pred: Sequence[float], gt: Sequence[float]) -> float:
    """L2 (mean squared error) loss for overlay-depth regression."""
    if len(pred) == 0 or len(pred) != len(gt):
        raise InvalidInputError(
            f"pred and gt must be non-empty and equal length, got {len(pred)}/{len(gt)}"
        )
    return sum((p - g) ** 2 for p, g in zip(pred, gt)) / len(pred)


def combined_loss(
    l_cls_reg: float,
    l_cl: float,
    l_od: Optional[float] = None,
    w: LossWeights = LossWeights(),
) -> float:
    """Weighted total loss; the depth term enters only when its label exists."""
    for name, v in (("l_cls_reg", l_cls_reg), ("l_cl", l_cl), ("l_od", l_od)):
        if v is not None and (not math.isfinite(v) or v < 0.0):
            raise InvalidInputError(f"{name} must be finite and >= 0, got {v}")
    total = w.alpha * l_cls_reg + w.gamma * l_cl
    if l_od is not None:
        total += w.eta * l_od
    return total
