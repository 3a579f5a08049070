"""MarginMSE-style ranking losses as plain functions (no gradients)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from planahead.errors import ValidationError
from planahead.rq_codebook import CodebookSet
from planahead.scorer import QueryEncoding, ScorerConfig, prefix_score


@dataclass(frozen=True)
class TripletScores:
    pos_score: float
    neg_score: float
    teacher_margin: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.pos_score, self.neg_score, self.teacher_margin)):
            raise ValidationError("triplet scores must be finite")


@dataclass(frozen=True)
class PrefixWeightSchedule:
    """Prefix lengths to supervise and the teacher-margin weight of each."""

    weights: Mapping[int, float]
    L: int

    def __post_init__(self):
        weights = {int(i): float(a) for i, a in self.weights.items()}
        if self.L not in weights:
            raise ValidationError(f"schedule must include the full length L={self.L}")
        if weights[self.L] != 1.0:
            raise ValidationError("the weight at full length must be 1")
        lengths = sorted(weights)
        if lengths[0] < 1 or lengths[-1] > self.L:
            raise ValidationError(f"prefix lengths must lie in [1, {self.L}]")
        alphas = [weights[i] for i in lengths]
        if any(not 0.0 <= a <= 1.0 for a in alphas):
            raise ValidationError("weights must lie in [0, 1]")
        if any(a > b for a, b in zip(alphas, alphas[1:])):
            raise ValidationError("weights must be non-decreasing in prefix length")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def interpolated(cls, lengths, L: int) -> "PrefixWeightSchedule":
        """Schedule with ``alpha_i = i / L`` for every requested length."""
        return cls({i: i / L for i in set(lengths) | {L}}, L)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(sorted(self.weights))


def margin_mse(ts: TripletScores) -> float:
    return (ts.pos_score - ts.neg_score - ts.teacher_margin) ** 2


def prefix_margin_mse(pos_prefix_score: float, neg_prefix_score: float, teacher_margin: float, alpha_i: float) -> float:
    if not 0.0 <= alpha_i <= 1.0:
        raise ValidationError(f"alpha_i must lie in [0, 1], got {alpha_i}")
    return (pos_prefix_score - neg_prefix_score - alpha_i * teacher_margin) ** 2


def multi_objective_seq_loss(
    q: QueryEncoding,
    pos_id,
    neg_id,
    cb: CodebookSet,
    cfg: ScorerConfig,
    schedule: PrefixWeightSchedule,
    margin: float,
) -> float:
    """Sum of prefix losses over every length in the schedule."""
    if schedule.L != cb.levels:
        raise ValidationError(f"schedule is for L={schedule.L}, codebooks have L={cb.levels}")
    pos = cb.check_codes(pos_id)
    neg = cb.check_codes(neg_id)
    total = 0.0
    for i in schedule.lengths:
        total += prefix_margin_mse(
            prefix_score(q, pos[:i], cb, cfg),
            prefix_score(q, neg[:i], cb, cfg),
            margin,
            schedule.weights[i],
        )
    return total


def unified_loss(set_triplet: TripletScores, seq_loss: float) -> float:
    if not math.isfinite(seq_loss):
        raise ValidationError("seq_loss must be finite")
    return margin_mse(set_triplet) + seq_loss
