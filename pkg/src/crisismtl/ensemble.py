"""Merge the runs of several multi-task learners into one run."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import RunRecord
from .errors import ValidationError
from .ontology import PriorityLevel, priority_to_score, score_to_priority


class TypeStrategy(str, enum.Enum):
    UNION = "union"
    INTERSECTION = "intersection"


class PriorityStrategy(str, enum.Enum):
    HIGHEST = "highest"
    AVERAGE = "average"
    LOWEST = "lowest"


@dataclass(frozen=True)
class EnsembleConfig:
    type_strategy: TypeStrategy = TypeStrategy.UNION
    priority_strategy: PriorityStrategy = PriorityStrategy.HIGHEST


def merge_info_types(member_sets: Sequence[frozenset], strategy: TypeStrategy) -> frozenset:
    if not member_sets:
        raise ValidationError("need at least one member")
    if TypeStrategy(strategy) is TypeStrategy.UNION:
        return frozenset().union(*member_sets)
    return frozenset(member_sets[0]).intersection(*member_sets[1:])


def merge_priority(member_levels: Sequence[PriorityLevel], strategy: PriorityStrategy) -> PriorityLevel:
    if not member_levels:
        raise ValidationError("need at least one member")
    strategy = PriorityStrategy(strategy)
    if strategy is PriorityStrategy.HIGHEST:
        return max(member_levels)
    if strategy is PriorityStrategy.LOWEST:
        return min(member_levels)
    mean = math.fsum(priority_to_score(lv) for lv in member_levels) / len(member_levels)
    return score_to_priority(mean)


def _merge_scores(scores, strategy: PriorityStrategy) -> float:
    if strategy is PriorityStrategy.HIGHEST:
        return max(scores)
    if strategy is PriorityStrategy.LOWEST:
        return min(scores)
    # fsum is exactly rounded, hence independent of member order
    return math.fsum(scores) / len(scores)


def ensemble_runs(members: Sequence[Sequence[RunRecord]], config: EnsembleConfig = EnsembleConfig()) -> list[RunRecord]:
    """Per tweet: merged type set, merged level and a rankable merged score.

    Output follows the first member's tweet order. Under Average the merged
    level comes from mapped member levels, not from the merged raw score; when
    the two disagree the level is stored explicitly on the record.
    """
    if not members:
        raise ValidationError("need at least one member run")
    tstrat = TypeStrategy(config.type_strategy)
    pstrat = PriorityStrategy(config.priority_strategy)
    indexed = [{r.tweet_id: r for r in m} for m in members]
    universe = set(indexed[0])
    for i, idx in enumerate(indexed[1:], 2):
        if set(idx) != universe:
            missing = sorted(universe ^ set(idx))
            raise ValidationError(f"member {i} covers a different tweet set; mismatched ids: {', '.join(missing[:10])}")

    out = []
    for rec in members[0]:
        recs = [idx[rec.tweet_id] for idx in indexed]
        types = merge_info_types([r.info_types for r in recs], tstrat)
        level = merge_priority([r.level for r in recs], pstrat)
        score = _merge_scores([r.priority_score for r in recs], pstrat)
        explicit = None if score_to_priority(score) == level else level
        out.append(RunRecord(rec.tweet_id, rec.event_id, types, score, explicit))
    return out
