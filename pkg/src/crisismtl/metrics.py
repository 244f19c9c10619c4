"""TREC-IS style scoring: ranking, alerting worth, categorisation and prioritisation."""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import astuple, dataclass
from typing import Sequence

from .corpus import GoldRecord, RunRecord, check_coverage
from .errors import MetricWarning, ValidationError
from .ontology import Ontology, PriorityLevel, default_ontology

METRIC_FIELDS = ("ndcg", "aw_hc", "aw_a", "cf1_h", "cf1_a", "cacc", "perr_h", "perr_a", "harm")
# column order of the published result tables
TABLE_ORDER = ("ndcg", "aw_hc", "aw_a", "perr_h", "perr_a", "cf1_h", "cf1_a", "cacc", "harm")
TABLE_HEADERS = {"ndcg": "NDCG", "aw_hc": "AW-HC", "aw_a": "AW-A", "perr_h": "PErr-H", "perr_a": "PErr-A",
                 "cf1_h": "CF1-H", "cf1_a": "CF1-A", "cacc": "Cacc", "harm": "HarM"}

DEFAULT_GAINS = {PriorityLevel.CRITICAL: 3.0, PriorityLevel.HIGH: 2.0,
                 PriorityLevel.MEDIUM: 1.0, PriorityLevel.LOW: 0.0}
ALERT_LEVELS = frozenset({PriorityLevel.HIGH, PriorityLevel.CRITICAL})


@dataclass(frozen=True)
class AlertWorthParams:
    """Constants of the alerting-worth scoring rule.

    A run of c consecutive false alerts costs min(cap, base + step*(c-1)) for
    its c-th member; a missed alert costs ``miss``; a true alert earns ``hit``.
    """
    hit: float = 1.0
    miss: float = 1.0
    false_base: float = 0.5
    false_step: float = 0.25
    false_cap: float = 1.0


@dataclass(frozen=True)
class MetricReport:
    ndcg: float
    aw_hc: float
    aw_a: float
    cf1_h: float
    cf1_a: float
    cacc: float
    perr_h: float
    perr_a: float
    harm: float
    n_tweets: int = 0

    def as_tuple(self) -> tuple:
        return astuple(self)[: len(METRIC_FIELDS)]

    def as_dict(self) -> dict:
        return dict(zip(METRIC_FIELDS, self.as_tuple()))


def _warn(msg):
    warnings.warn(msg, MetricWarning, stacklevel=3)


def rank_by_priority(run: Sequence[RunRecord], event_id: str | None = None) -> list[str]:
    """Tweet ids by descending score, ties by ascending tweet id."""
    recs = [r for r in run if event_id is None or r.event_id == event_id]
    return [r.tweet_id for r in sorted(recs, key=lambda r: (-r.priority_score, r.tweet_id))]


def _dcg(gains) -> float:
    return sum(g / math.log2(i + 2) for i, g in enumerate(gains))


def _events(gold):
    by_event = defaultdict(list)
    for g in gold:
        by_event[g.event_id].append(g)
    return dict(sorted(by_event.items()))


def ndcg(run: Sequence[RunRecord], gold: Sequence[GoldRecord], k: int = 100, gains=None,
         per_event: dict | None = None) -> float:
    gains = gains or DEFAULT_GAINS
    run = check_coverage(run, gold)
    gold_gain = {g.tweet_id: gains[g.priority] for g in gold}
    # ranking is per gold event; a tweet belongs to the event its gold record names
    event_of = {g.tweet_id: g.event_id for g in gold}
    scores = []
    for event, members in _events(gold).items():
        ideal = _dcg(sorted((gold_gain[g.tweet_id] for g in members), reverse=True)[:k])
        if ideal == 0:
            continue
        ranked = rank_by_priority([r for r in run if event_of[r.tweet_id] == event])
        value = _dcg([gold_gain[t] for t in ranked[:k]]) / ideal
        scores.append(value)
        if per_event is not None:
            per_event[event] = value
    if not scores:
        _warn("ndcg: every event has zero ideal gain; defined as 0")
        return 0.0
    return math.fsum(scores) / len(scores)


def alert_worth(run: Sequence[RunRecord], gold: Sequence[GoldRecord], scope: str = "All",
                params: AlertWorthParams | None = None) -> float:
    """Alerting worth over ``scope`` "HC" (gold High/Critical tweets) or "All".

    Tweets are visited event by event (events sorted by id), each event in
    priority-ranked order; the false-alert streak carries across the whole
    visit order and is reset only by a true alert or a correct silence.
    """
    if scope not in ("HC", "All"):
        raise ValidationError(f"unknown alert-worth scope {scope!r}")
    params = params or AlertWorthParams()
    run = check_coverage(run, gold)
    pred = {r.tweet_id: r for r in run}
    gold_by_id = {g.tweet_id: g for g in gold}
    total, count, streak = 0.0, 0, 0
    for event, members in _events(gold).items():
        ids = {g.tweet_id for g in members}
        for tid in rank_by_priority([pred[t] for t in ids]):
            is_urgent = gold_by_id[tid].priority in ALERT_LEVELS
            if scope == "HC" and not is_urgent:
                continue
            alerted = pred[tid].level in ALERT_LEVELS
            count += 1
            if alerted and is_urgent:
                total += params.hit
                streak = 0
            elif alerted:
                streak += 1
                total -= min(params.false_cap, params.false_base + params.false_step * (streak - 1))
            elif is_urgent:
                total -= params.miss
            else:
                streak = 0
    return total / count if count else 0.0


def _f1(tp, fp, fn) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if tp else 0.0


def cf1(run: Sequence[RunRecord], gold: Sequence[GoldRecord], type_subset: Sequence[str]) -> float:
    """Macro F1 over the given types, skipping types with no gold positives."""
    run = check_coverage(run, gold)
    scores = []
    for t in type_subset:
        tp = fp = fn = 0
        for g, r in zip(gold, run):
            gp, rp = t in g.info_types, t in r.info_types
            tp += gp and rp
            fp += rp and not gp
            fn += gp and not rp
        if tp + fn == 0:
            continue
        scores.append(_f1(tp, fp, fn))
    if not scores:
        _warn("cf1: no type in the subset has gold positives; defined as 0")
        return 0.0
    return math.fsum(scores) / len(scores)


def cacc(run: Sequence[RunRecord], gold: Sequence[GoldRecord], type_names: Sequence[str]) -> float:
    """Accuracy over every (tweet, type) binary decision."""
    run = check_coverage(run, gold)
    if not gold or not type_names:
        return 0.0
    types = set(type_names)
    wrong = sum(len((g.info_types ^ r.info_types) & types) for g, r in zip(gold, run))
    pairs = len(gold) * len(types)
    return (pairs - wrong) / pairs


def level_macro_f1(gold_levels: Sequence[PriorityLevel], pred_levels: Sequence[PriorityLevel]) -> float:
    """Macro F1 over the levels that occur in gold or predictions."""
    classes = set(gold_levels) | set(pred_levels)
    if not classes:
        return 0.0
    scores = []
    for c in sorted(classes):
        tp = sum(1 for g, p in zip(gold_levels, pred_levels) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold_levels, pred_levels) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold_levels, pred_levels) if g == c and p != c)
        scores.append(_f1(tp, fp, fn))
    return math.fsum(scores) / len(scores)


def perr(run: Sequence[RunRecord], gold: Sequence[GoldRecord], type_subset: Sequence[str]) -> float:
    """Mean over types of the priority macro F1 on that type's gold tweets."""
    run = check_coverage(run, gold)
    scores = []
    for t in type_subset:
        pairs = [(g.priority, r.level) for g, r in zip(gold, run) if t in g.info_types]
        if not pairs:
            continue
        scores.append(level_macro_f1([p[0] for p in pairs], [p[1] for p in pairs]))
    if not scores:
        _warn("perr: no type in the subset has gold positives; defined as 0")
        return 0.0
    return math.fsum(scores) / len(scores)


def harm(ndcg, aw_hc, aw_a, cf1_h, cf1_a, cacc, perr_h, perr_a) -> float:
    """Harmonic mean of the eight metrics, alerting worth mapped to [0, 1] first."""
    values = (ndcg, (aw_hc + 1.0) / 2.0, (aw_a + 1.0) / 2.0, cf1_h, cf1_a, cacc, perr_h, perr_a)
    if any(v <= 0 for v in values):
        return 0.0
    return len(values) / math.fsum(1.0 / v for v in values)


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials <= 0:
        raise ValidationError("wilson interval needs at least one trial")
    if not 0 <= successes <= trials:
        raise ValidationError("successes must lie in [0, trials]")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lower = 0.0 if successes == 0 else max(0.0, centre - half)
    upper = 1.0 if successes == trials else min(1.0, centre + half)
    return lower, upper


def confident(p1: float, n1: int, p2: float, n2: int, z: float = 1.96) -> bool:
    """True when the Wilson intervals of two proportions do not overlap."""
    lo1, hi1 = wilson_interval(round(p1 * n1), n1, z)
    lo2, hi2 = wilson_interval(round(p2 * n2), n2, z)
    return hi1 < lo2 or hi2 < lo1


def evaluate_all(run: Sequence[RunRecord], gold: Sequence[GoldRecord], ontology: Ontology | None = None,
                 k: int = 100, lenient: bool = False, aw_params: AlertWorthParams | None = None) -> MetricReport:
    ontology = ontology or default_ontology()
    aligned = check_coverage(run, gold, lenient=lenient)
    values = dict(
        ndcg=ndcg(aligned, gold, k=k),
        aw_hc=alert_worth(aligned, gold, "HC", aw_params),
        aw_a=alert_worth(aligned, gold, "All", aw_params),
        cf1_h=cf1(aligned, gold, ontology.actionable),
        cf1_a=cf1(aligned, gold, ontology.names),
        cacc=cacc(aligned, gold, ontology.names),
        perr_h=perr(aligned, gold, ontology.actionable),
        perr_a=perr(aligned, gold, ontology.names),
    )
    return MetricReport(**values, harm=harm(**values), n_tweets=len(gold))


def evaluate_per_event(run, gold, ontology=None, k=100, lenient=False) -> dict[str, MetricReport]:
    aligned = {r.tweet_id: r for r in check_coverage(run, gold, lenient=lenient)}
    out = {}
    for event, members in _events(gold).items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MetricWarning)
            out[event] = evaluate_all([aligned[g.tweet_id] for g in members], members, ontology, k=k)
    return out
