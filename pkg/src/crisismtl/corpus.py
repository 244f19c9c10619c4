"""Gold and run records, their line-delimited JSON files, and train/dev splitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .ontology import Ontology, PriorityLevel, default_ontology, score_to_priority


@dataclass(frozen=True)
class GoldRecord:
    tweet_id: str
    event_id: str
    text: str
    info_types: frozenset
    priority: PriorityLevel


@dataclass(frozen=True)
class RunRecord:
    tweet_id: str
    event_id: str
    info_types: frozenset
    priority_score: float
    # Optional explicit level; set by ensembling when the merged level is not
    # the reverse mapping of priority_score.
    priority: PriorityLevel | None = field(default=None)

    @property
    def level(self) -> PriorityLevel:
        if self.priority is not None:
            return self.priority
        return score_to_priority(self.priority_score)


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple
    dev: tuple
    seed: int
    ratio: float


def _parse_line(line: str, lineno: int, path) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{lineno}: malformed record: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}:{lineno}: record must be a JSON object")
    return obj


def _field(obj: dict, key: str, kind, lineno: int, path):
    if key not in obj:
        raise ValidationError(f"{path}:{lineno}: missing key {key!r}")
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ValidationError(f"{path}:{lineno}: key {key!r} has wrong type")
    return value


def _types(obj, lineno, path, ontology: Ontology) -> frozenset:
    names = _field(obj, "info_types", list, lineno, path)
    for name in names:
        if not isinstance(name, str):
            raise ValidationError(f"{path}:{lineno}: info_types entries must be strings")
        if name not in ontology:
            raise ValidationError(f"{path}:{lineno}: unknown information type {name!r}")
    return frozenset(names)


def _records(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, _parse_line(line, lineno, path)


def parse_gold_record(obj: dict, ontology: Ontology | None = None, lineno: int = 1, path="<gold>") -> GoldRecord:
    ontology = ontology or default_ontology()
    priority = _field(obj, "priority", str, lineno, path)
    try:
        level = PriorityLevel.parse(priority)
    except ValidationError:
        raise ValidationError(f"{path}:{lineno}: unknown priority {priority!r}") from None
    if priority != level.label:
        raise ValidationError(f"{path}:{lineno}: unknown priority {priority!r}")
    return GoldRecord(
        tweet_id=_field(obj, "tweet_id", str, lineno, path),
        event_id=_field(obj, "event_id", str, lineno, path),
        text=_field(obj, "text", str, lineno, path),
        info_types=_types(obj, lineno, path, ontology),
        priority=level,
    )


def load_gold(path, ontology: Ontology | None = None) -> list[GoldRecord]:
    records, seen = [], set()
    for lineno, obj in _records(path):
        rec = parse_gold_record(obj, ontology, lineno, path)
        if rec.tweet_id in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate tweet_id {rec.tweet_id!r}")
        seen.add(rec.tweet_id)
        records.append(rec)
    return records


def load_texts(path) -> list[GoldRecord]:
    """Read prediction inputs: gold files or bare {tweet_id, event_id, text} lines.

    Labels, when present, are ignored; the returned records carry empty types
    and Low priority as placeholders.
    """
    records, seen = [], set()
    for lineno, obj in _records(path):
        tid = _field(obj, "tweet_id", str, lineno, path)
        if tid in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate tweet_id {tid!r}")
        seen.add(tid)
        records.append(GoldRecord(tid, _field(obj, "event_id", str, lineno, path),
                                  _field(obj, "text", str, lineno, path), frozenset(), PriorityLevel.LOW))
    return records


def write_gold(records: Iterable[GoldRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "tweet_id": rec.tweet_id,
                "event_id": rec.event_id,
                "text": rec.text,
                "info_types": sorted(rec.info_types),
                "priority": rec.priority.label,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_run(path, ontology: Ontology | None = None) -> list[RunRecord]:
    ontology = ontology or default_ontology()
    records, seen = [], set()
    for lineno, obj in _records(path):
        tid = _field(obj, "tweet_id", str, lineno, path)
        if tid in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate tweet_id {tid!r}")
        seen.add(tid)
        score = _field(obj, "priority_score", (int, float), lineno, path)
        if not (math.isfinite(score) and 0.0 <= score <= 1.0):
            raise ValidationError(f"{path}:{lineno}: priority_score {score!r} outside [0, 1]")
        level = None
        if "priority" in obj:
            level = PriorityLevel.parse(_field(obj, "priority", str, lineno, path))
        records.append(RunRecord(tid, _field(obj, "event_id", str, lineno, path),
                                 _types(obj, lineno, path, ontology), float(score), level))
    return records


def run_to_dict(rec: RunRecord) -> dict:
    obj = {
        "tweet_id": rec.tweet_id,
        "event_id": rec.event_id,
        "info_types": sorted(rec.info_types),
        "priority_score": float(rec.priority_score),
    }
    if rec.priority is not None:
        obj["priority"] = rec.priority.label
    return obj


def write_run(records: Iterable[RunRecord], path) -> None:
    # json renders floats with repr(), which round-trips exactly
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(run_to_dict(rec), ensure_ascii=False) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write run file {path}: {exc.strerror}") from exc


def check_coverage(run: Sequence[RunRecord], gold: Sequence[GoldRecord], lenient: bool = False) -> list[RunRecord]:
    """Align a run to the gold tweet set.

    Returns one RunRecord per gold tweet in gold order. Missing tweets are an
    error unless ``lenient``, in which case they become empty, score-0 records.
    Run records for tweets outside the gold set are dropped.
    """
    by_id = {r.tweet_id: r for r in run}
    aligned, missing = [], []
    for g in gold:
        rec = by_id.get(g.tweet_id)
        if rec is None:
            if not lenient:
                missing.append(g.tweet_id)
                continue
            rec = RunRecord(g.tweet_id, g.event_id, frozenset(), 0.0)
        aligned.append(rec)
    if missing:
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise ValidationError(f"run is missing {len(missing)} gold tweet(s): {shown}")
    return aligned


def split_train_dev(corpus: Sequence, ratio: float = 0.1, seed: int = 42) -> CorpusSplit:
    if not 0.0 <= ratio < 1.0:
        raise ValidationError(f"split ratio {ratio!r} outside [0, 1)")
    n = len(corpus)
    # ceiling, as in common train/test splitters; the epsilon absorbs float error
    n_dev = math.ceil(ratio * n - 1e-9)
    rng = np.random.default_rng(seed)
    dev_idx = set(rng.choice(n, size=n_dev, replace=False).tolist()) if n_dev else set()
    train = tuple(r for i, r in enumerate(corpus) if i not in dev_idx)
    dev = tuple(r for i, r in enumerate(corpus) if i in dev_idx)
    return CorpusSplit(train, dev, seed, ratio)
