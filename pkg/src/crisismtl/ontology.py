"""Label space: TREC-IS information types and the four priority levels."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import ValidationError


@dataclass(frozen=True)
class InfoType:
    name: str
    actionable: bool
    index: int


class PriorityLevel(enum.IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2
    CRITICAL = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "PriorityLevel":
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValidationError(f"unknown priority level {text!r}") from None


PRIORITY_SCORES = {
    PriorityLevel.CRITICAL: 1.0,
    PriorityLevel.HIGH: 0.75,
    PriorityLevel.MEDIUM: 0.5,
    PriorityLevel.LOW: 0.25,
}

# (name, actionable) in the published table order
_DEFAULT_TYPES = (
    ("Request-GoodsServices", True),
    ("Request-SearchAndRescue", True),
    ("Report-NewSubEvent", True),
    ("Report-ServiceAvailable", True),
    ("CallToAction-MovePeople", True),
    ("Report-EmergingThreats", True),
    ("CallToAction-Volunteer", False),
    ("CallToAction-Donations", False),
    ("Report-Weather", False),
    ("Report-Location", False),
    ("Request-InformationWanted", False),
    ("Report-FirstPartyObservation", False),
    ("Report-ThirdPartyObservation", False),
    ("Report-MultimediaShare", False),
    ("Report-Factoid", False),
    ("Report-Official", False),
    ("Report-News", False),
    ("Report-CleanUp", False),
    ("Report-Hashtags", False),
    ("Report-OriginalEvent", False),
    ("Other-ContextualInformation", False),
    ("Other-Advice", False),
    ("Other-Sentiment", False),
    ("Other-Discussion", False),
    ("Other-Irrelevant", False),
)


class Ontology(tuple):
    """Immutable ordered sequence of InfoType with name lookup."""

    def __new__(cls, types: Sequence[InfoType]):
        self = super().__new__(cls, tuple(types))
        names = [t.name for t in self]
        if len(set(names)) != len(names):
            raise ValidationError("information type names must be unique")
        if [t.index for t in self] != list(range(len(self))):
            raise ValidationError("information type indices must be contiguous from 0")
        self._by_name = {t.name: t for t in self}
        return self

    @classmethod
    def from_pairs(cls, pairs) -> "Ontology":
        return cls([InfoType(name, bool(act), i) for i, (name, act) in enumerate(pairs)])

    @property
    def names(self) -> list[str]:
        return [t.name for t in self]

    @property
    def actionable(self) -> list[str]:
        return [t.name for t in self if t.actionable]

    def __contains__(self, name) -> bool:
        if isinstance(name, str):
            return name in self._by_name
        return super().__contains__(name)

    def lookup(self, name: str) -> InfoType:
        try:
            return self._by_name[name]
        except KeyError:
            raise ValidationError(f"unknown information type {name!r}") from None

    def to_lines(self) -> list[str]:
        return [t.name + ("\tactionable" if t.actionable else "") for t in self]


_DEFAULT = Ontology.from_pairs(_DEFAULT_TYPES)


def default_ontology() -> Ontology:
    return _DEFAULT


def parse_ontology(lines) -> Ontology:
    pairs = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        name, sep, marker = line.partition("\t")
        name = name.strip()
        marker = marker.strip()
        if sep and marker not in ("", "actionable"):
            raise ValidationError(f"line {lineno}: unexpected marker {marker!r}")
        pairs.append((name, marker == "actionable"))
    return Ontology.from_pairs(pairs)


def load_ontology(path) -> Ontology:
    """Read a label file: one name per line, optional ``\\tactionable`` suffix."""
    with open(path, encoding="utf-8") as fh:
        return parse_ontology(fh)


def write_ontology(ontology: Ontology, path) -> None:
    Path(path).write_text("".join(line + "\n" for line in ontology.to_lines()), encoding="utf-8")


def priority_to_score(level: PriorityLevel) -> float:
    return PRIORITY_SCORES[PriorityLevel(level)]


def score_to_priority(score: float) -> PriorityLevel:
    """Reverse mapping with intervals closed at the top: (0.5, 0.75] is High, etc."""
    if not 0.0 <= score <= 1.0:
        raise ValidationError(f"priority score {score!r} outside [0, 1]")
    if score <= 0.25:
        return PriorityLevel.LOW
    if score <= 0.5:
        return PriorityLevel.MEDIUM
    if score <= 0.75:
        return PriorityLevel.HIGH
    return PriorityLevel.CRITICAL
