"""Small lexically-determined corpus for smoke tests and end-to-end checks.

Each information type and each priority level is signalled by one marker
word; the rest of a tweet is filler drawn from a neutral word list.
"""

from __future__ import annotations

import argparse

import numpy as np

from .corpus import GoldRecord, write_gold
from .ontology import Ontology, PriorityLevel, write_ontology

TYPE_MARKERS = {
    "Request-SearchAndRescue": "trapped",
    "Request-GoodsServices": "supplies",
    "Report-Weather": "storm",
    "Other-Sentiment": "heartbroken",
}
ACTIONABLE = {"Request-SearchAndRescue", "Request-GoodsServices"}
PRIORITY_MARKERS = {
    PriorityLevel.LOW: "minor",
    PriorityLevel.MEDIUM: "notable",
    PriorityLevel.HIGH: "urgent",
    PriorityLevel.CRITICAL: "catastrophic",
}
FILLER = ("the", "a", "city", "road", "people", "near", "today", "we", "river", "news", "update",
          "school", "bridge", "north", "south", "just", "now", "area", "local", "after", "town", "see")


def synthetic_ontology() -> Ontology:
    return Ontology.from_pairs((name, name in ACTIONABLE) for name in TYPE_MARKERS)


def make_corpus(n: int = 200, seed: int = 0, type_rate: float = 0.35, events=("evA", "evB")) -> list[GoldRecord]:
    rng = np.random.default_rng(seed)
    names = list(TYPE_MARKERS)
    records = []
    for i in range(n):
        types = [t for t in names if rng.random() < type_rate]
        level = PriorityLevel(int(rng.integers(4)))
        words = list(rng.choice(FILLER, size=int(rng.integers(3, 9))))
        words += [TYPE_MARKERS[t] for t in types] + [PRIORITY_MARKERS[level]]
        rng.shuffle(words)
        records.append(GoldRecord(f"t{i:04d}", events[i % len(events)], " ".join(words), frozenset(types), level))
    return records


def main(argv=None):
    ap = argparse.ArgumentParser(description="Write the synthetic gold corpus and its label file.")
    ap.add_argument("--out", required=True, help="gold output path")
    ap.add_argument("--ontology-out", required=True, help="label file output path")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    write_gold(make_corpus(args.n, args.seed), args.out)
    write_ontology(synthetic_ontology(), args.ontology_out)


if __name__ == "__main__":
    main()
