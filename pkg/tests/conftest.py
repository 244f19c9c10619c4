import random
import warnings
from pathlib import Path

import pytest

from crisismtl.corpus import GoldRecord, RunRecord
from crisismtl.errors import MetricWarning
from crisismtl.ontology import Ontology, PriorityLevel

DATA = Path(__file__).parent / "data"

SMALL_ONTOLOGY = Ontology.from_pairs([("A", True), ("B", False), ("C", False)])


@pytest.fixture(autouse=True)
def _quiet_metric_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MetricWarning)
        yield


@pytest.fixture
def data_dir():
    return DATA


def gold(tid, event="e1", types=(), level=PriorityLevel.LOW, text="x"):
    return GoldRecord(tid, event, text, frozenset(types), PriorityLevel(level))


def run(tid, event="e1", types=(), score=0.0, level=None):
    return RunRecord(tid, event, frozenset(types), float(score), level)


# grid values hit the mapping boundaries and produce ranking ties
_SCORE_GRID = (0.0, 0.1, 0.25, 0.3, 0.5, 0.6, 0.75, 0.8, 1.0)


def random_instance(seed, max_tweets=20, types=("A", "B", "C"), events=("e1", "e2")):
    rng = random.Random(seed)
    n = rng.randint(1, max_tweets)
    golds, runs = [], []
    for i in range(n):
        tid = f"t{rng.randrange(1000):03d}_{i}"
        ev = rng.choice(events)
        gtypes = [t for t in types if rng.random() < 0.4]
        ptypes = [t for t in types if rng.random() < 0.4]
        score = rng.choice(_SCORE_GRID) if rng.random() < 0.5 else rng.random()
        golds.append(gold(tid, ev, gtypes, rng.randrange(4)))
        runs.append(run(tid, ev, ptypes, score))
    rng.shuffle(runs)
    return golds, runs


def to_oracle(golds, runs):
    from oracles import level_of

    g = {r.tweet_id: (r.event_id, set(r.info_types), int(r.priority)) for r in golds}
    p = {}
    for r in runs:
        level = int(r.priority) if r.priority is not None else level_of(r.priority_score)
        p[r.tweet_id] = (set(r.info_types), r.priority_score, level)
    return g, p


def random_members(seed, n_members=3, max_tweets=15, types=("A", "B", "C", "D")):
    """Member runs over one shared tweet set, each in its own order."""
    rng = random.Random(seed)
    n = rng.randint(1, max_tweets)
    ids = [(f"t{i}", rng.choice(("e1", "e2"))) for i in range(n)]
    members = []
    for _ in range(n_members):
        recs = [run(tid, ev, [t for t in types if rng.random() < 0.5],
                    rng.choice(_SCORE_GRID) if rng.random() < 0.5 else rng.random()) for tid, ev in ids]
        rng.shuffle(recs)
        members.append(recs)
    return members


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
