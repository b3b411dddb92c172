"""Pool-based active learning with entropy-driven sentence selection.

Starting from an initial labeled slice of the pool, each round retrains the
model from scratch, scores the remaining pool sentences by mean per-token
label entropy, moves the highest-scoring batch into the labeled set, and
records test-set performance against the number of labeled words.  The
sequential mode takes the next batch in corpus order instead and serves as
the baseline.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .corpus import Corpus, Sentence
from .decoder import Model, decode_corpus, decode_sentence
from .metrics import chunk_prf


class SelectionMode(enum.Enum):
    ENTROPY = "entropy"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class ALConfig:
    initial_t1: int = 50
    batch_t2: int = 25
    stop_at: Optional[int] = None  # labeled-sentence budget; None exhausts the pool
    mode: SelectionMode = SelectionMode.ENTROPY
    seed: Optional[int] = None  # shuffles pool order up front when set

    def __post_init__(self):
        if self.initial_t1 < 1 or self.batch_t2 < 1:
            raise ValueError("t1 and t2 must be >= 1")


@dataclass(frozen=True)
class LearningCurvePoint:
    labeled_words: int
    f1: float
    accuracy: float


def sentence_score(model: Model, sentence: Sentence) -> float:
    """Mean per-token entropy (bits) of the decoded distributions."""
    predictions = decode_sentence(model, sentence)
    if any(p.distribution is None for p in predictions):
        raise ValueError("sentence scoring needs a model that emits distributions")
    return sum(p.distribution.entropy_bits() for p in predictions) / len(predictions)


def select_batch(
    model: Optional[Model],
    pool: Sequence[Sentence],
    t2: int,
    mode: SelectionMode,
) -> list[int]:
    """Indices of the next batch, in selection order.

    ENTROPY picks the t2 highest-scoring sentences (ties: lower index first);
    SEQUENTIAL picks the next t2 in pool order.  A pool smaller than t2 is
    returned whole.
    """
    count = min(t2, len(pool))
    if mode == SelectionMode.SEQUENTIAL:
        return list(range(count))
    scores = [sentence_score(model, sent) for sent in pool]
    ranked = sorted(range(len(pool)), key=lambda i: (-scores[i], i))
    return ranked[:count]


TrainerFn = Callable[[Corpus], Model]


def run(
    train_corpus: Corpus,
    test_corpus: Corpus,
    model_trainer: TrainerFn,
    config: ALConfig,
) -> list[LearningCurvePoint]:
    """Label -> retrain -> evaluate loop; gold tags stand in for annotation."""
    pool = list(train_corpus.sentences)
    if config.seed is not None:
        random.Random(config.seed).shuffle(pool)
    t1 = min(config.initial_t1, len(pool))
    labeled = pool[:t1]
    pool = pool[t1:]
    budget = config.stop_at if config.stop_at is not None else len(train_corpus.sentences)

    gold_tags = [[tok.gold_chunk for tok in sent] for sent in test_corpus.sentences]
    points: list[LearningCurvePoint] = []
    while True:
        model = model_trainer(Corpus.from_sentences(labeled))
        predictions = decode_corpus(model, test_corpus)
        report = chunk_prf(predictions.labels(), gold_tags)
        points.append(
            LearningCurvePoint(
                sum(len(s) for s in labeled), report.overall.f1, report.token_accuracy
            )
        )
        if not pool or len(labeled) >= budget:
            break
        picked = select_batch(model, pool, config.batch_t2, config.mode)
        picked_set = set(picked)
        labeled.extend(pool[i] for i in picked)
        pool = [s for i, s in enumerate(pool) if i not in picked_set]
    return points


def curve_csv(points_by_mode: dict[str, list[LearningCurvePoint]]) -> str:
    lines = ["labeled_words,f1,accuracy,mode,round"]
    for mode, points in points_by_mode.items():
        for rnd, pt in enumerate(points):
            lines.append(f"{pt.labeled_words},{pt.f1:.12g},{pt.accuracy:.12g},{mode},{rnd}")
    return "\n".join(lines) + "\n"
