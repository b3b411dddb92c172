"""Evaluation measures: tag accuracy, phrase precision/recall/F, conditional
cross entropy, perplexity, entropy scores, and rejection curves.

All probabilities are in bits (base-2 logs) throughout.  Phrase scoring
treats a proposed chunk as correct only when its type, start, and end all
match a gold chunk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .corpus import Chunk, ChunkTag, extract_chunks
from .decoder import TokenPrediction
from .tree import ClassDistribution


@dataclass(frozen=True)
class TypeScore:
    precision: float
    recall: float
    f1: float
    gold_count: int
    proposed_count: int
    correct_count: int

    @property
    def defined(self) -> bool:
        return self.gold_count > 0 and self.proposed_count > 0


@dataclass(frozen=True)
class EvalReport:
    token_accuracy: float
    overall: TypeScore
    per_type: dict[str, TypeScore]
    beta: float

    def to_json_dict(self) -> dict:
        def enc(s: TypeScore) -> dict:
            return {
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
                "gold_count": s.gold_count,
                "proposed_count": s.proposed_count,
                "correct_count": s.correct_count,
                "defined": s.defined,
            }

        return {
            "token_accuracy": self.token_accuracy,
            "beta": self.beta,
            "overall": enc(self.overall),
            "per_type": {t: enc(s) for t, s in sorted(self.per_type.items())},
        }

    def table(self) -> str:
        """Fixed-width report: overall row first, then per-type rows."""
        lines = [
            f"{'Chunk Type':<12}{'Accuracy(%)':>12}{'Precision(%)':>14}{'Recall(%)':>12}{'F1':>8}"
        ]
        lines.append(
            f"{'Overall':<12}{100 * self.token_accuracy:>12.2f}"
            f"{100 * self.overall.precision:>14.2f}"
            f"{100 * self.overall.recall:>12.2f}{100 * self.overall.f1:>8.2f}"
        )
        for name in sorted(self.per_type):
            s = self.per_type[name]
            lines.append(
                f"{name:<12}{'-':>12}{100 * s.precision:>14.2f}"
                f"{100 * s.recall:>12.2f}{100 * s.f1:>8.2f}"
            )
        return "\n".join(lines) + "\n"


def token_accuracy(pred: Sequence[ChunkTag], gold: Sequence[ChunkTag]) -> float:
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gold)} gold")
    if not gold:
        raise ValueError("empty sequences")
    return sum(1 for p, g in zip(pred, gold) if p == g) / len(gold)


def f_measure(precision: float, recall: float, beta: float = 1.0) -> float:
    """Weighted harmonic mean (beta^2+1)PR / (beta^2 P + R); 0 when the
    denominator vanishes."""
    denom = beta * beta * precision + recall
    if denom == 0:
        return 0.0
    return (beta * beta + 1) * precision * recall / denom


def _prf(correct: int, proposed: int, gold: int, beta: float) -> TypeScore:
    precision = correct / proposed if proposed else 0.0
    recall = correct / gold if gold else 0.0
    return TypeScore(precision, recall, f_measure(precision, recall, beta), gold, proposed, correct)


def chunk_prf(
    pred_tags: Sequence[Sequence[ChunkTag]],
    gold_tags: Sequence[Sequence[ChunkTag]],
    beta: float = 1.0,
) -> EvalReport:
    """Phrase precision/recall/F over per-sentence BIO tag sequences."""
    if len(pred_tags) != len(gold_tags):
        raise ValueError("sentence count mismatch")
    correct = 0
    total = 0
    by_type: dict[str, list[int]] = {}  # [correct, proposed, gold]
    for pred_row, gold_row in zip(pred_tags, gold_tags):
        if len(pred_row) != len(gold_row):
            raise ValueError("sentence length mismatch")
        total += len(gold_row)
        correct += sum(1 for p, g in zip(pred_row, gold_row) if p == g)
        gold_chunks = set(_chunk_keys(extract_chunks(gold_row)))
        pred_chunks = _chunk_keys(extract_chunks(pred_row))
        for key in pred_chunks:
            stats = by_type.setdefault(key[0], [0, 0, 0])
            stats[1] += 1
            if key in gold_chunks:
                stats[0] += 1
        for key in gold_chunks:
            by_type.setdefault(key[0], [0, 0, 0])[2] += 1
    if total == 0:
        raise ValueError("empty corpus")
    overall = _prf(
        sum(s[0] for s in by_type.values()),
        sum(s[1] for s in by_type.values()),
        sum(s[2] for s in by_type.values()),
        beta,
    )
    per_type = {t: _prf(s[0], s[1], s[2], beta) for t, s in by_type.items()}
    return EvalReport(correct / total, overall, per_type, beta)


def _chunk_keys(chunks: list[Chunk]) -> list[tuple[str, int, int]]:
    return [(c.phrase_type, c.start, c.end) for c in chunks]


def entropy_bits(probs: Sequence[float]) -> float:
    return -sum(p * math.log2(p) for p in probs if p > 0.0)


def cross_entropy(
    distributions: Sequence[ClassDistribution],
    gold: Sequence[ChunkTag],
    inventory: Sequence[ChunkTag],
) -> float:
    """Mean -log2 probability assigned to the gold tag."""
    if len(distributions) != len(gold):
        raise ValueError("length mismatch")
    if not gold:
        raise ValueError("empty input")
    index = {tag: i for i, tag in enumerate(inventory)}
    total = 0.0
    for dist, tag in zip(distributions, gold):
        if tag not in index:
            raise ValueError(
                f"gold tag {tag} outside the model inventory has probability zero; "
                "cross entropy requires smoothed estimates covering every outcome"
            )
        p = dist.probs[index[tag]]
        if p <= 0.0:
            raise ValueError(
                f"gold tag {tag} was assigned probability zero; "
                "smooth the leaf distributions (epsilon > 0) before computing cross entropy"
            )
        total -= math.log2(p)
    return total / len(gold)


def perplexity(h_bits: float) -> float:
    if h_bits < 0:
        raise ValueError("cross entropy must be non-negative")
    return 2.0 ** h_bits


@dataclass(frozen=True)
class RejectionPoint:
    x: float  # rejected fraction (batch) or threshold (online)
    accuracy: float
    kept: int


@dataclass(frozen=True)
class RejectionCurve:
    kind: str  # "batch" or "online"
    points: tuple[RejectionPoint, ...]

    def to_csv(self) -> str:
        lines = ["x,accuracy,kept"]
        for pt in self.points:
            lines.append(f"{pt.x:.12g},{pt.accuracy:.12g},{pt.kept}")
        return "\n".join(lines) + "\n"


DEFAULT_REJECTION_FRACTIONS = tuple(f / 100 for f in range(0, 100, 5))
DEFAULT_ONLINE_THRESHOLDS = tuple(t / 20 for t in range(0, 21))


def _correctness_and_dists(
    predictions: Sequence[TokenPrediction], gold: Sequence[ChunkTag]
) -> tuple[list[bool], list[ClassDistribution]]:
    if len(predictions) != len(gold):
        raise ValueError("length mismatch")
    if not gold:
        raise ValueError("empty input")
    dists = []
    for p in predictions:
        if p.distribution is None:
            raise ValueError("rejection curves need predictions with distributions")
        dists.append(p.distribution)
    right = [p.label == g for p, g in zip(predictions, gold)]
    return right, dists


def rejection_batch(
    predictions: Sequence[TokenPrediction],
    gold: Sequence[ChunkTag],
    fractions: Sequence[float] = DEFAULT_REJECTION_FRACTIONS,
) -> RejectionCurve:
    """Accuracy on the tokens kept after rejecting the highest-entropy
    fraction; ties keep earlier tokens ahead (stable order)."""
    right, dists = _correctness_and_dists(predictions, gold)
    n = len(right)
    entropies = [d.entropy_bits() for d in dists]
    by_uncertainty = sorted(range(n), key=lambda i: (-entropies[i], i))
    points = []
    for frac in fractions:
        drop = int(frac * n)
        kept = by_uncertainty[drop:]
        if not kept:
            continue
        acc = sum(1 for i in kept if right[i]) / len(kept)
        points.append(RejectionPoint(frac, acc, len(kept)))
    return RejectionCurve("batch", tuple(points))


def rejection_online(
    predictions: Sequence[TokenPrediction],
    gold: Sequence[ChunkTag],
    thresholds: Sequence[float] = DEFAULT_ONLINE_THRESHOLDS,
) -> RejectionCurve:
    """Accuracy on the tokens whose top-label probability clears each
    threshold; empty bins are omitted."""
    right, dists = _correctness_and_dists(predictions, gold)
    top = [max(d.probs) for d in dists]
    points = []
    for theta in thresholds:
        kept = [i for i in range(len(right)) if top[i] >= theta]
        if not kept:
            continue
        acc = sum(1 for i in kept if right[i]) / len(kept)
        points.append(RejectionPoint(theta, acc, len(kept)))
    return RejectionCurve("online", tuple(points))
