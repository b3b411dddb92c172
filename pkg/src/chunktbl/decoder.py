"""Left-to-right decoding of unseen sentences.

Each token is classified independently against a frozen feature window: the
chunk labels to its left are the labels already emitted for this sentence
(hard feed-forward of the decided label), chunk labels to its right are the
POS-based initial labels, and the token's own chunk label evolves as the rule
list or tree walks it.  Sentences never influence each other.

A rule-list model replays the learned rules per token and emits labels only.
A tree model walks the converted tree and emits the leaf distribution along
with its argmax label.  There is a second, corpus-wide semantics for rule
lists, one snapshot pass per rule over the whole corpus (the training replay,
``RuleList.replay``); ``decode_corpus`` returns that state alongside the
per-token predictions so both views are available.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO, Union

from .corpus import ChunkTag, Corpus, Sentence
from .rules import EDGE_VALUES, Field, Rule, TaggingState
from .trainer import RuleList
from .tree import ClassDistribution, FeatureAccessor, ProbTree, traverse, tree_from_dict, tree_to_dict

TREE_FORMAT = "chunktbl-tree-v1"


class DecodeMode(enum.Enum):
    RULE_LIST = "rules"
    TREE = "tree"


@dataclass(frozen=True)
class TokenPrediction:
    """Decoded label for one token.

    ``label`` is what the model emits and feeds forward: the distribution
    argmax for tree models (ties to the lowest inventory index), the replay
    hypothesis for rule-list models.  ``hypothesis`` is the final rewrite
    label in both cases; for tree models it can differ from ``label`` when a
    leaf's majority gold tag disagrees with the rule list's final rewrite.
    """

    label: ChunkTag
    distribution: Optional[ClassDistribution]
    hypothesis: ChunkTag


@dataclass(frozen=True)
class TreeModel:
    """A converted tree plus the initial assignment needed to decode with it."""

    initial: dict[str, ChunkTag]
    fallback: ChunkTag
    tree: ProbTree

    @property
    def tag_inventory(self) -> tuple[ChunkTag, ...]:
        return self.tree.tag_inventory

    def initial_label(self, pos: str) -> ChunkTag:
        label = self.initial.get(pos, self.fallback)
        if label in self.tree.roots:
            return label
        if self.fallback in self.tree.roots:
            return self.fallback
        return min(self.tree.roots, key=lambda t: self.tag_inventory.index(t))

    def save(self, path) -> None:
        data = {
            "format": TREE_FORMAT,
            "initial": {pos: str(tag) for pos, tag in self.initial.items()},
            "fallback": str(self.fallback),
            "tree": tree_to_dict(self.tree),
        }
        with open(path, "w", encoding="utf-8") as out:
            json.dump(data, out, separators=(",", ":"))
            out.write("\n")

    @classmethod
    def load(cls, path) -> "TreeModel":
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        if data.get("format") != TREE_FORMAT:
            raise ValueError(f"not a {TREE_FORMAT} file")
        return cls(
            {pos: ChunkTag.parse(tag) for pos, tag in data["initial"].items()},
            ChunkTag.parse(data["fallback"]),
            tree_from_dict(data["tree"]),
        )


Model = Union[RuleList, TreeModel]


def window_accessor(
    sentence: Sentence,
    i: int,
    left_labels: Sequence[ChunkTag],
    init_labels: Sequence[ChunkTag],
) -> FeatureAccessor:
    """Frozen feature window for token i: decided labels to the left,
    initial labels to the right, edge sentinels outside the sentence."""
    n = len(sentence)

    def features(offset: int, field: Field) -> str:
        j = i + offset
        if j < 0 or j >= n:
            return EDGE_VALUES[field]
        if field == Field.WORD:
            return sentence.tokens[j].word
        if field == Field.POS:
            return sentence.tokens[j].pos
        return str(left_labels[j]) if j < i else str(init_labels[j])

    return features


def replay_token(
    rules: Sequence[Rule], features: FeatureAccessor, initial_label: ChunkTag
) -> ChunkTag:
    """Apply the whole rule list to a single token over a frozen window."""
    hyp = initial_label
    for rule in rules:
        if rule.source != hyp:
            continue
        ok = True
        for ref, value in rule.predicate.atoms:
            if ref.field == Field.CHUNK and ref.offset == 0:
                if str(hyp) != value:
                    ok = False
                    break
            elif features(ref.offset, ref.field) != value:
                ok = False
                break
        if ok:
            hyp = rule.target
    return hyp


def decode_sentence(model: Model, sentence: Sentence) -> list[TokenPrediction]:
    init = [model.initial_label(tok.pos) for tok in sentence]
    decided: list[ChunkTag] = []
    out: list[TokenPrediction] = []
    for i in range(len(sentence)):
        features = window_accessor(sentence, i, decided, init)
        if isinstance(model, TreeModel):
            dist, hyp = traverse(model.tree, features, init[i])
            label = model.tag_inventory[dist.argmax()]
            out.append(TokenPrediction(label, dist, hyp))
        else:
            hyp = replay_token(model.rules, features, init[i])
            out.append(TokenPrediction(hyp, None, hyp))
        decided.append(out[-1].label)
    return out


@dataclass(frozen=True)
class CorpusPredictions:
    sentences: tuple[tuple[TokenPrediction, ...], ...]
    state: TaggingState

    def labels(self) -> list[list[ChunkTag]]:
        return [[p.label for p in sent] for sent in self.sentences]

    def flat(self) -> list[TokenPrediction]:
        return [p for sent in self.sentences for p in sent]


def decode_corpus(model: Model, corpus: Corpus, workers: int = 1) -> CorpusPredictions:
    """Decode every sentence independently.

    The returned state is the corpus-wide snapshot replay for rule-list
    models (the classic evaluation semantics, identical to the trainer's
    final state on the training corpus) and the per-token decoded labels for
    tree models.
    """
    if isinstance(model, TreeModel):
        missing = [str(t) for t in corpus.tag_inventory if t not in model.tag_inventory]
        if missing:
            raise ValueError(f"corpus chunk tags unknown to the model: {missing[:5]}")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            decoded = list(pool.map(lambda s: decode_sentence(model, s), corpus.sentences))
    else:
        decoded = [decode_sentence(model, sent) for sent in corpus.sentences]
    sentences = tuple(tuple(sent) for sent in decoded)
    if isinstance(model, RuleList):
        state = model.replay(corpus)
    else:
        state = TaggingState(
            corpus, tuple(tuple(p.label for p in sent) for sent in sentences)
        )
    return CorpusPredictions(sentences, state)


# ---------------------------------------------------------------------------
# Prediction file formats: extended CoNLL columns and JSON lines.
# ---------------------------------------------------------------------------


def write_predictions(
    handle: TextIO,
    corpus: Corpus,
    predictions: CorpusPredictions,
    inventory: Sequence[ChunkTag],
) -> None:
    """Columns ``word pos gold pred [p(tag_1) ... p(tag_k)]`` with a header
    naming the inventory order for the probability columns."""
    handle.write("#tags " + " ".join(str(t) for t in inventory) + "\n")
    for sent, preds in zip(corpus.sentences, predictions.sentences):
        for tok, pred in zip(sent, preds):
            cols = [tok.word, tok.pos, str(tok.gold_chunk), str(pred.label)]
            if pred.distribution is not None:
                cols.extend(f"{p:.12g}" for p in pred.distribution.probs)
            handle.write(" ".join(cols) + "\n")
        handle.write("\n")


def write_predictions_jsonl(
    handle: TextIO,
    corpus: Corpus,
    predictions: CorpusPredictions,
    inventory: Sequence[ChunkTag],
) -> None:
    handle.write(json.dumps({"tags": [str(t) for t in inventory]}) + "\n")
    for sent, preds in zip(corpus.sentences, predictions.sentences):
        record = {
            "words": [tok.word for tok in sent],
            "pos": [tok.pos for tok in sent],
            "gold": [str(tok.gold_chunk) for tok in sent],
            "pred": [str(p.label) for p in preds],
        }
        if preds and preds[0].distribution is not None:
            record["probs"] = [
                [float(f"{q:.12g}") for q in p.distribution.probs] for p in preds
            ]
        handle.write(json.dumps(record, separators=(",", ":")) + "\n")


@dataclass(frozen=True)
class PredictionFile:
    """Parsed prediction output: per-sentence gold/pred tags and optional
    distributions aligned with ``tags``."""

    tags: tuple[ChunkTag, ...]
    gold: tuple[tuple[ChunkTag, ...], ...]
    pred: tuple[tuple[ChunkTag, ...], ...]
    probs: Optional[tuple[tuple[tuple[float, ...], ...], ...]]

    @property
    def has_distributions(self) -> bool:
        return self.probs is not None

    def distributions(self) -> list[ClassDistribution]:
        if self.probs is None:
            raise ValueError("prediction file has no probability columns")
        return [ClassDistribution(row) for sent in self.probs for row in sent]

    def flat_gold(self) -> list[ChunkTag]:
        return [t for sent in self.gold for t in sent]

    def flat_pred(self) -> list[ChunkTag]:
        return [t for sent in self.pred for t in sent]


def read_predictions(handle: TextIO) -> PredictionFile:
    tags: tuple[ChunkTag, ...] = ()
    gold: list[tuple[ChunkTag, ...]] = []
    pred: list[tuple[ChunkTag, ...]] = []
    probs: list[tuple[tuple[float, ...], ...]] = []
    cur_gold: list[ChunkTag] = []
    cur_pred: list[ChunkTag] = []
    cur_probs: list[tuple[float, ...]] = []
    any_probs = False

    def flush():
        nonlocal cur_gold, cur_pred, cur_probs
        if cur_gold:
            gold.append(tuple(cur_gold))
            pred.append(tuple(cur_pred))
            probs.append(tuple(cur_probs))
            cur_gold, cur_pred, cur_probs = [], [], []

    for line in handle:
        line = line.rstrip("\n")
        if line.startswith("#tags"):
            tags = tuple(ChunkTag.parse(t) for t in line.split()[1:])
            continue
        if not line.strip():
            flush()
            continue
        cols = line.split()
        if len(cols) < 4:
            raise ValueError(f"bad prediction line: {line!r}")
        cur_gold.append(ChunkTag.parse(cols[2]))
        cur_pred.append(ChunkTag.parse(cols[3]))
        if len(cols) > 4:
            any_probs = True
            cur_probs.append(tuple(float(x) for x in cols[4:]))
        else:
            cur_probs.append(())
    flush()
    return PredictionFile(
        tags,
        tuple(gold),
        tuple(pred),
        tuple(probs) if any_probs else None,
    )
