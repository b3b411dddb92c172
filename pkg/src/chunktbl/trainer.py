"""Greedy transformation-based learning.

Training starts from a POS-based initial assignment and repeatedly picks the
rewrite rule with the best net error reduction, applies it corpus-wide in one
snapshot pass, and appends it to the list, until no candidate clears the
score threshold.

The candidate scorer is incremental: a table keyed by (template, window
values, current label) holds gold-label counts for every corpus position, and
only positions within the window of an applied rule's edits are recounted.
``score_rule`` is the extensional reference the table must agree with; tests
cross-check the two.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence
from urllib.parse import quote, unquote

from .corpus import ChunkTag, Corpus
from .rules import (
    EDGE_ID,
    EDGE_VALUES,
    EncodedCorpus,
    EncodedRule,
    Field,
    FeatureRef,
    Predicate,
    Rule,
    TaggingState,
    Template,
    ambiguous_lexicon,
    apply_rule_pass,
    default_templates,
    encoded_applies,
    parse_rule,
)


@dataclass(frozen=True)
class TrainConfig:
    threshold: int = 2
    templates: tuple[Template, ...] = dc_field(default_factory=default_templates)
    lexicon_limit: Optional[int] = None

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if not self.templates:
            raise ValueError("at least one template required")


@dataclass(frozen=True)
class RuleList:
    """A trained model: POS-based initial assignment plus an ordered rule list."""

    initial: dict[str, ChunkTag]
    fallback: ChunkTag
    rules: tuple[Rule, ...]
    tag_inventory: tuple[ChunkTag, ...]

    def __post_init__(self):
        for t, rule in enumerate(self.rules):
            if rule.index != t:
                raise ValueError("rule indices must be contiguous from 0")

    def initial_label(self, pos: str) -> ChunkTag:
        return self.initial.get(pos, self.fallback)

    def initial_state(self, corpus: Corpus) -> TaggingState:
        return TaggingState(
            corpus,
            tuple(
                tuple(self.initial_label(tok.pos) for tok in sent)
                for sent in corpus.sentences
            ),
        )

    def replay(self, corpus: Corpus) -> TaggingState:
        """Initial assignment, then every rule in learned order, one snapshot
        pass each: the classic corpus-wide evaluation semantics."""
        state = self.initial_state(corpus)
        for rule in self.rules:
            state, _ = apply_rule_pass(rule, state)
        return state

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as out:
            out.write("#tags\t" + "\t".join(quote(str(t), safe="") for t in self.tag_inventory) + "\n")
            for pos, tag in self.initial.items():
                out.write(f"#init\t{quote(pos, safe='')}\t{quote(str(tag), safe='')}\n")
            out.write(f"#fallback\t{quote(str(self.fallback), safe='')}\n")
            for rule in self.rules:
                out.write(rule.text() + "\n")

    @classmethod
    def load(cls, path) -> "RuleList":
        tags: list[ChunkTag] = []
        initial: dict[str, ChunkTag] = {}
        fallback: Optional[ChunkTag] = None
        rules: list[Rule] = []
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#tags\t"):
                    tags = [ChunkTag.parse(unquote(v)) for v in line.split("\t")[1:]]
                elif line.startswith("#init\t"):
                    _, pos, tag = line.split("\t")
                    initial[unquote(pos)] = ChunkTag.parse(unquote(tag))
                elif line.startswith("#fallback\t"):
                    fallback = ChunkTag.parse(unquote(line.split("\t")[1]))
                else:
                    rules.append(parse_rule(line))
        if not tags or fallback is None:
            raise ValueError("model file missing #tags or #fallback header")
        return cls(initial, fallback, tuple(rules), tuple(tags))


def initial_assignment(corpus: Corpus) -> tuple[dict[str, ChunkTag], TaggingState]:
    """Map each POS to its most frequent gold chunk tag (ties: inventory
    order) and label the corpus accordingly."""
    if not corpus.sentences:
        raise ValueError("empty corpus")
    inventory = {tag: k for k, tag in enumerate(corpus.tag_inventory)}
    counts: dict[str, dict[int, int]] = {}
    for sent in corpus:
        for tok in sent:
            per_pos = counts.setdefault(tok.pos, {})
            tid = inventory[tok.gold_chunk]
            per_pos[tid] = per_pos.get(tid, 0) + 1
    mapping: dict[str, ChunkTag] = {}
    for pos in corpus.pos_inventory:
        per_pos = counts[pos]
        best = min(per_pos, key=lambda tid: (-per_pos[tid], tid))
        mapping[pos] = corpus.tag_inventory[best]
    state = TaggingState(
        corpus,
        tuple(tuple(mapping[tok.pos] for tok in sent) for sent in corpus.sentences),
    )
    return mapping, state


def majority_tag(corpus: Corpus) -> ChunkTag:
    inventory = {tag: k for k, tag in enumerate(corpus.tag_inventory)}
    totals = [0] * len(inventory)
    for sent in corpus:
        for tok in sent:
            totals[inventory[tok.gold_chunk]] += 1
    best = min(range(len(totals)), key=lambda tid: (-totals[tid], tid))
    return corpus.tag_inventory[best]


def score_rule(rule: Rule, state: TaggingState) -> int:
    """Net error reduction of one snapshot application: tokens fixed minus
    tokens broken.  Reference implementation; the trainer's indexed scores
    must match it exactly."""
    new_state, _ = apply_rule_pass(rule, state)
    delta = 0
    for sent, old_row, new_row in zip(
        state.corpus.sentences, state.labels, new_state.labels
    ):
        for tok, old, new in zip(sent, old_row, new_row):
            if old == new:
                continue
            if new == tok.gold_chunk:
                delta += 1
            elif old == tok.gold_chunk:
                delta -= 1
    return delta


# ---------------------------------------------------------------------------
# Indexed trainer internals.
# ---------------------------------------------------------------------------


class _CandidateIndex:
    """Gold-label counts per (template, window values, current label) key.

    For a key with source label s, the rule rewriting s to g over that
    predicate scores counts[g] - counts[s]; a key yields a candidate for every
    gold label g != s with counts[g] > 0.
    """

    def __init__(self, enc: EncodedCorpus, templates: Sequence[Template], lexicon_ids):
        self.enc = enc
        self.templates = [
            tuple((ref.offset, int(ref.field)) for ref in tpl.refs) for tpl in templates
        ]
        self.template_objs = list(templates)
        self.lexicon_ids = lexicon_ids  # None or set of allowed word ids
        self.stats: dict[tuple, dict[int, int]] = {}
        self.heap: list[tuple[int, tuple, int]] = []

    def keys_at(self, labels: Sequence[int], p: int):
        enc = self.enc
        lo, hi = enc.lo[p], enc.hi[p]
        words, pos = enc.words, enc.pos
        lex = self.lexicon_ids
        source = labels[p]
        for tid, refs in enumerate(self.templates):
            vals = []
            ok = True
            for off, fld in refs:
                j = p + off
                if j < lo or j >= hi:
                    v = EDGE_ID
                elif fld == 0:
                    v = words[j]
                elif fld == 1:
                    v = pos[j]
                else:
                    v = labels[j]
                if fld == 0 and lex is not None and v not in lex:
                    ok = False
                    break
                vals.append(v)
            if ok:
                yield (tid, source, *vals)

    def build(self, labels: Sequence[int]) -> None:
        stats = self.stats
        gold = self.enc.gold
        for p in range(self.enc.size):
            g = gold[p]
            for key in self.keys_at(labels, p):
                cnts = stats.get(key)
                if cnts is None:
                    stats[key] = {g: 1}
                else:
                    cnts[g] = cnts.get(g, 0) + 1
        push = heapq.heappush
        for key, cnts in stats.items():
            src = key[1]
            bad = cnts.get(src, 0)
            for g, c in cnts.items():
                if g != src and c > 0:
                    push(self.heap, (bad - c, key, g))

    def update_position(self, labels: Sequence[int], p: int, delta: int) -> None:
        stats = self.stats
        g = self.enc.gold[p]
        push = heapq.heappush
        for key in self.keys_at(labels, p):
            cnts = stats.get(key)
            if cnts is None:
                if delta < 0:
                    raise AssertionError("decrement of missing index key")
                cnts = stats[key] = {}
            cnts[g] = cnts.get(g, 0) + delta
            if cnts[g] == 0:
                del cnts[g]
                if not cnts:
                    del stats[key]
                    continue
            src = key[1]
            bad = cnts.get(src, 0)
            if g == src:
                for t, c in cnts.items():
                    if t != src and c > 0:
                        push(self.heap, (bad - c, key, t))
            elif cnts.get(g, 0) > 0:
                push(self.heap, (bad - cnts[g], key, g))

    def _score(self, key: tuple, target: int) -> Optional[int]:
        cnts = self.stats.get(key)
        if not cnts:
            return None
        good = cnts.get(target, 0)
        if good <= 0:
            return None
        return good - cnts.get(key[1], 0)

    def pop_best(self) -> tuple[Optional[int], list[tuple[tuple, int]]]:
        """Max current score and every candidate achieving it."""
        heap = self.heap
        best_score: Optional[int] = None
        best: list[tuple[tuple, int]] = []
        seen: set[tuple[tuple, int]] = set()
        while heap:
            neg, key, target = heap[0]
            score = self._score(key, target)
            if score is None:
                heapq.heappop(heap)
                continue
            if -neg != score:
                heapq.heappop(heap)
                heapq.heappush(heap, (-score, key, target))
                continue
            if best_score is None:
                best_score = score
            if score != best_score:
                break
            heapq.heappop(heap)
            if (key, target) not in seen:
                seen.add((key, target))
                best.append((key, target))
        for key, target in best:
            heapq.heappush(heap, (-best_score, key, target))
        return best_score, best

    def decode_candidate(self, key: tuple, target: int) -> Rule:
        tid, source = key[0], key[1]
        vals = key[2:]
        enc = self.enc
        word_list = list(enc.word_id)
        pos_list = list(enc.pos_id)
        atoms = []
        for (off, fld), v in zip(self.templates[tid], vals):
            ref = FeatureRef(off, Field(fld))
            if v == EDGE_ID:
                value = EDGE_VALUES[ref.field]
            elif fld == 0:
                value = word_list[v]
            elif fld == 1:
                value = pos_list[v]
            else:
                value = str(enc.tags[v])
            atoms.append((ref, value))
        return Rule(Predicate(tuple(atoms)), enc.tags[source], enc.tags[target])


def train(corpus: Corpus, config: TrainConfig = TrainConfig()) -> RuleList:
    rule_list, _ = train_with_log(corpus, config)
    return rule_list


def train_with_log(
    corpus: Corpus, config: TrainConfig = TrainConfig()
) -> tuple[RuleList, dict]:
    """Train a rule list; also return a JSON-serializable training log."""
    if not corpus.sentences:
        raise ValueError("empty corpus")
    enc = EncodedCorpus(corpus)
    mapping, _ = initial_assignment(corpus)
    fallback = majority_tag(corpus)

    labels = [enc.tag_id[str(mapping[tok.pos])] for sent in corpus for tok in sent]
    gold = enc.gold
    size = enc.size
    errors = sum(1 for p in range(size) if labels[p] != gold[p])

    lexicon_ids = None
    if config.lexicon_limit is not None:
        allowed = ambiguous_lexicon(corpus, config.lexicon_limit)
        lexicon_ids = {enc.word_id[w] for w in allowed if w in enc.word_id}

    index = _CandidateIndex(enc, config.templates, lexicon_ids)
    index.build(labels)

    by_label: list[set[int]] = [set() for _ in enc.tags]
    for p in range(size):
        by_label[labels[p]].add(p)

    rules: list[Rule] = []
    log_iters: list[dict] = []
    initial_accuracy = (size - errors) / size if size else 1.0

    while True:
        best_score, candidates = index.pop_best()
        if best_score is None or best_score < config.threshold:
            break
        decoded = [index.decode_candidate(key, tgt) for key, tgt in candidates]
        pick = min(
            range(len(decoded)),
            key=lambda i: (len(decoded[i].predicate.atoms), decoded[i].body_text()),
        )
        rule = decoded[pick]
        key, target = candidates[pick]
        enc_rule = EncodedRule(
            tuple(
                (ref.offset, int(ref.field), enc.encode_value(ref, value))
                for ref, value in rule.predicate.atoms
            ),
            key[1],
            target,
        )

        matches = sorted(
            p for p in by_label[enc_rule.source] if encoded_applies(enc, labels, enc_rule, p)
        )
        affected = sorted(
            {
                q
                for p in matches
                for q in range(max(enc.lo[p], p - 2), min(enc.hi[p], p + 3))
            }
        )
        for q in affected:
            index.update_position(labels, q, -1)
        delta = 0
        for p in matches:
            if gold[p] == enc_rule.target:
                delta += 1
            elif gold[p] == enc_rule.source:
                delta -= 1
            by_label[labels[p]].discard(p)
            labels[p] = enc_rule.target
            by_label[enc_rule.target].add(p)
        for q in affected:
            index.update_position(labels, q, +1)
        if delta != best_score:
            raise AssertionError(
                f"indexed score {best_score} != recount {delta} for rule {rule.text()}"
            )
        errors -= delta
        t = len(rules)
        final_rule = Rule(rule.predicate, rule.source, rule.target, t)
        rules.append(final_rule)
        log_iters.append(
            {
                "t": t,
                "rule": final_rule.text(),
                "score": best_score,
                "cumulative_accuracy": (size - errors) / size,
            }
        )

    rule_list = RuleList(mapping, fallback, tuple(rules), corpus.tag_inventory)
    log = {
        "initial_accuracy": initial_accuracy,
        "final_accuracy": (size - errors) / size if size else 1.0,
        "iterations": log_iters,
    }
    return rule_list, log
