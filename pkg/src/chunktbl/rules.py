"""Rewrite rules over a five-token feature window.

A rule tests a conjunction of (offset, field) = value atoms within two tokens
of the target position plus the target's current label, and rewrites that
label.  CHUNK atoms always read the current hypothesis labels, never the gold
ones.  Offsets that fall outside the sentence compare against per-field edge
sentinel strings, so rules can meaningfully test sentence boundaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Optional, Sequence
from urllib.parse import quote, unquote

from .corpus import ChunkTag, Corpus, Sentence

WINDOW = 2

EDGE_WORD = "__EDGE_W__"
EDGE_POS = "__EDGE_P__"
EDGE_CHUNK = "__EDGE_C__"

# Encoded id for any out-of-sentence value, in all three fields.
EDGE_ID = -1


class Field(enum.IntEnum):
    WORD = 0
    POS = 1
    CHUNK = 2


EDGE_VALUES = {Field.WORD: EDGE_WORD, Field.POS: EDGE_POS, Field.CHUNK: EDGE_CHUNK}


@dataclass(frozen=True, order=True)
class FeatureRef:
    offset: int
    field: Field

    def __post_init__(self):
        if not -WINDOW <= self.offset <= WINDOW:
            raise ValueError(f"offset {self.offset} outside window ±{WINDOW}")

    def text(self) -> str:
        return f"{self.field.name.lower()}[{self.offset}]"


def parse_feature_ref(text: str) -> FeatureRef:
    name, _, rest = text.partition("[")
    if not rest.endswith("]"):
        raise ValueError(f"bad feature reference {text!r}")
    try:
        fld = Field[name.upper()]
    except KeyError:
        raise ValueError(f"unknown field {name!r}") from None
    return FeatureRef(int(rest[:-1]), fld)


@dataclass(frozen=True)
class Predicate:
    """Conjunction of feature atoms, canonically ordered by (offset, field)."""

    atoms: tuple[tuple[FeatureRef, str], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("predicate needs at least one atom")
        refs = [ref for ref, _ in self.atoms]
        if len(set(refs)) != len(refs):
            raise ValueError("duplicate feature reference in predicate")
        ordered = tuple(sorted(self.atoms, key=lambda a: a[0]))
        if ordered != self.atoms:
            object.__setattr__(self, "atoms", ordered)

    def text(self) -> str:
        return ";".join(f"{ref.text()}={quote(value, safe='')}" for ref, value in self.atoms)


def parse_predicate(text: str) -> Predicate:
    atoms = []
    for part in text.split(";"):
        ref_text, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"bad predicate atom {part!r}")
        atoms.append((parse_feature_ref(ref_text), unquote(value)))
    return Predicate(tuple(atoms))


@dataclass(frozen=True)
class Rule:
    """Rewrite the current label from source to target where the predicate holds."""

    predicate: Predicate
    source: ChunkTag
    target: ChunkTag
    index: Optional[int] = None

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("rule source and target labels must differ")

    def body_text(self) -> str:
        return f"{quote(str(self.source), safe='')}\t{quote(str(self.target), safe='')}\t{self.predicate.text()}"

    def text(self) -> str:
        t = "-" if self.index is None else str(self.index)
        return f"{t}\t{self.body_text()}"


def parse_rule(line: str) -> Rule:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4:
        raise ValueError(f"bad rule line (expected 4 tab-separated fields): {line!r}")
    t_text, source, target, pred = parts
    index = None if t_text == "-" else int(t_text)
    return Rule(
        parse_predicate(pred),
        ChunkTag.parse(unquote(source)),
        ChunkTag.parse(unquote(target)),
        index,
    )


@dataclass(frozen=True)
class Template:
    """The shape of a rule predicate: which window cells it reads."""

    refs: tuple[FeatureRef, ...]

    def __post_init__(self):
        if not self.refs:
            raise ValueError("empty template")
        if len(set(self.refs)) != len(self.refs):
            raise ValueError("duplicate feature reference in template")
        ordered = tuple(sorted(self.refs))
        if ordered != self.refs:
            object.__setattr__(self, "refs", ordered)

    def text(self) -> str:
        return ",".join(ref.text() for ref in self.refs)


def parse_template(text: str) -> Template:
    return Template(tuple(parse_feature_ref(p) for p in text.split(",")))


def default_templates() -> tuple[Template, ...]:
    """The default rule shapes over the ±2 window.

    Single atoms on every window cell; same-field adjacent-offset pairs; a few
    mixed word/POS/chunk pairs; and the POS trigram around the target.  This
    set is an interpretation of classic chunking template inventories, not a
    fixed standard; it is configurable from the CLI.
    """
    templates: dict[Template, None] = {}

    def add(*refs: tuple[int, Field]):
        templates.setdefault(Template(tuple(FeatureRef(o, f) for o, f in refs)), None)

    for fld in Field:
        for off in range(-WINDOW, WINDOW + 1):
            add((off, fld))
    for fld in Field:
        for off in range(-WINDOW, WINDOW):
            add((off, fld), (off + 1, fld))
    add((0, Field.POS), (-1, Field.POS))
    add((0, Field.POS), (1, Field.POS))
    add((0, Field.WORD), (0, Field.POS))
    add((-1, Field.CHUNK), (0, Field.POS))
    add((-1, Field.CHUNK), (0, Field.WORD))
    add((-1, Field.CHUNK), (-2, Field.CHUNK))
    add((-1, Field.POS), (0, Field.POS), (1, Field.POS))
    return tuple(templates)


def compact_templates() -> tuple[Template, ...]:
    """A small, fast template set: POS singletons plus neighbour chunk labels."""
    refs = [(off, Field.POS) for off in range(-WINDOW, WINDOW + 1)]
    refs += [(off, Field.CHUNK) for off in (-2, -1, 1, 2)]
    refs += [(0, Field.WORD)]
    out = [Template((FeatureRef(o, f),)) for o, f in refs]
    out.append(Template((FeatureRef(-1, Field.CHUNK), FeatureRef(0, Field.POS))))
    out.append(Template((FeatureRef(-1, Field.POS), FeatureRef(0, Field.POS))))
    return tuple(out)


TEMPLATE_PRESETS = {"default": default_templates, "compact": compact_templates}


def ambiguous_lexicon(corpus: Corpus, limit: int) -> frozenset[str]:
    """The ``limit`` most ambiguous words: most distinct gold chunk tags,
    ties broken by higher frequency, then lexicographically."""
    tags_of: dict[str, set[ChunkTag]] = {}
    freq: dict[str, int] = {}
    for sent in corpus:
        for tok in sent:
            tags_of.setdefault(tok.word, set()).add(tok.gold_chunk)
            freq[tok.word] = freq.get(tok.word, 0) + 1
    ranked = sorted(tags_of, key=lambda w: (-len(tags_of[w]), -freq[w], w))
    return frozenset(ranked[:limit])


# ---------------------------------------------------------------------------
# Tagging state and object-level rule application (training semantics: CHUNK
# context reads the evolving corpus-wide hypothesis).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaggingState:
    """Per-token hypothesis labels aligned with a corpus."""

    corpus: Corpus
    labels: tuple[tuple[ChunkTag, ...], ...]

    def __post_init__(self):
        if len(self.labels) != len(self.corpus.sentences):
            raise ValueError("state/corpus sentence count mismatch")
        for sent, row in zip(self.corpus.sentences, self.labels):
            if len(sent) != len(row):
                raise ValueError("state/corpus sentence length mismatch")

    def errors(self) -> int:
        wrong = 0
        for sent, row in zip(self.corpus.sentences, self.labels):
            for tok, label in zip(sent, row):
                if tok.gold_chunk != label:
                    wrong += 1
        return wrong

    def accuracy(self) -> float:
        total = self.corpus.token_count
        return (total - self.errors()) / total if total else 1.0


def uniform_state(corpus: Corpus, label: ChunkTag) -> TaggingState:
    return TaggingState(
        corpus, tuple(tuple(label for _ in sent) for sent in corpus.sentences)
    )


def _feature_value(sentence: Sentence, row: Sequence[ChunkTag], i: int, ref: FeatureRef) -> str:
    j = i + ref.offset
    if j < 0 or j >= len(sentence):
        return EDGE_VALUES[ref.field]
    if ref.field == Field.WORD:
        return sentence.tokens[j].word
    if ref.field == Field.POS:
        return sentence.tokens[j].pos
    return str(row[j])


def applies(rule: Rule, state: TaggingState, sentence_idx: int, token_idx: int) -> bool:
    """True iff the rule's predicate holds at the position and the current
    label equals the rule's source label."""
    sentence = state.corpus.sentences[sentence_idx]
    row = state.labels[sentence_idx]
    if row[token_idx] != rule.source:
        return False
    for ref, value in rule.predicate.atoms:
        if _feature_value(sentence, row, token_idx, ref) != value:
            return False
    return True


def apply_rule_pass(rule: Rule, state: TaggingState) -> tuple[TaggingState, int]:
    """Apply the rule everywhere it matches, simultaneously.

    Applicability at every position is judged against the input state; all
    matches are then rewritten at once (snapshot semantics), so one pass never
    cascades into positions it enabled itself.
    """
    new_rows: list[tuple[ChunkTag, ...]] = []
    changed = 0
    for s in range(len(state.corpus.sentences)):
        row = state.labels[s]
        hits = [i for i in range(len(row)) if applies(rule, state, s, i)]
        if hits:
            changed += len(hits)
            mutable = list(row)
            for i in hits:
                mutable[i] = rule.target
            new_rows.append(tuple(mutable))
        else:
            new_rows.append(row)
    return TaggingState(state.corpus, tuple(new_rows)), changed


def replay(rules: Iterable[Rule], state: TaggingState) -> TaggingState:
    """Apply rules in order, one snapshot pass each."""
    for rule in rules:
        state, _ = apply_rule_pass(rule, state)
    return state


def instantiate_candidates(
    templates: Sequence[Template],
    corpus: Corpus,
    state: TaggingState,
    lexicon: Optional[frozenset[str]] = None,
) -> set[Rule]:
    """All error-driven rule candidates.

    For every template and every position whose current label is wrong, read
    the template's feature values there and propose rewriting the current
    label to the gold one.  With a lexicon, candidates whose WORD atoms fall
    outside it are suppressed.
    """
    out: set[Rule] = set()
    for s, sentence in enumerate(corpus.sentences):
        row = state.labels[s]
        for i, tok in enumerate(sentence):
            current = row[i]
            if current == tok.gold_chunk:
                continue
            for template in templates:
                atoms = []
                ok = True
                for ref in template.refs:
                    value = _feature_value(sentence, row, i, ref)
                    if (
                        lexicon is not None
                        and ref.field == Field.WORD
                        and value not in lexicon
                    ):
                        ok = False
                        break
                    atoms.append((ref, value))
                if ok:
                    out.add(Rule(Predicate(tuple(atoms)), current, tok.gold_chunk))
    return out


# ---------------------------------------------------------------------------
# Integer-encoded corpus for the training and tree-building hot paths.
# ---------------------------------------------------------------------------


class EncodedCorpus:
    """Flat integer arrays over a corpus, with per-field vocabularies.

    Token positions are global ids; ``lo``/``hi`` give each position's
    sentence bounds so window reads can detect sentence edges (EDGE_ID).
    """

    def __init__(self, corpus: Corpus, inventory: Optional[Sequence[ChunkTag]] = None):
        self.corpus = corpus
        self.tags: tuple[ChunkTag, ...] = tuple(inventory or corpus.tag_inventory)
        self.tag_id = {str(t): k for k, t in enumerate(self.tags)}
        self.word_id: dict[str, int] = {}
        self.pos_id: dict[str, int] = {}
        self.words: list[int] = []
        self.pos: list[int] = []
        self.gold: list[int] = []
        self.lo: list[int] = []
        self.hi: list[int] = []
        self.sent_bounds: list[tuple[int, int]] = []
        for sent in corpus:
            start = len(self.words)
            for tok in sent:
                self.words.append(self.word_id.setdefault(tok.word, len(self.word_id)))
                self.pos.append(self.pos_id.setdefault(tok.pos, len(self.pos_id)))
                tag_key = str(tok.gold_chunk)
                if tag_key not in self.tag_id:
                    raise ValueError(
                        f"chunk tag {tag_key} not in the model's frozen tag inventory"
                    )
                self.gold.append(self.tag_id[tag_key])
            end = len(self.words)
            self.sent_bounds.append((start, end))
            self.lo.extend([start] * (end - start))
            self.hi.extend([end] * (end - start))
        self.size = len(self.words)

    def tag_of(self, tag_id: int) -> ChunkTag:
        return self.tags[tag_id]

    def encode_tag(self, tag: ChunkTag) -> int:
        key = str(tag)
        if key not in self.tag_id:
            raise ValueError(f"chunk tag {key} not in the model's frozen tag inventory")
        return self.tag_id[key]

    def encode_value(self, ref: FeatureRef, value: str) -> Optional[int]:
        """Integer id of an atom value, EDGE_ID for sentinels, None if the
        value never occurs (such an atom can never match)."""
        if value == EDGE_VALUES[ref.field]:
            return EDGE_ID
        if ref.field == Field.WORD:
            return self.word_id.get(value)
        if ref.field == Field.POS:
            return self.pos_id.get(value)
        return self.tag_id.get(value)

    def encode_rule(self, rule: Rule) -> Optional["EncodedRule"]:
        """Encoded form of a rule, or None if some atom value is unknown."""
        atoms = []
        for ref, value in rule.predicate.atoms:
            vid = self.encode_value(ref, value)
            if vid is None:
                return None
            atoms.append((ref.offset, int(ref.field), vid))
        return EncodedRule(
            tuple(atoms),
            self.encode_tag(rule.source),
            self.encode_tag(rule.target),
            rule.index,
        )


@dataclass(frozen=True)
class EncodedRule:
    atoms: tuple[tuple[int, int, int], ...]  # (offset, field, value id)
    source: int
    target: int
    index: Optional[int] = None


def encoded_applies(
    enc: EncodedCorpus, labels: Sequence[int], rule: EncodedRule, p: int
) -> bool:
    """Training-semantics applicability at global position p: CHUNK atoms read
    the evolving ``labels`` array."""
    if labels[p] != rule.source:
        return False
    lo, hi = enc.lo[p], enc.hi[p]
    for off, fld, vid in rule.atoms:
        j = p + off
        if j < lo or j >= hi:
            if vid != EDGE_ID:
                return False
        elif fld == 0:
            if enc.words[j] != vid:
                return False
        elif fld == 1:
            if enc.pos[j] != vid:
                return False
        elif labels[j] != vid:
            return False
    return True
