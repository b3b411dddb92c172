"""Converting a rule list into a probability-estimating decision tree.

Each internal node asks one rule's question: does the predicate hold and is
the running hypothesis equal to the rule's rewrite source?  Yes goes right
(and updates the hypothesis to the rule's target); no goes left.  One rule
generally yields question nodes in several regions of the tree.  Leaves hold
the smoothed gold-label distribution of the training states routed to them,
which all share the same label-rewrite history.

Sample routing freezes each token's feature window: words and POS are static,
chunk labels to the left are the already-decided per-token labels, chunk
labels to the right are the initial POS-based labels.  The running hypothesis
answers chunk questions about the token itself.  Decoding uses the same
frozen-window semantics, so with no pruning (K=0) and no growth the tree
reproduces per-token rule-list replay exactly.

Leaves that the rule list never carved up can be split further by classic
information-gain induction over the same feature space (growth phase).
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

from .corpus import ChunkTag, Corpus
from .rules import (
    EDGE_ID,
    EDGE_VALUES,
    EncodedCorpus,
    Field,
    FeatureRef,
    Predicate,
    Rule,
    ambiguous_lexicon,
)
from .trainer import RuleList

DEFAULT_EPSILON = 1e-3
DEFAULT_K = 5


@dataclass(frozen=True)
class ClassDistribution:
    """Probability vector aligned with a tag inventory."""

    probs: tuple[float, ...]

    def __post_init__(self):
        if any(p < 0 for p in self.probs):
            raise ValueError("negative probability")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("distribution does not sum to 1")

    def argmax(self) -> int:
        """Index of the highest probability; ties resolve to the lowest index."""
        best = 0
        for i in range(1, len(self.probs)):
            if self.probs[i] > self.probs[best]:
                best = i
        return best

    def entropy_bits(self) -> float:
        return -sum(p * math.log2(p) for p in self.probs if p > 0.0)


def leaf_distribution(
    gold_labels: Iterable[ChunkTag],
    inventory: Sequence[ChunkTag],
    epsilon: float,
) -> ClassDistribution:
    """Empirical label distribution interpolated with a uniform constant:
    p(c) = (1 - eps) * count(c)/total + eps/|inventory|."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    index = {tag: i for i, tag in enumerate(inventory)}
    counts = [0] * len(inventory)
    total = 0
    for tag in gold_labels:
        counts[index[tag]] += 1
        total += 1
    if total == 0:
        raise ValueError("empty label multiset")
    return _smooth_counts(counts, total, epsilon)


def _smooth_counts(counts: Sequence[int], total: int, epsilon: float) -> ClassDistribution:
    uniform = epsilon / len(counts)
    scale = (1.0 - epsilon) / total
    return ClassDistribution(tuple(c * scale + uniform for c in counts))


@dataclass(frozen=True)
class Question:
    """An internal node's test: predicate plus required running hypothesis.

    ``rule_index`` names the source rule for converted nodes and is None for
    growth-phase nodes, whose target equals their source (no label change).
    """

    predicate: Predicate
    source: ChunkTag
    target: ChunkTag
    rule_index: Optional[int]


@dataclass
class Internal:
    question: Question
    left: "TreeNode"
    right: "TreeNode"


@dataclass
class Leaf:
    distribution: ClassDistribution
    weight: int
    # populated transiently during construction, for the growth phase
    samples: Optional[list[int]] = None
    label_id: Optional[int] = None


TreeNode = Union[Internal, Leaf]


@dataclass
class ProbTree:
    roots: dict[ChunkTag, TreeNode]
    tag_inventory: tuple[ChunkTag, ...]
    epsilon: float
    _ctx: Optional["_BuildContext"] = None

    def leaves(self) -> Iterable[Leaf]:
        stack = list(self.roots.values())
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                yield node
            else:
                stack.append(node.left)
                stack.append(node.right)

    def node_count(self) -> tuple[int, int]:
        internal = leaves = 0
        stack = list(self.roots.values())
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                leaves += 1
            else:
                internal += 1
                stack.append(node.left)
                stack.append(node.right)
        return internal, leaves


class _BuildContext:
    """Frozen per-token windows for every training position."""

    def __init__(self, rule_list: RuleList, corpus: Corpus):
        enc = EncodedCorpus(corpus, inventory=rule_list.tag_inventory)
        self.enc = enc
        self.corpus = corpus
        missing = [pos for pos in corpus.pos_inventory if pos not in rule_list.initial]
        if missing:
            raise ValueError(
                f"corpus has POS tags missing from the initial assignment: {missing[:5]}"
            )
        self.init = [
            enc.tag_id[str(rule_list.initial[tok.pos])] for sent in corpus for tok in sent
        ]
        self.enc_rules = [enc.encode_rule(rule) for rule in rule_list.rules]
        self.decided = self._per_token_replay()
        self.lexicon_ids: Optional[set[int]] = None

    def _per_token_replay(self) -> list[int]:
        """Left-to-right per-token application of the whole rule list, feeding
        decided labels forward into the left context."""
        enc = self.enc
        init = self.init
        decided: list[int] = [0] * enc.size
        for start, end in enc.sent_bounds:
            for p in range(start, end):
                hyp = init[p]
                for rule in self.enc_rules:
                    if rule is None or rule.source != hyp:
                        continue
                    if self._atoms_hold(rule.atoms, p, hyp, decided):
                        hyp = rule.target
                decided[p] = hyp
        return decided

    def _atoms_hold(
        self, atoms, p: int, hyp: int, decided: Optional[Sequence[int]] = None
    ) -> bool:
        """Evaluate predicate atoms in the frozen window of position p."""
        enc = self.enc
        lo, hi = enc.lo[p], enc.hi[p]
        if decided is None:
            decided = self.decided
        for off, fld, vid in atoms:
            if off == 0 and fld == 2:
                if vid != hyp:
                    return False
                continue
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
            elif (decided[j] if off < 0 else self.init[j]) != vid:
                return False
        return True

    def feature_id(self, p: int, off: int, fld: int) -> int:
        enc = self.enc
        j = p + off
        if j < enc.lo[p] or j >= enc.hi[p]:
            return EDGE_ID
        if fld == 0:
            return enc.words[j]
        if fld == 1:
            return enc.pos[j]
        return self.decided[j] if off < 0 else self.init[j]

    def decode_value(self, fld: int, vid: int) -> str:
        if vid == EDGE_ID:
            return EDGE_VALUES[Field(fld)]
        enc = self.enc
        if fld == 0:
            return self._word_list[vid]
        if fld == 1:
            return self._pos_list[vid]
        return str(enc.tags[vid])

    @property
    def _word_list(self):
        lst = getattr(self, "_wl", None)
        if lst is None:
            lst = self._wl = list(self.enc.word_id)
        return lst

    @property
    def _pos_list(self):
        lst = getattr(self, "_pl", None)
        if lst is None:
            lst = self._pl = list(self.enc.pos_id)
        return lst


def convert(
    rule_list: RuleList,
    corpus: Corpus,
    k: int = DEFAULT_K,
    epsilon: float = DEFAULT_EPSILON,
) -> ProbTree:
    """Recursive rule-list-to-tree conversion.

    Walking the learned rules in order, each node's states split into the
    part the rule rewrites (right) and the rest (left); a split is kept only
    when both sides hold more than ``k`` states.  A rule that rewrites every
    state in a node updates the node's label without creating a split; a rule
    rejected by the size check is skipped without applying its rewrite.
    Exhausting the rules makes a leaf with the states' smoothed gold
    distribution.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    ctx = _BuildContext(rule_list, corpus)
    enc = ctx.enc
    rules = rule_list.rules

    populations: dict[int, list[int]] = {}
    for p in range(enc.size):
        populations.setdefault(ctx.init[p], []).append(p)

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, len(rules) * 2 + 10000))
    try:
        roots: dict[ChunkTag, TreeNode] = {}
        for label_id in sorted(populations):
            roots[enc.tags[label_id]] = _convert_node(
                ctx, rules, populations[label_id], 0, label_id, k, epsilon
            )
    finally:
        sys.setrecursionlimit(old_limit)
    tree = ProbTree(roots, enc.tags, epsilon)
    tree._ctx = ctx
    return tree


def _make_leaf(ctx: _BuildContext, samples: list[int], label_id: int, epsilon: float) -> Leaf:
    counts = [0] * len(ctx.enc.tags)
    for p in samples:
        counts[ctx.enc.gold[p]] += 1
    return Leaf(_smooth_counts(counts, len(samples), epsilon), len(samples), samples, label_id)


def _convert_node(
    ctx: _BuildContext,
    rules: Sequence[Rule],
    samples: list[int],
    j: int,
    label_id: int,
    k: int,
    epsilon: float,
) -> TreeNode:
    enc_rules = ctx.enc_rules
    while j < len(rules):
        enc_rule = enc_rules[j]
        if enc_rule is None or enc_rule.source != label_id:
            j += 1
            continue
        right = [p for p in samples if ctx._atoms_hold(enc_rule.atoms, p, label_id)]
        if not right:
            j += 1
            continue
        rule = rules[j]
        question = Question(rule.predicate, rule.source, rule.target, j)
        if len(right) == len(samples):
            # The rule rewrites every state here.  A real node is still needed
            # so traversal keeps tracking the hypothesis (and unseen inputs
            # failing the predicate keep rule-list semantics); its empty left
            # side becomes a weight-0 leaf carrying this node's distribution.
            empty = Leaf(
                _make_leaf(ctx, samples, label_id, epsilon).distribution, 0, [], label_id
            )
            return Internal(
                question,
                empty,
                _convert_node(ctx, rules, samples, j + 1, enc_rule.target, k, epsilon),
            )
        right_set = set(right)
        left = [p for p in samples if p not in right_set]
        if len(left) > k and len(right) > k:
            return Internal(
                question,
                _convert_node(ctx, rules, left, j + 1, label_id, k, epsilon),
                _convert_node(ctx, rules, right, j + 1, enc_rule.target, k, epsilon),
            )
        j += 1
    return _make_leaf(ctx, samples, label_id, epsilon)


# ---------------------------------------------------------------------------
# Growth phase: information-gain splits inside converted-tree leaves.
# ---------------------------------------------------------------------------

_GROWTH_CELLS = [
    (off, int(fld))
    for off in range(-2, 3)
    for fld in Field
    if not (off == 0 and fld == Field.CHUNK)
]


def _entropy_counts(counts: dict[int, int], total: int) -> float:
    h = 0.0
    for c in counts.values():
        if c:
            q = c / total
            h -= q * math.log2(q)
    return h


def _leaf_cost_bits(ctx: _BuildContext, samples: list[int], epsilon: float) -> float:
    """Total -log2 p(gold) over the samples under the smoothed distribution."""
    counts = [0] * len(ctx.enc.tags)
    for p in samples:
        counts[ctx.enc.gold[p]] += 1
    dist = _smooth_counts(counts, len(samples), epsilon)
    return -sum(c * math.log2(dist.probs[i]) for i, c in enumerate(counts) if c)


def grow(
    tree: ProbTree,
    corpus: Corpus,
    k: int = DEFAULT_K,
    min_gain: float = 0.0,
    ce_trace: Optional[list[float]] = None,
    lexicon_limit: Optional[int] = None,
) -> ProbTree:
    """Split converted-tree leaves further on single-atom questions chosen by
    information gain, subject to both sides exceeding ``k`` states.

    Growth questions never change the running hypothesis.  Requires a tree
    freshly built by ``convert`` over the same corpus (leaf populations are
    only available then).  ``ce_trace``, if given, records the training-set
    mean -log2 p(gold) after each accepted split.  ``lexicon_limit`` restricts
    word-valued questions to the corpus's most ambiguous words, mirroring the
    trainer's option.
    """
    ctx = tree._ctx
    if ctx is None or ctx.corpus is not corpus:
        raise ValueError("grow() needs a tree built by convert() over the same corpus")
    if lexicon_limit is not None:
        allowed = ambiguous_lexicon(corpus, lexicon_limit)
        ctx.lexicon_ids = {
            ctx.enc.word_id[w] for w in allowed if w in ctx.enc.word_id
        }
    total_tokens = ctx.enc.size
    audit = _GrowthAudit(total_tokens, ce_trace)
    if ce_trace is not None:
        for leaf in tree.leaves():
            if leaf.weight:
                audit.base += _leaf_cost_bits(ctx, leaf.samples, tree.epsilon)

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10000))
    try:
        roots = {
            label: _grow_node(ctx, node, k, min_gain, tree.epsilon, audit)
            for label, node in tree.roots.items()
        }
    finally:
        sys.setrecursionlimit(old_limit)
    grown = ProbTree(roots, tree.tag_inventory, tree.epsilon)
    grown._ctx = ctx
    return grown


class _GrowthAudit:
    def __init__(self, total_tokens: int, trace: Optional[list[float]]):
        self.total_tokens = total_tokens
        self.trace = trace
        self.base = 0.0

    def record_split(self, parent_cost: float, child_cost: float) -> None:
        if self.trace is not None:
            self.base += child_cost - parent_cost
            self.trace.append(self.base / self.total_tokens)


def _grow_node(
    ctx: _BuildContext,
    node: TreeNode,
    k: int,
    min_gain: float,
    epsilon: float,
    audit: _GrowthAudit,
) -> TreeNode:
    if isinstance(node, Internal):
        return Internal(
            node.question,
            _grow_node(ctx, node.left, k, min_gain, epsilon, audit),
            _grow_node(ctx, node.right, k, min_gain, epsilon, audit),
        )
    if node.weight == 0:
        return node
    return _grow_leaf(ctx, node.samples, node.label_id, k, min_gain, epsilon, audit)


def _grow_leaf(
    ctx: _BuildContext,
    samples: list[int],
    label_id: int,
    k: int,
    min_gain: float,
    epsilon: float,
    audit: _GrowthAudit,
) -> TreeNode:
    total = len(samples)
    gold = ctx.enc.gold
    node_counts: dict[int, int] = {}
    for p in samples:
        node_counts[gold[p]] = node_counts.get(gold[p], 0) + 1
    node_h = _entropy_counts(node_counts, total)
    if node_h <= 0.0:
        return _make_leaf(ctx, samples, label_id, epsilon)

    best = None  # (-gain, off, fld, vid)
    for off, fld in _GROWTH_CELLS:
        by_value: dict[int, dict[int, int]] = {}
        for p in samples:
            v = ctx.feature_id(p, off, fld)
            per = by_value.get(v)
            if per is None:
                per = by_value[v] = {}
            g = gold[p]
            per[g] = per.get(g, 0) + 1
        for v, right_counts in by_value.items():
            if fld == 0 and ctx.lexicon_ids is not None and v not in ctx.lexicon_ids:
                continue
            n_r = sum(right_counts.values())
            n_l = total - n_r
            if n_r <= k or n_l <= k:
                continue
            left_counts = {
                g: c - right_counts.get(g, 0)
                for g, c in node_counts.items()
                if c - right_counts.get(g, 0)
            }
            gain = (
                node_h
                - (n_l / total) * _entropy_counts(left_counts, n_l)
                - (n_r / total) * _entropy_counts(right_counts, n_r)
            )
            cand = (-gain, off, fld, v)
            if best is None or cand < best:
                best = cand

    if best is None or -best[0] <= min_gain:
        return _make_leaf(ctx, samples, label_id, epsilon)

    _, off, fld, vid = best
    ref = FeatureRef(off, Field(fld))
    value = ctx.decode_value(fld, vid)
    label = ctx.enc.tags[label_id]
    question = Question(Predicate(((ref, value),)), label, label, None)
    right = [p for p in samples if ctx.feature_id(p, off, fld) == vid]
    right_set = set(right)
    left = [p for p in samples if p not in right_set]

    if audit.trace is not None:
        parent_cost = _leaf_cost_bits(ctx, samples, epsilon)
        child_cost = _leaf_cost_bits(ctx, left, epsilon) + _leaf_cost_bits(
            ctx, right, epsilon
        )
        audit.record_split(parent_cost, child_cost)

    return Internal(
        question,
        _grow_leaf(ctx, left, label_id, k, min_gain, epsilon, audit),
        _grow_leaf(ctx, right, label_id, k, min_gain, epsilon, audit),
    )


# ---------------------------------------------------------------------------
# Traversal and serialization.
# ---------------------------------------------------------------------------

FeatureAccessor = Callable[[int, Field], str]


def traverse(
    tree: ProbTree, features: FeatureAccessor, initial_label: ChunkTag
) -> tuple[ClassDistribution, ChunkTag]:
    """Walk from the initial label's root to a leaf.

    At each node, go right iff the predicate holds over ``features`` and the
    running hypothesis equals the question's source label; right moves update
    the hypothesis to the question's target.  Chunk atoms at offset 0 are
    answered by the running hypothesis itself.
    """
    if initial_label not in tree.roots:
        raise ValueError(f"no root for initial label {initial_label}")
    node = tree.roots[initial_label]
    hyp = initial_label
    while isinstance(node, Internal):
        q = node.question
        if hyp == q.source and _question_holds(q, features, hyp):
            hyp = q.target
            node = node.right
        else:
            node = node.left
    return node.distribution, hyp


def _question_holds(q: Question, features: FeatureAccessor, hyp: ChunkTag) -> bool:
    for ref, value in q.predicate.atoms:
        if ref.field == Field.CHUNK and ref.offset == 0:
            if str(hyp) != value:
                return False
        elif features(ref.offset, ref.field) != value:
            return False
    return True


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {
            "kind": "leaf",
            "probs": [float(f"{p:.12g}") for p in node.distribution.probs],
            "weight": node.weight,
        }
    q = node.question
    return {
        "kind": "internal",
        "question": {
            "atoms": [
                {"field": ref.field.name.lower(), "offset": ref.offset, "value": value}
                for ref, value in q.predicate.atoms
            ],
            "source": str(q.source),
            "target": str(q.target),
            "rule_index": q.rule_index,
        },
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(data: dict) -> TreeNode:
    if data["kind"] == "leaf":
        return Leaf(ClassDistribution(tuple(data["probs"])), data["weight"])
    q = data["question"]
    predicate = Predicate(
        tuple(
            (FeatureRef(a["offset"], Field[a["field"].upper()]), a["value"])
            for a in q["atoms"]
        )
    )
    question = Question(
        predicate,
        ChunkTag.parse(q["source"]),
        ChunkTag.parse(q["target"]),
        q["rule_index"],
    )
    return Internal(question, _node_from_dict(data["left"]), _node_from_dict(data["right"]))


def tree_to_dict(tree: ProbTree) -> dict:
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 20000))
    try:
        return {
            "tags": [str(t) for t in tree.tag_inventory],
            "epsilon": tree.epsilon,
            "roots": {str(label): _node_to_dict(node) for label, node in tree.roots.items()},
        }
    finally:
        sys.setrecursionlimit(old_limit)


def tree_from_dict(data: dict) -> ProbTree:
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 20000))
    try:
        return ProbTree(
            {
                ChunkTag.parse(label): _node_from_dict(node)
                for label, node in data["roots"].items()
            },
            tuple(ChunkTag.parse(t) for t in data["tags"]),
            data["epsilon"],
        )
    finally:
        sys.setrecursionlimit(old_limit)
