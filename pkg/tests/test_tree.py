import json
import math

import pytest

from chunktbl.corpus import ChunkTag, Corpus, Sentence, Token, parse_conll
from chunktbl.decoder import replay_token, window_accessor
from chunktbl.rules import Field, FeatureRef, Predicate, Rule, Template
from chunktbl.trainer import RuleList, TrainConfig, train
from chunktbl.tree import (
    ClassDistribution,
    Internal,
    Leaf,
    convert,
    grow,
    leaf_distribution,
    traverse,
    tree_from_dict,
    tree_to_dict,
)
from chunktbl.synth import generate_corpus

from conftest import tag

A, B, O = tag("B-A"), tag("B-B"), tag("O")


def rule(atoms, source, target, index):
    return Rule(
        Predicate(tuple((FeatureRef(o, f), v) for o, f, v in atoms)),
        source,
        target,
        index,
    )


def flip_rules():
    """The three-rule list behind the worked conversion example: two rules
    rewrite A to B on independent questions, a third flips B back to A."""
    return (
        rule([(0, Field.WORD, "qa")], A, B, 0),
        rule([(0, Field.POS, "qb")], A, B, 1),
        rule([(1, Field.WORD, "qc")], B, A, 2),
    )


def flip_corpus():
    """Eight two-token sentences covering every (q1, q2, q3) combination.

    Token 0 carries q1 in its word and q2 in its POS; token 1's word carries
    q3.  Gold labels equal the per-token replay result, so the rule list is
    'correct' on this corpus."""
    sentences = []
    for q1 in (True, False):
        for q2 in (True, False):
            for q3 in (True, False):
                hyp = A
                if q1:
                    hyp = B
                elif q2:
                    hyp = B
                if hyp == B and q3:
                    hyp = A
                sentences.append(
                    Sentence(
                        (
                            Token("qa" if q1 else "na", "qb" if q2 else "nb", hyp),
                            Token("qc" if q3 else "nc", "px", O),
                        )
                    )
                )
    return Corpus.from_sentences(sentences)


def flip_rule_list():
    return RuleList(
        {"qb": A, "nb": A, "px": O}, O, flip_rules(), (A, B, O)
    )


def collect_paths(node, hyp):
    """(direction string, hypothesis sequence, leaf) for every root-leaf path."""
    if isinstance(node, Leaf):
        return [("", (hyp,), node)]
    out = []
    for dirs, seq, leaf in collect_paths(node.left, hyp):
        out.append(("L" + dirs, (hyp,) + seq[1:] if seq[0] == hyp else (hyp,) + seq, leaf))
    for dirs, seq, leaf in collect_paths(node.right, node.question.target):
        out.append(("R" + dirs, (hyp,) + seq, leaf))
    return out


class TestLeafDistribution:
    def test_single_class(self):
        dist = leaf_distribution([A] * 5, (A, B), 0.001)
        assert dist.probs == pytest.approx((0.9995, 0.0005), abs=1e-15)

    def test_symmetry(self):
        dist = leaf_distribution([A, B], (A, B), 0.37)
        assert dist.probs[0] == pytest.approx(0.5, abs=1e-15)
        assert dist.probs[1] == pytest.approx(0.5, abs=1e-15)

    def test_three_class_interpolation(self):
        # (1-eps)*3/4 + eps/3 and (1-eps)*1/4 + eps/3 with eps = 0.03
        dist = leaf_distribution([A, A, A, B], (A, B, O), 0.03)
        assert dist.probs == pytest.approx((0.7375, 0.2525, 0.01), abs=1e-12)

    def test_empty_multiset_rejected(self):
        with pytest.raises(ValueError):
            leaf_distribution([], (A, B), 0.01)

    def test_epsilon_range(self):
        with pytest.raises(ValueError):
            leaf_distribution([A], (A,), 0.0)
        with pytest.raises(ValueError):
            leaf_distribution([A], (A,), 1.0)

    def test_sums_to_one_with_floor(self):
        for eps in (1e-4, 1e-3, 0.3):
            dist = leaf_distribution([A, A, B], (A, B, O), eps)
            assert abs(sum(dist.probs) - 1.0) <= 1e-9
            assert min(dist.probs) >= eps / 3


class TestConvertStructure:
    def test_worked_example_tree(self):
        tree = convert(flip_rule_list(), flip_corpus(), k=0)
        root = tree.roots[A]
        # question about rule 0 at the top
        assert isinstance(root, Internal) and root.question.rule_index == 0
        # rule 2's question appears under BOTH rule-0-true and rule-1-true
        assert isinstance(root.right, Internal) and root.right.question.rule_index == 2
        left = root.left
        assert isinstance(left, Internal) and left.question.rule_index == 1
        assert isinstance(left.right, Internal) and left.right.question.rule_index == 2
        assert isinstance(left.left, Leaf)
        # five leaves under the A root, matching the five label paths
        paths = collect_paths(root, A)
        assert len(paths) == 5
        label_seqs = sorted("".join(t.phrase_type for t in seq) for _, seq, _ in paths)
        assert label_seqs == ["A", "AB", "AB", "ABA", "ABA"]
        # token-1 population -> a single leaf under O
        assert isinstance(tree.roots[O], Leaf)
        assert tree.roots[O].weight == 8

    def test_empty_rule_list_gives_one_leaf_per_label(self):
        rl = RuleList({"qb": A, "nb": A, "px": O}, O, (), (A, B, O))
        tree = convert(rl, flip_corpus(), k=0)
        assert set(tree.roots) == {A, O}
        assert isinstance(tree.roots[A], Leaf) and tree.roots[A].weight == 8
        assert isinstance(tree.roots[O], Leaf) and tree.roots[O].weight == 8

    def test_oversized_k_rejects_every_split(self):
        tree = convert(flip_rule_list(), flip_corpus(), k=100)
        assert isinstance(tree.roots[A], Leaf) and tree.roots[A].weight == 8
        assert isinstance(tree.roots[O], Leaf)

    def test_full_fire_rule_becomes_pass_through_node(self):
        # one rule that rewrites every state in its node: the node is kept so
        # traversal still tracks the label change; its left side is empty
        corpus = parse_conll("w X B-A\n\nw X B-A\n")
        rl = RuleList(
            {"X": B}, B, (rule([(0, Field.POS, "X")], B, A, 0),), (A, B)
        )
        tree = convert(rl, corpus, k=0)
        root = tree.roots[B]
        assert isinstance(root, Internal)
        assert isinstance(root.left, Leaf) and root.left.weight == 0
        assert isinstance(root.right, Leaf) and root.right.weight == 2
        _, hyp = traverse(tree, lambda off, fld: "w" if fld == Field.WORD else "X", B)
        assert hyp == A

    def test_missing_pos_is_an_error(self):
        rl = flip_rule_list()
        corpus = parse_conll("w QQ B-A\n")
        with pytest.raises(ValueError, match="QQ"):
            convert(rl, corpus, k=0)

    def test_leaf_weights_sum_to_root_population(self):
        corpus = generate_corpus(80, seed=21)
        rl = train(corpus, TrainConfig(threshold=2))
        tree = convert(rl, corpus, k=5)
        mapping = rl.initial
        populations = {}
        for sent in corpus:
            for tok in sent:
                label = mapping[tok.pos]
                populations[label] = populations.get(label, 0) + 1

        def leaf_sum(node):
            if isinstance(node, Leaf):
                return node.weight
            return leaf_sum(node.left) + leaf_sum(node.right)

        for label, node in tree.roots.items():
            assert leaf_sum(node) == populations[label]


class TestEquivalence:
    def test_k0_traversal_equals_per_token_replay(self):
        corpus = generate_corpus(120, seed=17)
        rl = train(corpus, TrainConfig(threshold=2))
        tree = convert(rl, corpus, k=0)
        for sent in corpus.sentences:
            init = [rl.initial_label(tok.pos) for tok in sent]
            decided = []
            for i in range(len(sent)):
                features = window_accessor(sent, i, decided, init)
                _, tree_hyp = traverse(tree, features, init[i])
                replay_hyp = replay_token(rl.rules, features, init[i])
                assert tree_hyp == replay_hyp
                decided.append(replay_hyp)

    def test_leaf_samples_share_fired_rule_sequence(self):
        corpus = generate_corpus(60, seed=23)
        rl = train(corpus, TrainConfig(threshold=2))
        tree = convert(rl, corpus, k=0)
        by_path: dict[tuple, set] = {}
        for sent in corpus.sentences:
            init = [rl.initial_label(tok.pos) for tok in sent]
            decided = []
            for i in range(len(sent)):
                features = window_accessor(sent, i, decided, init)
                hyp = init[i]
                fired = []
                for r in rl.rules:
                    if r.source != hyp:
                        continue
                    if all(
                        (str(hyp) == v if ref.field == Field.CHUNK and ref.offset == 0
                         else features(ref.offset, ref.field) == v)
                        for ref, v in r.predicate.atoms
                    ):
                        fired.append(r.index)
                        hyp = r.target
                # the tree path: replay the traversal recording directions
                node = tree.roots[init[i]]
                hyp2 = init[i]
                path = [str(init[i])]
                while isinstance(node, Internal):
                    q = node.question
                    right = hyp2 == q.source and all(
                        (str(hyp2) == v if ref.field == Field.CHUNK and ref.offset == 0
                         else features(ref.offset, ref.field) == v)
                        for ref, v in q.predicate.atoms
                    )
                    path.append("R" if right else "L")
                    if right:
                        hyp2 = q.target
                        node = node.right
                    else:
                        node = node.left
                by_path.setdefault(tuple(path), set()).add(tuple(fired))
                decided.append(hyp)
        for path, histories in by_path.items():
            assert len(histories) == 1, f"path {path} mixes histories {histories}"


class TestGrowth:
    def grow_fixture(self):
        # six one-token sentences, gold labels (A,A,A,B) on POS X and (B,B)
        # on POS Y; a hand-built rule list pins every initial label to A so
        # the conversion cannot separate them before growth
        text = "w X B-A\n\nw X B-A\n\nw X B-A\n\nw X B-B\n\nw Y B-B\n\nw Y B-B\n"
        corpus = parse_conll(text)
        rl = RuleList({"X": A, "Y": A}, A, (), (A, B))
        return corpus, rl

    def test_gain_example_split_accepted_and_rejected(self):
        # splitting (3,3) into (3,1)/(0,2) gains 1 - (4/6)*H(3/4) = 0.4591
        # bits: accepted above a 0.45 floor, rejected above a 0.47 floor
        corpus, rl = self.grow_fixture()
        expected_gain = 1.0 - (4 / 6) * (-(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25)))
        assert expected_gain == pytest.approx(0.4591, abs=5e-5)

        grown = grow(convert(rl, corpus, k=1), corpus, k=1, min_gain=0.45)
        root = grown.roots[A]
        assert isinstance(root, Internal)
        assert root.question.rule_index is None
        assert root.question.source == root.question.target == A
        assert root.question.predicate.text() == "pos[0]=X"
        assert root.right.weight == 4 and root.left.weight == 2

        kept = grow(convert(rl, corpus, k=1), corpus, k=1, min_gain=0.47)
        assert isinstance(kept.roots[A], Leaf)

    def test_pure_leaf_never_split(self):
        corpus = parse_conll("w X B-A\n\nw X B-A\n\nv Y B-A\n")
        rl = RuleList({"X": A, "Y": A}, A, (), (A,))
        grown = grow(convert(rl, corpus, k=0), corpus, k=0, min_gain=0.0)
        assert isinstance(grown.roots[A], Leaf)

    def test_growth_respects_k(self):
        corpus, rl = self.grow_fixture()
        grown = grow(convert(rl, corpus, k=2), corpus, k=2, min_gain=0.0)
        # the best split leaves only 2 on one side, so k=2 forbids it
        assert isinstance(grown.roots[A], Leaf)

    def test_ce_trace_non_increasing(self):
        corpus = generate_corpus(150, seed=29)
        rl = train(corpus, TrainConfig(threshold=3))
        trace: list[float] = []
        grow(convert(rl, corpus, k=5), corpus, k=5, min_gain=0.0, ce_trace=trace)
        assert trace, "expected at least one growth split"
        for before, after in zip(trace, trace[1:]):
            assert after <= before + 1e-12

    def test_grow_requires_fresh_tree(self):
        corpus, rl = self.grow_fixture()
        tree = convert(rl, corpus, k=1)
        other = parse_conll("w X B-A\n")
        with pytest.raises(ValueError):
            grow(tree, other, k=1)


class TestTraverse:
    def test_empty_rule_list_returns_root_distribution(self):
        rl = RuleList({"qb": A, "nb": A, "px": O}, O, (), (A, B, O))
        corpus = flip_corpus()
        tree = convert(rl, corpus, k=0)
        dist, hyp = traverse(tree, lambda off, fld: "?", A)
        assert hyp == A
        assert dist is tree.roots[A].distribution

    def test_worked_example_q1_true_q3_false(self):
        tree = convert(flip_rule_list(), flip_corpus(), k=0)
        features = {
            (0, Field.WORD): "qa",
            (0, Field.POS): "nb",
            (1, Field.WORD): "nc",
            (1, Field.POS): "px",
        }
        _, hyp = traverse(tree, lambda off, fld: features.get((off, fld), "-"), A)
        assert hyp == B

    def test_unknown_initial_label_rejected(self):
        tree = convert(flip_rule_list(), flip_corpus(), k=0)
        with pytest.raises(ValueError):
            traverse(tree, lambda off, fld: "?", tag("B-ZZ"))


class TestSerialization:
    def test_round_trip_preserves_traversal(self, tmp_path):
        corpus = generate_corpus(100, seed=31)
        rl = train(corpus, TrainConfig(threshold=2))
        tree = grow(convert(rl, corpus, k=5), corpus, k=5, min_gain=0.0)
        data = tree_to_dict(tree)
        path = tmp_path / "tree.json"
        path.write_text(json.dumps(data))
        loaded = tree_from_dict(json.loads(path.read_text()))
        again = json.dumps(tree_to_dict(loaded))
        assert json.dumps(data) == again  # 12-significant-digit fixpoint

        reloaded = tree_from_dict(json.loads(again))
        for sent in corpus.sentences[:20]:
            init = [rl.initial_label(tok.pos) for tok in sent]
            decided = []
            for i in range(len(sent)):
                features = window_accessor(sent, i, decided, init)
                d1, h1 = traverse(loaded, features, init[i])
                d2, h2 = traverse(reloaded, features, init[i])
                assert h1 == h2
                assert d1.probs == d2.probs
                _, h0 = traverse(tree, features, init[i])
                assert h0 == h1
                decided.append(h1)

    def test_node_records_have_spec_fields(self):
        tree = convert(flip_rule_list(), flip_corpus(), k=0)
        data = tree_to_dict(tree)
        root = data["roots"]["B-A"]
        assert root["kind"] == "internal"
        assert set(root["question"]) == {"atoms", "source", "target", "rule_index"}
        assert root["question"]["rule_index"] == 0
        leaf = root["left"]
        while leaf["kind"] == "internal":
            leaf = leaf["left"]
        assert set(leaf) == {"kind", "probs", "weight"}


class TestDistributionSanity:
    def test_all_leaves_smoothed(self):
        corpus = generate_corpus(120, seed=37)
        rl = train(corpus, TrainConfig(threshold=2))
        tree = grow(convert(rl, corpus, k=5, epsilon=1e-3), corpus, k=5)
        k = len(tree.tag_inventory)
        floor = 1e-3 / k
        count = 0
        for leaf in tree.leaves():
            count += 1
            assert abs(sum(leaf.distribution.probs) - 1.0) <= 1e-9
            assert min(leaf.distribution.probs) >= floor
        assert count > 0

    def test_argmax_tie_prefers_lower_index(self):
        dist = ClassDistribution((0.4, 0.4, 0.2))
        assert dist.argmax() == 0
