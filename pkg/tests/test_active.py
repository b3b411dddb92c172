import pytest

from chunktbl.active import (
    ALConfig,
    LearningCurvePoint,
    SelectionMode,
    curve_csv,
    run,
    select_batch,
    sentence_score,
)
from chunktbl.corpus import Corpus, parse_conll
from chunktbl.decoder import TreeModel
from chunktbl.rules import Template, FeatureRef, Field
from chunktbl.trainer import TrainConfig, train
from chunktbl.tree import convert, grow
from chunktbl.synth import generate_corpus

from conftest import tag


def make_trainer(threshold=3):
    templates = (
        Template((FeatureRef(0, Field.POS),)),
        Template((FeatureRef(-1, Field.POS), FeatureRef(0, Field.POS))),
        Template((FeatureRef(-1, Field.CHUNK),)),
        Template((FeatureRef(1, Field.POS),)),
    )

    def trainer(corpus: Corpus):
        rl = train(corpus, TrainConfig(threshold=threshold, templates=templates))
        tree = grow(convert(rl, corpus, k=5), corpus, k=5)
        return TreeModel(rl.initial, rl.fallback, tree)

    return trainer


@pytest.fixture(scope="module")
def pool_and_model():
    corpus = generate_corpus(120, seed=51)
    model = make_trainer()(corpus.subsample(0, 60))
    return corpus, model


class TestSentenceScore:
    def test_mean_token_entropy(self, pool_and_model):
        corpus, model = pool_and_model
        from chunktbl.decoder import decode_sentence

        sent = corpus.sentences[100]
        preds = decode_sentence(model, sent)
        expected = sum(p.distribution.entropy_bits() for p in preds) / len(preds)
        assert sentence_score(model, sent) == pytest.approx(expected)

    def test_rule_list_model_rejected(self, pool_and_model):
        corpus, _ = pool_and_model
        rl = train(corpus.subsample(0, 30), TrainConfig(threshold=5))
        with pytest.raises(ValueError):
            sentence_score(rl, corpus.sentences[0])


class TestSelectBatch:
    def test_sequential_takes_pool_order(self, pool_and_model):
        corpus, model = pool_and_model
        picked = select_batch(model, corpus.sentences[:10], 3, SelectionMode.SEQUENTIAL)
        assert picked == [0, 1, 2]

    def test_entropy_ranks_scores(self, pool_and_model, monkeypatch):
        corpus, model = pool_and_model
        scores = {0: 0.2, 1: 0.9, 2: 0.5}
        pool = list(corpus.sentences[:3])
        monkeypatch.setattr(
            "chunktbl.active.sentence_score",
            lambda m, s: scores[pool.index(s)],
        )
        picked = select_batch(model, pool, 2, SelectionMode.ENTROPY)
        assert picked == [1, 2]

    def test_ties_resolve_to_pool_order(self, pool_and_model, monkeypatch):
        corpus, model = pool_and_model
        monkeypatch.setattr("chunktbl.active.sentence_score", lambda m, s: 1.0)
        pool = list(corpus.sentences[:5])
        picked = select_batch(model, pool, 3, SelectionMode.ENTROPY)
        assert picked == [0, 1, 2]

    def test_small_pool_returned_whole(self, pool_and_model):
        corpus, model = pool_and_model
        picked = select_batch(model, corpus.sentences[:2], 10, SelectionMode.SEQUENTIAL)
        assert picked == [0, 1]

    def test_empty_pool(self, pool_and_model):
        _, model = pool_and_model
        assert select_batch(model, [], 5, SelectionMode.ENTROPY) == []


class TestRun:
    def test_budget_of_t1_gives_single_point(self):
        corpus = generate_corpus(60, seed=53)
        test_c = generate_corpus(30, seed=54)
        config = ALConfig(initial_t1=20, batch_t2=10, stop_at=20,
                          mode=SelectionMode.SEQUENTIAL)
        points = run(corpus, test_c, make_trainer(), config)
        assert len(points) == 1
        assert points[0].labeled_words == sum(len(s) for s in corpus.sentences[:20])

    def test_pool_sizes_follow_t1_plus_batches(self):
        corpus = generate_corpus(75, seed=55)
        test_c = generate_corpus(30, seed=56)
        config = ALConfig(initial_t1=20, batch_t2=15, mode=SelectionMode.SEQUENTIAL)
        points = run(corpus, test_c, make_trainer(), config)
        # 20, 35, 50, 65, 75 (pool exhausts)
        assert len(points) == 5
        assert points[-1].labeled_words == corpus.token_count

    def test_sequential_full_budget_matches_whole_corpus_training(self):
        corpus = generate_corpus(50, seed=57)
        test_c = generate_corpus(30, seed=58)
        trainer = make_trainer()
        config = ALConfig(initial_t1=25, batch_t2=25, mode=SelectionMode.SEQUENTIAL)
        points = run(corpus, test_c, trainer, config)
        from chunktbl.decoder import decode_corpus
        from chunktbl.metrics import chunk_prf

        model = trainer(corpus)
        preds = decode_corpus(model, test_c)
        gold = [[t.gold_chunk for t in s] for s in test_c.sentences]
        report = chunk_prf(preds.labels(), gold)
        assert points[-1].f1 == pytest.approx(report.overall.f1)
        assert points[-1].accuracy == pytest.approx(report.token_accuracy)

    def test_deterministic_without_seed(self):
        corpus = generate_corpus(60, seed=59)
        test_c = generate_corpus(25, seed=60)
        config = ALConfig(initial_t1=20, batch_t2=20, mode=SelectionMode.ENTROPY)
        a = run(corpus, test_c, make_trainer(), config)
        b = run(corpus, test_c, make_trainer(), config)
        assert a == b

    def test_labeled_words_strictly_increasing(self):
        corpus = generate_corpus(60, seed=61)
        test_c = generate_corpus(25, seed=62)
        config = ALConfig(initial_t1=15, batch_t2=15, mode=SelectionMode.ENTROPY)
        points = run(corpus, test_c, make_trainer(), config)
        words = [p.labeled_words for p in points]
        assert words == sorted(set(words))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ALConfig(initial_t1=0)
        with pytest.raises(ValueError):
            ALConfig(batch_t2=0)


class TestCurveCsv:
    def test_layout(self):
        points = {
            "entropy": [LearningCurvePoint(100, 0.8, 0.9)],
            "sequential": [LearningCurvePoint(100, 0.7, 0.85), LearningCurvePoint(200, 0.75, 0.88)],
        }
        lines = curve_csv(points).splitlines()
        assert lines[0] == "labeled_words,f1,accuracy,mode,round"
        assert lines[1] == "100,0.8,0.9,entropy,0"
        assert lines[3] == "200,0.75,0.88,sequential,1"
