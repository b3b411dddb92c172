"""Deterministic synthetic chunking corpora.

Generates newswire-flavoured sentences over a small vocabulary with BIO
chunk tags that follow CoNLL-2000 conventions.  The grammar is built so that
a POS-unigram baseline lands in the mid-80s on token accuracy while window
context (neighbouring POS, words, and already-assigned chunk tags) resolves
most of the rest: infinitival vs. prepositional "to", NP-internal vs.
clause-level coordination, predicative vs. attributive adjectives, and so on.
A few constructions (the ambiguous subordinators) are genuinely uncertain
within the feature window, so probability estimates have something real to
express.  Useful for tests and demos; real CoNLL-2000 files drop in through
the same column format.
"""

from __future__ import annotations

import random
from typing import Callable

from .corpus import ChunkTag, Corpus, Sentence, Token

_T = ChunkTag.parse

B_NP, I_NP = _T("B-NP"), _T("I-NP")
B_VP, I_VP = _T("B-VP"), _T("I-VP")
B_PP = _T("B-PP")
B_ADVP = _T("B-ADVP")
B_ADJP, I_ADJP = _T("B-ADJP"), _T("I-ADJP")
B_SBAR = _T("B-SBAR")
O = _T("O")

DT = ("the", "a", "this", "some", "no", "each")
PRP = ("it", "he", "they", "we", "she")
JJ = ("big", "small", "new", "last", "financial", "strong", "major", "foreign")
NN = ("company", "market", "share", "price", "plan", "government", "bank", "group", "rate", "report")
NNS = ("shares", "companies", "markets", "prices", "analysts", "banks", "rates", "officials")
NNP = ("Green", "Smith", "London", "Acme", "Tuesday", "Tokyo", "Ford")
CD = ("two", "three", "10", "25", "1,000")
VBZ = ("says", "expects", "makes", "buys", "sees")
VBZ_PLAN = ("plans", "wants", "tries")
VBZ_COP = ("is", "remains", "looks")
VBD = ("said", "rose", "fell", "bought", "sold", "moved")
VBD_COP = ("was", "seemed")
VB = ("buy", "sell", "make", "boost", "move", "cut")
VBG = ("rising", "falling", "making", "buying")
VBN = ("expected", "reported", "based", "raised")
MD = ("will", "would", "could", "may")
RB_ADV = ("currently", "still", "now", "sharply", "recently")
RB_DEG = ("very", "quite")
IN_PP = ("of", "in", "on", "for", "at", "with")
IN_SBAR = ("that", "because", "while", "if")
IN_AMBIG = ("as", "before", "after")
CC = ("and", "but", "or")


def _tok(word: str, pos: str, tag: ChunkTag) -> Token:
    return Token(word, pos, tag)


class _Grammar:
    def __init__(self, rng: random.Random):
        self.rng = rng

    def pick(self, options):
        return self.rng.choice(options)

    def noun_phrase(self) -> list[Token]:
        rng = self.rng
        roll = rng.random()
        if roll < 0.15:
            return [_tok(self.pick(PRP), "PRP", B_NP)]
        if roll < 0.40:
            return [_tok(self.pick(DT), "DT", B_NP), _tok(self.pick(NN), "NN", I_NP)]
        if roll < 0.55:
            return [
                _tok(self.pick(DT), "DT", B_NP),
                _tok(self.pick(JJ), "JJ", I_NP),
                _tok(self.pick(NN), "NN", I_NP),
            ]
        if roll < 0.65:
            return [_tok(self.pick(JJ), "JJ", B_NP), _tok(self.pick(NNS), "NNS", I_NP)]
        if roll < 0.75:
            return [_tok(self.pick(NNS), "NNS", B_NP)]
        if roll < 0.83:
            out = [_tok(self.pick(NNP), "NNP", B_NP)]
            if rng.random() < 0.5:
                out.append(_tok(self.pick(NNP), "NNP", I_NP))
            return out
        if roll < 0.91:
            return [_tok(self.pick(CD), "CD", B_NP), _tok(self.pick(NNS), "NNS", I_NP)]
        if roll < 0.97:
            return [
                _tok(self.pick(DT), "DT", B_NP),
                _tok(self.pick(NN), "NN", I_NP),
                _tok(self.pick(NN), "NN", I_NP),
            ]
        # NP-internal coordination: CC stays inside the phrase
        return [
            _tok(self.pick(NNS), "NNS", B_NP),
            _tok(self.pick(CC), "CC", I_NP),
            _tok(self.pick(NNS), "NNS", I_NP),
        ]

    def verb_phrase(self) -> list[Token]:
        rng = self.rng
        roll = rng.random()
        if roll < 0.30:
            return [_tok(self.pick(VBZ), "VBZ", B_VP)]
        if roll < 0.50:
            return [_tok(self.pick(VBD), "VBD", B_VP)]
        if roll < 0.65:
            return [_tok(self.pick(MD), "MD", B_VP), _tok(self.pick(VB), "VB", I_VP)]
        if roll < 0.72:
            return [
                _tok(self.pick(MD), "MD", B_VP),
                _tok("not", "RB", I_VP),
                _tok(self.pick(VB), "VB", I_VP),
            ]
        if roll < 0.82:
            return [_tok(self.pick(VBZ_COP), "VBZ", B_VP), _tok(self.pick(VBG), "VBG", I_VP)]
        if roll < 0.92:
            return [_tok(self.pick(VBD_COP), "VBD", B_VP), _tok(self.pick(VBN), "VBN", I_VP)]
        return [
            _tok(self.pick(VBZ_PLAN), "VBZ", B_VP),
            _tok("to", "TO", I_VP),
            _tok(self.pick(VB), "VB", I_VP),
        ]

    def copula_adjp(self) -> list[Token]:
        out = [_tok(self.pick(VBZ_COP if self.rng.random() < 0.5 else VBD_COP),
                    "VBZ" if self.rng.random() < 0.5 else "VBD", B_VP)]
        if self.rng.random() < 0.4:
            out.append(_tok(self.pick(RB_DEG), "RB", B_ADJP))
            out.append(_tok(self.pick(JJ), "JJ", I_ADJP))
        else:
            out.append(_tok(self.pick(JJ), "JJ", B_ADJP))
        return out

    def prep_phrase(self) -> list[Token]:
        return [_tok(self.pick(IN_PP), "IN", B_PP)] + self.noun_phrase()

    def to_phrase(self) -> list[Token]:
        # prepositional "to": same word as the infinitival marker
        return [_tok("to", "TO", B_PP), _tok(self.pick(NNP), "NNP", B_NP)]

    def adverb(self) -> list[Token]:
        return [_tok(self.pick(RB_ADV), "RB", B_ADVP)]

    def subordinate_clause(self) -> list[Token]:
        return (
            [_tok(self.pick(IN_SBAR), "IN", B_SBAR)]
            + self.noun_phrase()
            + self.verb_phrase()
            + self.noun_phrase()
        )

    def ambiguous_tail(self) -> list[Token]:
        """PP or SBAR headed by the same subordinator words; the window often
        cannot tell which, so these tokens carry irreducible uncertainty."""
        word = self.pick(IN_AMBIG)
        if self.rng.random() < 0.5:
            return [_tok(word, "IN", B_PP)] + self.noun_phrase()
        return [_tok(word, "IN", B_SBAR)] + self.noun_phrase() + self.verb_phrase()

    def sentence(self) -> Sentence:
        rng = self.rng
        roll = rng.random()
        toks: list[Token]
        if roll < 0.26:
            toks = self.noun_phrase() + self.verb_phrase() + self.noun_phrase()
        elif roll < 0.40:
            toks = self.noun_phrase() + self.verb_phrase() + self.prep_phrase()
        elif roll < 0.50:
            toks = self.noun_phrase() + self.copula_adjp()
        elif roll < 0.60:
            toks = self.noun_phrase() + self.adverb() + self.verb_phrase() + self.noun_phrase()
        elif roll < 0.70:
            toks = (
                self.noun_phrase() + self.verb_phrase() + self.noun_phrase() + self.prep_phrase()
            )
        elif roll < 0.76:
            toks = self.noun_phrase() + self.verb_phrase() + self.to_phrase()
        elif roll < 0.83:
            toks = self.noun_phrase() + self.verb_phrase() + self.noun_phrase() + self.ambiguous_tail()
        elif roll < 0.89:
            toks = (
                self.noun_phrase()
                + self.verb_phrase()
                + self.noun_phrase()
                + self.subordinate_clause()
            )
        elif roll < 0.95:
            # clause-level coordination: CC outside any phrase
            toks = (
                self.noun_phrase()
                + self.verb_phrase()
                + self.noun_phrase()
                + [_tok(self.pick(CC), "CC", O)]
                + self.noun_phrase()
                + self.verb_phrase()
                + self.noun_phrase()
            )
        else:
            toks = self.noun_phrase() + self.copula_adjp() + self.ambiguous_tail()
        if rng.random() < 0.08:
            toks = self.adverb() + [_tok(",", ",", O)] + toks
        toks.append(_tok(".", ".", O))
        return Sentence(tuple(toks))


def generate_corpus(n_sentences: int, seed: int = 0) -> Corpus:
    rng = random.Random(seed)
    grammar = _Grammar(rng)
    return Corpus.from_sentences(grammar.sentence() for _ in range(n_sentences))
