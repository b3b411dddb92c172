import pytest

from chunktbl.corpus import ChunkTag, parse_conll

# The example sentence used throughout: every POS/chunk pairing in one place.
EXAMPLE_SENTENCE = """\
A.P. NNP B-NP
Green NNP I-NP
currently RB B-ADVP
has VBZ B-VP
2,664,098 CD B-NP
shares NNS I-NP
outstanding JJ B-ADJP
. . O
"""


def tag(text: str) -> ChunkTag:
    return ChunkTag.parse(text)


@pytest.fixture
def example_corpus():
    return parse_conll(EXAMPLE_SENTENCE)


@pytest.fixture
def example_sentence(example_corpus):
    return example_corpus.sentences[0]
