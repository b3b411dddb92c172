"""CoNLL-2000 column corpora: parsing, typed records, and BIO chunk extraction.

The column format is one token per line (``word pos chunktag``, any run of
ASCII whitespace as separator, columns beyond the third ignored) with blank
lines between sentences.  Chunk tags follow the BIO convention: ``B-X`` opens
a phrase of type X, ``I-X`` continues it, ``O`` is outside any phrase.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence


class CorpusFormatError(ValueError):
    """Raised for malformed corpus input; carries the 1-based line number."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True)
class ChunkTag:
    """A BIO chunk tag: kind B/I/O plus a phrase type (absent iff O)."""

    kind: str
    phrase_type: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("B", "I", "O"):
            raise ValueError(f"bad chunk tag kind {self.kind!r}")
        if (self.kind == "O") != (self.phrase_type is None):
            raise ValueError("phrase_type must be absent exactly when kind is O")
        if self.phrase_type is not None and not self.phrase_type:
            raise ValueError("empty phrase_type")

    @classmethod
    def parse(cls, text: str) -> "ChunkTag":
        tag = _TAG_CACHE.get(text)
        if tag is not None:
            return tag
        if text == "O":
            tag = cls("O", None)
        elif len(text) > 2 and text[1] == "-" and text[0] in ("B", "I"):
            tag = cls(text[0], text[2:])
        else:
            raise ValueError(f"bad chunk tag {text!r} (expected B-X, I-X or O)")
        _TAG_CACHE[text] = tag
        return tag

    def __str__(self) -> str:
        if self.kind == "O":
            return "O"
        return f"{self.kind}-{self.phrase_type}"


_TAG_CACHE: dict[str, ChunkTag] = {}

OUTSIDE = ChunkTag.parse("O")


@dataclass(frozen=True)
class Token:
    """One corpus token: surface word, POS tag, gold chunk tag."""

    word: str
    pos: str
    gold_chunk: ChunkTag

    def __post_init__(self):
        if not self.word or not self.pos:
            raise ValueError("word and pos must be non-empty")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("empty sentence")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)


@dataclass(frozen=True)
class Corpus:
    """An ordered collection of sentences with frozen tag/POS inventories.

    ``tag_inventory`` is the distinct gold chunk tags in first-occurrence
    order; it fixes the index space for probability vectors downstream.
    """

    sentences: tuple[Sentence, ...]
    tag_inventory: tuple[ChunkTag, ...]
    pos_inventory: tuple[str, ...]

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence]) -> "Corpus":
        sentences = tuple(sentences)
        tags: dict[ChunkTag, None] = {}
        pos: dict[str, None] = {}
        for sent in sentences:
            for tok in sent:
                tags.setdefault(tok.gold_chunk, None)
                pos.setdefault(tok.pos, None)
        return cls(sentences, tuple(tags), tuple(pos))

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def subsample(self, start: int, count: int) -> "Corpus":
        """A new corpus over sentences [start, start+count); inventories refrozen."""
        return Corpus.from_sentences(self.sentences[start : start + count])


@dataclass(frozen=True)
class Chunk:
    """A typed phrase spanning token indices [start, end) within a sentence."""

    phrase_type: str
    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad chunk span [{self.start}, {self.end})")


def parse_conll(source) -> Corpus:
    """Parse CoNLL-2000 column text into a Corpus.

    ``source`` may be a string, bytes, or a line iterable (e.g. open file).
    Raises CorpusFormatError with a line number for lines with fewer than
    three columns or unparseable chunk tags.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)

    sentences: list[Sentence] = []
    tokens: list[Token] = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            if tokens:
                sentences.append(Sentence(tuple(tokens)))
                tokens = []
            continue
        cols = line.split()
        if len(cols) < 3:
            raise CorpusFormatError(
                f"expected at least 3 columns, got {len(cols)}: {line!r}", lineno
            )
        try:
            tag = ChunkTag.parse(cols[2])
        except ValueError as exc:
            raise CorpusFormatError(str(exc), lineno) from exc
        tokens.append(Token(cols[0], cols[1], tag))
    if tokens:
        sentences.append(Sentence(tuple(tokens)))
    return Corpus.from_sentences(sentences)


def load_conll(path) -> Corpus:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_conll(handle)


def write_conll(corpus: Corpus, handle) -> None:
    """Write a corpus back to column format (3 columns, blank-line separated)."""
    for sent in corpus:
        for tok in sent:
            handle.write(f"{tok.word} {tok.pos} {tok.gold_chunk}\n")
        handle.write("\n")


def corpus_to_text(corpus: Corpus) -> str:
    out = io.StringIO()
    write_conll(corpus, out)
    return out.getvalue()


def extract_chunks(tags: Sequence[ChunkTag]) -> list[Chunk]:
    """Extract typed phrases from a BIO tag sequence.

    A chunk starts at B-X, or at I-X preceded by O, sentence start, or a tag
    of a different phrase type (the standard CoNLL evaluation convention for
    orphan I- tags).  It continues through consecutive I-X of the same type.
    """
    chunks: list[Chunk] = []
    open_type: Optional[str] = None
    open_start = 0
    for i, tag in enumerate(tags):
        starts_new = False
        if tag.kind == "B":
            starts_new = True
        elif tag.kind == "I" and tag.phrase_type != open_type:
            starts_new = True
        if open_type is not None and (tag.kind == "O" or starts_new):
            chunks.append(Chunk(open_type, open_start, i))
            open_type = None
        if starts_new:
            open_type = tag.phrase_type
            open_start = i
    if open_type is not None:
        chunks.append(Chunk(open_type, open_start, len(tags)))
    return chunks
