"""Transformation-based text chunking with probability-estimating trees.

Train an error-driven rewrite-rule list for BIO chunking, convert it into a
decision tree whose leaves hold smoothed class distributions, optionally grow
the tree further by information gain, and evaluate with chunk F-measure,
cross entropy, rejection curves, and entropy-driven active learning.
"""

from .corpus import Chunk, ChunkTag, Corpus, Sentence, Token, extract_chunks, load_conll, parse_conll
from .rules import Predicate, Rule, TaggingState, Template, default_templates
from .trainer import RuleList, TrainConfig, initial_assignment, score_rule, train
from .tree import ClassDistribution, ProbTree, convert, grow, leaf_distribution, traverse
from .decoder import DecodeMode, TokenPrediction, TreeModel, decode_corpus, decode_sentence
from .metrics import EvalReport, chunk_prf, cross_entropy, f_measure, perplexity, token_accuracy

__version__ = "0.1.0"
