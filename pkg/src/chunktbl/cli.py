"""Command-line entry point.

Subcommands cover the whole pipeline: ``synth`` (demo data), ``train``,
``convert`` (tree building, optionally grown), ``decode``, ``eval``,
``curves`` (rejection), ``al`` (active learning), and ``serve`` (HTTP
service).  Every command is a pure function of its inputs: identical inputs
produce byte-identical outputs.

A ``key=value`` config file can hold any long-option value (dashes become
underscores); explicit flags win.  Exit codes: 0 success, 1 validation
failure, 2 I/O or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import Corpus, CorpusFormatError, load_conll, write_conll
from .rules import TEMPLATE_PRESETS, Template, parse_template
from .trainer import RuleList, TrainConfig, train_with_log
from .tree import DEFAULT_EPSILON, DEFAULT_K, convert, grow, traverse
from .decoder import (
    TreeModel,
    decode_corpus,
    read_predictions,
    replay_token,
    window_accessor,
    write_predictions,
    write_predictions_jsonl,
)
from .metrics import (
    chunk_prf,
    cross_entropy,
    perplexity,
    rejection_batch,
    rejection_online,
)
from . import active
from .synth import generate_corpus


class ValidationFailure(Exception):
    """Outputs disagree with a required property; exit code 1."""


def load_templates(spec: str) -> tuple[Template, ...]:
    if spec in TEMPLATE_PRESETS:
        return TEMPLATE_PRESETS[spec]()
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"template preset or file not found: {spec}")
    templates = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            templates.append(parse_template(line))
    return tuple(templates)


def _load_model(path: str):
    """Model file sniffing: tree models are JSON objects, rule lists are
    tab-separated text with a #tags header."""
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.read(1)
    if first == "{":
        return TreeModel.load(path)
    return RuleList.load(path)


def cmd_synth(args) -> int:
    corpus = generate_corpus(args.sentences, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as out:
        write_conll(corpus, out)
    print(f"wrote {len(corpus)} sentences ({corpus.token_count} tokens) to {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = load_conll(args.train)
    config = TrainConfig(
        threshold=args.threshold,
        templates=load_templates(args.templates),
        lexicon_limit=args.lexicon_limit,
    )
    rule_list, log = train_with_log(corpus, config)
    rule_list.save(args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as out:
            json.dump(log, out, indent=2)
            out.write("\n")
    print(
        f"learned {len(rule_list.rules)} rules; training accuracy "
        f"{log['initial_accuracy']:.4f} -> {log['final_accuracy']:.4f}"
    )
    return 0


def cmd_convert(args) -> int:
    rule_list = RuleList.load(args.rules)
    corpus = load_conll(args.train)
    tree = convert(rule_list, corpus, k=args.k, epsilon=args.epsilon)
    if args.grow:
        tree = grow(tree, corpus, k=args.k, min_gain=args.min_gain,
                    lexicon_limit=args.lexicon_limit)
    model = TreeModel(rule_list.initial, rule_list.fallback, tree)
    model.save(args.out)
    internal, leaf_count = tree.node_count()
    print(f"tree written: {internal} question nodes, {leaf_count} leaves")
    if args.verify_equivalence:
        if args.k != 0 or args.grow:
            raise ValidationFailure(
                "--verify-equivalence requires --k 0 and --no-grow"
            )
        bad = _equivalence_mismatches(rule_list, tree, corpus)
        if bad:
            raise ValidationFailure(
                f"tree/rule-list equivalence failed at {bad} of "
                f"{corpus.token_count} training tokens"
            )
        print(f"equivalence verified on {corpus.token_count} training tokens")
    return 0


def _equivalence_mismatches(rule_list: RuleList, tree, corpus: Corpus) -> int:
    bad = 0
    for sent in corpus.sentences:
        init = [rule_list.initial_label(tok.pos) for tok in sent]
        decided = []
        for i in range(len(sent)):
            features = window_accessor(sent, i, decided, init)
            _, tree_hyp = traverse(tree, features, init[i])
            replay_hyp = replay_token(rule_list.rules, features, init[i])
            if tree_hyp != replay_hyp:
                bad += 1
            decided.append(replay_hyp)
    return bad


def cmd_decode(args) -> int:
    model = _load_model(args.model)
    corpus = load_conll(args.input)
    predictions = decode_corpus(model, corpus, workers=args.workers)
    inventory = model.tag_inventory
    writer = write_predictions_jsonl if args.jsonl else write_predictions
    with open(args.out, "w", encoding="utf-8") as out:
        writer(out, corpus, predictions, inventory)
    print(f"decoded {len(corpus)} sentences to {args.out}")
    return 0


def cmd_eval(args) -> int:
    with open(args.pred, "r", encoding="utf-8") as handle:
        pred_file = read_predictions(handle)
    gold = list(pred_file.gold)
    if args.gold:
        gold_corpus = load_conll(args.gold)
        gold = [[tok.gold_chunk for tok in sent] for sent in gold_corpus.sentences]
        if [len(s) for s in gold] != [len(s) for s in pred_file.pred]:
            raise ValidationFailure("gold corpus does not align with predictions")
    report = chunk_prf(list(pred_file.pred), gold, beta=args.beta)
    result = report.to_json_dict()
    if pred_file.has_distributions:
        h = cross_entropy(
            pred_file.distributions(),
            [t for sent in gold for t in sent],
            pred_file.tags,
        )
        result["cross_entropy_bits"] = h
        result["perplexity"] = perplexity(h)
    sys.stdout.write(report.table())
    if pred_file.has_distributions:
        print(
            f"cross entropy: {result['cross_entropy_bits']:.4f} bits; "
            f"perplexity: {result['perplexity']:.4f}"
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as out:
            json.dump(result, out, indent=2)
            out.write("\n")
    return 0


def cmd_curves(args) -> int:
    with open(args.pred, "r", encoding="utf-8") as handle:
        pred_file = read_predictions(handle)
    if not pred_file.has_distributions:
        raise ValidationFailure(
            "rejection curves need predictions with probability columns "
            "(decode with a tree model)"
        )
    from .decoder import TokenPrediction

    dists = pred_file.distributions()
    preds = [
        TokenPrediction(label, dist, label)
        for label, dist in zip(pred_file.flat_pred(), dists)
    ]
    gold = pred_file.flat_gold()
    if args.kind == "batch":
        curve = rejection_batch(preds, gold)
    else:
        curve = rejection_online(preds, gold)
    with open(args.out, "w", encoding="utf-8") as out:
        out.write(curve.to_csv())
    print(f"wrote {len(curve.points)} curve points to {args.out}")
    return 0


def cmd_al(args) -> int:
    train_corpus = load_conll(args.train)
    test_corpus = load_conll(args.test)
    templates = load_templates(args.templates)

    def trainer(corpus: Corpus):
        rule_list = train_with_log(
            corpus,
            TrainConfig(
                threshold=args.threshold,
                templates=templates,
                lexicon_limit=args.lexicon_limit,
            ),
        )[0]
        tree = convert(rule_list, corpus, k=args.k, epsilon=args.epsilon)
        if args.grow:
            tree = grow(tree, corpus, k=args.k, min_gain=args.min_gain)
        return TreeModel(rule_list.initial, rule_list.fallback, tree)

    modes = (
        [active.SelectionMode.ENTROPY, active.SelectionMode.SEQUENTIAL]
        if args.mode == "both"
        else [active.SelectionMode(args.mode)]
    )
    curves = {}
    for mode in modes:
        config = active.ALConfig(
            initial_t1=args.t1,
            batch_t2=args.t2,
            stop_at=args.stop_at,
            mode=mode,
            seed=args.seed,
        )
        curves[mode.value] = active.run(train_corpus, test_corpus, trainer, config)
    with open(args.out, "w", encoding="utf-8") as out:
        out.write(active.curve_csv(curves))
    if args.manifest:
        manifest = {
            "train": args.train,
            "test": args.test,
            "mode": args.mode,
            "t1": args.t1,
            "t2": args.t2,
            "stop_at": args.stop_at,
            "seed": args.seed,
            "threshold": args.threshold,
            "templates": args.templates,
            "k": args.k,
            "epsilon": args.epsilon,
            "min_gain": args.min_gain,
            "grow": args.grow,
            "lexicon_limit": args.lexicon_limit,
        }
        with open(args.manifest, "w", encoding="utf-8") as out:
            json.dump(manifest, out, indent=2)
            out.write("\n")
    print(f"wrote learning curves ({', '.join(curves)}) to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_load_model(args.model))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _add_train_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threshold", type=int, default=2,
                        help="stop when the best rule scores below this (default 2)")
    parser.add_argument("--templates", default="default",
                        help="template preset name or file (default: 'default')")
    parser.add_argument("--lexicon-limit", type=int, default=None,
                        help="restrict word atoms to the N most ambiguous words")


def _add_tree_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=DEFAULT_K,
                        help=f"minimum leaf weight for a split (default {DEFAULT_K})")
    parser.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                        help="uniform-interpolation smoothing constant")
    grow_group = parser.add_mutually_exclusive_group()
    grow_group.add_argument("--grow", dest="grow", action="store_true", default=True,
                            help="continue growth by information gain (default)")
    grow_group.add_argument("--no-grow", dest="grow", action="store_false")
    parser.add_argument("--min-gain", type=float, default=0.0,
                        help="minimum information gain (bits) for a growth split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chunktbl",
        description="Transformation-based chunking with probability trees",
    )
    parser.add_argument("--config", default=None,
                        help="key=value file supplying defaults for long options")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic chunking corpus")
    p.add_argument("--sentences", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="learn a transformation rule list")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="write a JSON training log here")
    _add_train_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert a rule list into a probability tree")
    p.add_argument("--rules", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon-limit", type=int, default=None,
                   help="restrict growth word questions to the N most ambiguous words")
    p.add_argument("--verify-equivalence", action="store_true",
                   help="check tree traversal against rule replay (needs --k 0 --no-grow)")
    _add_tree_options(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("decode", help="tag a corpus")
    p.add_argument("--model", required=True, help="tree (.json) or rule-list model file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", action="store_true", help="JSON-lines output")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="score predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", default=None, help="gold corpus to cross-check against")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curves", help="rejection curves as CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--kind", choices=["batch", "online"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("al", help="active-learning curves")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--mode", choices=["entropy", "sequential", "both"], default="both")
    p.add_argument("--t1", type=int, default=50)
    p.add_argument("--t2", type=int, default=25)
    p.add_argument("--stop-at", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    _add_train_options(p)
    _add_tree_options(p)
    p.set_defaults(func=cmd_al)

    p = sub.add_parser("serve", help="run the HTTP chunking service")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Read --config key=value defaults into the parser; flags still win."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    defaults = {}
    for lineno, line in enumerate(
        Path(known.config).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CorpusFormatError(f"bad config line {line!r}", lineno)
        defaults[key.strip().replace("-", "_")] = value.strip()
    for action in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
        usable = {}
        for act in action._actions:
            if act.dest in defaults and act.dest != "help":
                raw = defaults[act.dest]
                if act.type is int:
                    usable[act.dest] = int(raw)
                elif act.type is float:
                    usable[act.dest] = float(raw)
                elif isinstance(act.const, bool) or isinstance(act.default, bool):
                    usable[act.dest] = raw.lower() in ("1", "true", "yes")
                else:
                    usable[act.dest] = raw
        action.set_defaults(**usable)
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, CorpusFormatError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
