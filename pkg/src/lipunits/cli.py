"""Command-line interface.

Utility subcommands (synth, folds, train, decode, score, cluster) expose the
individual stages; discover, netstudy, and hierstudy run the full experiment
pipelines.  Study flags mirror the config-file keys, and a flag always wins
over the file.  Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import cluster as cl
from . import corpus as cp
from . import decoder as dc
from . import lexicon as lx
from . import pipeline as pl
from . import scoring as sc
from . import hmm as hm
from .errors import ConfigError, LipunitsError
from .seeds import derive_seed


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    for field in dataclasses.fields(pl.ExperimentConfig):
        flag = "--" + field.name.replace("_", "-")
        annotation = str(field.type)
        if "bool" in annotation:
            parser.add_argument(flag, dest=field.name, default=None,
                                action=argparse.BooleanOptionalAction)
        else:
            parser.add_argument(flag, dest=field.name, default=None)


def _config_from_args(args) -> pl.ExperimentConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(pl.ExperimentConfig)
        if getattr(args, f.name, None) is not None
    }
    return pl.load_config(args.config, overrides)


def _inventory(path):
    return lx.load_inventory(path) if path else lx.default_inventory()


def _write_hyps(path, hyps) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id, labels in hyps:
            fh.write(f"utt {utt_id} {' '.join(labels)}\n")


def _read_hyps(path) -> dict[str, tuple[str, ...]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] != "utt":
                raise ConfigError(f"{path}: malformed hypothesis line {line!r}")
            out[parts[1]] = tuple(parts[2:])
    return out


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    os.makedirs(cfg.out, exist_ok=True)
    setup = pl.build_synth_setup(cfg)
    utts = cp.generate_corpus(
        setup.model, setup.lex, setup.sentences,
        seed=derive_seed(cfg.seed, "corpus"), crossfade=cfg.synth_crossfade,
    )
    cp.write_corpus(utts, os.path.join(cfg.out, "corpus.txt"))
    with open(os.path.join(cfg.out, "lexicon.dict"), "w", encoding="utf-8") as fh:
        for word, pron in setup.lex.entries.items():
            fh.write(f"{word} {' '.join(pron)}\n")
    lx.write_p2v(setup.cluster_map, os.path.join(cfg.out, "clusters.p2v"))
    print(f"wrote {len(utts)} utterances, {len(setup.lex.entries)} words -> {cfg.out}")
    return 0


def cmd_folds(args) -> int:
    utts = cp.read_corpus(args.corpus)
    plan = cp.plan_folds(utts, args.folds, args.test_size, args.seed)
    cp.write_fold_plan(plan, args.out)
    print(f"wrote {plan.n_folds} folds -> {args.out}")
    return 0


def cmd_train(args) -> int:
    inventory = _inventory(args.inventory)
    lex = lx.read_lexicon(args.lexicon, inventory)
    utts = cp.read_corpus(args.corpus)
    cfg = pl.ExperimentConfig(
        states=args.states, components=args.components, iterations=args.iterations,
        seed=args.seed, sp_between=args.sp_between, sil_edges=args.sil_edges,
    )
    pmap = lx.read_p2v(args.map) if args.map else None
    if args.unit == lx.VISEME and pmap is None:
        raise ConfigError("training visual-unit models needs --map")
    hmms = pl.train_fold_models(cfg, utts, lex, args.unit, pmap, "jitter/train")
    hm.write_hmms(hmms, args.out)
    print(f"trained {len(hmms.models)} models -> {args.out}")
    return 0


def cmd_decode(args) -> int:
    inventory = _inventory(args.inventory)
    lex = lx.read_lexicon(args.lexicon, inventory)
    utts = cp.read_corpus(args.corpus)
    hmms = hm.read_hmms(args.models)
    pmap = lx.read_p2v(args.map) if args.map else None
    if pmap is not None:
        pmap = pmap.with_singletons(lex.phonemes_used())
    cfg = pl.ExperimentConfig(
        grammar_scale=args.grammar_scale, penalty=args.penalty, discount=args.discount,
    )
    if args.lm:
        lm = dc.read_arpa(args.lm)
        net = dc.build_network(lm, lex, pmap, args.classifier_unit, args.network_unit)
    else:
        net, _ = pl.build_fold_network(
            cfg, utts, lex, args.classifier_unit, args.network_unit, pmap
        )
    params = cfg.decode_params()
    hyps = []
    for utt in utts:
        labels, _ = dc.decode(hmms, net, utt.features, params)
        hyps.append((utt.id, labels))
    _write_hyps(args.out, hyps)
    print(f"decoded {len(hyps)} utterances -> {args.out}")
    return 0


def cmd_score(args) -> int:
    inventory = _inventory(args.inventory)
    lex = lx.read_lexicon(args.lexicon, inventory)
    utts = cp.read_corpus(args.corpus)
    pmap = lx.read_p2v(args.map) if args.map else None
    if pmap is not None:
        pmap = pmap.with_singletons(lex.phonemes_used())
    hyps = _read_hyps(args.hyp)
    alignments = []
    for utt in utts:
        if utt.id not in hyps:
            raise ConfigError(f"no hypothesis for utterance {utt.id!r}")
        ref = pl.reference_labels(utt, args.unit, lex, pmap)
        alignments.append(sc.align(ref, hyps[utt.id]))
    fold = sc.FoldResult(fold=0, alignments=tuple(alignments))
    n, d, s, i = fold.pooled_counts()
    if args.out:
        rows = [{
            "speaker": "cli", "map_size": pmap.size if pmap else 0,
            "classifier_unit": args.unit, "network_unit": args.unit,
            "fold": 0, "N": n, "D": d, "S": s, "I": i,
            "C": max(fold.correctness, 0.0), "C_raw": fold.correctness,
        }]
        pl.write_csv(args.out, pl.RESULT_COLUMNS, rows)
    accuracy = (n - d - s - i) / n if n else 0.0
    print(f"N={n} D={d} S={s} I={i} C={fold.correctness:.4f} accuracy={accuracy:.4f}")
    return 0


def cmd_cluster(args) -> int:
    inventory = _inventory(args.inventory)
    matrix = cl.read_confusion_csv(args.confusions).without_unused()
    family = cl.cluster_family(matrix, lx.categories_of(inventory), seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for size in family.sizes:
        lx.write_p2v(family.maps[size], os.path.join(args.out, f"m{size:02d}.p2v"))
    cl.write_trace(family.trace, os.path.join(args.out, "trace.txt"))
    print(f"family sizes {family.max_size}..{family.min_size} -> {args.out}")
    return 0


def cmd_discover(args) -> int:
    cfg = _config_from_args(args)
    pl.run_discovery(cfg)
    print(f"discovery results -> {cfg.out}")
    return 0


def cmd_netstudy(args) -> int:
    cfg = _config_from_args(args)
    pl.run_network_study(cfg)
    print(f"network study results -> {cfg.out}")
    return 0


def cmd_hierstudy(args) -> int:
    cfg = _config_from_args(args)
    pl.run_hierarchical_study(cfg)
    print(f"hierarchy study results -> {cfg.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipunits",
        description="Data-driven visual speech units: discovery, training, decoding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus, lexicon, and cluster map")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("folds", help="plan cross-validation folds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--test-size", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_folds)

    p = sub.add_parser("train", help="flat-start and re-estimate one model set")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--inventory")
    p.add_argument("--unit", choices=[lx.PHONEME, lx.VISEME, lx.WORD], default=lx.PHONEME)
    p.add_argument("--map")
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--components", type=int, default=5)
    p.add_argument("--iterations", type=int, default=11)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sp-between", dest="sp_between", default=True,
                   action=argparse.BooleanOptionalAction)
    p.add_argument("--sil-edges", dest="sil_edges", default=False,
                   action=argparse.BooleanOptionalAction)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("decode", help="decode a corpus with trained models")
    p.add_argument("--models", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--inventory")
    p.add_argument("--map")
    p.add_argument("--lm", help="ARPA-like language model; estimated from the corpus if omitted")
    p.add_argument("--classifier-unit", dest="classifier_unit",
                   choices=[lx.PHONEME, lx.VISEME, lx.WORD], default=lx.PHONEME)
    p.add_argument("--network-unit", dest="network_unit",
                   choices=[lx.PHONEME, lx.VISEME, lx.WORD], default=lx.WORD)
    p.add_argument("--grammar-scale", dest="grammar_scale", type=float, default=1.0)
    p.add_argument("--penalty", type=float, default=0.5)
    p.add_argument("--discount", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("score", help="align hypotheses against references")
    p.add_argument("--corpus", required=True, help="corpus carrying reference words")
    p.add_argument("--hyp", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--inventory")
    p.add_argument("--map")
    p.add_argument("--unit", choices=[lx.PHONEME, lx.VISEME, lx.WORD], default=lx.WORD)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("cluster", help="merge a confusion matrix into a unit family")
    p.add_argument("--confusions", required=True, help="confusion CSV")
    p.add_argument("--inventory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_cluster)

    for name, fn, blurb in (
        ("discover", cmd_discover, "three-step unit discovery sweep"),
        ("netstudy", cmd_netstudy, "classifier/network unit pairing study"),
        ("hierstudy", cmd_hierstudy, "hierarchical-training comparison"),
    ):
        p = sub.add_parser(name, help=blurb)
        _add_config_flags(p)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LipunitsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
