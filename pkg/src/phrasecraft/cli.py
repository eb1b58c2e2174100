"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Each run prints one JSON object (metrics plus the duration-free manifest)
to stdout and a small readable table to stderr; commands with an output
directory also write delimited reports, rendered figures, and a manifest
that does include the wall-clock duration.

Numeric modules are imported lazily so that --threads can cap the BLAS
worker pools before the first numpy import.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import runio
from .errors import (
    DataError,
    InvalidArgumentError,
    NumericError,
    UsageError,
)

GRADCHECK_TARGETS = ("composer", "composer-proj", "triplet", "classifier", "pntm")
GRADCHECK_TOLERANCE = 1e-4

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage as an exception instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _version() -> str:
    from . import __version__

    return __version__


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, default=None, help="run seed (fallback: PHRASECRAFT_SEED, then 0)")
    common.add_argument("--threads", type=int, default=None, help="cap numeric worker pools")

    parser = _Parser(prog="phrasecraft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("train-embed", parents=[common], help="contrastive fine-tune of the phrase composer")
    p.add_argument("--vectors", required=True, help="initial token vectors (pvec)")
    p.add_argument("--phrase-triplets", help="TSV anchor<TAB>positive<TAB>negative")
    p.add_argument("--phrase-pairs", help="TSV anchor<TAB>positive; negatives are generated (needs --neg raw)")
    p.add_argument("--context-triplets", help="TSV anchor<TAB>masked_context<TAB>negative_context")
    p.add_argument("--context-records", help="TSV anchor<TAB>context; masking and negatives are generated")
    p.add_argument("--neg", choices=["file", "raw"], default=None,
                   help="negative source for phrase pairs: pre-generated file rows or raw corruption")
    p.add_argument("--force-corrupt", action="store_true", default=None,
                   help="corrupt a stopword position when a phrase has nothing else")
    p.add_argument("--stopwords", help="stopword file, one token per line")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--warmup", type=float, default=None)
    p.add_argument("--lr-hold", action=argparse.BooleanOptionalAction, default=None,
                   help="hold the learning rate constant after warmup instead of decaying")
    p.add_argument("--projection", choices=["none", "linear", "tanh"], default=None)
    p.add_argument("--oov", choices=["skip", "zero"], default=None)
    p.add_argument("--sequential", action="store_true", default=None,
                   help="train the phrase pool to completion before the context pool")
    p.add_argument("--out", help="output directory for checkpoint, reports, figures")

    p = sub.add_parser("train-topics", parents=[common], help="train the topic matrix on a corpus")
    p.add_argument("--corpus", required=True, help="one document per line, or JSON lines with a text field")
    p.add_argument("--vectors", required=True)
    p.add_argument("--format", choices=["auto", "text", "jsonl"], default="auto")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--negatives", type=int, default=None)
    p.add_argument("--ortho", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--neg-term", choices=["anchor", "recon"], default=None)
    p.add_argument("--out", help="output directory for the model, reports, figures")

    p = sub.add_parser("eval", parents=[common], help="run an evaluation protocol")
    p.add_argument("task", choices=["turney", "bird", "pairs"])
    p.add_argument("--vectors", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metric", choices=["cosine", "l2"], default=None)
    p.add_argument("--lr", type=float, default=None, help="pairs task: classifier learning rate")
    p.add_argument("--epochs", type=int, default=None, help="pairs task: classifier epochs")
    p.add_argument("--batch", type=int, default=None, help="pairs task: classifier batch size")
    p.add_argument("--out", help="output directory for reports and figures")

    p = sub.add_parser("filter-ppdb", parents=[common], help="balance lexical overlap across pair classes")
    p.add_argument("--in", dest="in_path", required=True, help="labeled pairs TSV")
    p.add_argument("--out", dest="out_path", required=True, help="filtered pairs TSV")

    p = sub.add_parser("neighbors", parents=[common], help="nearest neighbors of a phrase")
    p.add_argument("--vectors", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--metric", choices=["cosine", "l2"], default=None)

    p = sub.add_parser("diversity", parents=[common], help="lexical diversity of nearest neighbors")
    p.add_argument("--vectors", required=True)
    p.add_argument("--queries", required=True, help="one query phrase per line")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--metric", choices=["cosine", "l2"], default=None)
    p.add_argument("--lcs-side", choices=["neighbor", "query"], default=None)
    p.add_argument("--char-level", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--out", help="output directory for per-query rows and figures")

    p = sub.add_parser("topics", parents=[common], help="inspect a trained topic model")
    p.add_argument("action", choices=["interpret", "intrude", "correspond"])
    p.add_argument("--model", required=True, help="topic model directory")
    p.add_argument("--vectors", help="vocabulary vectors (interpret/intrude)")
    p.add_argument("--top", type=int, default=None, help="items per topic (interpret)")
    p.add_argument("--out", help="JSONL output path (interpret/intrude)")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference checks of every hand gradient")
    p.add_argument("targets", nargs="*", metavar="TARGET",
                   help=f"any of: {', '.join(GRADCHECK_TARGETS)}")
    p.add_argument("--all", action="store_true", help="run every check")
    p.add_argument("--dim", type=int, default=None, help="embedding dim for the random instances")

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        return _dispatch(argv)
    except SystemExit as e:  # argparse --help
        return e.code if isinstance(e.code, int) else 0
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except InvalidArgumentError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


def _dispatch(argv) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand is required")

    file_cfg = runio.load_config(args.config) if getattr(args, "config", None) else {}
    threads = runio.resolve_option("threads", getattr(args, "threads", None), file_cfg, None, int)
    if threads is not None:
        if threads < 1:
            raise UsageError(f"--threads must be >= 1, got {threads}")
        for var in _THREAD_ENV_VARS:
            os.environ[var] = str(threads)

    handlers = {
        "train-embed": _cmd_train_embed,
        "train-topics": _cmd_train_topics,
        "eval": _cmd_eval,
        "filter-ppdb": _cmd_filter_ppdb,
        "neighbors": _cmd_neighbors,
        "diversity": _cmd_diversity,
        "topics": _cmd_topics,
        "gradcheck": _cmd_gradcheck,
    }
    return handlers[args.command](args, argv, file_cfg, threads)


def _resolve_seed(args, file_cfg) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in file_cfg:
        try:
            return int(file_cfg["seed"])
        except ValueError:
            raise UsageError(f"config seed must be an integer, got {file_cfg['seed']!r}") from None
    env = os.environ.get("PHRASECRAFT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"PHRASECRAFT_SEED must be an integer, got {env!r}") from None
    return 0


def _manifest(argv, config: dict, seed: int, inputs) -> runio.RunManifest:
    manifest = runio.RunManifest(
        command_line=["phrasecraft", *argv],
        config=config,
        seed=seed,
        version=_version(),
    )
    for path in inputs:
        manifest.add_input(path)
    return manifest


def _finish(manifest: runio.RunManifest, metrics: dict, out_dir, t0: float) -> int:
    manifest.duration_s = time.monotonic() - t0
    if out_dir:
        runio.write_json_atomic(os.path.join(out_dir, "manifest.json"), manifest.to_dict())
    runio.emit_metrics(metrics, manifest)
    return 0


def _load_stopwords(path):
    from .contrastive import StopwordSet

    with open(path, "r", encoding="utf-8") as fh:
        tokens = frozenset(line.strip().lower() for line in fh if line.strip())
    return StopwordSet(tokens)


# --- training commands ---------------------------------------------------------


def _cmd_train_embed(args, argv, file_cfg, threads) -> int:
    t0 = time.monotonic()
    import numpy as np

    from . import composer, contrastive, numcore, report, vecstore

    known = {"lr", "batch", "epochs", "margin", "warmup", "lr_hold", "projection",
             "oov", "seed", "threads", "sequential", "neg", "force_corrupt"}
    runio.warn_unknown_keys(file_cfg, known)

    opt = lambda name, flag, default, cast: runio.resolve_option(name, flag, file_cfg, default, cast)
    seed = _resolve_seed(args, file_cfg)
    cfg = numcore.TrainConfig(
        base_lr=opt("lr", args.lr, 2e-5, float),
        batch_size=opt("batch", args.batch, 16, int),
        epochs=opt("epochs", args.epochs, 1, int),
        warmup_fraction=opt("warmup", args.warmup, 0.10, float),
        margin=opt("margin", args.margin, 1.0, float),
        seed=seed,
        lr_hold=opt("lr_hold", args.lr_hold, False, runio.parse_bool),
    )
    projection = opt("projection", args.projection, "none", str)
    oov = opt("oov", args.oov, "skip", str)
    sequential = opt("sequential", args.sequential, False, runio.parse_bool)
    neg_source = opt("neg", args.neg, "file", str)
    force = opt("force_corrupt", args.force_corrupt, False, runio.parse_bool)

    sources = [args.phrase_triplets, args.phrase_pairs, args.context_triplets, args.context_records]
    if not any(sources):
        raise UsageError("supply at least one of --phrase-triplets, --phrase-pairs, "
                         "--context-triplets, --context-records")
    if args.phrase_pairs and neg_source != "raw":
        raise UsageError("--phrase-pairs carries no negatives; pass --neg raw to corrupt anchors")

    vocab, matrix = vecstore.load_vectors(args.vectors)
    table = matrix.data
    has_context_input = bool(args.context_triplets or args.context_records)
    if has_context_input and composer.MASK_TOKEN not in vocab:
        # give the mask token a row: the vocabulary centroid, a neutral start
        vocab = vecstore.Vocab(vocab.entries + [composer.MASK_TOKEN])
        table = np.vstack([table, table.mean(axis=0, keepdims=True)])

    rng = numcore.make_rng(seed)
    stopwords = _load_stopwords(args.stopwords) if args.stopwords else contrastive.StopwordSet.default()

    phrase_triplets = []
    if args.phrase_triplets:
        phrase_triplets.extend(contrastive.load_phrase_triplets(args.phrase_triplets))
    if args.phrase_pairs:
        pairs = contrastive.load_phrase_pairs(args.phrase_pairs)
        phrase_triplets.extend(
            contrastive.build_phrase_triplets(pairs, vocab, stopwords, rng, force=force)
        )
    context_triplets = []
    if args.context_triplets:
        context_triplets.extend(contrastive.load_context_triplets(args.context_triplets))
    if args.context_records:
        records = contrastive.load_context_records(args.context_records)
        context_triplets.extend(contrastive.build_context_triplets(records, rng))
    if not phrase_triplets and not context_triplets:
        raise DataError("all triplet sources came up empty")

    model = composer.ComposerModel(
        token_vocab=vocab,
        token_table=table,
        projection=None if projection == "none" else np.eye(matrix.dim),
        bias=None if projection == "none" else np.zeros(matrix.dim),
        nonlinearity="tanh" if projection == "tanh" else "none",
        oov_policy=oov,
    )

    histories = []
    if sequential and phrase_triplets and context_triplets:
        model, hist1 = contrastive.train_contrastive(model, phrase_triplets, [], cfg, rng)
        model, hist2 = contrastive.train_contrastive(model, [], context_triplets, cfg, rng)
        histories = [("phrase-phase", hist1), ("context-phase", hist2)]
    else:
        model, hist = contrastive.train_contrastive(model, phrase_triplets, context_triplets, cfg, rng)
        histories = [("joint", hist)]

    all_batches = [b for _, h in histories for b in h.batches]
    epoch_satisfied = [s for _, h in histories for s in h.epoch_satisfied]
    if all_batches:
        last_epoch = all_batches[-1].epoch
        last_losses = [b.loss for _, h in histories[-1:] for b in h.batches if b.epoch == last_epoch]
        final_loss = float(np.mean(last_losses))
    else:
        final_loss = 0.0
    metrics = {
        "n_phrase_triplets": len(phrase_triplets),
        "n_context_triplets": len(context_triplets),
        "steps": len(all_batches),
        "final_epoch_mean_loss": final_loss,
        "final_satisfied_fraction": epoch_satisfied[-1] if epoch_satisfied else 0.0,
    }

    config = {
        "lr": cfg.base_lr, "batch": cfg.batch_size, "epochs": cfg.epochs,
        "margin": cfg.margin, "warmup": cfg.warmup_fraction, "lr_hold": cfg.lr_hold,
        "projection": projection, "oov": oov, "sequential": sequential,
        "neg": neg_source, "force_corrupt": force, "threads": threads,
    }
    inputs = [args.vectors] + [s for s in sources if s] + ([args.stopwords] if args.stopwords else [])
    manifest = _manifest(argv, config, seed, inputs)

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        composer.save_composer(model, os.path.join(args.out, "model"))
        report.write_tsv(
            os.path.join(args.out, "history.tsv"),
            ["phase", "epoch", "step", "kind", "loss", "satisfied"],
            [(name, b.epoch, b.step, b.kind, b.loss, b.satisfied)
             for name, h in histories for b in h.batches],
        )
        report.write_tsv(
            os.path.join(args.out, "satisfaction.tsv"),
            ["epoch", "satisfied_fraction"],
            list(enumerate(epoch_satisfied)),
        )
        report.save_line_plot(
            os.path.join(args.out, "loss_curve.png"),
            {"batch loss": [b.loss for b in all_batches]},
            "contrastive training", "step", "mean batch loss",
        )
        report.save_line_plot(
            os.path.join(args.out, "satisfaction.png"),
            {"satisfied fraction": epoch_satisfied},
            "margin satisfaction", "epoch", "fraction of triplets",
        )
    return _finish(manifest, metrics, args.out, t0)


def _cmd_train_topics(args, argv, file_cfg, threads) -> int:
    t0 = time.monotonic()
    import numpy as np

    from . import composer, numcore, report, topicmodel, vecstore

    known = {"k", "negatives", "ortho", "epochs", "lr", "batch", "seed", "threads", "neg_term"}
    runio.warn_unknown_keys(file_cfg, known)
    opt = lambda name, flag, default, cast: runio.resolve_option(name, flag, file_cfg, default, cast)
    seed = _resolve_seed(args, file_cfg)
    cfg = topicmodel.PntmConfig(
        k=opt("k", args.k, 50, int),
        negatives=opt("negatives", args.negatives, 5, int),
        ortho_weight=opt("ortho", args.ortho, 1.0, float),
        epochs=opt("epochs", args.epochs, 300, int),
        lr=opt("lr", args.lr, 0.01, float),
        batch_size=opt("batch", args.batch, 32, int),
        seed=seed,
        neg_term=opt("neg_term", args.neg_term, "anchor", str),
    )

    vocab, matrix = vecstore.load_vectors(args.vectors)
    enc = composer.ComposerModel(token_vocab=vocab, token_table=matrix.data)
    docs = topicmodel.load_corpus(args.corpus, fmt=args.format)
    doc_vectors = np.stack([enc.embed_document(composer.tokenize(text)) for _, text in docs])

    rng = numcore.make_rng(seed)
    model, history = topicmodel.train_pntm(doc_vectors, cfg, rng)

    drift, pairwise = topicmodel.correspondence_stats(model)
    metrics = {
        "n_docs": len(docs),
        "ortho_init": topicmodel.orthogonality_penalty(model.R_init),
        "ortho_final": topicmodel.orthogonality_penalty(model.R),
        "avg_drift": drift,
        "avg_pairwise_distance": pairwise,
    }
    if history.epochs:
        last = history.epochs[-1]
        metrics.update(final_hinge=last.hinge, final_objective=last.objective)

    config = {
        "k": cfg.k, "negatives": cfg.negatives, "ortho": cfg.ortho_weight,
        "epochs": cfg.epochs, "lr": cfg.lr, "batch": cfg.batch_size,
        "neg_term": cfg.neg_term, "format": args.format, "threads": threads,
    }
    manifest = _manifest(argv, config, seed, [args.corpus, args.vectors])

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        topicmodel.save_topic_model(model, os.path.join(args.out, "model"))
        report.write_tsv(
            os.path.join(args.out, "history.tsv"),
            ["epoch", "hinge", "ortho", "objective"],
            [(e.epoch, e.hinge, e.ortho, e.objective) for e in history.epochs],
        )
        report.save_line_plot(
            os.path.join(args.out, "loss_curve.png"),
            {
                "hinge": [e.hinge for e in history.epochs],
                "orthogonality": [e.ortho for e in history.epochs],
                "objective": [e.objective for e in history.epochs],
            },
            "topic model training", "epoch", "loss",
        )
    return _finish(manifest, metrics, args.out, t0)


# --- evaluation commands ---------------------------------------------------------


def _cmd_eval(args, argv, file_cfg, threads) -> int:
    t0 = time.monotonic()
    from . import evalsuite, numcore, report, vecstore

    known = {"metric", "seed", "threads", "lr", "epochs", "batch"}
    runio.warn_unknown_keys(file_cfg, known)
    opt = lambda name, flag, default, cast: runio.resolve_option(name, flag, file_cfg, default, cast)
    seed = _resolve_seed(args, file_cfg)
    metric = opt("metric", args.metric, "cosine", str)

    vocab, matrix = vecstore.load_vectors(args.vectors)
    embed = evalsuite.make_embedder(vocab, matrix)
    rng = numcore.make_rng(seed)
    config = {"task": args.task, "metric": metric, "threads": threads}

    if args.out:
        os.makedirs(args.out, exist_ok=True)

    if args.task == "turney":
        items = evalsuite.load_turney(args.data, rng)
        accuracy = evalsuite.eval_turney(items, embed, metric)
        metrics = {"task": "turney", "accuracy": accuracy, "n_items": len(items)}
    elif args.task == "bird":
        items = evalsuite.load_bird(args.data)
        sims = [evalsuite.similarity(embed(it.a), embed(it.b), metric) for it in items]
        scores = [it.score for it in items]
        metrics = {
            "task": "bird",
            "pearson": evalsuite.pearson(sims, scores),
            "spearman": evalsuite.spearman(sims, scores),
            "n_items": len(items),
        }
        if args.out:
            report.write_tsv(
                os.path.join(args.out, "pairs.tsv"),
                ["a", "b", "similarity", "score"],
                [(it.a.surface, it.b.surface, s, it.score) for it, s in zip(items, sims)],
            )
            report.save_scatter(
                os.path.join(args.out, "similarity_vs_score.png"),
                sims, scores, "model similarity vs human score", "similarity", "human score",
            )
    else:
        pairs = evalsuite.load_pairs(args.data)
        train, dev, test = evalsuite.split_pairs(pairs, rng)
        cfg = numcore.TrainConfig(
            base_lr=opt("lr", args.lr, 1e-3, float),
            batch_size=opt("batch", args.batch, 32, int),
            epochs=opt("epochs", args.epochs, 8, int),
            seed=seed,
        )
        config.update(lr=cfg.base_lr, batch=cfg.batch_size, epochs=cfg.epochs)
        clf = evalsuite.train_pair_classifier(train, embed, cfg, rng)
        metrics = {
            "task": "pairs",
            "dev_accuracy": evalsuite.eval_pair_classifier(clf, dev, embed) if dev else float("nan"),
            "test_accuracy": evalsuite.eval_pair_classifier(clf, test, embed),
            "n_train": len(train),
            "n_dev": len(dev),
            "n_test": len(test),
        }

    manifest = _manifest(argv, config, seed, [args.vectors, args.data])
    return _finish(manifest, metrics, args.out, t0)


def _cmd_filter_ppdb(args, argv, file_cfg, threads) -> int:
    t0 = time.monotonic()
    from . import evalsuite, report

    runio.warn_unknown_keys(file_cfg, {"seed", "threads"})
    seed = _resolve_seed(args, file_cfg)
    pairs = evalsuite.load_pairs(args.in_path)
    kept = evalsuite.filter_ppdb(pairs)
    report.write_tsv(
        args.out_path,
        ["a", "b", "label"],
        [(p.a.surface, p.b.surface, p.label) for p in kept],
    )
    metrics = {
        "n_input": len(pairs),
        "n_retained": len(kept),
        "balanced": evalsuite.check_overlap_balance(kept),
    }
    manifest = _manifest(argv, {"threads": threads}, seed, [args.in_path])
    return _finish(manifest, metrics, None, t0)


def _cmd_neighbors(args, argv, file_cfg, threads) -> int:
    t0 = time.monotonic()
    from . import evalsuite, vecstore
    from .composer import Phrase

    known = {"k", "metric", "seed", "threads"}
    runio.warn_unknown_keys(file_cfg, known)
    opt = lambda name, flag, default, cast: runio.resolve_option(name, flag, file_cfg, default, cast)
    seed = _resolve_seed(args, file_cfg)
    k = opt("k", args.k, 10, int)
    metric = opt("metric", args.metric, "cosine", str)

    vocab, matrix = vecstore.load_vectors(args.vectors)
    query = Phrase.of(args.query)
    qvec = evalsuite.make_embedder(vocab, matrix)(query)
    result = vecstore.nearest_neighbors(qvec, vocab, matrix, k, metric=metric, exclude=query.surface)

    metrics = {
        "query": query.surface,
        "metric": metric,
        "k": k,
        "hits": [[s, score] for s, score in result.hits],
    }
    for rank, (s, score) in enumerate(result.hits, start=1):
        print(f"  {rank:>3}  {score: .6f}  {s}", file=sys.stderr)
    manifest = _manifest(argv, {"k": k, "metric": metric, "threads": threads}, seed, [args.vectors])
    manifest.duration_s = time.monotonic() - t0
    runio.emit_metrics(metrics, manifest)
    return 0


def _cmd_diversity(args, argv, file_cfg, threads) -> int:
    t0 = time.monotonic()
    from . import evalsuite, report, vecstore
    from .composer import Phrase

    known = {"k", "metric", "lcs_side", "char_level", "seed", "threads"}
    runio.warn_unknown_keys(file_cfg, known)
    opt = lambda name, flag, default, cast: runio.resolve_option(name, flag, file_cfg, default, cast)
    seed = _resolve_seed(args, file_cfg)
    k = opt("k", args.k, 10, int)
    metric = opt("metric", args.metric, "cosine", str)
    lcs_side = opt("lcs_side", args.lcs_side, "neighbor", str)
    char_level = opt("char_level", args.char_level, False, runio.parse_bool)

    with open(args.queries, "r", encoding="utf-8") as fh:
        queries = [Phrase.of(line.strip()) for line in fh if line.strip()]
    if not queries:
        raise DataError(f"no queries in {args.queries}")

    vocab, matrix = vecstore.load_vectors(args.vectors)
    rows = evalsuite.diversity_rows(queries, vocab, matrix, k, metric, lcs_side, char_level)
    summary = evalsuite.summarize_diversity(rows, k)
    metrics = {
        "pct_new_tokens": summary.pct_new_tokens,
        "lcs_precision": summary.lcs_precision,
        "avg_levenshtein": summary.avg_levenshtein,
        "k": k,
        "n_queries": len(queries),
    }
    config = {"k": k, "metric": metric, "lcs_side": lcs_side, "char_level": char_level, "threads": threads}
    manifest = _manifest(argv, config, seed, [args.vectors, args.queries])

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        report.write_tsv(
            os.path.join(args.out, "diversity.tsv"),
            ["query", "n_neighbors", "pct_new_tokens", "lcs_precision", "avg_levenshtein"],
            [(r["query"], r["n_neighbors"], r["pct_new_tokens"], r["lcs_precision"], r["avg_levenshtein"])
             for r in rows],
        )
        report.save_histogram(
            os.path.join(args.out, "pct_new_tokens.png"),
            [r["pct_new_tokens"] for r in rows],
            "new-token ratio per query", "pct_new_tokens",
        )
    return _finish(manifest, metrics, args.out, t0)


def _cmd_topics(args, argv, file_cfg, threads) -> int:
    t0 = time.monotonic()
    from . import numcore, report, topicmodel, vecstore

    known = {"top", "seed", "threads"}
    runio.warn_unknown_keys(file_cfg, known)
    opt = lambda name, flag, default, cast: runio.resolve_option(name, flag, file_cfg, default, cast)
    seed = _resolve_seed(args, file_cfg)
    model = topicmodel.load_topic_model(args.model)

    if args.action == "correspond":
        drift, pairwise = topicmodel.correspondence_stats(model)
        metrics = {"avg_drift": drift, "avg_pairwise_distance": pairwise, "k": model.k, "dim": model.dim}
        manifest = _manifest(argv, {"threads": threads}, seed, [])
        manifest.duration_s = time.monotonic() - t0
        runio.emit_metrics(metrics, manifest)
        return 0

    if not args.vectors:
        raise UsageError(f"topics {args.action} requires --vectors")
    vocab, matrix = vecstore.load_vectors(args.vectors)

    if args.action == "interpret":
        top = opt("top", args.top, 10, int)
        descriptions = topicmodel.interpret_topics(model.R, vocab, matrix, top)
        records = [
            {"topic": d.topic_id, "items": [[s, score] for s, score in d.items]}
            for d in descriptions
        ]
        for d in descriptions:
            preview = ", ".join(s for s, _ in d.items[:5])
            print(f"  topic {d.topic_id}: {preview}", file=sys.stderr)
    else:
        # the intruder rule needs each topic's top 50 for exclusion
        descriptions = topicmodel.interpret_topics(model.R, vocab, matrix, 50)
        rng = numcore.make_rng(seed)
        items = topicmodel.make_intrusion_items(descriptions, rng)
        records = [
            {"topic": it.topic_id, "items": list(it.items), "intruder_index": it.intruder_index}
            for it in items
        ]
        for it in items:
            print(f"  topic {it.topic_id}: {', '.join(it.items)}", file=sys.stderr)

    if args.out:
        report.write_jsonl(args.out, records)
    else:
        for rec in records:
            print(json.dumps(rec, ensure_ascii=False))
    return 0


# --- gradient checking ------------------------------------------------------------


def _cmd_gradcheck(args, argv, file_cfg, threads) -> int:
    t0 = time.monotonic()
    runio.warn_unknown_keys(file_cfg, {"seed", "threads", "dim"})
    opt = lambda name, flag, default, cast: runio.resolve_option(name, flag, file_cfg, default, cast)
    seed = _resolve_seed(args, file_cfg)
    dim = opt("dim", args.dim, 8, int)

    targets = list(args.targets)
    if args.all:
        targets = list(GRADCHECK_TARGETS)
    if not targets:
        raise UsageError("name at least one check or pass --all")
    for t in targets:
        if t not in GRADCHECK_TARGETS:
            raise UsageError(f"unknown gradcheck target {t!r}; choose from {', '.join(GRADCHECK_TARGETS)}")

    errors = run_gradient_checks(targets, seed=seed, dim=dim)
    metrics = {**{k: v for k, v in errors.items()}, "tolerance": GRADCHECK_TOLERANCE}
    width = max(len(t) for t in errors)
    for t in targets:
        verdict = "ok" if errors[t] < GRADCHECK_TOLERANCE else "FAIL"
        print(f"  {t.ljust(width)}  {errors[t]:.3e}  {verdict}", file=sys.stderr)

    manifest = _manifest(argv, {"dim": dim, "threads": threads}, seed, [])
    manifest.duration_s = time.monotonic() - t0
    runio.emit_metrics(metrics, manifest)
    failed = [t for t in targets if errors[t] >= GRADCHECK_TOLERANCE]
    if failed:
        raise NumericError(f"gradient checks failed: {', '.join(failed)}")
    return 0


def run_gradient_checks(targets, seed: int = 0, dim: int = 8) -> dict[str, float]:
    """Max relative finite-difference error per named hand gradient."""
    import numpy as np

    from . import composer, contrastive, evalsuite, numcore, topicmodel
    from .vecstore import Vocab

    rng = numcore.make_rng(seed)
    errors: dict[str, float] = {}

    def check_composer(with_projection: bool) -> float:
        tokens = [f"tok{i}" for i in range(6)]
        vocab = Vocab(tokens)
        model = composer.ComposerModel.fresh(
            vocab, dim, rng,
            with_projection=with_projection,
            nonlinearity="tanh" if with_projection else "none",
        )
        if with_projection:
            # identity + noise, so tanh operates away from its linear zone
            model.projection = np.eye(dim) + rng.normal(0.0, 0.3, size=(dim, dim))
            model.bias = rng.normal(0.0, 0.1, size=dim)
        phrase = composer.Phrase.of("tok0 tok2 tok2 tok5")
        upstream = rng.normal(0.0, 1.0, size=dim)
        layout = composer.ParamLayout.of(model)
        analytic = layout.scatter(composer.composer_backward(model, phrase, upstream))
        probe = composer.ComposerModel(
            vocab, model.token_table.copy(),
            None if model.projection is None else model.projection.copy(),
            None if model.bias is None else model.bias.copy(),
            model.nonlinearity, model.oov_policy,
        )

        def loss_fn(flat):
            layout.unpack_into(flat.copy(), probe)
            return float(upstream @ probe.embed_phrase(phrase))

        return numcore.finite_diff_check(loss_fn, layout.pack(model), analytic)

    def check_triplet() -> float:
        while True:
            p = rng.normal(0.0, 1.0, size=dim)
            pos = rng.normal(0.0, 1.0, size=dim)
            neg = rng.normal(0.0, 1.0, size=dim)
            margin = 1.0
            slack = margin - float(np.linalg.norm(p - neg)) + float(np.linalg.norm(p - pos))
            if abs(slack) > 0.05:  # stay clear of the hinge kink
                break
        dp, dpos, dneg = contrastive.triplet_loss_backward(p, pos, neg, margin)
        analytic = np.concatenate([dp, dpos, dneg])

        def loss_fn(flat):
            return contrastive.triplet_loss(flat[:dim], flat[dim : 2 * dim], flat[2 * dim :], margin)

        return numcore.finite_diff_check(loss_fn, np.concatenate([p, pos, neg]), analytic)

    def check_classifier() -> float:
        d = min(dim, 4)  # keep the 2d x 256 layer cheap to probe
        n = 6
        feats = rng.normal(0.0, 1.0, size=(n, 2 * d))
        labels = rng.integers(0, 2, size=n)
        clf = evalsuite.PairClassifier.init_random(d, rng)
        _, analytic = evalsuite.classifier_objective(clf, feats, labels)
        probe = evalsuite.PairClassifier.zeros(d)

        def loss_fn(flat):
            probe.unpack_into(flat.copy())
            loss, _ = evalsuite.classifier_objective(probe, feats, labels)
            return loss

        return numcore.finite_diff_check(loss_fn, clf.pack(), analytic)

    def check_pntm() -> float:
        k, n_docs, n_neg = 4, 6, 2
        while True:
            R = rng.normal(0.0, 0.5, size=(k, dim))
            docs = [rng.normal(0.0, 1.0, size=dim) for _ in range(n_docs)]
            negs = [[docs[int(j)] for j in rng.integers(0, n_docs, size=n_neg)] for _ in range(n_docs)]
            margins_ok = True
            for x, zs in zip(docs, negs):
                t = topicmodel.topic_distribution(R, x)
                xt = topicmodel.reconstruct(R, t)
                for z in zs:
                    if abs(1.0 - float(xt @ x) + float(x @ z)) < 0.05:
                        margins_ok = False
            if margins_ok:
                break
        _, analytic, _, _ = topicmodel.batch_objective(R, docs, negs, ortho_weight=0.7)

        def loss_fn(flat):
            total, _, _, _ = topicmodel.batch_objective(
                flat.reshape(k, dim), docs, negs, ortho_weight=0.7
            )
            return total

        return numcore.finite_diff_check(loss_fn, R.ravel(), analytic.ravel())

    for target in targets:
        if target == "composer":
            errors[target] = check_composer(False)
        elif target == "composer-proj":
            errors[target] = check_composer(True)
        elif target == "triplet":
            errors[target] = check_triplet()
        elif target == "classifier":
            errors[target] = check_classifier()
        elif target == "pntm":
            errors[target] = check_pntm()
        else:
            raise InvalidArgumentError(f"unknown gradcheck target {target!r}")
    return errors


if __name__ == "__main__":
    sys.exit(main())
