"""Command-line interface.

Subcommands: ingest, train, eval, grid, oos, predict.  Machine-readable
results go to stdout as JSON; logs and per-iteration progress go to
stderr.  Exit codes: 0 ok, 2 input error, 3 dimension/compatibility
error, 4 query error.  Any report-producing command accepts ``--figures
DIR`` to render matplotlib figures next to its primary output.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import figures, interpret, rating
from .corpus import Corpus, CorpusError, SplitSpec
from .grid import GridLayout, channel_noise
from .model import TokenTable, fit_em, nll, project_priors
from .modelfile import CompatibilityError, ModelBundle, RunConfig, load_model, save_model
from .som import SomConfig, initialize_model
from .stopwords import STOPWORDS, load_stopwords

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIMENSION = 3
EXIT_QUERY = 4


class InputError(Exception):
    pass


class QueryError(Exception):
    pass


def _parse_bool(value: str) -> bool:
    if value.lower() in ("1", "true", "yes", "on"):
        return True
    if value.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with run configuration fields")
    for field in dataclasses.fields(RunConfig):
        flag = "--" + field.name.replace("_", "-")
        if field.type == "bool":
            parser.add_argument(flag, dest=field.name, type=_parse_bool, default=None)
        elif field.type == "int":
            parser.add_argument(flag, dest=field.name, type=int, default=None)
        elif field.type == "float":
            parser.add_argument(flag, dest=field.name, type=float, default=None)
        else:
            parser.add_argument(flag, dest=field.name, default=None)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.load(args.config).to_dict() if args.config else RunConfig().to_dict()
    for field in dataclasses.fields(RunConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            base[field.name] = value
    return RunConfig.from_dict(base)


def _stopword_set(config: RunConfig) -> frozenset[str]:
    if config.stopwords_path:
        return load_stopwords(config.stopwords_path)
    return STOPWORDS


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout)
    sys.stdout.write("\n")


@contextlib.contextmanager
def _thread_cap(threads: int | None):
    if threads is None:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        logger.warning("threadpoolctl not installed; --threads ignored")
        yield
        return
    with threadpool_limits(limits=threads):
        yield


def _split_for(config: RunConfig, corpus: Corpus, protocol: str) -> SplitSpec:
    if protocol == "rating":
        return corpus_mod.split_rating(corpus, config.split_ratios, config.seed)
    if protocol == "all-but-one":
        return corpus_mod.split_all_but_one(corpus, config.min_user_reviews, config.seed)
    return SplitSpec(train=list(range(len(corpus.entries))), validation=[], test=[], seed=config.seed)


def _check_compat(bundle: ModelBundle, corpus: Corpus) -> None:
    if bundle.vocab.words != corpus.vocab.words:
        raise CompatibilityError("model and corpus vocabularies differ")
    if bundle.users != corpus.users or bundle.products != corpus.products:
        raise CompatibilityError("model and corpus id lists differ")


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    stopwords = _stopword_set(config)
    fmt = args.format or corpus_mod.detect_format(args.input)
    with corpus_mod.open_maybe_gzip(args.input) as stream:
        reviews = corpus_mod.ingest_reviews(stream, fmt)
    token_lists = [
        corpus_mod.normalize_text(r.text, stopwords, config.max_review_tokens) for r in reviews
    ]
    vocab = corpus_mod.select_vocabulary(token_lists, config.vocab_size)
    corpus = corpus_mod.build_corpus(reviews, vocab, stopwords, config.max_review_tokens)
    corpus_mod.save_corpus(corpus, args.out_dir)
    _emit(
        {
            "corpus_dir": str(args.out_dir),
            "reviews": len(corpus.entries),
            "users": corpus.n_users,
            "products": corpus.n_products,
            "vocabulary": corpus.n_words,
            "tokens": corpus.total_tokens(),
        }
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    corpus = corpus_mod.load_corpus(args.corpus_dir)
    split = _split_for(config, corpus, config.train_protocol)
    user_grid = GridLayout(config.k_rows, config.k_cols)
    product_grid = GridLayout(config.l_rows, config.l_cols)
    noise_u = channel_noise(user_grid, config.sigma_u)
    noise_p = channel_noise(product_grid, config.sigma_p)
    logger.info(
        "training on %d/%d entries (protocol=%s, K=%d, L=%d, V=%d)",
        len(split.train),
        len(corpus.entries),
        config.train_protocol,
        user_grid.n_classes,
        product_grid.n_classes,
        corpus.n_words,
    )
    with _thread_cap(args.threads):
        init = initialize_model(
            corpus,
            user_grid,
            product_grid,
            noise_u,
            noise_p,
            softening_ratio=config.softening_ratio,
            laplace_m=config.laplace_m,
            som_config=SomConfig(epochs=config.som_epochs),
            seed=config.seed,
            entry_indices=split.train,
        )
        tokens = TokenTable.from_corpus(corpus, split.train)

        def progress(iteration: int, loglik: float, delta: float) -> None:
            line = {"iter": iteration, "loglik": loglik, "delta": None if delta != delta else delta}
            print(json.dumps(line), file=sys.stderr)

        params, trace = fit_em(
            tokens,
            init,
            noise_u,
            noise_p,
            user_grid,
            product_grid,
            max_iter=config.em_max_iter,
            rel_tol=config.em_rel_tol,
            callback=progress,
        )
    save_model(args.model, params, config, corpus.users, corpus.products, corpus.vocab, trace)
    if args.figures and trace.loglik:
        out = figures.likelihood_curve(trace, Path(args.figures) / "em_loglik.png")
        logger.info("wrote %s", out)
    _emit(
        {
            "model": str(args.model),
            "iterations": trace.iterations,
            "converged": trace.converged,
            "final_loglik": trace.loglik[-1] if trace.loglik else None,
            "train_entries": len(split.train),
        }
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    bundle = load_model(args.model)
    config = bundle.config
    corpus = corpus_mod.load_corpus(args.corpus_dir)
    _check_compat(bundle, corpus)
    if args.protocol == "nll-all-but-one":
        split = _split_for(config, corpus, "all-but-one")
        if not split.test:
            raise InputError("all-but-one split produced an empty held-out set")
        held_out = TokenTable.from_corpus(corpus, split.test)
        value = nll(held_out, bundle.params)
        _emit({"protocol": args.protocol, "value": value, "count": held_out.n_entries})
        return EXIT_OK
    split = _split_for(config, corpus, "rating")
    if not split.test:
        raise InputError("rating split produced an empty test set")
    frames = {}
    for name, indices in (("train", split.train), ("validation", split.validation), ("test", split.test)):
        entries = [corpus.entries[i] for i in indices]
        frames[name] = (
            rating.build_feature_matrix(
                [e.user for e in entries], [e.product for e in entries], bundle.params
            ),
            np.array([e.rating for e in entries]),
        )
    model = rating.fit_ridge(*frames["train"], ridge_lambda=config.ridge_lambda)
    model.clamp = config.clamp_predictions
    baseline = rating.baseline_global_mean(*frames["train"])
    result = rating.evaluate_mse(model, *frames["test"])
    payload = {
        "protocol": args.protocol,
        "value": result.mse,
        "count": result.count,
        "baseline_mse": rating.evaluate_mse(baseline, *frames["test"]).mse,
    }
    if frames["validation"][1].size:
        payload["validation_mse"] = rating.evaluate_mse(model, *frames["validation"]).mse
    if args.figures:
        predictions = np.atleast_1d(rating.predict(model, frames["test"][0]))
        out = figures.prediction_figure(
            frames["test"][1], predictions, Path(args.figures) / "test_predictions.png"
        )
        logger.info("wrote %s", out)
    _emit(payload)
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    bundle = load_model(args.model)
    try:
        if args.condition_class is not None:
            dist = interpret.conditional_class_distribution(
                bundle.params, args.axis, args.condition_class
            )
        else:
            dist = interpret.class_word_distribution(bundle.params, args.axis)
        report = interpret.top_words(dist, bundle.vocab, args.top)
    except ValueError as exc:
        raise QueryError(str(exc)) from exc
    rendered = (
        interpret.render_grid_json(report).decode("utf-8")
        if args.json
        else interpret.render_grid_text(report)
    )
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
        logger.info("wrote %s", args.out)
    else:
        sys.stdout.write(rendered)
    if args.figures:
        out = figures.word_grid_figure(
            report,
            Path(args.figures) / f"grid_{args.axis}.png",
            title=report.note or f"{args.axis} classes",
        )
        logger.info("wrote %s", out)
    return EXIT_OK


def cmd_oos(args: argparse.Namespace) -> int:
    bundle = load_model(args.model)
    config = bundle.config
    try:
        product = bundle.products.index(args.product)
    except ValueError:
        raise QueryError(f"product {args.product!r} is not known to the model") from None
    text = Path(args.text_file).read_text(encoding="utf-8") if args.text_file else args.text
    tokens = corpus_mod.normalize_text(text, _stopword_set(config), config.max_review_tokens)
    counts: dict[int, int] = {}
    for token in tokens:
        idx = bundle.vocab.index.get(token)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    if not counts:
        raise QueryError(
            "review has no in-vocabulary words; uninformative text cannot be classified"
        )
    priors = project_priors(bundle.params)
    result = interpret.oos_posterior(counts, product, bundle.params, priors)
    best = int(np.argmax(result.posterior))
    report = interpret.top_words(
        interpret.class_word_distribution(bundle.params, "user"), bundle.vocab, args.top
    )
    if args.figures:
        heat = figures.posterior_heatmap(
            result.posterior,
            bundle.params.user_grid,
            Path(args.figures) / "oos_posterior.png",
            title=f"user-class posterior (product {args.product})",
        )
        shaded = figures.word_grid_figure(
            report,
            Path(args.figures) / "oos_word_grid.png",
            shading=result.posterior,
            title="user classes shaded by posterior",
        )
        logger.info("wrote %s and %s", heat, shaded)
    _emit(
        {
            "product": args.product,
            "posterior": [float(x) for x in result.posterior],
            "argmax": best,
            "log_evidence": result.log_evidence,
            "top_words": [w for w, _ in report.classes[best]],
        }
    )
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    bundle = load_model(args.model)
    config = bundle.config
    corpus = corpus_mod.load_corpus(args.corpus_dir)
    _check_compat(bundle, corpus)
    split = _split_for(config, corpus, "rating")
    subsets = {
        "train": split.train,
        "validation": split.validation,
        "test": split.test,
        "all": split.train + split.validation + split.test,
    }
    indices = subsets[args.split]
    if not indices:
        raise InputError(f"split {args.split!r} is empty")
    train_entries = [corpus.entries[i] for i in split.train]
    train_x = rating.build_feature_matrix(
        [e.user for e in train_entries], [e.product for e in train_entries], bundle.params
    )
    train_y = np.array([e.rating for e in train_entries])
    model = rating.fit_ridge(train_x, train_y, ridge_lambda=config.ridge_lambda)
    model.clamp = config.clamp_predictions
    entries = [corpus.entries[i] for i in indices]
    x = rating.build_feature_matrix(
        [e.user for e in entries], [e.product for e in entries], bundle.params
    )
    y = np.array([e.rating for e in entries])
    predictions = np.atleast_1d(rating.predict(model, x))
    rating.write_predictions_tsv(
        args.out,
        [corpus.users[e.user] for e in entries],
        [corpus.products[e.product] for e in entries],
        y,
        predictions,
    )
    logger.info("wrote %s", args.out)
    if args.figures:
        out = figures.prediction_figure(
            y, predictions, Path(args.figures) / f"predictions_{args.split}.png"
        )
        logger.info("wrote %s", out)
    _emit(
        {
            "out": str(args.out),
            "split": args.split,
            "count": len(entries),
            "mse": float(np.mean((predictions - y) ** 2)),
        }
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reviewgrid",
        description="Grid-organized latent class modeling of product reviews",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="build a bag-of-words corpus from raw reviews")
    p_ingest.add_argument("input", help="json-lines or TSV review file (optionally gzipped)")
    p_ingest.add_argument("out_dir", help="corpus output directory")
    p_ingest.add_argument("--format", choices=["json-lines", "tsv"], default=None)
    _add_config_flags(p_ingest)
    p_ingest.set_defaults(func=cmd_ingest)

    p_train = sub.add_parser("train", help="SOM-initialize and EM-train a model")
    p_train.add_argument("corpus_dir")
    p_train.add_argument("model", help="output model file (JSON)")
    p_train.add_argument("--figures", help="directory for rendered figures")
    p_train.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate held-out NLL or rating MSE")
    p_eval.add_argument("model")
    p_eval.add_argument("corpus_dir")
    p_eval.add_argument(
        "--protocol", choices=["nll-all-but-one", "mse-rating"], required=True
    )
    p_eval.add_argument("--figures", help="directory for rendered figures")
    p_eval.set_defaults(func=cmd_eval)

    p_grid = sub.add_parser("grid", help="top-word report per latent class")
    p_grid.add_argument("model")
    p_grid.add_argument("--axis", choices=["user", "product"], default="product")
    p_grid.add_argument("--top", type=int, default=10)
    p_grid.add_argument("--condition-class", type=int, default=None)
    p_grid.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p_grid.add_argument("--out", help="write the report to a file instead of stdout")
    p_grid.add_argument("--figures", help="directory for rendered figures")
    p_grid.set_defaults(func=cmd_grid)

    p_oos = sub.add_parser("oos", help="classify an unseen user from one review")
    p_oos.add_argument("model")
    p_oos.add_argument("--product", required=True, help="product id the review is about")
    group = p_oos.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="review text")
    group.add_argument("--text-file", help="file containing the review text")
    p_oos.add_argument("--top", type=int, default=10, help="top words reported for the argmax class")
    p_oos.add_argument("--figures", help="directory for rendered figures")
    p_oos.set_defaults(func=cmd_oos)

    p_pred = sub.add_parser("predict", help="export rating predictions as TSV")
    p_pred.add_argument("model")
    p_pred.add_argument("corpus_dir")
    p_pred.add_argument("--out", required=True, help="output TSV path")
    p_pred.add_argument(
        "--split", choices=["train", "validation", "test", "all"], default="test"
    )
    p_pred.add_argument("--figures", help="directory for rendered figures")
    p_pred.set_defaults(func=cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    args = build_parser().parse_args(argv)
    if getattr(args, "figures", None):
        Path(args.figures).mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, CorpusError, InputError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except CompatibilityError as exc:
        logger.error("%s", exc)
        return EXIT_DIMENSION
    except QueryError as exc:
        logger.error("%s", exc)
        return EXIT_QUERY


if __name__ == "__main__":
    sys.exit(main())
