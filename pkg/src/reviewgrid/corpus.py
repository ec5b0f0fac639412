"""Review ingestion and bag-of-words corpus construction.

The pipeline turns raw review records into an integer-indexed corpus:
parse records, normalize text to lowercase alphabetic tokens, pick a
vocabulary by corpus-level tf-idf, then count in-vocabulary words per
review.  Reviews that keep fewer than two in-vocabulary tokens are
dropped, and the user/product id lists only contain ids with at least one
surviving review.
"""

from __future__ import annotations

import gzip
import io
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .stopwords import STOPWORDS

logger = logging.getLogger(__name__)

MAX_REVIEW_TOKENS = 300

_NON_ALPHA = re.compile(r"[^a-z]+")


class CorpusError(ValueError):
    """Raised when ingestion or corpus construction cannot produce output."""


@dataclass(frozen=True)
class RawReview:
    user_id: str
    product_id: str
    rating: float
    text: str


@dataclass
class Vocabulary:
    """Ordered word list with its inverse index."""

    words: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise CorpusError("vocabulary contains duplicate words")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index


@dataclass
class ReviewEntry:
    """One surviving review: indices into the corpus id lists plus counts."""

    user: int
    product: int
    rating: float
    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class Corpus:
    users: list[str]
    products: list[str]
    vocab: Vocabulary
    entries: list[ReviewEntry]

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_products(self) -> int:
        return len(self.products)

    @property
    def n_words(self) -> int:
        return len(self.vocab)

    def total_tokens(self) -> int:
        return sum(entry.total for entry in self.entries)


@dataclass
class SplitSpec:
    """Entry-index partition. All-but-one collapses validation into test."""

    train: list[int]
    validation: list[int]
    test: list[int]
    seed: int


def open_maybe_gzip(path: str | Path) -> BinaryIO:
    """Open a file for binary reading, transparently unpacking gzip."""
    fh = open(path, "rb")
    magic = fh.read(2)
    fh.seek(0)
    if magic == b"\x1f\x8b":
        return gzip.open(fh, "rb")  # type: ignore[return-value]
    return fh


def detect_format(path: str | Path) -> str:
    """Guess the record format from the file name (json-lines unless .tsv)."""
    name = str(path)
    if name.endswith(".gz"):
        name = name[:-3]
    return "tsv" if name.endswith(".tsv") else "json-lines"


def _parse_json_line(line: str) -> RawReview | None:
    record = json.loads(line)
    user = record["reviewerID"]
    product = record["asin"]
    rating = float(record["overall"])
    text = record["reviewText"]
    if not user or not product:
        return None
    if not (math.isfinite(rating) and 1.0 <= rating <= 5.0):
        return None
    return RawReview(str(user), str(product), rating, str(text))


def _parse_tsv_line(line: str) -> RawReview | None:
    parts = line.split("\t", 3)
    if len(parts) != 4:
        return None
    user, product, rating_str, text = parts
    rating = float(rating_str)
    if not user or not product:
        return None
    if not (math.isfinite(rating) and 1.0 <= rating <= 5.0):
        return None
    return RawReview(user, product, rating, text)


def ingest_reviews(source: BinaryIO, fmt: str = "json-lines") -> list[RawReview]:
    """Parse a byte stream of review records.

    Malformed records (missing fields, unparseable ratings, ratings outside
    [1, 5]) are skipped and counted; a warning summarizes the skips.  An
    input that yields no valid record raises :class:`CorpusError`.
    """
    if fmt not in ("json-lines", "tsv"):
        raise ValueError(f"unknown format {fmt!r}")
    parse = _parse_json_line if fmt == "json-lines" else _parse_tsv_line
    reviews: list[RawReview] = []
    skipped = 0
    text_stream = io.TextIOWrapper(source, encoding="utf-8")
    for line in text_stream:
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        try:
            review = parse(line)
        except (json.JSONDecodeError, KeyError, ValueError, TypeError):
            review = None
        if review is None:
            skipped += 1
        else:
            reviews.append(review)
    if skipped:
        logger.warning("skipped %d malformed record(s) out of %d", skipped, skipped + len(reviews))
    if not reviews:
        raise CorpusError("no valid review records in input")
    return reviews


def normalize_text(
    text: str,
    stopwords: frozenset[str] | set[str] = STOPWORDS,
    max_tokens: int = MAX_REVIEW_TOKENS,
) -> list[str]:
    """Tokenize a raw review into lowercase alphabetic tokens.

    The first ``max_tokens`` whitespace tokens of the raw text are kept;
    filtering (lowercasing, stripping digits and punctuation, stopword
    removal) happens after that truncation.  Tokens reduced to the empty
    string disappear.
    """
    tokens = []
    for raw in text.split()[:max_tokens]:
        word = _NON_ALPHA.sub("", raw.lower())
        if word and word not in stopwords:
            tokens.append(word)
    return tokens


def tfidf_scores(token_lists: Sequence[Sequence[str]]) -> dict[str, float]:
    """Corpus-level tf-idf: total frequency times log(R / document frequency)."""
    tf: Counter[str] = Counter()
    df: Counter[str] = Counter()
    for tokens in token_lists:
        tf.update(tokens)
        df.update(set(tokens))
    n_docs = len(token_lists)
    return {w: tf[w] * math.log(n_docs / df[w]) for w in tf}


def select_vocabulary(token_lists: Sequence[Sequence[str]], size: int) -> Vocabulary:
    """Pick the ``size`` highest-scoring words, ties broken lexicographically.

    If the collection has fewer distinct words than requested, all of them
    are kept (with a warning) in the same rank order.
    """
    if size < 1:
        raise ValueError("vocabulary size must be positive")
    scores = tfidf_scores(token_lists)
    if len(scores) < size:
        logger.warning(
            "requested vocabulary of %d but only %d distinct tokens exist", size, len(scores)
        )
    ranked = sorted(scores, key=lambda w: (-scores[w], w))
    return Vocabulary(ranked[:size])


def build_corpus(
    reviews: Iterable[RawReview],
    vocab: Vocabulary,
    stopwords: frozenset[str] | set[str] = STOPWORDS,
    max_tokens: int = MAX_REVIEW_TOKENS,
) -> Corpus:
    """Count in-vocabulary words per review and index users/products.

    Reviews with fewer than two surviving tokens are dropped, as is any
    duplicate (user, product) pair after the first occurrence.  Raises
    :class:`CorpusError` when nothing survives.
    """
    users: list[str] = []
    products: list[str] = []
    user_index: dict[str, int] = {}
    product_index: dict[str, int] = {}
    seen_pairs: set[tuple[str, str]] = set()
    entries: list[ReviewEntry] = []
    duplicates = 0
    for review in reviews:
        pair = (review.user_id, review.product_id)
        if pair in seen_pairs:
            duplicates += 1
            continue
        counts: Counter[int] = Counter()
        for token in normalize_text(review.text, stopwords, max_tokens):
            idx = vocab.index.get(token)
            if idx is not None:
                counts[idx] += 1
        if sum(counts.values()) < 2:
            continue
        seen_pairs.add(pair)
        if review.user_id not in user_index:
            user_index[review.user_id] = len(users)
            users.append(review.user_id)
        if review.product_id not in product_index:
            product_index[review.product_id] = len(products)
            products.append(review.product_id)
        entries.append(
            ReviewEntry(
                user=user_index[review.user_id],
                product=product_index[review.product_id],
                rating=review.rating,
                counts=dict(sorted(counts.items())),
            )
        )
    if duplicates:
        logger.warning("dropped %d duplicate (user, product) review(s)", duplicates)
    if not entries:
        raise CorpusError("no review kept at least two in-vocabulary tokens")
    return Corpus(users=users, products=products, vocab=vocab, entries=entries)


def split_rating(
    corpus: Corpus,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitSpec:
    """Random train/validation/test split by entries.

    Validation and test sizes are floor(n * ratio); train takes the rest,
    so tiny corpora keep everything in train.  Validation/test entries
    whose user or product has no train entry are removed outright.
    """
    if not corpus.entries:
        raise CorpusError("cannot split an empty corpus")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    n = len(corpus.entries)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    train = sorted(int(i) for i in order[:n_train])
    val_raw = sorted(int(i) for i in order[n_train : n_train + n_val])
    test_raw = sorted(int(i) for i in order[n_train + n_val :])
    train_users = {corpus.entries[i].user for i in train}
    train_products = {corpus.entries[i].product for i in train}

    def known(i: int) -> bool:
        entry = corpus.entries[i]
        return entry.user in train_users and entry.product in train_products

    validation = [i for i in val_raw if known(i)]
    test = [i for i in test_raw if known(i)]
    dropped = len(val_raw) + len(test_raw) - len(validation) - len(test)
    if dropped:
        logger.info("dropped %d held-out entries with unknown user/product", dropped)
    return SplitSpec(train=train, validation=validation, test=test, seed=seed)


def split_all_but_one(corpus: Corpus, min_reviews: int = 10, seed: int = 0) -> SplitSpec:
    """Hold out one random review per user having at least ``min_reviews``.

    Users below the threshold keep all their reviews in train.  The
    held-out set plays both validation and test roles, so ``validation``
    stays empty.
    """
    if not corpus.entries:
        raise CorpusError("cannot split an empty corpus")
    rng = np.random.default_rng(seed)
    by_user: dict[int, list[int]] = {}
    for i, entry in enumerate(corpus.entries):
        by_user.setdefault(entry.user, []).append(i)
    held_out: set[int] = set()
    for user in sorted(by_user):
        indices = by_user[user]
        if len(indices) >= min_reviews:
            held_out.add(indices[int(rng.integers(len(indices)))])
    if not held_out:
        logger.warning("no user has %d+ reviews; held-out set is empty", min_reviews)
    train = [i for i in range(len(corpus.entries)) if i not in held_out]
    return SplitSpec(train=train, validation=[], test=sorted(held_out), seed=seed)


def term_frequency_vectors(
    corpus: Corpus,
    axis: str,
    entry_indices: Sequence[int] | None = None,
) -> np.ndarray:
    """Aggregate word counts per user or per product.

    Returns an (owners, vocabulary) array summed over the given entries
    (all entries by default).  Owners without any counted entry get a zero
    row.
    """
    if axis == "user":
        n_owners = corpus.n_users
    elif axis == "product":
        n_owners = corpus.n_products
    else:
        raise ValueError(f"axis must be 'user' or 'product', got {axis!r}")
    vectors = np.zeros((n_owners, corpus.n_words))
    indices = range(len(corpus.entries)) if entry_indices is None else entry_indices
    for i in indices:
        entry = corpus.entries[i]
        owner = entry.user if axis == "user" else entry.product
        for word, count in entry.counts.items():
            vectors[owner, word] += count
    return vectors


def save_corpus(corpus: Corpus, directory: str | Path) -> None:
    """Write a corpus as vocab.txt, users.txt, products.txt, entries.tsv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "vocab.txt").write_text("\n".join(corpus.vocab.words) + "\n", encoding="utf-8")
    (directory / "users.txt").write_text("\n".join(corpus.users) + "\n", encoding="utf-8")
    (directory / "products.txt").write_text("\n".join(corpus.products) + "\n", encoding="utf-8")
    with open(directory / "entries.tsv", "w", encoding="utf-8") as fh:
        for entry in corpus.entries:
            bag = " ".join(f"{w}:{c}" for w, c in sorted(entry.counts.items()))
            fh.write(f"{entry.user}\t{entry.product}\t{entry.rating!r}\t{bag}\n")


def load_corpus(directory: str | Path) -> Corpus:
    directory = Path(directory)
    vocab = Vocabulary((directory / "vocab.txt").read_text(encoding="utf-8").splitlines())
    users = (directory / "users.txt").read_text(encoding="utf-8").splitlines()
    products = (directory / "products.txt").read_text(encoding="utf-8").splitlines()
    entries = []
    with open(directory / "entries.tsv", encoding="utf-8") as fh:
        for line in fh:
            user, product, rating, bag = line.rstrip("\n").split("\t")
            counts = {}
            for item in bag.split():
                word, count = item.split(":")
                counts[int(word)] = int(count)
            entries.append(ReviewEntry(int(user), int(product), float(rating), counts))
    corpus = Corpus(users=users, products=products, vocab=vocab, entries=entries)
    _validate_corpus(corpus)
    return corpus


def _validate_corpus(corpus: Corpus) -> None:
    for entry in corpus.entries:
        if not 0 <= entry.user < corpus.n_users:
            raise CorpusError(f"user index {entry.user} out of range")
        if not 0 <= entry.product < corpus.n_products:
            raise CorpusError(f"product index {entry.product} out of range")
        if entry.total < 2:
            raise CorpusError("corpus entry with fewer than two tokens")
        if any(not 0 <= w < corpus.n_words for w in entry.counts):
            raise CorpusError("word index out of vocabulary range")
        if any(c < 1 for c in entry.counts.values()):
            raise CorpusError("non-positive word count")
