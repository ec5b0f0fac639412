"""Reading the trained model: per-class word rankings and unseen users.

Class-conditional word distributions come from averaging the word tensor
over the opposite axis under a flat class prior (or slicing it directly
when conditioning on a specific opposite class).  Top-word grid reports
lay those distributions out on the 2-D lattice, which is where the
topographic structure becomes visible.  An unseen user who reviewed a
known product gets a Bayesian class posterior from that single review,
again under a flat prior.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .grid import GridLayout
from .model import ModelParams, ProjectedPriors


@dataclass
class ClassWordDistribution:
    """One word distribution per class of the given axis."""

    axis: str  # "user" or "product"
    grid: GridLayout
    probs: np.ndarray  # (classes, words)
    note: str | None = None


@dataclass
class GridReport:
    axis: str
    grid: GridLayout
    classes: list[list[tuple[str, float]]]  # per class: (word, probability) ranked
    note: str | None = None


@dataclass
class OosPosterior:
    posterior: np.ndarray  # (user classes,)
    log_evidence: float


def _check_axis(axis: str) -> None:
    if axis not in ("user", "product"):
        raise ValueError(f"axis must be 'user' or 'product', got {axis!r}")


def class_word_distribution(params: ModelParams, axis: str) -> ClassWordDistribution:
    """Word distribution per class averaged over the other axis (flat prior)."""
    _check_axis(axis)
    if axis == "user":
        probs = params.phi.mean(axis=2).T
        grid = params.user_grid
    else:
        probs = params.phi.mean(axis=1).T
        grid = params.product_grid
    return ClassWordDistribution(axis=axis, grid=grid, probs=probs)


def conditional_class_distribution(
    params: ModelParams, axis: str, condition_class: int
) -> ClassWordDistribution:
    """Word distribution per class with the opposite-axis class held fixed."""
    _check_axis(axis)
    if axis == "product":
        if not 0 <= condition_class < params.n_user_classes:
            raise ValueError(f"user class {condition_class} out of range")
        probs = params.phi[:, condition_class, :].T
        grid = params.product_grid
        note = f"conditioned on user class {condition_class}"
    else:
        if not 0 <= condition_class < params.n_product_classes:
            raise ValueError(f"product class {condition_class} out of range")
        probs = params.phi[:, :, condition_class].T
        grid = params.user_grid
        note = f"conditioned on product class {condition_class}"
    return ClassWordDistribution(axis=axis, grid=grid, probs=probs, note=note)


def top_words(dist: ClassWordDistribution, vocab: Vocabulary, n: int = 10) -> GridReport:
    """Rank each class's words by probability, ties lexicographic."""
    if n > len(vocab):
        raise ValueError(f"requested {n} words from a vocabulary of {len(vocab)}")
    classes = []
    for row in dist.probs:
        order = sorted(range(len(vocab)), key=lambda i: (-row[i], vocab.words[i]))[:n]
        classes.append([(vocab.words[i], float(row[i])) for i in order])
    return GridReport(axis=dist.axis, grid=dist.grid, classes=classes, note=dist.note)


def oos_posterior(
    review_counts: dict[int, int],
    product: int,
    params: ModelParams,
    priors: ProjectedPriors,
) -> OosPosterior:
    """Class posterior of an unseen user from one review of a known product.

    Works entirely in log space: per candidate class, the review
    log-evidence sums count-weighted logs of the product-marginalized word
    probabilities; the flat class prior then cancels in the softmax.  The
    reported log evidence is the review's marginal log-probability under
    that flat prior.
    """
    if not 0 <= product < params.n_products:
        raise ValueError(f"product index {product} out of range")
    if not review_counts:
        raise ValueError("review has no in-vocabulary words")
    words = np.fromiter(review_counts.keys(), dtype=np.int64)
    counts = np.fromiter((review_counts[int(w)] for w in words), dtype=np.float64)
    if np.any(counts <= 0) or words.min() < 0 or words.max() >= params.n_words:
        raise ValueError("invalid review word counts")
    # (review words, K): P(w | class, product) = sum_l phi[w, :, l] * b[p, l]
    word_given_class = params.phi[words] @ priors.product[product]
    log_scores = counts @ np.log(word_given_class)
    shifted = log_scores - log_scores.max()
    weights = np.exp(shifted)
    total = weights.sum()
    log_evidence = float(
        log_scores.max() + np.log(total) - np.log(params.n_user_classes)
    )
    return OosPosterior(posterior=weights / total, log_evidence=log_evidence)


def render_grid_text(report: GridReport) -> str:
    """Lay the per-class word lists out as row-major blocks of the grid."""
    grid = report.grid
    n_words = max((len(c) for c in report.classes), default=0)
    cells = []
    for index, ranked in enumerate(report.classes):
        r, c = grid.coords(index)
        lines = [f"class {index} ({r},{c})"]
        lines += [f"{word} {prob:.4f}" for word, prob in ranked]
        cells.append(lines)
    width = max((len(line) for cell in cells for line in cell), default=0)
    out = []
    if report.note:
        out.append(f"# {report.note}")
    for r in range(grid.rows):
        row_cells = cells[r * grid.cols : (r + 1) * grid.cols]
        for line_no in range(n_words + 1):
            parts = []
            for cell in row_cells:
                text = cell[line_no] if line_no < len(cell) else ""
                parts.append(text.ljust(width))
            out.append(" | ".join(parts).rstrip())
        out.append("")
    return "\n".join(out).rstrip() + "\n"


def render_grid_json(report: GridReport) -> bytes:
    payload: dict = {
        "axis": report.axis,
        "rows": report.grid.rows,
        "cols": report.grid.cols,
        "classes": [
            {
                "index": index,
                "row": report.grid.coords(index)[0],
                "col": report.grid.coords(index)[1],
                "words": [{"word": w, "p": p} for w, p in ranked],
            }
            for index, ranked in enumerate(report.classes)
        ],
    }
    if report.note:
        payload["note"] = report.note
    return json.dumps(payload, indent=2).encode("utf-8")


def report_from_json(data: bytes) -> GridReport:
    payload = json.loads(data.decode("utf-8"))
    grid = GridLayout(payload["rows"], payload["cols"])
    classes: list[list[tuple[str, float]]] = [[] for _ in range(grid.n_classes)]
    for cell in payload["classes"]:
        classes[cell["index"]] = [(w["word"], float(w["p"])) for w in cell["words"]]
    return GridReport(
        axis=payload["axis"], grid=grid, classes=classes, note=payload.get("note")
    )
