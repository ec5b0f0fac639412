"""Run configuration and model persistence.

A model file is a single JSON document: a schema version, the full run
configuration, the id lists, and the three parameter tensors encoded as
base64 little-endian float64 with explicit shapes.  Channel noise
matrices are a pure function of grid and sigma, so only the sigmas are
stored and the matrices are rebuilt on load.  Round-trips are bit-exact.
"""

from __future__ import annotations

import base64
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .grid import GridLayout, channel_noise
from .model import EmTrace, ModelParams

SCHEMA_VERSION = 1

TRAIN_PROTOCOLS = ("rating", "all-but-one", "all")


class CompatibilityError(ValueError):
    """Model and corpus (or file contents) have inconsistent dimensions."""


@dataclass
class RunConfig:
    k_rows: int = 5
    k_cols: int = 5
    l_rows: int = 4
    l_cols: int = 4
    vocab_size: int = 2000
    sigma_u: float = 3.0
    sigma_p: float = 2.0
    softening_ratio: float = 5.0
    laplace_m: float = 1.0
    em_max_iter: int = 100
    em_rel_tol: float = 1e-5
    seed: int = 0
    train_ratio: float = 0.8
    validation_ratio: float = 0.1
    test_ratio: float = 0.1
    min_user_reviews: int = 10
    ridge_lambda: float = 1e-3
    clamp_predictions: bool = False
    max_review_tokens: int = 300
    som_epochs: int = 10
    train_protocol: str = "rating"
    stopwords_path: str | None = None

    def __post_init__(self) -> None:
        if self.train_protocol not in TRAIN_PROTOCOLS:
            raise ValueError(f"train_protocol must be one of {TRAIN_PROTOCOLS}")
        for name in ("k_rows", "k_cols", "l_rows", "l_cols", "vocab_size", "em_max_iter"):
            if getattr(self, name) < 0 or (name != "em_max_iter" and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")
        for name in ("sigma_u", "sigma_p", "laplace_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.softening_ratio <= 1:
            raise ValueError("softening_ratio must be greater than 1")

    @property
    def split_ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.validation_ratio, self.test_ratio)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _encode_tensor(array: np.ndarray) -> dict:
    array = np.ascontiguousarray(array, dtype="<f8")
    return {
        "shape": list(array.shape),
        "dtype": "<f8",
        "data": base64.b64encode(array.tobytes()).decode("ascii"),
    }


def _decode_tensor(payload: dict) -> np.ndarray:
    if payload.get("dtype") != "<f8":
        raise CompatibilityError(f"unsupported tensor dtype {payload.get('dtype')!r}")
    raw = base64.b64decode(payload["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(payload["shape"]).copy()


@dataclass
class ModelBundle:
    params: ModelParams
    config: RunConfig
    users: list[str]
    products: list[str]
    vocab: Vocabulary
    trace: EmTrace


def save_model(
    path: str | Path,
    params: ModelParams,
    config: RunConfig,
    users: list[str],
    products: list[str],
    vocab: Vocabulary,
    trace: EmTrace,
) -> None:
    document = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "users": users,
        "products": products,
        "vocab": vocab.words,
        "user_grid": {"rows": params.user_grid.rows, "cols": params.user_grid.cols},
        "product_grid": {"rows": params.product_grid.rows, "cols": params.product_grid.cols},
        "sigma_u": params.noise_u.sigma,
        "sigma_p": params.noise_p.sigma,
        "tensors": {
            "theta_u": _encode_tensor(params.theta_u),
            "theta_p": _encode_tensor(params.theta_p),
            "phi": _encode_tensor(params.phi),
        },
        "trace": {
            "loglik": trace.loglik,
            "iterations": trace.iterations,
            "converged": trace.converged,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh)
        fh.write("\n")


def load_model(path: str | Path) -> ModelBundle:
    with open(path, encoding="utf-8") as fh:
        document = json.load(fh)
    if document.get("schema_version") != SCHEMA_VERSION:
        raise CompatibilityError(
            f"unsupported model schema version {document.get('schema_version')!r}"
        )
    config = RunConfig.from_dict(document["config"])
    user_grid = GridLayout(**document["user_grid"])
    product_grid = GridLayout(**document["product_grid"])
    params = ModelParams(
        theta_u=_decode_tensor(document["tensors"]["theta_u"]),
        theta_p=_decode_tensor(document["tensors"]["theta_p"]),
        phi=_decode_tensor(document["tensors"]["phi"]),
        noise_u=channel_noise(user_grid, document["sigma_u"]),
        noise_p=channel_noise(product_grid, document["sigma_p"]),
        user_grid=user_grid,
        product_grid=product_grid,
    )
    users = document["users"]
    products = document["products"]
    vocab = Vocabulary(document["vocab"])
    if params.theta_u.shape != (len(users), user_grid.n_classes):
        raise CompatibilityError("user tensor does not match id list and grid")
    if params.theta_p.shape != (len(products), product_grid.n_classes):
        raise CompatibilityError("product tensor does not match id list and grid")
    if params.phi.shape[0] != len(vocab):
        raise CompatibilityError("word tensor does not match the vocabulary")
    try:
        params.validate(atol=1e-8)
    except ValueError as exc:
        raise CompatibilityError(f"model file fails probability checks: {exc}") from exc
    trace = EmTrace(
        loglik=[float(x) for x in document["trace"]["loglik"]],
        iterations=int(document["trace"]["iterations"]),
        converged=bool(document["trace"]["converged"]),
    )
    return ModelBundle(
        params=params, config=config, users=users, products=products, vocab=vocab, trace=trace
    )
