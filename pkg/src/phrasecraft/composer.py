"""Compositional phrase encoder: token table, linear map, mean pool.

A phrase embedding is built by looking up each token, applying an optional
shared linear transform (with bias, and optionally tanh on top), and
averaging the transformed tokens. The gradient of that pipeline is sparse
in the token table, so the backward pass reports touched rows only.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InvalidArgumentError, NotFoundError, ParseError
from .vecstore import (
    FORMAT_BIN,
    EmbeddingMatrix,
    Vocab,
    load_vectors,
    save_vectors,
)

MASK_TOKEN = "[MASK]"

MAX_DOC_TOKENS = 120

NONLINEARITY_NONE = "none"
NONLINEARITY_TANH = "tanh"

OOV_SKIP = "skip"
OOV_ZERO = "zero"


def tokenize(surface: str) -> list[str]:
    """Whitespace split, lowercased, except the mask token stays verbatim."""
    return [t if t == MASK_TOKEN else t.lower() for t in surface.split()]


@dataclass(frozen=True)
class Phrase:
    surface: str
    tokens: tuple[str, ...]

    @classmethod
    def of(cls, surface: str) -> "Phrase":
        toks = tokenize(surface)
        if not toks:
            raise InvalidArgumentError(f"phrase has no tokens: {surface!r}")
        return cls(surface=surface, tokens=tuple(toks))


@dataclass
class ComposerModel:
    """Token table plus an optional shared linear layer."""

    token_vocab: Vocab
    token_table: np.ndarray
    projection: np.ndarray | None = None
    bias: np.ndarray | None = None
    nonlinearity: str = NONLINEARITY_NONE
    oov_policy: str = OOV_SKIP

    def __post_init__(self):
        self.token_table = np.asarray(self.token_table, dtype=np.float64)
        if self.token_table.ndim != 2:
            raise InvalidArgumentError("token table must be 2-D")
        if len(self.token_vocab) != self.token_table.shape[0]:
            raise InvalidArgumentError(
                f"vocab size {len(self.token_vocab)} != table rows {self.token_table.shape[0]}"
            )
        d = self.dim
        if (self.projection is None) != (self.bias is None):
            raise InvalidArgumentError("projection and bias must be given together")
        if self.projection is not None:
            self.projection = np.asarray(self.projection, dtype=np.float64)
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.projection.shape != (d, d):
                raise InvalidArgumentError(f"projection must be {d}x{d}, got {self.projection.shape}")
            if self.bias.shape != (d,):
                raise InvalidArgumentError(f"bias must have shape ({d},), got {self.bias.shape}")
        if self.nonlinearity not in (NONLINEARITY_NONE, NONLINEARITY_TANH):
            raise InvalidArgumentError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.nonlinearity == NONLINEARITY_TANH and self.projection is None:
            raise InvalidArgumentError("tanh nonlinearity requires a projection layer")
        if self.oov_policy not in (OOV_SKIP, OOV_ZERO):
            raise InvalidArgumentError(f"unknown oov policy {self.oov_policy!r}")

    @property
    def dim(self) -> int:
        return self.token_table.shape[1]

    @classmethod
    def fresh(
        cls,
        vocab: Vocab,
        dim: int,
        rng: np.random.Generator,
        with_projection: bool = True,
        nonlinearity: str = NONLINEARITY_NONE,
        oov_policy: str = OOV_SKIP,
        scale: float = 0.1,
    ) -> "ComposerModel":
        """Random token table; projection starts at identity, bias at zero."""
        table = rng.normal(0.0, scale, size=(len(vocab), dim))
        proj = np.eye(dim) if with_projection else None
        bias = np.zeros(dim) if with_projection else None
        return cls(vocab, table, proj, bias, nonlinearity, oov_policy)

    def _token_rows(self, tokens) -> tuple[list[int], list[np.ndarray]]:
        """Resolve tokens to table rows under the OOV policy.

        Returns parallel lists of row ids (or -1 for a zero-filled slot)
        and the raw vectors entering the transform.
        """
        rows: list[int] = []
        vecs: list[np.ndarray] = []
        for tok in tokens:
            if tok in self.token_vocab:
                r = self.token_vocab.row(tok)
                rows.append(r)
                vecs.append(self.token_table[r])
            elif self.oov_policy == OOV_ZERO:
                rows.append(-1)
                vecs.append(np.zeros(self.dim))
        return rows, vecs

    def embed_phrase(self, phrase: Phrase) -> np.ndarray:
        """Mean of per-token transformed vectors; zeros for all-unknown."""
        rows, vecs = self._token_rows(phrase.tokens)
        if not vecs:
            warnings.warn(
                f"no known tokens in phrase {phrase.surface!r}; embedding as zeros",
                RuntimeWarning,
                stacklevel=2,
            )
            return np.zeros(self.dim)
        out = np.zeros(self.dim)
        for v in vecs:
            out += self._transform(v)
        return out / len(vecs)

    def _transform(self, v: np.ndarray) -> np.ndarray:
        if self.projection is None:
            return v
        h = self.projection @ v + self.bias
        if self.nonlinearity == NONLINEARITY_TANH:
            return np.tanh(h)
        return h

    def embed_document(self, tokens, max_len: int = MAX_DOC_TOKENS) -> np.ndarray:
        """Pool a token sequence, truncated to the first `max_len` tokens."""
        if max_len < 1:
            raise InvalidArgumentError(f"max_len must be >= 1, got {max_len}")
        toks = tuple(tokens)[:max_len]
        return self.embed_phrase(Phrase(surface=" ".join(toks), tokens=toks))


@dataclass
class ComposerGrads:
    """Sparse gradient of some scalar loss w.r.t. composer parameters.

    `rows` maps table row id to its accumulated gradient; untouched rows
    carry no entries at all.
    """

    rows: dict[int, np.ndarray] = field(default_factory=dict)
    projection: np.ndarray | None = None
    bias: np.ndarray | None = None

    def add_scaled(self, other: "ComposerGrads", scale: float = 1.0) -> None:
        for r, g in other.rows.items():
            if r in self.rows:
                self.rows[r] = self.rows[r] + scale * g
            else:
                self.rows[r] = scale * g
        if other.projection is not None:
            if self.projection is None:
                self.projection = scale * other.projection
                self.bias = scale * other.bias
            else:
                self.projection = self.projection + scale * other.projection
                self.bias = self.bias + scale * other.bias


def composer_backward(model: ComposerModel, phrase: Phrase, upstream: np.ndarray) -> ComposerGrads:
    """Backprop `upstream` (d-vector, dLoss/dEmbedding) through one phrase."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (model.dim,):
        raise InvalidArgumentError(f"upstream must have shape ({model.dim},)")
    rows, vecs = model._token_rows(phrase.tokens)
    grads = ComposerGrads()
    if not vecs:
        return grads
    share = upstream / len(vecs)
    if model.projection is not None:
        grads.projection = np.zeros_like(model.projection)
        grads.bias = np.zeros_like(model.bias)
    for r, v in zip(rows, vecs):
        if model.projection is None:
            g_tok = share
        else:
            h = model.projection @ v + model.bias
            if model.nonlinearity == NONLINEARITY_TANH:
                dh = share * (1.0 - np.tanh(h) ** 2)
            else:
                dh = share
            grads.projection += np.outer(dh, v)
            grads.bias += dh
            g_tok = model.projection.T @ dh
        if r >= 0:
            if r in grads.rows:
                grads.rows[r] = grads.rows[r] + g_tok
            else:
                grads.rows[r] = g_tok.copy()
    return grads


@dataclass
class ParamLayout:
    """Flat packing order for the trainable parameters of a composer.

    Table rows come first (row-major), then the projection (row-major),
    then the bias. Keeping one canonical order lets the optimizer state
    live in a single pair of moment vectors.
    """

    n_rows: int
    dim: int
    has_projection: bool

    @classmethod
    def of(cls, model: ComposerModel) -> "ParamLayout":
        return cls(model.token_table.shape[0], model.dim, model.projection is not None)

    @property
    def table_size(self) -> int:
        return self.n_rows * self.dim

    @property
    def total(self) -> int:
        extra = self.dim * self.dim + self.dim if self.has_projection else 0
        return self.table_size + extra

    def pack(self, model: ComposerModel) -> np.ndarray:
        parts = [model.token_table.ravel()]
        if self.has_projection:
            parts.append(model.projection.ravel())
            parts.append(model.bias)
        return np.concatenate(parts)

    def unpack_into(self, flat: np.ndarray, model: ComposerModel) -> None:
        if flat.shape != (self.total,):
            raise InvalidArgumentError(f"flat params must have shape ({self.total},)")
        model.token_table = flat[: self.table_size].reshape(self.n_rows, self.dim)
        if self.has_projection:
            d = self.dim
            model.projection = flat[self.table_size : self.table_size + d * d].reshape(d, d)
            model.bias = flat[self.table_size + d * d :].copy()

    def scatter(self, grads: ComposerGrads) -> np.ndarray:
        """Sparse grads to a dense flat vector; untouched entries stay 0."""
        flat = np.zeros(self.total)
        d = self.dim
        for r, g in grads.rows.items():
            flat[r * d : (r + 1) * d] = g
        if self.has_projection and grads.projection is not None:
            flat[self.table_size : self.table_size + d * d] = grads.projection.ravel()
            flat[self.table_size + d * d :] = grads.bias
        return flat


# --- checkpoint directory layout -------------------------------------------

TOKENS_FILE = "tokens.pvec"
META_FILE = "composer.meta"
PROJECTION_FILE = "projection.pvec"

_PROJ_ROW_PREFIX = "proj_row_"
_BIAS_ROW = "bias"


def save_composer(model: ComposerModel, dirpath) -> None:
    """Write token table, metadata, and projection layer to a directory."""
    os.makedirs(dirpath, exist_ok=True)
    save_vectors(
        model.token_vocab,
        EmbeddingMatrix(model.token_table),
        os.path.join(dirpath, TOKENS_FILE),
        fmt=FORMAT_BIN,
    )
    with open(os.path.join(dirpath, META_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# composer checkpoint metadata\n")
        fh.write(f"dim={model.dim}\n")
        fh.write(f"nonlinearity={model.nonlinearity}\n")
        fh.write(f"oov_policy={model.oov_policy}\n")
        fh.write(f"has_projection={'true' if model.projection is not None else 'false'}\n")
    proj_path = os.path.join(dirpath, PROJECTION_FILE)
    if model.projection is not None:
        names = [f"{_PROJ_ROW_PREFIX}{i}" for i in range(model.dim)] + [_BIAS_ROW]
        stacked = np.vstack([model.projection, model.bias[None, :]])
        save_vectors(Vocab(names), EmbeddingMatrix(stacked), proj_path, fmt=FORMAT_BIN)
    elif os.path.exists(proj_path):
        os.remove(proj_path)


def load_composer(dirpath) -> ComposerModel:
    meta_path = os.path.join(dirpath, META_FILE)
    if not os.path.exists(meta_path):
        raise NotFoundError(f"no composer checkpoint at {dirpath}")
    meta: dict[str, str] = {}
    with open(meta_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError("expected key=value", path=meta_path, line=lineno)
            meta[key.strip()] = value.strip()
    for needed in ("dim", "nonlinearity", "oov_policy", "has_projection"):
        if needed not in meta:
            raise DataError(f"composer metadata is missing {needed!r}")
    vocab, table = load_vectors(os.path.join(dirpath, TOKENS_FILE))
    dim = int(meta["dim"])
    if table.dim != dim:
        raise DataError(f"metadata dim {dim} != token table dim {table.dim}")
    projection = bias = None
    if meta["has_projection"] == "true":
        pvocab, pmat = load_vectors(os.path.join(dirpath, PROJECTION_FILE))
        expected = [f"{_PROJ_ROW_PREFIX}{i}" for i in range(dim)] + [_BIAS_ROW]
        if list(pvocab.entries) != expected:
            raise DataError("projection file rows are not proj_row_0..proj_row_{d-1}, bias")
        if pmat.dim != dim:
            raise DataError(f"projection dim {pmat.dim} != token dim {dim}")
        projection = pmat.data[:dim]
        bias = pmat.data[dim]
    return ComposerModel(
        token_vocab=vocab,
        token_table=table.data,
        projection=projection,
        bias=bias,
        nonlinearity=meta["nonlinearity"],
        oov_policy=meta["oov_policy"],
    )
