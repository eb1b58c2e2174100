"""Vocabulary and embedding-matrix storage, file formats, neighbor search.

Two on-disk formats are supported. The text format keeps multi-word
surface forms intact by separating the surface from its values with a tab:

    line 1:  <count> <dim>
    line n:  <surface form>\\t<v1> <v2> ... <vd>

The binary format is magic ``PVB1``, little-endian u32 count and dim, then
per entry a u16 byte length, the UTF-8 surface form, and dim little-endian
IEEE-754 32-bit floats.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ParseError

PVEC_BIN_MAGIC = b"PVB1"

FORMAT_TEXT = "pvec-text"
FORMAT_BIN = "pvec-bin"


@dataclass
class Vocab:
    """Ordered unique surface forms with their inverse index."""

    entries: list[str]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {s: i for i, s in enumerate(self.entries)}
        if len(self.index) != len(self.entries):
            dupes = [s for s in self.entries if self.entries.count(s) > 1]
            raise InvalidArgumentError(f"duplicate surface forms: {sorted(set(dupes))[:5]}")
        for s in self.entries:
            _validate_surface(s)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, surface: str) -> bool:
        return surface in self.index

    def row(self, surface: str) -> int:
        return self.index[surface]


def _validate_surface(surface: str) -> None:
    if not surface:
        raise InvalidArgumentError("surface forms must be non-empty")
    if "\t" in surface or "\n" in surface or "\r" in surface:
        raise InvalidArgumentError(f"surface form contains tab/newline: {surface!r}")


@dataclass
class EmbeddingMatrix:
    """|V| x d matrix of finite float64 values."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise InvalidArgumentError(f"matrix must be 2-D, got shape {self.data.shape}")
        if self.dim < 1:
            raise InvalidArgumentError(f"embedding dim must be >= 1, got {self.dim}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidArgumentError("embedding matrix contains non-finite values")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass
class NeighborList:
    """Ranked hits for one query; scores sorted per the metric's direction."""

    query: str
    hits: list[tuple[str, float]]
    metric: str


def save_vectors(vocab: Vocab, matrix: EmbeddingMatrix, path, fmt: str = FORMAT_TEXT) -> None:
    """Write a (vocab, matrix) pair in the exact on-disk grammar."""
    if len(vocab) != matrix.rows:
        raise InvalidArgumentError(
            f"vocab size {len(vocab)} does not match matrix rows {matrix.rows}"
        )
    if fmt == FORMAT_TEXT:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{matrix.rows} {matrix.dim}\n")
            for surface, row in zip(vocab.entries, matrix.data):
                values = " ".join(repr(float(v)) for v in row)
                fh.write(f"{surface}\t{values}\n")
    elif fmt == FORMAT_BIN:
        with open(path, "wb") as fh:
            fh.write(PVEC_BIN_MAGIC)
            fh.write(struct.pack("<II", matrix.rows, matrix.dim))
            for surface, row in zip(vocab.entries, matrix.data):
                raw = surface.encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise InvalidArgumentError(f"surface form too long for format: {surface[:40]!r}...")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(row.astype("<f4").tobytes())
    else:
        raise InvalidArgumentError(f"unknown vector format {fmt!r}")


def load_vectors(path, fmt: str = "auto") -> tuple[Vocab, EmbeddingMatrix]:
    """Load a vector file; `fmt` may be pvec-text, pvec-bin, or auto."""
    if fmt == "auto":
        with open(path, "rb") as fh:
            fmt = FORMAT_BIN if fh.read(4) == PVEC_BIN_MAGIC else FORMAT_TEXT
    if fmt == FORMAT_TEXT:
        return _load_text(path)
    if fmt == FORMAT_BIN:
        return _load_bin(path)
    raise InvalidArgumentError(f"unknown vector format {fmt!r}")


def _load_text(path) -> tuple[Vocab, EmbeddingMatrix]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise ParseError("empty file", path=path, line=1)
        parts = header.rstrip("\n").split(" ")
        if len(parts) != 2:
            raise ParseError(f"header must be '<count> <dim>', got {header.rstrip()!r}", path=path, line=1)
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer header fields {header.rstrip()!r}", path=path, line=1) from None
        if count < 0 or dim < 1:
            raise ParseError(f"invalid header counts {count} {dim}", path=path, line=1)

        entries: list[str] = []
        seen: dict[str, int] = {}
        data = np.empty((count, dim), dtype=np.float64)
        for n in range(count):
            lineno = n + 2
            line = fh.readline()
            if not line:
                raise ParseError(f"expected {count} rows, file ended after {n}", path=path, line=lineno)
            line = line.rstrip("\n")
            surface, sep, rest = line.partition("\t")
            if not sep:
                raise ParseError("row is missing the tab separator", path=path, line=lineno)
            if not surface:
                raise ParseError("empty surface form", path=path, line=lineno)
            if "\t" in rest:
                raise ParseError("row contains more than one tab", path=path, line=lineno)
            if surface in seen:
                raise ParseError(f"duplicate surface form {surface!r} (first at line {seen[surface]})", path=path, line=lineno)
            seen[surface] = lineno
            fields = rest.split()
            if len(fields) != dim:
                raise ParseError(f"expected {dim} values, got {len(fields)}", path=path, line=lineno)
            try:
                row = [float(x) for x in fields]
            except ValueError:
                raise ParseError("unparseable float value", path=path, line=lineno) from None
            if not all(math.isfinite(v) for v in row):
                raise ParseError("non-finite value", path=path, line=lineno)
            entries.append(surface)
            data[n] = row
        trailing = fh.readline()
        if trailing.strip():
            raise ParseError("unexpected content after declared rows", path=path, line=count + 2)
    return Vocab(entries), EmbeddingMatrix(data)


def _load_bin(path) -> tuple[Vocab, EmbeddingMatrix]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PVEC_BIN_MAGIC:
        raise ParseError(f"bad magic {blob[:4]!r}, expected {PVEC_BIN_MAGIC!r}", path=path)
    if len(blob) < 12:
        raise ParseError("truncated header", path=path)
    count, dim = struct.unpack_from("<II", blob, 4)
    if dim < 1:
        raise ParseError(f"invalid dim {dim}", path=path)
    offset = 12
    entries: list[str] = []
    seen: set[str] = set()
    data = np.empty((count, dim), dtype=np.float64)
    for n in range(count):
        if offset + 2 > len(blob):
            raise ParseError(f"truncated at entry {n}", path=path)
        (nbytes,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + nbytes + 4 * dim > len(blob):
            raise ParseError(f"truncated at entry {n}", path=path)
        try:
            surface = blob[offset : offset + nbytes].decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError(f"entry {n} is not valid UTF-8", path=path) from None
        offset += nbytes
        if surface in seen:
            raise ParseError(f"duplicate surface form {surface!r} at entry {n}", path=path)
        seen.add(surface)
        row = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).astype(np.float64)
        offset += 4 * dim
        if not np.all(np.isfinite(row)):
            raise ParseError(f"non-finite value at entry {n}", path=path)
        entries.append(surface)
        data[n] = row
    if offset != len(blob):
        raise ParseError(f"{len(blob) - offset} trailing bytes after declared entries", path=path)
    return Vocab(entries), EmbeddingMatrix(data)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _metric_scores(query_vec: np.ndarray, matrix: EmbeddingMatrix, metric: str) -> tuple[np.ndarray, bool]:
    """Per-row scores plus whether larger is better."""
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (matrix.dim,):
        raise InvalidArgumentError(f"query dim {q.shape} does not match matrix dim {matrix.dim}")
    if metric == "cosine":
        norms = np.linalg.norm(matrix.data, axis=1)
        qn = np.linalg.norm(q)
        denom = norms * qn
        with np.errstate(invalid="ignore", divide="ignore"):
            scores = np.where(denom > 0.0, matrix.data @ q / np.where(denom == 0.0, 1.0, denom), 0.0)
        return scores, True
    if metric == "l2":
        diffs = matrix.data - q
        return np.sqrt(np.einsum("ij,ij->i", diffs, diffs)), False
    raise InvalidArgumentError(f"unknown metric {metric!r}")


def nearest_neighbors(
    query_vec: np.ndarray,
    vocab: Vocab,
    matrix: EmbeddingMatrix,
    k: int,
    metric: str = "cosine",
    exclude: str | None = None,
) -> NeighborList:
    """Exact top-k rows under the metric; ties broken by ascending row id."""
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if matrix.rows == 0:
        raise InvalidArgumentError("matrix is empty")
    if len(vocab) != matrix.rows:
        raise InvalidArgumentError(
            f"vocab size {len(vocab)} does not match matrix rows {matrix.rows}"
        )
    scores, descending = _metric_scores(query_vec, matrix, metric)
    rows = np.arange(matrix.rows)
    if exclude is not None and exclude in vocab:
        keep = rows != vocab.row(exclude)
        rows = rows[keep]
        scores = scores[keep]
    # lexsort: primary = score (flipped when descending), secondary = row id.
    order = np.lexsort((rows, -scores if descending else scores))
    top = order[: min(k, rows.size)]
    hits = [(vocab.entries[rows[i]], float(scores[i])) for i in top]
    return NeighborList(query=exclude or "", hits=hits, metric=metric)
