"""Softmax-bottleneck topic model over frozen document vectors.

A K x d matrix R plays both encoder and decoder: a document vector x gets
a topic distribution t = softmax(Rx), is reconstructed as Rt (transposed),
and R trains under a hinge loss that scores the reconstruction against the
document and N sampled negatives, plus an orthogonality penalty keeping
topic rows distinct. Document vectors never train here.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import numcore
from .errors import DataError, InvalidArgumentError, NotFoundError, ParseError
from .numcore import OptimState
from .vecstore import EmbeddingMatrix, Vocab, load_vectors, save_vectors

HINGE_MARGIN = 1.0

NEG_TERM_ANCHOR = "anchor"
NEG_TERM_RECON = "recon"


@dataclass
class TopicModel:
    """Trainable topic rows plus a frozen snapshot of their initialization."""

    R: np.ndarray
    R_init: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64)
        self.R_init = np.asarray(self.R_init, dtype=np.float64).copy()
        self.R_init.setflags(write=False)
        if self.R.ndim != 2 or self.R.shape[0] < 2:
            raise InvalidArgumentError("R must be K x d with K >= 2")
        if self.R.shape != self.R_init.shape:
            raise InvalidArgumentError("R and its init snapshot must have equal shape")
        if not np.all(np.isfinite(self.R)):
            raise InvalidArgumentError("R contains non-finite values")

    @property
    def k(self) -> int:
        return self.R.shape[0]

    @property
    def dim(self) -> int:
        return self.R.shape[1]


@dataclass(frozen=True)
class PntmConfig:
    k: int = 50
    negatives: int = 5
    ortho_weight: float = 1.0
    epochs: int = 300
    lr: float = 0.01
    batch_size: int = 32
    seed: int = 0
    neg_term: str = NEG_TERM_ANCHOR

    def __post_init__(self):
        if self.k < 2:
            raise InvalidArgumentError(f"k must be >= 2, got {self.k}")
        if self.negatives < 1:
            raise InvalidArgumentError(f"negatives must be >= 1, got {self.negatives}")
        if self.ortho_weight < 0:
            raise InvalidArgumentError(f"ortho_weight must be >= 0, got {self.ortho_weight}")
        if self.epochs < 0:
            raise InvalidArgumentError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise InvalidArgumentError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.neg_term not in (NEG_TERM_ANCHOR, NEG_TERM_RECON):
            raise InvalidArgumentError(f"neg_term must be anchor or recon, got {self.neg_term!r}")


@dataclass(frozen=True)
class TopicDescription:
    topic_id: int
    items: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class IntrusionItem:
    topic_id: int
    items: tuple[str, ...]
    intruder_index: int


@dataclass
class EpochRecord:
    epoch: int
    hinge: float
    ortho: float
    objective: float


@dataclass
class PntmHistory:
    epochs: list[EpochRecord] = field(default_factory=list)


# --- forward pieces ------------------------------------------------------------


def topic_distribution(R: np.ndarray, x: np.ndarray) -> np.ndarray:
    """softmax(Rx), computed with the row max subtracted for stability."""
    R = np.asarray(R, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (R.shape[1],):
        raise InvalidArgumentError(f"x must have shape ({R.shape[1]},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("document vector contains non-finite values")
    logits = R @ x
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def reconstruct(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Topic-weighted combination of the rows of R."""
    R = np.asarray(R, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (R.shape[0],):
        raise InvalidArgumentError(f"t must have shape ({R.shape[0]},), got {t.shape}")
    return R.T @ t


def pntm_loss(x_tilde, x, negatives, neg_term: str = NEG_TERM_ANCHOR) -> float:
    """Sum over negatives of max(0, 1 - x_tilde.x + x.z_i).

    The second inner product pairs the anchor with the negative by
    default; neg_term="recon" swaps in the reconstruction instead.
    """
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    negatives = [np.asarray(z, dtype=np.float64) for z in negatives]
    if not negatives:
        raise InvalidArgumentError("need at least one negative")
    for z in negatives:
        if z.shape != x.shape or x_tilde.shape != x.shape:
            raise InvalidArgumentError("all vectors must share one dimension")
    pos = float(x_tilde @ x)
    total = 0.0
    for z in negatives:
        neg = float((x_tilde if neg_term == NEG_TERM_RECON else x) @ z)
        total += max(0.0, HINGE_MARGIN - pos + neg)
    return total


def orthogonality_penalty(R: np.ndarray) -> float:
    """Frobenius distance of RR^T from the identity."""
    R = np.asarray(R, dtype=np.float64)
    gram = R @ R.T
    return float(np.linalg.norm(gram - np.eye(R.shape[0]), ord="fro"))


# --- hand gradients -------------------------------------------------------------


def doc_loss_grad(R, x, negatives, neg_term: str = NEG_TERM_ANCHOR):
    """Hinge loss of one document and its gradient w.r.t. R.

    The chain runs through both uses of R: the reconstruction x_tilde =
    R^T t and the distribution t = softmax(Rx).
    """
    R = np.asarray(R, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    negatives = [np.asarray(z, dtype=np.float64) for z in negatives]
    t = topic_distribution(R, x)
    x_tilde = reconstruct(R, t)
    pos = float(x_tilde @ x)

    loss = 0.0
    g = np.zeros_like(x)  # dLoss/dx_tilde
    for z in negatives:
        neg = float((x_tilde if neg_term == NEG_TERM_RECON else x) @ z)
        term = HINGE_MARGIN - pos + neg
        if term > 0.0:
            loss += term
            g -= x
            if neg_term == NEG_TERM_RECON:
                g += z
    dR = np.outer(t, g)
    dLdt = R @ g
    ds = t * (dLdt - float(t @ dLdt))
    dR += np.outer(ds, x)
    return loss, dR


def ortho_grad(R):
    """Penalty value and gradient; zero gradient at the (non-differentiable)
    exactly-orthonormal point."""
    R = np.asarray(R, dtype=np.float64)
    gram_shift = R @ R.T - np.eye(R.shape[0])
    h = float(np.linalg.norm(gram_shift, ord="fro"))
    if h == 0.0:
        return 0.0, np.zeros_like(R)
    return h, (2.0 / h) * (gram_shift @ R)


def batch_objective(R, docs, negatives_per_doc, ortho_weight: float, neg_term: str = NEG_TERM_ANCHOR):
    """Mean document hinge plus weighted orthogonality penalty, with gradient.

    This exact function backs both the training loop and the gradient
    checker, so what gets checked is what gets trained.
    """
    docs = list(docs)
    if len(docs) != len(negatives_per_doc):
        raise InvalidArgumentError("one negative set per document required")
    hinge = 0.0
    dR = np.zeros_like(np.asarray(R, dtype=np.float64))
    for x, negs in zip(docs, negatives_per_doc):
        loss_i, grad_i = doc_loss_grad(R, x, negs, neg_term)
        hinge += loss_i / len(docs)
        dR += grad_i / len(docs)
    h, dh = ortho_grad(R)
    return hinge + ortho_weight * h, dR + ortho_weight * dh, hinge, h


def sample_negatives(n_docs: int, anchor: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform indices over all documents except the anchor."""
    if n_docs < 2:
        raise InvalidArgumentError("need at least 2 documents to sample negatives")
    idx = rng.integers(0, n_docs - 1, size=count)
    idx[idx >= anchor] += 1
    return idx


def train_pntm(doc_vectors, cfg: PntmConfig, rng: np.random.Generator) -> tuple[TopicModel, PntmHistory]:
    docs = np.asarray(doc_vectors, dtype=np.float64)
    if docs.ndim != 2:
        raise InvalidArgumentError("doc_vectors must be an (n, d) array")
    n, d = docs.shape
    if n < cfg.negatives + 1:
        raise InvalidArgumentError(
            f"need at least negatives+1 = {cfg.negatives + 1} documents, got {n}"
        )
    if not np.all(np.isfinite(docs)):
        raise InvalidArgumentError("document vectors contain non-finite values")

    R = rng.normal(0.0, 0.1, size=(cfg.k, d))
    model = TopicModel(R=R, R_init=R)
    history = PntmHistory()

    params = model.R.ravel().copy()
    state = OptimState.fresh(params.size)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        hinge_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            batch_docs = [docs[int(i)] for i in idx]
            batch_negs = [
                [docs[int(j)] for j in sample_negatives(n, int(i), cfg.negatives, rng)]
                for i in idx
            ]
            _, dR, hinge, _ = batch_objective(
                model.R, batch_docs, batch_negs, cfg.ortho_weight, cfg.neg_term
            )
            hinge_sum += hinge * len(idx)
            params, state = numcore.adam_step(params, dR.ravel(), state, cfg.lr)
            model.R = params.reshape(cfg.k, d)
        ortho_now = orthogonality_penalty(model.R)
        mean_hinge = hinge_sum / n
        history.epochs.append(
            EpochRecord(epoch, mean_hinge, ortho_now, mean_hinge + cfg.ortho_weight * ortho_now)
        )
    return model, history


# --- interpretation and evaluation aids -----------------------------------------


def interpret_topics(R: np.ndarray, vocab: Vocab, L: EmbeddingMatrix, m: int) -> list[TopicDescription]:
    """Top-m vocabulary items per topic by inner product, via one R L^T."""
    R = np.asarray(R, dtype=np.float64)
    if L.dim != R.shape[1]:
        raise InvalidArgumentError(f"vector dim {L.dim} does not match topic dim {R.shape[1]}")
    if len(vocab) != L.rows:
        raise InvalidArgumentError("vocab/matrix size mismatch")
    if m < 1:
        raise InvalidArgumentError(f"m must be >= 1, got {m}")
    scores = R @ L.data.T
    m = min(m, L.rows)
    row_ids = np.arange(L.rows)
    out = []
    for k in range(R.shape[0]):
        order = np.lexsort((row_ids, -scores[k]))[:m]
        items = tuple((vocab.entries[int(i)], float(scores[k, int(i)])) for i in order)
        out.append(TopicDescription(topic_id=k, items=items))
    return out


def assign_topic(R: np.ndarray, x: np.ndarray) -> int:
    """Most probable topic; softmax is monotone so argmax(Rx) suffices."""
    return int(np.argmax(topic_distribution(R, x)))


def make_intrusion_items(descriptions, rng: np.random.Generator) -> list[IntrusionItem]:
    """Per topic: its top 5 items plus one intruder drawn from another
    topic's top 10 that stays outside this topic's top 50, shuffled.

    Topics whose intruder pool is empty are skipped with a warning.
    """
    import warnings

    descriptions = list(descriptions)
    if len(descriptions) < 2:
        raise InvalidArgumentError("need at least 2 topics")
    for desc in descriptions:
        if len(desc.items) < 5:
            raise InvalidArgumentError(f"topic {desc.topic_id} has fewer than 5 items")
    out = []
    for desc in descriptions:
        own_top50 = {s for s, _ in desc.items[:50]}
        pool: list[str] = []
        seen: set[str] = set()
        for other in descriptions:
            if other.topic_id == desc.topic_id:
                continue
            for s, _ in other.items[:10]:
                if s not in own_top50 and s not in seen:
                    seen.add(s)
                    pool.append(s)
        if not pool:
            warnings.warn(
                f"topic {desc.topic_id}: no intruder candidates; skipped",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        intruder = pool[int(rng.integers(0, len(pool)))]
        items = [s for s, _ in desc.items[:5]] + [intruder]
        perm = rng.permutation(6)
        shuffled = tuple(items[int(i)] for i in perm)
        intruder_index = int(np.nonzero(perm == 5)[0][0])
        out.append(IntrusionItem(desc.topic_id, shuffled, intruder_index))
    return out


def correspondence_stats(model: TopicModel) -> tuple[float, float]:
    """Mean drift of rows from initialization, and mean pairwise row distance."""
    drift = float(np.mean(np.linalg.norm(model.R - model.R_init, axis=1)))
    diffs = []
    for a in range(model.k):
        for b in range(model.k):
            if a != b:
                diffs.append(float(np.linalg.norm(model.R[a] - model.R[b])))
    return drift, float(np.mean(diffs))


# --- corpus and model files ------------------------------------------------------


def load_corpus(path, fmt: str = "auto") -> list[tuple[str, str]]:
    """(id, text) records from one-document-per-line text or JSON lines.

    Auto detection peeks at the first non-blank line: a JSON object with a
    "text" field selects the JSON-lines reader.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if fmt == "auto":
        fmt = "text"
        for line in lines:
            if line.strip():
                if line.lstrip().startswith("{"):
                    fmt = "jsonl"
                break
    docs: list[tuple[str, str]] = []
    if fmt == "text":
        for i, line in enumerate(lines, start=1):
            if line.strip():
                docs.append((str(i), line))
    elif fmt == "jsonl":
        for i, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                raise ParseError("invalid JSON", path=path, line=i) from None
            if not isinstance(rec, dict) or "text" not in rec:
                raise ParseError('record must be an object with a "text" field', path=path, line=i)
            docs.append((str(rec.get("id", i)), str(rec["text"])))
    else:
        raise InvalidArgumentError(f"unknown corpus format {fmt!r}")
    if not docs:
        raise DataError(f"corpus {path} holds no documents")
    return docs


TOPICS_FILE = "topics.pvec"
TOPICS_INIT_FILE = "topics_init.pvec"
TOPICS_META_FILE = "topics.meta"


def save_topic_model(model: TopicModel, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    names = Vocab([f"topic_{k}" for k in range(model.k)])
    save_vectors(names, EmbeddingMatrix(model.R), os.path.join(dirpath, TOPICS_FILE), fmt="pvec-bin")
    save_vectors(
        names, EmbeddingMatrix(np.asarray(model.R_init)), os.path.join(dirpath, TOPICS_INIT_FILE), fmt="pvec-bin"
    )
    with open(os.path.join(dirpath, TOPICS_META_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# topic model metadata\n")
        fh.write(f"k={model.k}\n")
        fh.write(f"dim={model.dim}\n")


def load_topic_model(dirpath) -> TopicModel:
    meta_path = os.path.join(dirpath, TOPICS_META_FILE)
    if not os.path.exists(meta_path):
        raise NotFoundError(f"no topic model at {dirpath}")
    _, current = load_vectors(os.path.join(dirpath, TOPICS_FILE))
    _, initial = load_vectors(os.path.join(dirpath, TOPICS_INIT_FILE))
    if current.data.shape != initial.data.shape:
        raise DataError("current and init topic matrices disagree in shape")
    return TopicModel(R=current.data, R_init=initial.data)
