"""Evaluation protocols: 5-way unigram selection, scored-pair correlation,
paraphrase pair classification, overlap-balanced pair filtering, and
lexical-diversity metrics over nearest neighbors.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import numcore
from .composer import Phrase, tokenize
from .errors import (
    DataError,
    InvalidArgumentError,
    ParseError,
    UndefinedCorrelationError,
)
from .numcore import OptimState, TrainConfig
from .vecstore import EmbeddingMatrix, Vocab, cosine, nearest_neighbors

HIDDEN_WIDTH = 256
N_CLASSES = 2


# --- data types and loaders --------------------------------------------------


@dataclass(frozen=True)
class TurneyItem:
    query: Phrase
    candidates: tuple[Phrase, ...]
    gold_index: int

    def __post_init__(self):
        if len(self.candidates) != 5:
            raise InvalidArgumentError(f"expected 5 candidates, got {len(self.candidates)}")
        if not 0 <= self.gold_index < 5:
            raise InvalidArgumentError(f"gold index {self.gold_index} out of range")


@dataclass(frozen=True)
class BirdItem:
    a: Phrase
    b: Phrase
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidArgumentError(f"score must be in [0,1], got {self.score}")


@dataclass(frozen=True)
class PairItem:
    a: Phrase
    b: Phrase
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise InvalidArgumentError(f"label must be 0 or 1, got {self.label}")


def _tsv_rows(path, n_cols: int):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != n_cols:
                raise ParseError(
                    f"expected {n_cols} tab-separated fields, got {len(cols)}",
                    path=path,
                    line=lineno,
                )
            yield lineno, cols


def load_turney(path, rng: np.random.Generator) -> list[TurneyItem]:
    """Read `query\\tgold\\tc1\\tc2\\tc3\\tc4` rows.

    On file the gold candidate always sits first, which a classifier-free
    argmax must not exploit, so candidate positions are shuffled here with
    the run seed.
    """
    items = []
    for lineno, cols in _tsv_rows(path, 6):
        try:
            query = Phrase.of(cols[0])
            cands = [Phrase.of(c) for c in cols[1:]]
        except InvalidArgumentError as e:
            raise ParseError(str(e), path=path, line=lineno) from None
        perm = rng.permutation(5)
        shuffled = tuple(cands[int(k)] for k in perm)
        gold = int(np.nonzero(perm == 0)[0][0])
        items.append(TurneyItem(query=query, candidates=shuffled, gold_index=gold))
    return items


def load_bird(path) -> list[BirdItem]:
    items = []
    for lineno, (a, b, score) in _tsv_rows(path, 3):
        try:
            items.append(BirdItem(Phrase.of(a), Phrase.of(b), float(score)))
        except (InvalidArgumentError, ValueError) as e:
            raise ParseError(str(e), path=path, line=lineno) from None
    return items


def load_pairs(path) -> list[PairItem]:
    items = []
    for lineno, (a, b, label) in _tsv_rows(path, 3):
        if label not in ("0", "1"):
            raise ParseError(f"label must be 0 or 1, got {label!r}", path=path, line=lineno)
        try:
            items.append(PairItem(Phrase.of(a), Phrase.of(b), int(label)))
        except InvalidArgumentError as e:
            raise ParseError(str(e), path=path, line=lineno) from None
    return items


def make_embedder(vocab: Vocab, matrix: EmbeddingMatrix):
    """Phrase -> vector against a fixed vector file.

    A surface form present in the vocabulary uses its own row; otherwise
    the mean of its known tokens' rows; a phrase with no known tokens maps
    to zeros with a warning.
    """
    if len(vocab) != matrix.rows:
        raise InvalidArgumentError("vocab/matrix size mismatch")

    def embed(phrase: Phrase) -> np.ndarray:
        if phrase.surface in vocab:
            return matrix.data[vocab.row(phrase.surface)]
        rows = [vocab.row(t) for t in phrase.tokens if t in vocab]
        if not rows:
            warnings.warn(
                f"no known tokens in {phrase.surface!r}; embedding as zeros",
                RuntimeWarning,
                stacklevel=2,
            )
            return np.zeros(matrix.dim)
        return matrix.data[rows].mean(axis=0)

    return embed


# --- selection and correlation protocols --------------------------------------


def similarity(a: np.ndarray, b: np.ndarray, metric: str) -> float:
    if metric == "cosine":
        return cosine(a, b)
    if metric == "l2":
        return -float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))
    raise InvalidArgumentError(f"unknown metric {metric!r}")


def eval_turney(items, embed, metric: str = "cosine") -> float:
    """Fraction of items whose most-similar candidate is the gold one.

    Ties go to the lowest candidate index.
    """
    items = list(items)
    if not items:
        raise InvalidArgumentError("no items")
    correct = 0
    for item in items:
        q = embed(item.query)
        sims = [similarity(q, embed(c), metric) for c in item.candidates]
        correct += int(np.argmax(sims)) == item.gold_index
    return correct / len(items)


def eval_bird(items, embed, metric: str = "cosine", correlation: str = "pearson") -> float:
    """Correlation between model similarity and the human score per pair."""
    items = list(items)
    if len(items) < 2:
        raise InvalidArgumentError("need at least 2 items")
    sims = [similarity(embed(it.a), embed(it.b), metric) for it in items]
    scores = [it.score for it in items]
    if correlation == "pearson":
        return pearson(sims, scores)
    if correlation == "spearman":
        return spearman(sims, scores)
    raise InvalidArgumentError(f"unknown correlation {correlation!r}")


def pearson(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise InvalidArgumentError("inputs must be 1-D of equal length")
    if xs.size < 2:
        raise InvalidArgumentError("need at least 2 points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = float(np.sqrt(np.dot(dx, dx)))
    sy = float(np.sqrt(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    return float(np.dot(dx, dy)) / (sx * sy)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise InvalidArgumentError("inputs must be 1-D of equal length")
    return pearson(_average_ranks(xs), _average_ranks(ys))


# --- paraphrase pair classifier ------------------------------------------------


@dataclass
class PairClassifier:
    """One ReLU hidden layer of width 256 over [emb(a); emb(b)], 2-way softmax."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w1.shape[1] != HIDDEN_WIDTH:
            raise InvalidArgumentError(f"hidden layer must have width {HIDDEN_WIDTH}")
        if self.b1.shape != (HIDDEN_WIDTH,):
            raise InvalidArgumentError("bad hidden bias shape")
        if self.w2.shape != (HIDDEN_WIDTH, N_CLASSES) or self.b2.shape != (N_CLASSES,):
            raise InvalidArgumentError("bad output layer shape")
        if self.w1.shape[0] % 2 != 0:
            raise InvalidArgumentError("input width must be 2 x embedding dim")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def zeros(cls, embed_dim: int) -> "PairClassifier":
        return cls(
            np.zeros((2 * embed_dim, HIDDEN_WIDTH)),
            np.zeros(HIDDEN_WIDTH),
            np.zeros((HIDDEN_WIDTH, N_CLASSES)),
            np.zeros(N_CLASSES),
        )

    @classmethod
    def init_random(cls, embed_dim: int, rng: np.random.Generator, scale: float = 0.1) -> "PairClassifier":
        return cls(
            rng.normal(0.0, scale, size=(2 * embed_dim, HIDDEN_WIDTH)),
            np.zeros(HIDDEN_WIDTH),
            rng.normal(0.0, scale, size=(HIDDEN_WIDTH, N_CLASSES)),
            np.zeros(N_CLASSES),
        )

    def pack(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def unpack_into(self, flat: np.ndarray) -> None:
        d_in = self.w1.shape[0]
        sizes = [d_in * HIDDEN_WIDTH, HIDDEN_WIDTH, HIDDEN_WIDTH * N_CLASSES, N_CLASSES]
        if flat.shape != (sum(sizes),):
            raise InvalidArgumentError("flat parameter vector has wrong length")
        a = 0
        self.w1 = flat[a : a + sizes[0]].reshape(d_in, HIDDEN_WIDTH); a += sizes[0]
        self.b1 = flat[a : a + sizes[1]].copy(); a += sizes[1]
        self.w2 = flat[a : a + sizes[2]].reshape(HIDDEN_WIDTH, N_CLASSES); a += sizes[2]
        self.b2 = flat[a : a + sizes[3]].copy()

    def logits(self, features: np.ndarray) -> np.ndarray:
        h = np.maximum(features @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Argmax class per row; exact logit ties resolve to class 0."""
        return np.argmax(self.logits(features), axis=1)


def pair_features(embed, pairs) -> tuple[np.ndarray, np.ndarray]:
    feats = np.stack([np.concatenate([embed(p.a), embed(p.b)]) for p in pairs])
    labels = np.array([p.label for p in pairs], dtype=np.int64)
    return feats, labels


def classifier_objective(clf: PairClassifier, feats: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient as a flat vector."""
    n = feats.shape[0]
    pre = feats @ clf.w1 + clf.b1
    h = np.maximum(pre, 0.0)
    logits = h @ clf.w2 + clf.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    dw2 = h.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dh = dlogits @ clf.w2.T
    dpre = dh * (pre > 0.0)
    dw1 = feats.T @ dpre
    db1 = dpre.sum(axis=0)
    grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])
    return loss, grad


def train_pair_classifier(
    train_pairs, embed, cfg: TrainConfig, rng: np.random.Generator
) -> PairClassifier:
    """Mini-batch softmax training over frozen pair embeddings.

    The learning rate stays constant at cfg.base_lr; the warmup schedule
    belongs to the embedding fine-tune, not this shallow head.
    """
    train_pairs = list(train_pairs)
    labels_seen = {p.label for p in train_pairs}
    if labels_seen != {0, 1}:
        raise InvalidArgumentError(f"training data must contain both classes, got {sorted(labels_seen)}")
    feats, labels = pair_features(embed, train_pairs)
    clf = PairClassifier.init_random(feats.shape[1] // 2, rng)
    params = clf.pack()
    state = OptimState.fresh(params.size)
    n = feats.shape[0]
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            _, grad = classifier_objective(clf, feats[idx], labels[idx])
            params, state = numcore.adam_step(params, grad, state, cfg.base_lr)
            clf.unpack_into(params)
    return clf


def eval_pair_classifier(clf: PairClassifier, test_pairs, embed) -> float:
    test_pairs = list(test_pairs)
    if not test_pairs:
        raise InvalidArgumentError("no test pairs")
    feats, labels = pair_features(embed, test_pairs)
    return float(np.mean(clf.predict(feats) == labels))


def split_pairs(pairs, rng: np.random.Generator) -> tuple[list, list, list]:
    """70/15/15 train/dev/test split, shuffled by the run seed."""
    pairs = list(pairs)
    perm = rng.permutation(len(pairs))
    n_train = int(len(pairs) * 0.70)
    n_dev = int(len(pairs) * 0.15)
    train = [pairs[int(i)] for i in perm[:n_train]]
    dev = [pairs[int(i)] for i in perm[n_train : n_train + n_dev]]
    test = [pairs[int(i)] for i in perm[n_train + n_dev :]]
    return train, dev, test


# --- overlap-balanced pair filtering -------------------------------------------


def _overlap(a: Phrase, b: Phrase) -> tuple[int, frozenset[str]]:
    """Multiset overlap size and the set of overlapping token types."""
    ca, cb = Counter(a.tokens), Counter(b.tokens)
    common = {t for t in ca if t in cb}
    count = sum(min(ca[t], cb[t]) for t in common)
    return count, frozenset(common)


def filter_ppdb(pairs) -> list[PairItem]:
    """Prune a labeled pair corpus until lexical-overlap statistics match
    across classes.

    Two constraints hold on the output: the multiset of overlap counts is
    identical between positives and negatives (each positive matched to a
    negative of equal overlap), and the set of overlapping token types is
    the same on both sides. Pruning alternates the two reductions until a
    fixed point; both only ever remove pairs, so it terminates.
    """
    pairs = list(pairs)
    labels_seen = {p.label for p in pairs}
    if labels_seen != {0, 1}:
        raise InvalidArgumentError(f"input must contain both classes, got {sorted(labels_seen)}")
    stats = [_overlap(p.a, p.b) for p in pairs]
    keep = {1: [i for i, p in enumerate(pairs) if p.label == 1],
            0: [i for i, p in enumerate(pairs) if p.label == 0]}

    changed = True
    while changed:
        changed = False
        # every overlap type present on one side must appear on the other
        types = {
            lab: frozenset().union(*(stats[i][1] for i in keep[lab])) if keep[lab] else frozenset()
            for lab in (1, 0)
        }
        for lab, other in ((1, 0), (0, 1)):
            kept = [i for i in keep[lab] if stats[i][1] <= types[other]]
            if len(kept) != len(keep[lab]):
                keep[lab] = kept
                changed = True
        if changed:
            continue
        # per overlap count, retain min(#pos, #neg) pairs from each side,
        # highest counts first, earliest input rows first within a count
        by_count = {lab: Counter(stats[i][0] for i in keep[lab]) for lab in (1, 0)}
        quotas = {
            c: min(by_count[1].get(c, 0), by_count[0].get(c, 0))
            for c in sorted(set(by_count[1]) | set(by_count[0]), reverse=True)
        }
        for lab in (1, 0):
            taken = Counter()
            kept = []
            for i in keep[lab]:
                c = stats[i][0]
                if taken[c] < quotas.get(c, 0):
                    taken[c] += 1
                    kept.append(i)
            if len(kept) != len(keep[lab]):
                keep[lab] = kept
                changed = True

    retained = sorted(keep[1] + keep[0])
    if not retained:
        warnings.warn("no overlap-matchable pairs; result is empty", RuntimeWarning, stacklevel=2)
    return [pairs[i] for i in retained]


def check_overlap_balance(pairs) -> bool:
    """From-scratch verifier of the two filter constraints.

    Deliberately shares no code with filter_ppdb: overlaps are recomputed
    with sorted-list intersection rather than Counters.
    """

    def multiset_overlap(xs, ys):
        xs, ys = sorted(xs), sorted(ys)
        i = j = 0
        shared = []
        while i < len(xs) and j < len(ys):
            if xs[i] == ys[j]:
                shared.append(xs[i])
                i += 1
                j += 1
            elif xs[i] < ys[j]:
                i += 1
            else:
                j += 1
        return shared

    counts = {0: [], 1: []}
    types = {0: set(), 1: set()}
    for p in pairs:
        shared = multiset_overlap(list(p.a.tokens), list(p.b.tokens))
        counts[p.label].append(len(shared))
        types[p.label].update(shared)
    return sorted(counts[0]) == sorted(counts[1]) and types[0] == types[1]


# --- lexical diversity ---------------------------------------------------------


def levenshtein(a, b) -> int:
    """Unit-cost edit distance between two generic sequences."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        curr = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            curr[j] = min(
                prev[j] + 1,
                curr[j - 1] + 1,
                prev[j - 1] + (x != y),
            )
        prev = curr
    return prev[-1]


def longest_common_substring(a, b) -> int:
    """Length of the longest contiguous run shared by the two sequences."""
    a, b = list(a), list(b)
    best = 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                curr[j] = prev[j - 1] + 1
                if curr[j] > best:
                    best = curr[j]
        prev = curr
    return best


@dataclass(frozen=True)
class DiversityReport:
    pct_new_tokens: float
    lcs_precision: float
    avg_levenshtein: float
    k: int


def diversity_rows(
    queries,
    vocab: Vocab,
    matrix: EmbeddingMatrix,
    k: int = 10,
    metric: str = "cosine",
    lcs_side: str = "neighbor",
    char_level: bool = False,
) -> list[dict]:
    """Per-query diversity numbers over the query's top-k neighbors."""
    queries = list(queries)
    if not queries:
        raise InvalidArgumentError("empty query set")
    if lcs_side not in ("neighbor", "query"):
        raise InvalidArgumentError(f"lcs_side must be neighbor or query, got {lcs_side!r}")
    embed = make_embedder(vocab, matrix)
    rows = []
    for q in queries:
        if q.surface not in vocab and not any(t in vocab for t in q.tokens):
            raise DataError(f"query {q.surface!r} has no representation in the vector file")
        qvec = embed(q)
        hits = nearest_neighbors(qvec, vocab, matrix, k, metric=metric, exclude=q.surface).hits
        qtok = set(q.tokens)
        pooled: set[str] = set()
        lcs_vals = []
        lev_vals = []
        for surface, _ in hits:
            ntok = tokenize(surface)
            pooled.update(ntok)
            run = longest_common_substring(q.tokens, ntok)
            base = len(ntok) if lcs_side == "neighbor" else len(q.tokens)
            lcs_vals.append(100.0 * run / base)
            if char_level:
                lev_vals.append(levenshtein(q.surface, surface))
            else:
                lev_vals.append(levenshtein(q.tokens, ntok))
        rows.append(
            {
                "query": q.surface,
                "n_neighbors": len(hits),
                "pct_new_tokens": len(pooled - qtok) / len(q.tokens),
                "lcs_precision": float(np.mean(lcs_vals)) if hits else 0.0,
                "avg_levenshtein": float(np.mean(lev_vals)) if hits else 0.0,
            }
        )
    return rows


def summarize_diversity(rows, k: int) -> DiversityReport:
    """Aggregate per-query rows; pct_new_tokens averages over queries while
    the other two average over every (query, neighbor) pair, so per-query
    values are weighted by how many neighbors the query actually had.
    """
    if not rows:
        raise InvalidArgumentError("empty query set")
    weights = np.array([r["n_neighbors"] for r in rows], dtype=np.float64)
    if weights.sum() == 0:
        raise InvalidArgumentError("no neighbors found for any query")
    return DiversityReport(
        pct_new_tokens=float(np.mean([r["pct_new_tokens"] for r in rows])),
        lcs_precision=float(np.average([r["lcs_precision"] for r in rows], weights=weights)),
        avg_levenshtein=float(np.average([r["avg_levenshtein"] for r in rows], weights=weights)),
        k=k,
    )


def diversity_report(
    queries,
    vocab: Vocab,
    matrix: EmbeddingMatrix,
    k: int = 10,
    metric: str = "cosine",
    lcs_side: str = "neighbor",
    char_level: bool = False,
) -> DiversityReport:
    rows = diversity_rows(queries, vocab, matrix, k, metric, lcs_side, char_level)
    return summarize_diversity(rows, k)
