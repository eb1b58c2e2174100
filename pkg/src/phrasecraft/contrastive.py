"""Triplet construction and contrastive training of a composer model.

Two triplet flavors share one hinge objective: phrase triplets pull an
anchor phrase toward a paraphrase and away from a corrupted phrase, and
context triplets pull it toward the masked context it occurred in and
away from a context it did not. Batches from the two pools are
interleaved proportionally to pool size.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numcore
from .composer import (
    MASK_TOKEN,
    MAX_DOC_TOKENS,
    ComposerGrads,
    ComposerModel,
    ParamLayout,
    Phrase,
    composer_backward,
    tokenize,
)
from .errors import (
    DataError,
    DegenerateInputError,
    InvalidArgumentError,
    NotFoundError,
    NumericError,
    ParseError,
)
from .numcore import OptimState, TrainConfig, lr_at
from .vecstore import Vocab

# A compact English function-word list; corruption never lands on these.
DEFAULT_STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because
    been before being below between both but by can did do does doing down
    during each few for from further had has have having he her here hers
    herself him himself his how i if in into is it its itself just me more
    most my myself no nor not now of off on once only or other our ours
    ourselves out over own same she should so some such than that the their
    theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why
    will with you your yours yourself yourselves
    """.split()
)


@dataclass(frozen=True)
class StopwordSet:
    tokens: frozenset[str]

    def __post_init__(self):
        if not self.tokens:
            raise InvalidArgumentError("stopword set must be nonempty")
        object.__setattr__(self, "tokens", frozenset(t.lower() for t in self.tokens))

    def __contains__(self, token: str) -> bool:
        return token in self.tokens

    @classmethod
    def default(cls) -> "StopwordSet":
        return cls(DEFAULT_STOPWORDS)


@dataclass(frozen=True)
class PhraseTriplet:
    anchor: Phrase
    positive: Phrase
    negative: Phrase


@dataclass(frozen=True)
class ContextTriplet:
    """Anchor phrase with a masked positive context and a negative context."""

    anchor: Phrase
    positive: tuple[str, ...]
    negative: tuple[str, ...]

    def __post_init__(self):
        if not self.positive or not self.negative:
            raise InvalidArgumentError("contexts must be nonempty")
        n_masks = sum(1 for t in self.positive if t == MASK_TOKEN)
        if n_masks != 1:
            raise InvalidArgumentError(
                f"positive context must contain exactly one {MASK_TOKEN}, found {n_masks}"
            )
        if len(self.positive) > MAX_DOC_TOKENS or len(self.negative) > MAX_DOC_TOKENS:
            raise InvalidArgumentError(f"contexts are capped at {MAX_DOC_TOKENS} tokens")


def corrupt_phrase(
    p: Phrase,
    vocab: Vocab,
    stopwords: StopwordSet,
    rng: np.random.Generator,
    allow_stopwords: bool = False,
) -> Phrase:
    """Replace one uniformly chosen non-stopword token with a random
    vocabulary token guaranteed to differ from the original.

    Only single-token vocabulary entries are eligible replacements, so the
    output stays a well-formed token sequence. Phrases made entirely of
    stopwords are rejected unless `allow_stopwords` lets the corruption
    land on a stopword position instead.
    """
    eligible = [i for i, t in enumerate(p.tokens) if t not in stopwords]
    if not eligible:
        if not allow_stopwords:
            raise DegenerateInputError(f"phrase {p.surface!r} contains only stopwords")
        eligible = list(range(len(p.tokens)))
    pos = eligible[int(rng.integers(0, len(eligible)))]
    original = p.tokens[pos]

    candidates: list[str] = []
    seen: set[str] = set()
    for entry in vocab.entries:
        toks = tokenize(entry)
        if len(toks) == 1 and toks[0] != original and toks[0] not in seen:
            seen.add(toks[0])
            candidates.append(toks[0])
    if not candidates:
        raise DegenerateInputError(
            f"vocabulary offers no single-token replacement differing from {original!r}"
        )
    replacement = candidates[int(rng.integers(0, len(candidates)))]
    tokens = list(p.tokens)
    tokens[pos] = replacement
    return Phrase(surface=" ".join(tokens), tokens=tuple(tokens))


def mask_context(context, p: Phrase) -> tuple[str, ...]:
    """Collapse the first contiguous occurrence of p into one mask token."""
    ctx = tuple(context)
    n = len(p.tokens)
    for i in range(len(ctx) - n + 1):
        if ctx[i : i + n] == p.tokens:
            return ctx[:i] + (MASK_TOKEN,) + ctx[i + n :]
    raise NotFoundError(f"phrase {p.surface!r} does not occur in the context")


def triplet_loss(p: np.ndarray, pos: np.ndarray, neg: np.ndarray, margin: float) -> float:
    """max(0, margin - ||p-neg|| + ||p-pos||), distances in L2."""
    p = np.asarray(p, dtype=np.float64)
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if p.shape != pos.shape or p.shape != neg.shape:
        raise InvalidArgumentError(
            f"dimension mismatch: {p.shape} vs {pos.shape} vs {neg.shape}"
        )
    if margin < 0:
        raise InvalidArgumentError(f"margin must be >= 0, got {margin}")
    raw = margin - float(np.linalg.norm(p - neg)) + float(np.linalg.norm(p - pos))
    # max(0.0, nan) would silently clamp a blown-up model to "satisfied";
    # let non-finite slack through so callers' finiteness checks fire.
    if math.isnan(raw):
        return raw
    return max(0.0, raw)


def triplet_loss_backward(
    p: np.ndarray, pos: np.ndarray, neg: np.ndarray, margin: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Subgradients w.r.t. (p, pos, neg).

    Zero everywhere when the hinge is inactive; a zero-distance direction
    contributes the zero vector (the subgradient chosen at the
    singularity of the norm).
    """
    p = np.asarray(p, dtype=np.float64)
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    zero = np.zeros_like(p)
    if triplet_loss(p, pos, neg, margin) <= 0.0:
        return zero, zero.copy(), zero.copy()
    dp = zero.copy()
    dpos = zero.copy()
    dneg = zero.copy()
    diff_pos = p - pos
    dist_pos = float(np.linalg.norm(diff_pos))
    if dist_pos > 0.0:
        unit = diff_pos / dist_pos
        dp += unit
        dpos -= unit
    diff_neg = p - neg
    dist_neg = float(np.linalg.norm(diff_neg))
    if dist_neg > 0.0:
        unit = diff_neg / dist_neg
        dp -= unit
        dneg += unit
    return dp, dpos, dneg


# --- training ----------------------------------------------------------------


@dataclass
class BatchRecord:
    epoch: int
    step: int
    kind: str  # "phrase" | "context"
    loss: float
    satisfied: float


@dataclass
class TrainingHistory:
    batches: list[BatchRecord] = field(default_factory=list)
    epoch_satisfied: list[float] = field(default_factory=list)


def _as_phrases(triplet) -> tuple[Phrase, Phrase, Phrase]:
    if isinstance(triplet, PhraseTriplet):
        return triplet.anchor, triplet.positive, triplet.negative
    return (
        triplet.anchor,
        Phrase(surface=" ".join(triplet.positive), tokens=triplet.positive),
        Phrase(surface=" ".join(triplet.negative), tokens=triplet.negative),
    )


def _triplet_forward_backward(model, triplet, margin):
    """Loss and accumulated composer gradients for one triplet."""
    a, pos, neg = _as_phrases(triplet)
    va = model.embed_phrase(a)
    vpos = model.embed_phrase(pos)
    vneg = model.embed_phrase(neg)
    loss = triplet_loss(va, vpos, vneg, margin)
    grads = ComposerGrads()
    if loss > 0.0:
        ga, gpos, gneg = triplet_loss_backward(va, vpos, vneg, margin)
        grads.add_scaled(composer_backward(model, a, ga))
        grads.add_scaled(composer_backward(model, pos, gpos))
        grads.add_scaled(composer_backward(model, neg, gneg))
    return loss, grads


def _interleave(n_a: int, n_b: int) -> list[str]:
    """Merge n_a "phrase" and n_b "context" slots in proportional order."""
    order: list[str] = []
    ia = ib = 0
    while ia < n_a or ib < n_b:
        if ib >= n_b:
            order.append("phrase")
            ia += 1
        elif ia >= n_a:
            order.append("context")
            ib += 1
        elif (ia + 1) * n_b <= (ib + 1) * n_a:
            order.append("phrase")
            ia += 1
        else:
            order.append("context")
            ib += 1
    return order


def _copy_model(model: ComposerModel) -> ComposerModel:
    return ComposerModel(
        token_vocab=model.token_vocab,
        token_table=model.token_table.copy(),
        projection=None if model.projection is None else model.projection.copy(),
        bias=None if model.bias is None else model.bias.copy(),
        nonlinearity=model.nonlinearity,
        oov_policy=model.oov_policy,
    )


def _satisfied_fraction(model, triplets, margin) -> float:
    ok = 0
    for t in triplets:
        a, pos, neg = _as_phrases(t)
        loss = triplet_loss(
            model.embed_phrase(a), model.embed_phrase(pos), model.embed_phrase(neg), margin
        )
        ok += loss == 0.0
    return ok / len(triplets)


def train_contrastive(
    model: ComposerModel,
    phrase_triplets,
    context_triplets,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[ComposerModel, TrainingHistory]:
    """Interleaved mini-batch training over both triplet pools.

    The input model is left untouched; a trained copy is returned. Every
    parameter update goes through numcore.adam_step; a step whose
    scheduled learning rate is exactly 0 (the first warmup step) skips
    the optimizer call entirely.
    """
    phrase_triplets = list(phrase_triplets)
    context_triplets = list(context_triplets)
    if not phrase_triplets and not context_triplets:
        raise InvalidArgumentError("no triplets to train on")

    model = _copy_model(model)
    history = TrainingHistory()
    if cfg.epochs == 0:
        return model, history

    layout = ParamLayout.of(model)
    params = layout.pack(model)
    state = OptimState.fresh(layout.total)

    n_a = math.ceil(len(phrase_triplets) / cfg.batch_size) if phrase_triplets else 0
    n_b = math.ceil(len(context_triplets) / cfg.batch_size) if context_triplets else 0
    batch_order = _interleave(n_a, n_b)
    total_steps = cfg.epochs * len(batch_order)
    all_triplets = phrase_triplets + context_triplets

    step = 0
    for epoch in range(cfg.epochs):
        pools = {}
        if phrase_triplets:
            perm = rng.permutation(len(phrase_triplets))
            pools["phrase"] = [phrase_triplets[i] for i in perm]
        if context_triplets:
            perm = rng.permutation(len(context_triplets))
            pools["context"] = [context_triplets[i] for i in perm]
        cursor = {"phrase": 0, "context": 0}

        for kind in batch_order:
            pool = pools[kind]
            start = cursor[kind]
            batch = pool[start : start + cfg.batch_size]
            cursor[kind] = start + cfg.batch_size

            acc = ComposerGrads()
            losses = []
            for t in batch:
                loss, grads = _triplet_forward_backward(model, t, cfg.margin)
                losses.append(loss)
                acc.add_scaled(grads, 1.0 / len(batch))
            mean_loss = float(np.mean(losses))
            if not math.isfinite(mean_loss):
                bad = next(
                    (t for t, v in zip(batch, losses) if not math.isfinite(v)), batch[0]
                )
                raise NumericError(
                    f"non-finite loss at step {step} (epoch {epoch}, {kind} batch), "
                    f"anchor {_as_phrases(bad)[0].surface!r}"
                )
            satisfied = sum(v == 0.0 for v in losses) / len(losses)
            history.batches.append(BatchRecord(epoch, step, kind, mean_loss, satisfied))

            lr = lr_at(step, total_steps, cfg)
            if lr > 0.0:
                flat = layout.scatter(acc)
                params, state = numcore.adam_step(params, flat, state, lr)
                layout.unpack_into(params, model)
            step += 1

        history.epoch_satisfied.append(_satisfied_fraction(model, all_triplets, cfg.margin))
    return model, history


# --- dataset files -----------------------------------------------------------


def _tsv_rows(path, n_cols: int):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != n_cols:
                raise ParseError(f"expected {n_cols} tab-separated fields, got {len(cols)}", path=path, line=lineno)
            yield lineno, cols


def load_phrase_triplets(path) -> list[PhraseTriplet]:
    """Read `anchor\\tpositive\\tnegative` rows."""
    out = []
    for lineno, (a, pos, neg) in _tsv_rows(path, 3):
        try:
            out.append(PhraseTriplet(Phrase.of(a), Phrase.of(pos), Phrase.of(neg)))
        except InvalidArgumentError as e:
            raise ParseError(str(e), path=path, line=lineno) from None
    return out


def load_phrase_pairs(path) -> list[tuple[Phrase, Phrase]]:
    """Read `anchor\\tpositive` rows; negatives get generated downstream."""
    out = []
    for lineno, (a, pos) in _tsv_rows(path, 2):
        try:
            out.append((Phrase.of(a), Phrase.of(pos)))
        except InvalidArgumentError as e:
            raise ParseError(str(e), path=path, line=lineno) from None
    return out


def build_phrase_triplets(
    pairs,
    vocab: Vocab,
    stopwords: StopwordSet,
    rng: np.random.Generator,
    force: bool = False,
) -> list[PhraseTriplet]:
    """Make negatives by corrupting each anchor.

    All-stopword anchors are skipped with a warning unless `force` lets
    the corruption land on a stopword position.
    """
    out = []
    for anchor, positive in pairs:
        try:
            negative = corrupt_phrase(anchor, vocab, stopwords, rng, allow_stopwords=force)
        except DegenerateInputError as e:
            warnings.warn(f"skipping pair: {e}", RuntimeWarning, stacklevel=2)
            continue
        out.append(PhraseTriplet(anchor, positive, negative))
    return out


def load_context_triplets(path) -> list[ContextTriplet]:
    """Read `anchor\\tpositive_context\\tnegative_context` rows.

    Contexts are space-joined tokens; the positive must already carry its
    mask token.
    """
    out = []
    for lineno, (a, pos, neg) in _tsv_rows(path, 3):
        try:
            out.append(
                ContextTriplet(
                    anchor=Phrase.of(a),
                    positive=tuple(tokenize(pos)),
                    negative=tuple(tokenize(neg)),
                )
            )
        except InvalidArgumentError as e:
            raise ParseError(str(e), path=path, line=lineno) from None
    return out


def load_context_records(path) -> list[tuple[Phrase, tuple[str, ...]]]:
    """Read `anchor\\tcontext` rows where the context still contains the anchor."""
    out = []
    for lineno, (a, ctx) in _tsv_rows(path, 2):
        try:
            out.append((Phrase.of(a), tuple(tokenize(ctx))))
        except InvalidArgumentError as e:
            raise ParseError(str(e), path=path, line=lineno) from None
    return out


def build_context_triplets(records, rng: np.random.Generator) -> list[ContextTriplet]:
    """Mask each anchor inside its own context and draw a negative context
    uniformly from the other records' masked contexts, never from one
    whose raw text contains the anchor.

    Raw contexts are truncated to the document window before masking, so
    an anchor beyond the window is a data error.
    """
    records = [(p, ctx[:MAX_DOC_TOKENS]) for p, ctx in records]
    masked: list[tuple[str, ...]] = []
    for i, (p, ctx) in enumerate(records):
        try:
            masked.append(mask_context(ctx, p))
        except NotFoundError:
            raise DataError(
                f"record {i}: anchor {p.surface!r} does not occur in its context "
                f"(within the first {MAX_DOC_TOKENS} tokens)"
            ) from None

    def contains(ctx: tuple[str, ...], tokens: tuple[str, ...]) -> bool:
        n = len(tokens)
        return any(ctx[j : j + n] == tokens for j in range(len(ctx) - n + 1))

    out = []
    for i, (p, _) in enumerate(records):
        candidates = [
            j
            for j, (_, raw) in enumerate(records)
            if j != i and not contains(raw, p.tokens)
        ]
        if not candidates:
            warnings.warn(
                f"no usable negative context for anchor {p.surface!r}; skipping",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        j = candidates[int(rng.integers(0, len(candidates)))]
        out.append(ContextTriplet(anchor=p, positive=masked[i], negative=masked[j]))
    return out
