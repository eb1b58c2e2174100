import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phrasecraft import numcore
from phrasecraft.composer import ComposerModel, Phrase
from phrasecraft.contrastive import (
    ContextTriplet,
    PhraseTriplet,
    StopwordSet,
    _interleave,
    build_context_triplets,
    build_phrase_triplets,
    corrupt_phrase,
    load_context_records,
    load_context_triplets,
    load_phrase_pairs,
    load_phrase_triplets,
    mask_context,
    train_contrastive,
    triplet_loss,
    triplet_loss_backward,
)
from phrasecraft.errors import (
    DataError,
    DegenerateInputError,
    InvalidArgumentError,
    NotFoundError,
    NumericError,
    ParseError,
)
from phrasecraft.numcore import TrainConfig, finite_diff_check, make_rng
from phrasecraft.vecstore import Vocab


class TestStopwords:
    def test_default_contains_function_words(self):
        sw = StopwordSet.default()
        assert "the" in sw and "of" in sw
        assert "giraffe" not in sw

    def test_lowercases_input(self):
        sw = StopwordSet(frozenset({"The", "AND"}))
        assert "the" in sw and "and" in sw

    def test_rejects_empty(self):
        with pytest.raises(InvalidArgumentError):
            StopwordSet(frozenset())


class TestCorruptPhrase:
    def setup_method(self):
        self.vocab = Vocab(["cat", "dog", "bird", "fish", "two words"])
        self.sw = StopwordSet.default()

    def test_changes_exactly_one_non_stopword(self):
        p = Phrase.of("the quick fox")
        for seed in range(50):
            out = corrupt_phrase(p, self.vocab, self.sw, make_rng(seed))
            diffs = [i for i, (a, b) in enumerate(zip(p.tokens, out.tokens)) if a != b]
            assert len(diffs) == 1
            assert p.tokens[diffs[0]] not in self.sw
            assert out.tokens[diffs[0]] in {"cat", "dog", "bird", "fish"}
            assert len(out.tokens) == len(p.tokens)

    def test_replacement_never_equals_original(self):
        vocab = Vocab(["cat", "dog"])
        p = Phrase.of("cat")
        for seed in range(30):
            out = corrupt_phrase(p, vocab, self.sw, make_rng(seed))
            assert out.tokens == ("dog",)

    def test_multiword_vocab_entries_not_eligible(self):
        vocab = Vocab(["two words", "solo"])
        p = Phrase.of("solo")
        with pytest.raises(DegenerateInputError, match="no single-token replacement"):
            corrupt_phrase(p, vocab, self.sw, make_rng(0))

    def test_all_stopword_phrase_rejected(self):
        p = Phrase.of("of the")
        with pytest.raises(DegenerateInputError, match="only stopwords"):
            corrupt_phrase(p, self.vocab, self.sw, make_rng(0))

    def test_allow_stopwords_overrides(self):
        p = Phrase.of("of the")
        out = corrupt_phrase(p, self.vocab, self.sw, make_rng(0), allow_stopwords=True)
        diffs = [i for i in range(2) if out.tokens[i] != p.tokens[i]]
        assert len(diffs) == 1

    def test_deterministic_per_seed(self):
        p = Phrase.of("quick brown fox")
        a = corrupt_phrase(p, self.vocab, self.sw, make_rng(7))
        b = corrupt_phrase(p, self.vocab, self.sw, make_rng(7))
        assert a.tokens == b.tokens

    def test_every_position_and_candidate_reachable(self):
        p = Phrase.of("alpha beta")
        positions = set()
        replacements = set()
        for seed in range(200):
            out = corrupt_phrase(p, self.vocab, self.sw, make_rng(seed))
            (i,) = [k for k in range(2) if out.tokens[k] != p.tokens[k]]
            positions.add(i)
            replacements.add(out.tokens[i])
        assert positions == {0, 1}
        assert replacements == {"cat", "dog", "bird", "fish"}


class TestMaskContext:
    def test_single_token_phrase(self):
        out = mask_context(("i", "saw", "a", "fox", "today"), Phrase.of("fox"))
        assert out == ("i", "saw", "a", "[MASK]", "today")

    def test_multiword_collapses_to_one_mask(self):
        out = mask_context(("the", "new", "york", "times"), Phrase.of("new york"))
        assert out == ("the", "[MASK]", "times")
        assert sum(t == "[MASK]" for t in out) == 1

    def test_first_occurrence_wins(self):
        out = mask_context(("fox", "and", "fox"), Phrase.of("fox"))
        assert out == ("[MASK]", "and", "fox")

    def test_whole_context_phrase(self):
        assert mask_context(("only",), Phrase.of("only")) == ("[MASK]",)

    def test_absent_phrase_raises(self):
        with pytest.raises(NotFoundError):
            mask_context(("nothing", "here"), Phrase.of("fox"))

    def test_split_occurrence_does_not_count(self):
        with pytest.raises(NotFoundError):
            mask_context(("new", "and", "york"), Phrase.of("new york"))


class TestContextTriplet:
    def test_accepts_one_mask(self):
        t = ContextTriplet(Phrase.of("x"), ("a", "[MASK]"), ("b", "c"))
        assert t.positive == ("a", "[MASK]")

    @pytest.mark.parametrize(
        "positive",
        [("a", "b"), ("[MASK]", "[MASK]"), ()],
    )
    def test_rejects_wrong_mask_count(self, positive):
        with pytest.raises(InvalidArgumentError):
            ContextTriplet(Phrase.of("x"), positive, ("b",))

    def test_rejects_overlong_contexts(self):
        with pytest.raises(InvalidArgumentError):
            ContextTriplet(Phrase.of("x"), ("[MASK]",) + ("a",) * 120, ("b",))
        with pytest.raises(InvalidArgumentError):
            ContextTriplet(Phrase.of("x"), ("[MASK]",), ("b",) * 121)


class TestTripletLoss:
    def test_hand_values(self):
        p = np.array([0.0, 0.0])
        pos = np.array([1.0, 0.0])
        neg = np.array([3.0, 0.0])
        # margin 1: 1 - 3 + 1 = -1 -> clamped
        assert triplet_loss(p, pos, neg, 1.0) == 0.0
        # margin 3: 3 - 3 + 1 = 1
        assert triplet_loss(p, pos, neg, 3.0) == pytest.approx(1.0)

    def test_identical_pos_neg_gives_margin(self):
        v = np.array([1.0, 2.0])
        assert triplet_loss(v, v, v, 0.5) == pytest.approx(0.5)

    def test_nan_slack_propagates(self):
        v = np.array([np.inf, 0.0])
        w = np.array([0.0, 0.0])
        # both distances infinite: the slack is nan and must not clamp to 0
        assert np.isnan(triplet_loss(v, w, w, 1.0))

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            triplet_loss(np.ones(2), np.ones(3), np.ones(2), 1.0)
        with pytest.raises(InvalidArgumentError):
            triplet_loss(np.ones(2), np.ones(2), np.ones(2), -1.0)

    def test_backward_zero_when_inactive(self):
        p = np.array([0.0, 0.0])
        pos = np.array([0.1, 0.0])
        neg = np.array([9.0, 0.0])
        dp, dpos, dneg = triplet_loss_backward(p, pos, neg, 1.0)
        assert not dp.any() and not dpos.any() and not dneg.any()

    def test_backward_zero_distance_no_nan(self):
        v = np.array([1.0, 1.0])
        neg = np.array([1.0, 2.0])
        dp, dpos, dneg = triplet_loss_backward(v, v.copy(), neg, 2.0)
        assert np.all(np.isfinite(dp))
        assert not dpos.any()  # positive sits on the anchor: zero direction
        assert dneg.any()

    @given(st.integers(min_value=0, max_value=500))
    def test_backward_matches_finite_differences(self, seed):
        rng = make_rng(seed)
        vecs = rng.normal(size=(3, 4))
        margin = float(rng.uniform(0.2, 2.0))
        p, pos, neg = vecs
        loss = triplet_loss(p, pos, neg, margin)
        slack = margin - np.linalg.norm(p - neg) + np.linalg.norm(p - pos)
        if abs(slack) < 0.05:  # stay clear of the hinge kink
            return
        dp, dpos, dneg = triplet_loss_backward(p, pos, neg, margin)
        flat = np.concatenate([p, pos, neg])

        def loss_fn(z):
            return triplet_loss(z[:4], z[4:8], z[8:], margin)

        err = finite_diff_check(loss_fn, flat, np.concatenate([dp, dpos, dneg]))
        assert err < 1e-5


class TestInterleave:
    def test_counts(self):
        order = _interleave(3, 5)
        assert order.count("phrase") == 3
        assert order.count("context") == 5

    def test_proportional_merge(self):
        assert _interleave(2, 1) == ["phrase", "phrase", "context"]
        assert _interleave(1, 2) == ["context", "phrase", "context"]
        assert _interleave(2, 2) == ["phrase", "context", "phrase", "context"]

    def test_one_sided(self):
        assert _interleave(3, 0) == ["phrase"] * 3
        assert _interleave(0, 2) == ["context"] * 2

    @given(st.integers(min_value=0, max_value=30), st.integers(min_value=0, max_value=30))
    def test_prefix_never_starves_a_pool(self, n_a, n_b):
        order = _interleave(n_a, n_b)
        assert len(order) == n_a + n_b
        seen_a = seen_b = 0
        for kind in order:
            if kind == "phrase":
                seen_a += 1
            else:
                seen_b += 1
            # a pool can lead by at most its proportional share plus one slot
            if n_a and n_b:
                assert abs(seen_a * n_b - seen_b * n_a) <= max(n_a, n_b)


def tiny_fixture(n=8, dim=4, seed=0):
    """Disjoint-token triplets over a dedicated vocabulary."""
    tokens = []
    triplets = []
    for i in range(n):
        a, p, q = f"a{i}", f"p{i}", f"n{i}"
        tokens += [a, p, q]
        triplets.append(PhraseTriplet(Phrase.of(a), Phrase.of(p), Phrase.of(q)))
    vocab = Vocab(tokens)
    model = ComposerModel.fresh(vocab, dim, make_rng(seed), with_projection=False)
    return model, triplets


class TestTrainContrastive:
    def test_input_model_untouched_and_copy_returned(self):
        model, triplets = tiny_fixture()
        before = model.token_table.copy()
        cfg = TrainConfig(base_lr=0.05, batch_size=4, epochs=2)
        trained, _ = train_contrastive(model, triplets, [], cfg, make_rng(1))
        assert np.array_equal(model.token_table, before)
        assert trained is not model
        assert not np.array_equal(trained.token_table, before)

    def test_deterministic_per_seed(self):
        model, triplets = tiny_fixture()
        cfg = TrainConfig(base_lr=0.05, batch_size=4, epochs=3)
        t1, h1 = train_contrastive(model, triplets, [], cfg, make_rng(9))
        t2, h2 = train_contrastive(model, triplets, [], cfg, make_rng(9))
        assert t1.token_table.tobytes() == t2.token_table.tobytes()
        assert [b.loss for b in h1.batches] == [b.loss for b in h2.batches]
        assert h1.epoch_satisfied == h2.epoch_satisfied

    def test_epochs_zero_is_identity_copy(self):
        model, triplets = tiny_fixture()
        cfg = TrainConfig(epochs=0)
        trained, history = train_contrastive(model, triplets, [], cfg, make_rng(0))
        assert trained is not model
        assert np.array_equal(trained.token_table, model.token_table)
        assert history.batches == [] and history.epoch_satisfied == []

    def test_history_shape(self):
        model, triplets = tiny_fixture(n=8)
        cfg = TrainConfig(base_lr=0.05, batch_size=3, epochs=2)  # 3 batches/epoch
        _, history = train_contrastive(model, triplets, [], cfg, make_rng(0))
        assert len(history.batches) == 6
        assert [b.step for b in history.batches] == list(range(6))
        assert {b.kind for b in history.batches} == {"phrase"}
        assert len(history.epoch_satisfied) == 2

    def test_satisfaction_improves_on_easy_fixture(self):
        model, triplets = tiny_fixture(n=12, dim=8)
        cfg = TrainConfig(base_lr=0.05, batch_size=4, epochs=12)
        _, history = train_contrastive(model, triplets, [], cfg, make_rng(3))
        assert history.epoch_satisfied[-1] > history.epoch_satisfied[0]
        assert history.epoch_satisfied[-1] >= 0.9

    def test_zero_lr_steps_skip_optimizer(self, monkeypatch):
        model, triplets = tiny_fixture(n=8)
        calls = []
        real = numcore.adam_step

        def spy(params, grads, state, lr):
            calls.append(lr)
            return real(params, grads, state, lr)

        monkeypatch.setattr(numcore, "adam_step", spy)
        cfg = TrainConfig(base_lr=0.05, batch_size=4, epochs=2, warmup_fraction=0.5)
        train_contrastive(model, triplets, [], cfg, make_rng(0))
        # 4 total steps, warmup over the first 2: lr(0) = 0 is skipped
        assert len(calls) == 3
        assert all(lr > 0 for lr in calls)

    def test_mixed_pools_interleave_kinds(self):
        model, triplets = tiny_fixture(n=6)
        ctx = [
            ContextTriplet(t.anchor, ("[MASK]", t.positive.tokens[0]), (t.negative.tokens[0], "x0"))
            for t in triplets[:3]
        ]
        cfg = TrainConfig(base_lr=0.01, batch_size=3, epochs=1)
        _, history = train_contrastive(model, triplets, ctx, cfg, make_rng(0))
        kinds = [b.kind for b in history.batches]
        assert kinds.count("phrase") == 2
        assert kinds.count("context") == 1

    def test_empty_pools_rejected(self):
        model, _ = tiny_fixture()
        with pytest.raises(InvalidArgumentError):
            train_contrastive(model, [], [], TrainConfig(), make_rng(0))

    def test_nonfinite_loss_reported(self):
        model, triplets = tiny_fixture(n=4)
        model.token_table[0, 0] = np.inf
        cfg = TrainConfig(base_lr=0.05, batch_size=4, epochs=1)
        with pytest.raises(NumericError, match="non-finite loss at step"):
            train_contrastive(model, triplets, [], cfg, make_rng(0))


class TestFileLoaders:
    def test_phrase_triplets_roundtrip(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("big apple\tnew york\tsmall apple\n\nfox\tvixen\thound\n")
        out = load_phrase_triplets(path)
        assert len(out) == 2
        assert out[0].anchor.tokens == ("big", "apple")
        assert out[1].negative.tokens == ("hound",)

    def test_wrong_columns_named_line(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("a\tb\tc\nd\te\n")
        with pytest.raises(ParseError) as exc:
            load_phrase_triplets(path)
        assert ":2:" in str(exc.value)

    def test_blank_anchor_is_parse_error(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text(" \tb\tc\n")
        with pytest.raises(ParseError):
            load_phrase_triplets(path)

    def test_phrase_pairs(self, tmp_path):
        path = tmp_path / "p.tsv"
        path.write_text("a b\tc d\n")
        out = load_phrase_pairs(path)
        assert out[0][1].tokens == ("c", "d")

    def test_context_triplets_mask_required(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("fox\tthe [MASK] ran\tdogs sleep here\n")
        out = load_context_triplets(path)
        assert out[0].positive == ("the", "[MASK]", "ran")
        path.write_text("fox\tthe fox ran\tdogs sleep here\n")
        with pytest.raises(ParseError, match="exactly one"):
            load_context_triplets(path)

    def test_context_records(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text("Fox\tThe Fox ran\n")
        out = load_context_records(path)
        assert out[0][0].tokens == ("fox",)
        assert out[0][1] == ("the", "fox", "ran")


class TestBuildPhraseTriplets:
    def test_skips_degenerate_with_warning(self):
        vocab = Vocab(["cat", "dog"])
        pairs = [
            (Phrase.of("of the"), Phrase.of("cat")),
            (Phrase.of("cat"), Phrase.of("dog")),
        ]
        with pytest.warns(RuntimeWarning, match="skipping pair"):
            out = build_phrase_triplets(pairs, vocab, StopwordSet.default(), make_rng(0))
        assert len(out) == 1
        assert out[0].anchor.tokens == ("cat",)

    def test_force_keeps_stopword_anchors(self):
        vocab = Vocab(["cat", "dog"])
        pairs = [(Phrase.of("of the"), Phrase.of("cat"))]
        out = build_phrase_triplets(pairs, vocab, StopwordSet.default(), make_rng(0), force=True)
        assert len(out) == 1


class TestBuildContextTriplets:
    def test_masks_and_draws_from_other_records(self):
        records = [
            (Phrase.of("fox"), ("the", "fox", "ran")),
            (Phrase.of("owl"), ("an", "owl", "slept")),
        ]
        out = build_context_triplets(records, make_rng(0))
        assert len(out) == 2
        assert out[0].positive == ("the", "[MASK]", "ran")
        assert out[0].negative == ("an", "[MASK]", "slept")
        assert out[1].negative == ("the", "[MASK]", "ran")

    def test_negative_never_contains_anchor(self):
        records = [
            (Phrase.of("fox"), ("the", "fox", "ran")),
            (Phrase.of("fox den"), ("a", "fox", "den", "appeared")),  # contains "fox"
            (Phrase.of("owl"), ("an", "owl", "slept")),
        ]
        for seed in range(20):
            out = build_context_triplets(records, make_rng(seed))
            first = [t for t in out if t.anchor.tokens == ("fox",)][0]
            assert first.negative == ("an", "[MASK]", "slept")

    def test_no_candidates_warns_and_skips(self):
        records = [
            (Phrase.of("fox"), ("the", "fox", "ran")),
            (Phrase.of("red fox"), ("a", "red", "fox", "hid")),
        ]
        # the only other record's raw context contains "fox"
        with pytest.warns(RuntimeWarning, match="no usable negative"):
            out = build_context_triplets(records, make_rng(0))
        anchors = [t.anchor.surface for t in out]
        assert "fox" not in anchors
        assert "red fox" in anchors

    def test_anchor_missing_from_context_is_data_error(self):
        records = [
            (Phrase.of("fox"), ("nothing", "here")),
            (Phrase.of("owl"), ("an", "owl", "slept")),
        ]
        with pytest.raises(DataError, match="record 0"):
            build_context_triplets(records, make_rng(0))

    def test_truncation_applied_before_masking(self):
        long_ctx = tuple(f"w{i}" for i in range(125)) + ("fox",)
        records = [
            (Phrase.of("fox"), long_ctx),
            (Phrase.of("owl"), ("an", "owl", "slept")),
        ]
        with pytest.raises(DataError, match="first 120 tokens"):
            build_context_triplets(records, make_rng(0))
