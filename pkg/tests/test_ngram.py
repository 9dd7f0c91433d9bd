import math
import random
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from callrank import ngram
from callrank.corpus import Vocabulary
from callrank.ngram import BOS, CacheState, ConfigError, NGramModel, SmoothingConfig

KINDS = ("mle", "jelinek_mercer", "kneser_ney")


def vocab_of(rows, min_count=1):
    return Vocabulary(Counter(t for r in rows for t in r), min_count)


def model_of(rows, order=2, kind="jelinek_mercer", min_count=1, **kw):
    v = vocab_of(rows, min_count)
    return ngram.train(rows, order, v, SmoothingConfig(kind, **kw))


def random_corpus(rng, n_types, n_tokens, max_len=12):
    rows, left = [], n_tokens
    while left > 0:
        k = min(left, rng.randint(2, max_len))
        rows.append([f"w{rng.randrange(n_types)}" for _ in range(k)])
        left -= k
    return rows


# -- MLE ------------------------------------------------------------------------


def test_mle_examples():
    assert model_of([["a", "b", "a", "b"]], kind="mle").prob(["a"], "b") == 1.0
    assert model_of([["a", "b", "a", "c"]], kind="mle").prob(["a"], "b") == 0.5


def test_mle_unseen_context_is_uniform():
    m = model_of([["a", "b"]], kind="mle")
    assert m.prob(["b"], "a") == 1.0 / m.vocab_size


def test_mle_matches_recount_oracle():
    rng = random.Random(1)
    rows = random_corpus(rng, 30, 500)
    m = model_of(rows, order=3, kind="mle")
    grams, ctx = Counter(), Counter()
    for r in rows:
        ids = [BOS, BOS] + [m.vocab.lookup(t) for t in r]
        for i in range(2, len(ids)):
            grams[(ids[i - 2], ids[i - 1], ids[i])] += 1
            ctx[(ids[i - 2], ids[i - 1])] += 1
    for (a, b, w), c in grams.items():
        assert m._prob((a, b), w) == c / ctx[(a, b)]


# -- smoothing ------------------------------------------------------------------


def test_jm_unrolled_single_type():
    lam = 0.3
    m = model_of([["a", "a"]], kind="jm", lam=lam)
    assert m.vocab_size == 2
    expected = lam * 1 + (1 - lam) * (lam * 1 + (1 - lam) / 2)
    assert m.prob(["a"], "a") == pytest.approx(expected, abs=1e-15)


def test_kn_hand_worksheet():
    d = Fraction(3, 4)
    m = model_of([["a", "b"], ["c", "b"]], kind="kn", discount=0.75)
    assert m.vocab_size == 4  # <unk>, a, b, c
    b = m.vocab.lookup("b")
    assert m.continuation[()][b] == 2  # b follows two distinct tokens
    # unigram level over continuation counts: N1+(.a)=1, N1+(.b)=2, N1+(.c)=1
    p_uni_b = (2 - d) / 4 + d * 3 / 4 * Fraction(1, 4)
    p_b_given_a = (1 - d) / 1 + d * 1 / 1 * p_uni_b
    assert p_uni_b == Fraction(29, 64)
    assert m.prob(["x_unseen_context"], "b") == pytest.approx(float(p_uni_b), abs=1e-15)
    assert m.prob(["a"], "b") == pytest.approx(float(p_b_given_a), abs=1e-15) == pytest.approx(0.58984375)
    p_unk = d * 3 / 4 * Fraction(1, 4)
    assert m.prob(["zzz"], "<unk>") == pytest.approx(float(p_unk), abs=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_exhaustive_normalization_small_vocab(kind):
    rng = random.Random(2)
    rows = random_corpus(rng, 150, 3000)
    m = model_of(rows, order=4, kind=kind)
    assert m.vocab_size <= 200
    seen = list(m.counts)
    for _ in range(60):
        h = rng.choice(seen) if rng.random() < 0.7 else tuple(rng.randrange(m.vocab_size) for _ in range(3))
        h = (BOS,) * (3 - len(h)) + h
        total = math.fsum(m._prob(h, w) for w in range(m.vocab_size))
        assert abs(total - 1.0) <= 1e-9
        assert abs(math.fsum(m._distribution(h)) - 1.0) <= 1e-9


@pytest.mark.parametrize("kind", KINDS)
def test_scalar_and_vector_paths_agree(kind):
    rng = random.Random(3)
    rows = random_corpus(rng, 40, 800)
    m = model_of(rows, order=3, kind=kind)
    for h in list(m.counts)[:40]:
        h = (BOS,) * (2 - len(h)) + h
        vec = m._distribution(h)
        assert np.allclose(vec, [m._prob(h, w) for w in range(m.vocab_size)], rtol=0, atol=1e-14)


def test_smoothed_probabilities_strictly_positive():
    for kind in ("jelinek_mercer", "kneser_ney"):
        m = model_of([["a", "b", "c"]], order=3, kind=kind)
        assert min(m._distribution((BOS, BOS))) > 0


def test_config_errors():
    with pytest.raises(ConfigError):
        model_of([["a"]], order=1)
    with pytest.raises(ConfigError):
        SmoothingConfig("jm", lam=1.0)
    with pytest.raises(ConfigError):
        SmoothingConfig("kn", discount=0.0)
    with pytest.raises(ConfigError):
        SmoothingConfig("witten_bell")


# -- cross-entropy ----------------------------------------------------------------


def test_entropy_uniform_two_types():
    v = Vocabulary({"a": 1}, 1)
    m = ngram.train([], 2, v, SmoothingConfig("mle"))
    assert ngram.cross_entropy(m, [["a", "a", "zzz"]]) == pytest.approx(1.0, abs=1e-15)


def test_entropy_zero_for_deterministic_continuations():
    rows = [["a", "b", "c", "d"]]
    m = model_of(rows, order=5, kind="mle")
    assert ngram.cross_entropy(m, rows) == 0.0


def test_entropy_longer_context_helps_on_repeated_sequences():
    base = ["s", "x", "y", "x", "z", "x"]
    rows = [base] * 30
    e2 = ngram.cross_entropy(model_of(rows, order=2), rows)
    e5 = ngram.cross_entropy(model_of(rows, order=5), rows)
    assert e5 < e2


def test_entropy_exclude_oov_and_empty_stream():
    m = model_of([["a", "b"]] * 3, kind="jm")
    incl = ngram.cross_entropy(m, [["a", "q", "b"]])
    excl = ngram.cross_entropy(m, [["a", "q", "b"]], exclude_oov=True)
    assert excl != incl
    with pytest.raises(ValueError):
        ngram.cross_entropy(m, [])
    with pytest.raises(ValueError):
        ngram.cross_entropy(m, [["q"]], exclude_oov=True)


def test_entropy_infinite_when_mle_assigns_zero():
    m = model_of([["a", "b"], ["b", "a"]], kind="mle")
    assert ngram.cross_entropy(m, [["a", "a"]]) == math.inf


# -- counts, persistence ---------------------------------------------------------


def test_context_totals_match_children():
    m = model_of(random_corpus(random.Random(4), 20, 300), order=4)
    for h, children in m.counts.items():
        assert sum(children.values()) == m.totals[h]
        assert all(0 <= w < m.vocab_size for w in children)
        assert all(t == BOS or 0 <= t < m.vocab_size for t in h)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcd"), min_size=1, max_size=6), min_size=2, max_size=12), st.data())
def test_removing_a_sequence_never_increases_counts(rows, data):
    v = vocab_of(rows)
    full = ngram.train(rows, 3, v)
    drop = data.draw(st.integers(0, len(rows) - 1))
    less = ngram.train(rows[:drop] + rows[drop + 1 :], 3, v)
    for h, children in less.counts.items():
        for w, c in children.items():
            assert c <= full.counts[h][w]


def test_parallel_counting_is_shard_independent():
    rows = random_corpus(random.Random(5), 25, 2000)
    v = vocab_of(rows)
    one = ngram.train(rows, 4, v, workers=1)
    three = ngram.train(rows, 4, v, workers=3)
    assert one.to_bytes() == three.to_bytes()


def test_binary_roundtrip(tmp_path):
    rows = random_corpus(random.Random(6), 25, 400)
    m = model_of(rows, order=3, kind="kn", discount=0.6)
    m.save(tmp_path / "m.bin")
    back = NGramModel.load(tmp_path / "m.bin")
    assert back.to_bytes() == m.to_bytes()
    assert back.smoothing == m.smoothing and back.vocab.itos == m.vocab.itos
    h = next(iter(m.counts))
    h = (BOS,) * (2 - len(h)) + h
    assert np.array_equal(back._distribution(h), m._distribution(h))
    with pytest.raises(ValueError):
        NGramModel.from_bytes(b"XXXX" + m.to_bytes()[4:])


def test_stats_dump():
    stats = model_of([["a", "b", "c"]], order=3).stats()
    assert stats["order"] == 3 and stats["ngrams_1"] == 3 and stats["smoothing"] == "jelinek_mercer"


# -- cache ----------------------------------------------------------------------


def test_empty_cache_is_base():
    m = model_of([["a", "b", "c", "a"]], order=3)
    cache = CacheState(3)
    cache.open_scope("f")
    for ctx in (["a"], ["a", "b"], []):
        for w in "abc":
            assert ngram.cache_prob(m, cache, ctx, w) == m.prob(ctx, w)


def test_cache_single_pair():
    m = model_of([["x", "y", "z", "x", "z"]], order=2)
    cache = CacheState(2, gamma=0.4)
    cache.open_scope("f")
    cache.observe_sequence([m.vocab.lookup("x"), m.vocab.lookup("y")])
    p = m.prob(["x"], "y")
    assert ngram.cache_prob(m, cache, ["x"], "y") == pytest.approx(0.4 * 1 + 0.6 * p, abs=1e-15)
    assert np.isclose(ngram.cache_distribution(m, cache, ["x"]).sum(), 1.0, atol=1e-12)


def test_cache_backs_off_to_longest_seen_suffix():
    m = model_of([["a", "b", "c", "d"]], order=3)
    ids = m.vocab.lookup
    cache = CacheState(3, gamma=0.5)
    cache.observe_sequence([ids("a"), ids("c"), ids("d")])
    # (b, c) never cached; suffix (c,) was, followed by d
    assert ngram.cache_prob(m, cache, ["b", "c"], "d") == pytest.approx(0.5 + 0.5 * m.prob(["b", "c"], "d"))


def test_cache_scope_isolation_is_bit_exact():
    m = model_of(random_corpus(random.Random(7), 15, 300), order=3)
    cache = CacheState(3)
    cache.open_scope("a")
    cache.observe_sequence(range(1, 10))
    cache.close_scope()
    cache.open_scope("b")
    for ctx in (["w1"], ["w2", "w3"], []):
        assert np.array_equal(ngram.cache_distribution(m, cache, ctx), m.distribution(ctx))


def test_cache_capacity_evicts_oldest():
    cache = CacheState(2, capacity=3)
    cache.observe_sequence([1, 2, 3, 4, 5])
    assert len(cache) == 3
    assert cache.lookup((1,)) is None and cache.lookup((3,)) == (3,)


def test_cache_rejects_bad_gamma():
    with pytest.raises(ConfigError):
        CacheState(3, gamma=1.0)


def test_cache_replay_oracle_file_local_idiom():
    """A file repeats an idiom the training corpus orders differently."""
    rng = random.Random(8)
    rows = random_corpus(rng, 40, 3000) + [["open", "read", "close"]] * 20
    m = model_of(rows, order=3)
    idiom = ["open", "close", "read"]
    cache = CacheState(3)
    cache.open_scope("File.java")
    better = 0
    for rep in range(10):
        cache.start_sequence()
        cache.observe(m.vocab.lookup("method"))
        for i, gold in enumerate(idiom):
            ctx = ["method"] + idiom[:i]
            if rep > 0:
                base = [t for t, _ in ngram.predict_top_k(m, ctx, m.vocab_size)]
                cached = [t for t, _ in ngram.predict_top_k(m, ctx, m.vocab_size, cache)]
                better += cached.index(gold) <= base.index(gold)
            cache.observe(m.vocab.lookup(gold))
    # 3 positions x 9 repeats; at least 9 of every 10 must not be worse
    assert better >= 0.9 * 27


# -- top-k ----------------------------------------------------------------------


def test_top_k_examples():
    m = model_of([["a", "b", "a", "b"]], kind="mle")
    assert [t for t, _ in ngram.predict_top_k(m, ["a"], 1)] == ["b"]
    everything = [t for t, _ in ngram.predict_top_k(m, ["a"], 50)]
    assert sorted(everything) == sorted(m.vocab.itos[1:])
    with pytest.raises(ValueError):
        ngram.predict_top_k(m, ["a"], 0)


@pytest.mark.parametrize("kind", KINDS)
def test_top_k_matches_exhaustive_sort(kind):
    rng = random.Random(9)
    rows = random_corpus(rng, 25, 400)
    m = model_of(rows, order=3, kind=kind)
    for _ in range(20):
        ctx = [f"w{rng.randrange(25)}" for _ in range(rng.randint(0, 3))]
        h = m.history(ctx)
        scored = sorted(((-m._prob(h, w), w) for w in range(1, m.vocab_size)))
        expected = [m.vocab.itos[w] for _, w in scored[:7]]
        got = ngram.predict_top_k(m, ctx, 7)
        assert [t for t, _ in got] == expected
        assert got == ngram.predict_top_k(m, ctx, 7)
