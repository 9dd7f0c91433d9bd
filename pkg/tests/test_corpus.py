import logging
import random
import re
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from callrank.corpus import (
    FULL_NAMES,
    SUBTOKENS,
    UNK,
    FunctionSequence,
    TokenizerConfig,
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    extract_sequences,
    extract_tree,
    format_stats,
    merge_counts,
    read_sequence_inputs,
    read_sequences,
    split_subtokens,
    to_subtokens,
    write_sequences,
)
from callrank.synthetic import PlantedCorpus, render_method, write_java_tree

SIZE_METHOD = """
public class FileUtil {
    public long size(File file) throws FileNotFoundException {
        if (!file.isFile()) {
            throw new FileNotFoundException(file.toString());
        }
        return file.length();
    }
}
"""


def names(seqs):
    return [tuple(s.tokens) for s in seqs]


def test_listing_size_method():
    assert names(extract_sequences(SIZE_METHOD)) == [("size", "isFile", "toString", "length")]


def test_constructor_opt_in():
    seqs = extract_sequences(SIZE_METHOD, TokenizerConfig(include_constructors=True))
    assert seqs[0].calls == ["isFile", "FileNotFoundException", "toString", "length"]


def test_empty_class():
    assert extract_sequences("class A {}") == []


def test_hand_traced_nesting():
    assert names(extract_sequences("class A { void f(){ g(); if (h()) { g(); } } }")) == [("f", "g", "h", "g")]


def test_chained_and_qualified_calls():
    src = "class A { int m() { a().b(); this.file.length(); Foo::bar; x = y.field; return 0; } }"
    assert names(extract_sequences(src)) == [("m", "a", "b", "length")]


def test_comments_strings_and_annotations_are_not_calls():
    src = """class A {
      @Override
      public String toString() {
        // call() in a comment
        /* other() */
        String s = "fake()";
        char c = '(';
        return build(s);
      }
    }"""
    assert names(extract_sequences(src)) == [("toString", "build")]


def test_control_keywords_are_not_declarations():
    src = "class A { void m() { while (x()) { } for (;;) { y(); } synchronized (lock()) { z(); } } }"
    assert names(extract_sequences(src)) == [("m", "x", "y", "lock", "z")]


def test_nested_declarations_and_lambdas():
    src = """class A {
      void run() {
        pool.submit(() -> doIt());
        new Thread(new Runnable() { public void run() { inner(); } }).start();
      }
      void second() { other(); }
    }"""
    assert names(extract_sequences(src)) == [("run", "submit", "doIt", "inner", "start"), ("second", "other")]


def test_interface_and_abstract_methods_yield_nothing():
    src = "interface I { void a(); default void b() { c(); } } abstract class K { abstract int d(); }"
    assert names(extract_sequences(src)) == [("b", "c")]


def test_unterminated_method_keeps_prior_methods(caplog):
    src = "class A { void ok() { a(); } void broken() { b(); if (c) { d(); }"
    with caplog.at_level(logging.WARNING, logger="callrank.corpus"):
        seqs = extract_sequences(src)
    assert names(seqs) == [("ok", "a")]
    assert any("unterminated" in r.message for r in caplog.records)


def test_stray_closing_brace_does_not_crash(caplog):
    with caplog.at_level(logging.WARNING, logger="callrank.corpus"):
        seqs = extract_sequences("} class A { void f() { g(); } } }")
    assert names(seqs) == [("f", "g")]
    assert caplog.records


def test_subtoken_mode():
    seqs = extract_sequences(SIZE_METHOD, TokenizerConfig(mode=SUBTOKENS))
    assert seqs[0].tokens == ["size", "is", "file", "to", "string", "length"]
    assert seqs[0].mode == SUBTOKENS


def test_to_subtokens_matches_extraction():
    full = extract_sequences(SIZE_METHOD)
    assert [s.tokens for s in to_subtokens(full)] == [s.tokens for s in extract_sequences(SIZE_METHOD, TokenizerConfig(mode=SUBTOKENS))]
    with pytest.raises(ValueError):
        to_subtokens(to_subtokens(full))


def _replay_ok(text, seq):
    """Each call occurs, in order, at strictly increasing offsets followed by '('."""
    lo, hi = seq.byte_span
    body = text[lo:hi]
    pos = -1
    for call in seq.calls:
        m = re.compile(rf"(?<![A-Za-z0-9_$]){re.escape(call)}\s*\(").search(body, pos + 1)
        if m is None:
            return False
        pos = m.start()
    return True


def test_replay_invariant_on_rendered_corpus(tmp_path):
    corpus = PlantedCorpus.generate(10, seed=3)
    seqs = corpus.sequences(60, seed=4, projects=2, files_per_project=3)
    paths = write_java_tree(tmp_path, seqs, seed=5)
    n = 0
    for path in paths:
        text = path.read_text()
        for s in extract_sequences(text):
            assert _replay_ok(text, s)
            n += 1
    assert n == 60


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["get", "put", "size", "openFile", "close", "run2"]), max_size=8), st.integers(0, 10**6))
def test_render_then_extract_roundtrip(calls, seed):
    text = "class T {\n" + render_method("work", calls, random.Random(seed)) + "\n}\n"
    seqs = extract_sequences(text)
    assert names(seqs) == [("work", *calls)]
    assert _replay_ok(text, seqs[0])


def test_extraction_deterministic_and_worker_independent(tmp_path):
    corpus = PlantedCorpus.generate(8, seed=1)
    write_java_tree(tmp_path, corpus.sequences(80, seed=2, projects=4, files_per_project=5), seed=0)
    one = extract_tree(tmp_path, workers=1)
    again = extract_tree(tmp_path, workers=1)
    many = extract_tree(tmp_path, workers=3)
    assert names(one) == names(again) == names(many)
    assert [s.source_id for s in one] == [s.source_id for s in many]
    assert {s.project_id for s in one} == {"train00", "train01", "train02", "train03"}


# -- subtokens ---------------------------------------------------------------


def _oracle_split(name):
    # boundaries by lookaround substitution, an approach unrelated to the scanner
    spaced = re.sub(r"(?<=[a-z])(?=[A-Z])|(?<=[A-Za-z])(?=[0-9])|(?<=[0-9])(?=[A-Za-z])", " ", name)
    parts = [p for p in re.split(r"[\s_$]+", spaced) if p]
    return [p.lower() for p in parts] or [name]


@pytest.mark.parametrize(
    "name, expected",
    [
        ("convertDateToString", ["convert", "date", "to", "string"]),
        ("x", ["x"]),
        ("parseHTTP2Frame", ["parse", "http", "2", "frame"]),
        ("MAX_VALUE", ["max", "value"]),
        ("__init__", ["init"]),
        ("_", ["_"]),
    ],
)
def test_split_examples(name, expected):
    assert split_subtokens(name) == expected


identifiers = st.text(alphabet="abcXYZ019_$", min_size=1, max_size=16)


@given(identifiers)
def test_split_matches_oracle(name):
    assert split_subtokens(name) == _oracle_split(name)


@given(identifiers)
def test_split_concatenation_identity(name):
    parts = split_subtokens(name)
    stripped = name.replace("_", "").replace("$", "")
    if stripped:
        assert "".join(parts) == stripped.lower()


@given(identifiers)
def test_split_idempotent_on_lowercased_output(name):
    for part in split_subtokens(name):
        assert split_subtokens(part) == [part]


def test_split_case_preserved_when_configured():
    assert split_subtokens("readHTTPStream", lowercase=False) == ["read", "HTTPStream"]


# -- vocabulary ----------------------------------------------------------------


def _seqs(rows):
    return [FunctionSequence("p/F.java", r[0], list(r[1:])) for r in rows]


def test_min_count_cutoff():
    v = build_vocabulary(_seqs([("a", "b"), ("a", "b"), ("a", "c")]), min_count=2)
    assert set(v.itos) == {"a", "b", UNK}
    assert v.lookup("c") == v.unk_id == 0
    assert v.itos[1] == "a"  # most frequent first


def test_min_count_zero_keeps_everything():
    v = build_vocabulary(_seqs([("a", "b"), ("a", "c")]), min_count=0)
    assert all(v.lookup(t) != v.unk_id for t in "abc")


def test_zipf_type_count_matches_histogram():
    rng = random.Random(7)
    weights = [1.0 / (r + 1) for r in range(400)]
    rows = [[f"t{i}" for i in rng.choices(range(400), weights, k=rng.randint(2, 12))] for _ in range(1000)]
    v = build_vocabulary(_seqs(rows), min_count=20)
    hist = {}
    for r in rows:
        for t in r:
            hist[t] = hist.get(t, 0) + 1
    assert len(v) == sum(1 for c in hist.values() if c >= 20) + 1


def test_default_min_counts():
    full = build_vocabulary(_seqs([("a",)] * 19 + [("b",)] * 20))
    assert full.min_count == 20 and "a" not in full and "b" in full
    sub = build_vocabulary([FunctionSequence("p/F", "a", [], None, SUBTOKENS)] * 5)
    assert sub.min_count == 5 and "a" in sub


def test_empty_corpus_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="callrank.corpus"):
        v = build_vocabulary([])
    assert v.itos == [UNK]
    assert caplog.records


def test_mixed_modes_rejected():
    with pytest.raises(ValueError):
        build_vocabulary([FunctionSequence("p/A", "a"), FunctionSequence("p/B", "b", [], None, SUBTOKENS)])


@given(st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=6), max_size=30), st.integers(0, 5), st.text("abcdefgxyz", max_size=3))
def test_lookup_ids_in_range(rows, min_count, probe):
    v = build_vocabulary(_seqs(rows), min_count=min_count)
    assert 0 <= v.lookup(probe) < len(v)
    assert v.decode(v.encode(v.itos)) == v.itos


@given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=5), max_size=40), st.integers(1, 5))
def test_histogram_merge_independent_of_sharding(rows, shards):
    whole = Counter(t for r in rows for t in r)
    parts = [Counter(t for r in rows[i::shards] for t in r) for i in range(shards)]
    merged = merge_counts(parts)
    assert merged == whole
    assert Vocabulary(merged, 2).itos == Vocabulary(whole, 2).itos


def test_vocabulary_file_roundtrip(tmp_path):
    v = build_vocabulary(_seqs([("a", "b", "b"), ("c", "b")]), min_count=2)
    v.save(tmp_path / "v.txt")
    w = Vocabulary.load(tmp_path / "v.txt")
    assert (w.itos, w.freqs, w.min_count, w.mode) == (v.itos, v.freqs, v.min_count, v.mode)


def test_stats_report_lines():
    seqs = _seqs([("a", "b"), ("a", "b"), ("a", "c")])
    text = format_stats(corpus_stats(seqs, build_vocabulary(seqs, min_count=2)))
    assert text.splitlines() == [
        "sequences=3",
        "tokens=6",
        "types=3",
        "tokens_min_count=5",
        "types_min_count=3",
        "min_count=2",
    ]


# -- sequence files ------------------------------------------------------------

token = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Zs", "Zl", "Zp", "Cc")), min_size=1, max_size=8)


@settings(max_examples=60)
@given(st.lists(st.tuples(st.sampled_from(["p/A.java", "q/B.java"]), token.filter(lambda t: not t.startswith("#")), st.lists(token, max_size=5)), max_size=10))
def test_sequence_file_roundtrip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("seq") / "x.seq"
    seqs = [FunctionSequence(sid, m, calls) for sid, m, calls in rows]
    write_sequences(seqs, path)
    back = read_sequences(path)
    assert [(s.source_id, s.tokens, s.mode) for s in back] == [(s.source_id, s.tokens, s.mode) for s in seqs]


def test_whitespace_token_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_sequences([FunctionSequence("p/A", "m", ["bad token"])], tmp_path / "x.seq")
    with pytest.raises(ValueError):
        write_sequences([FunctionSequence("p/A", "#m", [])], tmp_path / "y.seq")


def test_read_directory_inputs(tmp_path):
    write_sequences([FunctionSequence("p/A", "m", ["x"])], tmp_path / "b.seq")
    write_sequences([FunctionSequence("q/A", "n", [], None, FULL_NAMES)], tmp_path / "a.seq")
    assert [s.method_name for s in read_sequence_inputs([tmp_path])] == ["n", "m"]
