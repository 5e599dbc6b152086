from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resketch.data import PH
from resketch.errors import LengthMismatch, LexError
from resketch.lang import tokenize_code
from resketch.sketching import (
    anonymize_sketch,
    assemble_sketch,
    lcs,
    lcs_length,
    make_labels,
    make_overlap_labels,
    merge_placeholders,
    oracle_sketch,
)

tokens = st.lists(st.sampled_from(["a", "b", "c"]), max_size=10)


def brute_force_lcs_len(a, b):
    """Oracle: enumerate all subsequences of the shorter side."""
    if len(a) > len(b):
        a, b = b, a
    best = 0
    for r in range(len(a), 0, -1):
        for idxs in combinations(range(len(a)), r):
            sub = [a[i] for i in idxs]
            it = iter(b)
            if all(tok in it for tok in sub):
                return r
    return best


def is_subsequence(sub, seq):
    it = iter(seq)
    return all(tok in it for tok in sub)


# -- lcs ---------------------------------------------------------------------

def test_lcs_identity():
    toks = tokenize_code("result = result + 1")
    al = lcs(toks, toks)
    assert al.pairs == tuple((i, i) for i in range(len(toks)))


def test_lcs_empty():
    assert lcs(["a"], []).pairs == ()
    assert lcs([], ["a"]).pairs == ()


def test_lcs_classic_length_four():
    # brute force over all subsequences confirms length 4 for this pair
    a = list("ABCBDAB")
    b = list("BDCABA")
    assert brute_force_lcs_len(a, b) == 4
    assert len(lcs(a, b)) == 4


@settings(max_examples=200, deadline=None)
@given(tokens, tokens)
def test_lcs_matches_brute_force(a, b):
    assert lcs_length(a, b) == brute_force_lcs_len(a, b)


@settings(max_examples=200, deadline=None)
@given(tokens, tokens)
def test_lcs_length_symmetry(a, b):
    assert lcs_length(a, b) == lcs_length(b, a)


@settings(max_examples=100, deadline=None)
@given(tokens, tokens)
def test_lcs_alignment_is_valid(a, b):
    al = lcs(a, b)
    pairs = al.pairs
    assert all(a[i] == b[j] for i, j in pairs)
    assert all(i1 < i2 and j1 < j2
               for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]))


def test_canonical_backtrace_prefers_late_occurrence():
    # similar has a repeated token; only one occurrence can align.  All
    # maximal alignments: {(0,0)} and {(2,0)}; the canonical backtrace
    # walks from the end and takes the diagonal first, so position 2 wins.
    al = lcs(["a", "x", "a"], ["a"])
    assert al.pairs == ((2, 0),)
    assert make_labels(["a", "x", "a"], ["a"]) == [False, False, True]


# -- labels -------------------------------------------------------------------

def test_labels_identity_and_disjoint():
    toks = ["return", "result"]
    assert make_labels(toks, toks) == [True, True]
    assert make_labels(["a", "b"], ["c", "d"]) == [False, False]


def test_overlap_labels_bag_semantics():
    assert make_overlap_labels(["a", "b"], ["c", "d"]) == [False, False]
    assert make_overlap_labels(["a", "b"], ["b", "a"]) == [True, True]


def test_overlap_keeps_strictly_more_on_reordered_pair():
    similar = ["x", "y"]
    target = ["y", "x"]
    lcs_keep = make_labels(similar, target)
    overlap_keep = make_overlap_labels(similar, target)
    assert sum(overlap_keep) > sum(lcs_keep)


@settings(max_examples=200, deadline=None)
@given(tokens, tokens)
def test_label_containment(a, b):
    lcs_keep = make_labels(a, b)
    overlap_keep = make_overlap_labels(a, b)
    assert all(o or not l for l, o in zip(lcs_keep, overlap_keep))


# -- sketch assembly ------------------------------------------------------------

def test_assemble_keep_all():
    toks = tokenize_code("return result")
    assert assemble_sketch(toks, [True] * len(toks)) == toks


def test_assemble_figure_example():
    # keeping {all ( for x-in-loop in )} of the snippet collapses the two
    # dropped spans into single placeholders: "all ( _ for x in _ )"
    similar = ["all", "(", "x", "==", "myList", "[", "0", "]",
               "for", "x", "in", "myList", ")"]
    keep = [True, True, False, False, False, False, False, False,
            True, True, True, False, True]
    assert assemble_sketch(similar, keep) == \
        ["all", "(", PH, "for", "x", "in", PH, ")"]


def test_assemble_merges_each_run():
    toks = ["a", "b", "c", "d", "e", "f"]
    keep = [False, False, False, True, False, True]
    assert assemble_sketch(toks, keep) == [PH, "d", PH, "f"]


def test_assemble_all_dropped():
    assert assemble_sketch(["a", "b"], [False, False]) == [PH]


def test_assemble_empty():
    assert assemble_sketch([], []) == []


def test_assemble_length_mismatch():
    with pytest.raises(LengthMismatch):
        assemble_sketch(["a"], [True, False])


@settings(max_examples=200, deadline=None)
@given(tokens, st.data())
def test_sketch_invariants(a, data):
    keep = data.draw(st.lists(st.booleans(), min_size=len(a),
                              max_size=len(a)))
    sk = assemble_sketch(a, keep)
    assert all(not (x == PH and y == PH) for x, y in zip(sk, sk[1:]))
    assert is_subsequence([t for t in sk if t != PH], a)
    assert merge_placeholders(sk) == sk  # merge idempotence


# -- oracle sketch ---------------------------------------------------------------

def test_oracle_sketch_identical_pair():
    toks = tokenize_code("def f ( a ) :\n    return a\n")
    assert oracle_sketch(toks, toks) == toks


def test_oracle_sketch_motivating_pair():
    # counting loop reused across requirements: shared statements survive,
    # the type-check condition is replaced by a placeholder
    similar = tokenize_code(
        "def count_int ( list1 ) :\n"
        "    result = 0\n"
        "    for x in list1 :\n"
        "        if isinstance ( x ) :\n"
        "            result = result + 1\n"
        "    return result\n"
    )
    target = tokenize_code(
        "def count_range ( list1 , min , max ) :\n"
        "    result = 0\n"
        "    for x in list1 :\n"
        "        if min <= x and x <= max :\n"
        "            result = result + 1\n"
        "    return result\n"
    )
    sk = oracle_sketch(similar, target)
    text = " ".join(sk)
    assert "result = 0" in text
    assert "for x in list1 :" in text
    assert "result = result + 1" in text
    assert "return result" in text
    assert "isinstance" not in sk
    assert PH in sk


def test_oracle_sketch_on_generated_family(toy_corpus):
    from resketch.generator import family_of
    by_family = {}
    for s in toy_corpus.split("train"):
        by_family.setdefault(family_of(s.id), []).append(s)
    fam = next(iter(sorted(by_family)))
    a, b = by_family[fam][0], by_family[fam][1]
    sa, sb = tokenize_code(a.code_text), tokenize_code(b.code_text)
    sk = oracle_sketch(sa, sb)
    kept = [t for t in sk if t != PH]
    assert is_subsequence(kept, sa)
    assert is_subsequence(kept, sb)


# -- anonymization ----------------------------------------------------------------

def test_anonymize_simple():
    assert anonymize_sketch(["return", "result"]) == ["return", PH]


def test_anonymize_assignment():
    assert anonymize_sketch(["x", "=", "5", "+", "y"]) == \
        [PH, "=", PH, "+", PH]


def test_anonymize_full_program_token_classes():
    from resketch.lang import KEYWORDS, PUNCT_TOKENS, INDENT, DEDENT
    toks = tokenize_code(
        "def count_above ( xs ) :\n"
        "    result = 0\n"
        "    for x in xs :\n"
        "        if x > 7 :\n"
        "            result = result + 1\n"
        "    return result\n"
    )
    sk = anonymize_sketch(toks)
    allowed = KEYWORDS | PUNCT_TOKENS | {INDENT, DEDENT, PH}
    assert set(sk) <= allowed
    assert "result" not in sk and "7" not in sk
    assert "len" not in sk  # not present here, but never anonymized tokens


def test_anonymize_rejects_alien_tokens():
    with pytest.raises(LexError):
        anonymize_sketch(["@weird"])
