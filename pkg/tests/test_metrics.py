import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resketch.errors import EmptyInput
from resketch.lang import parse_text, tokenize_code
from resketch.metrics import (
    BleuConfig,
    CodeBleuConfig,
    bleu_corpus,
    bleu_sentence,
    codebleu,
    dataflow_edges,
    dataflow_match,
    exact_match,
    syntax_match,
)


# -- exact match -----------------------------------------------------------

def test_exact_match_whitespace_canonicalized():
    a = tokenize_code("def f ( a ) :\n    return a\n")
    b = tokenize_code("def f (a):\n    return   a\n")
    assert exact_match(a, b) == 1


def test_exact_match_literal_difference():
    a = tokenize_code("x = 1")
    b = tokenize_code("x = 2")
    assert exact_match(a, b) == 0


def test_exact_match_empty():
    assert exact_match([], []) == 1


# -- corpus BLEU -------------------------------------------------------------
#
# Fixture values are hand computations of the aggregated-count formula with
# uniform weights and BP = min(1, exp(1 - ref_len / cand_len)).

def test_bleu_perfect():
    pairs = [(list("abcd"), list("abcd")), (list("xy"), list("xy"))]
    assert bleu_corpus(pairs) == pytest.approx(1.0)


def test_bleu_fixture_short_candidate():
    # cand [a b c] vs ref [a b c d]: p1 = 3/3, p2 = 2/2, p3 = 1/1; no
    # 4-grams are possible so the order drops out; BP = exp(1 - 4/3)
    got = bleu_corpus([(list("abc"), list("abcd"))])
    assert got == pytest.approx(math.exp(1.0 - 4.0 / 3.0), abs=1e-6)
    assert got == pytest.approx(0.7165313105737892, abs=1e-6)


def test_bleu_fixture_mixed_precisions():
    # pair 1: cand = ref = [a b c d];  pair 2: cand [a b x y] vs [a b c d]
    # p1 = (4+2)/8, p2 = (3+1)/6, p3 = (2+0)/4, p4 = (1+0)/2
    # lengths equal -> BP = 1; geometric mean = (6/8 * 4/6 * 2/4 * 1/2)^0.25
    # = (1/8)^0.25 = 2^(-3/4)
    pairs = [(list("abcd"), list("abcd")), (list("abxy"), list("abcd"))]
    assert bleu_corpus(pairs) == pytest.approx(2.0 ** -0.75, abs=1e-6)
    assert bleu_corpus(pairs) == pytest.approx(0.5946035575013605, abs=1e-6)


def test_bleu_fixture_brevity_only():
    # cand is a strict prefix: all precisions 1, BP = exp(1 - 7/5)
    pairs = [(list("abcde"), list("abcdefg"))]
    assert bleu_corpus(pairs) == pytest.approx(math.exp(-0.4), abs=1e-6)
    assert bleu_corpus(pairs) == pytest.approx(0.6703200460356393, abs=1e-6)


def test_bleu_zero_fourgram_overlap_scores_zero():
    # long enough for 4-grams, but no shared 4-gram anywhere
    pairs = [(list("aaaabbbb"), list("abababab"))]
    assert bleu_corpus(pairs) == 0.0


def test_bleu_empty_input_rejected():
    with pytest.raises(EmptyInput):
        bleu_corpus([])


def test_bleu_empty_candidate_zero():
    assert bleu_corpus([([], list("abc"))]) == 0.0


def test_bleu_bp_one_when_candidate_longer():
    pairs = [(list("abcde"), list("abc"))]
    # p1 = 3/5, p2 = 2/4, p3 = 1/3, no shared 4-grams -> 0; use 3 orders
    cfg = BleuConfig(max_order=3)
    want = (3 / 5 * 2 / 4 * 1 / 3) ** (1 / 3)
    assert bleu_corpus(pairs, cfg) == pytest.approx(want, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.sampled_from("ab"), min_size=1, max_size=12),
                min_size=1, max_size=6))
def test_bleu_self_is_one_and_bounded(cands):
    pairs = [(c, list(c)) for c in cands]
    assert bleu_corpus(pairs) == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from("abc"), max_size=10),
       st.lists(st.sampled_from("abc"), min_size=1, max_size=10))
def test_bleu_stays_in_unit_interval(cand, ref):
    score = bleu_corpus([(cand, ref)])
    assert 0.0 <= score <= 1.0
    assert 0.0 <= bleu_sentence(cand, ref) <= 1.0


# -- code composite ------------------------------------------------------------

PROG_A = (
    "def count_above ( xs ) :\n"
    "    result = 0\n"
    "    for x in xs :\n"
    "        if x > 7 :\n"
    "            result = result + 1\n"
    "    return result\n"
)

PROG_A_RENAMED = (
    "def tally_large ( values ) :\n"
    "    acc = 0\n"
    "    for item in values :\n"
    "        if item > 7 :\n"
    "            acc = acc + 1\n"
    "    return acc\n"
)


def test_codebleu_identical_is_one():
    assert codebleu(PROG_A, PROG_A) == pytest.approx(1.0)


def test_codebleu_consistent_rename_keeps_syntax_component():
    cand_ast = parse_text(PROG_A_RENAMED)
    ref_ast = parse_text(PROG_A)
    assert syntax_match(cand_ast, ref_ast) == pytest.approx(1.0)
    from resketch.metrics import _weighted_bleu  # noqa: PLC2701
    cand_toks = tokenize_code(PROG_A_RENAMED)
    ref_toks = tokenize_code(PROG_A)
    assert bleu_sentence(cand_toks, ref_toks) < 1.0
    assert _weighted_bleu(cand_toks, ref_toks, CodeBleuConfig()) < 1.0
    assert codebleu(PROG_A_RENAMED, PROG_A) < 1.0


def test_codebleu_unparseable_candidate_uses_ngram_components_only():
    broken = "def f ( :\n    return 1\n"
    cfg = CodeBleuConfig()
    got = codebleu(broken, PROG_A, cfg)
    cand = tokenize_code(broken)
    ref = tokenize_code(PROG_A)
    from resketch.metrics import _weighted_bleu
    want = 0.25 * bleu_sentence(cand, ref) + \
        0.25 * _weighted_bleu(cand, ref, cfg)
    assert got == pytest.approx(want, abs=1e-12)


def test_codebleu_weight_validation():
    with pytest.raises(ValueError):
        codebleu(PROG_A, PROG_A, CodeBleuConfig(ngram_weight=0.9))


def test_codebleu_weight_monotonicity():
    # shifting weight toward a component on which the candidate scores
    # higher never lowers the total
    base = CodeBleuConfig()
    tilted = CodeBleuConfig(ngram_weight=0.15, weighted_ngram_weight=0.15,
                            syntax_weight=0.45, dataflow_weight=0.25)
    assert codebleu(PROG_A_RENAMED, PROG_A, tilted) >= \
        codebleu(PROG_A_RENAMED, PROG_A, base)


def test_dataflow_edges_extracted():
    prog = parse_text(
        "def f ( xs , k ) :\n"
        "    total = 0\n"
        "    for x in xs :\n"
        "        total = total + x\n"
        "    y = total + k\n"
        "    return y\n"
    )
    edges = dataflow_edges(prog)
    assert ("xs", "x") in edges
    assert ("total", "total") in edges
    assert ("x", "total") in edges
    assert ("total", "y") in edges and ("k", "y") in edges


def test_dataflow_match_degenerate_cases():
    no_assign = parse_text("def f ( a ) :\n    return a\n")
    with_assign = parse_text("def f ( a ) :\n    b = a\n    return b\n")
    assert dataflow_match(no_assign, no_assign) == 1.0
    assert dataflow_match(no_assign, with_assign) == 0.0
