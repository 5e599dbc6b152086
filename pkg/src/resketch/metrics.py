"""Similarity metrics: exact match, BLEU, and the code-aware composite.

Corpus BLEU aggregates clipped n-gram counts over the whole corpus with a
brevity penalty min(1, exp(1 - ref_len / cand_len)); any aggregated order
with zero matches zeroes the score (no smoothing).  Orders for which the
corpus admits no candidate n-grams at all (every candidate shorter than n)
are dropped and the remaining weights renormalized, which keeps short-pair
fixtures well-defined.  Sentence-level BLEU, used only for per-sample
report rows, epsilon-smooths zero match counts instead.

The composite code score mixes plain n-grams, keyword-weighted n-grams,
syntax-tree matching and def-use dataflow matching at configurable weights.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .errors import EmptyInput, LexError, ParseError
from .lang import (
    Assign,
    BinOp,
    Call,
    For,
    If,
    KEYWORDS,
    Literal,
    Name,
    Program,
    Return,
    parse_program,
    tokenize_code,
)


@dataclass(frozen=True)
class BleuConfig:
    max_order: int = 4
    weights: Optional[tuple] = None  # defaults to uniform 1/max_order
    epsilon: float = 1e-9

    def order_weights(self) -> tuple:
        if self.weights is None:
            return tuple(1.0 / self.max_order for _ in range(self.max_order))
        if len(self.weights) != self.max_order:
            raise ValueError("need one weight per n-gram order")
        total = sum(self.weights)
        if abs(total - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        return tuple(self.weights)


def exact_match(candidate: list, reference: list) -> int:
    return int(list(candidate) == list(reference))


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n])
                   for i in range(len(tokens) - n + 1))


def _clipped_matches(cand: list, ref: list, n: int):
    cand_counts = _ngrams(cand, n)
    ref_counts = _ngrams(ref, n)
    matches = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    return matches, sum(cand_counts.values())


def _brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def _geometric(precisions: list, weights: list) -> float:
    total_w = sum(weights)
    if total_w <= 0:
        return 0.0
    acc = 0.0
    for p, w in zip(precisions, weights):
        if p <= 0.0:
            return 0.0
        acc += (w / total_w) * math.log(p)
    return math.exp(acc)


def bleu_corpus(pairs: list, config: BleuConfig = BleuConfig()) -> float:
    """Corpus-level BLEU over (candidate_tokens, reference_tokens) pairs."""
    if not pairs:
        raise EmptyInput("no candidate/reference pairs")
    weights = config.order_weights()
    cand_len = sum(len(c) for c, _ in pairs)
    ref_len = sum(len(r) for _, r in pairs)
    precisions, used_weights = [], []
    for n in range(1, config.max_order + 1):
        matches = totals = 0
        for cand, ref in pairs:
            m, t = _clipped_matches(list(cand), list(ref), n)
            matches += m
            totals += t
        if totals == 0:
            continue  # order impossible corpus-wide; renormalize the rest
        precisions.append(matches / totals)
        used_weights.append(weights[n - 1])
    if not precisions:
        return 0.0
    return _brevity_penalty(cand_len, ref_len) * \
        _geometric(precisions, used_weights)


def bleu_sentence(candidate: list, reference: list,
                  config: BleuConfig = BleuConfig()) -> float:
    """Per-sample BLEU with epsilon smoothing of zero match counts."""
    weights = config.order_weights()
    precisions, used_weights = [], []
    for n in range(1, config.max_order + 1):
        m, t = _clipped_matches(list(candidate), list(reference), n)
        if t == 0:
            continue
        precisions.append(m / t if m else config.epsilon / t)
        used_weights.append(weights[n - 1])
    if not precisions:
        return 0.0
    return _brevity_penalty(len(candidate), len(reference)) * \
        _geometric(precisions, used_weights)


# -- code-aware composite ------------------------------------------------------

@dataclass(frozen=True)
class CodeBleuConfig:
    ngram_weight: float = 0.25
    weighted_ngram_weight: float = 0.25
    syntax_weight: float = 0.25
    dataflow_weight: float = 0.25
    keyword_multiplier: float = 4.0
    max_order: int = 4
    epsilon: float = 1e-9

    def validate(self) -> "CodeBleuConfig":
        total = (self.ngram_weight + self.weighted_ngram_weight
                 + self.syntax_weight + self.dataflow_weight)
        if abs(total - 1.0) > 1e-9:
            raise ValueError("component weights must sum to 1")
        return self


def _weighted_bleu(candidate: list, reference: list,
                   config: CodeBleuConfig) -> float:
    """Keyword-bearing n-grams count ``keyword_multiplier`` times."""
    def weight(gram):
        return config.keyword_multiplier if any(
            tok in KEYWORDS for tok in gram) else 1.0

    precisions, used = [], []
    for n in range(1, config.max_order + 1):
        cand_counts = _ngrams(list(candidate), n)
        ref_counts = _ngrams(list(reference), n)
        total = sum(weight(g) * c for g, c in cand_counts.items())
        if total == 0:
            continue
        matched = sum(weight(g) * min(c, ref_counts[g])
                      for g, c in cand_counts.items())
        precisions.append(matched / total if matched
                          else config.epsilon / total)
        used.append(1.0)
    if not precisions:
        return 0.0
    return _brevity_penalty(len(candidate), len(reference)) * \
        _geometric(precisions, used)


def _node_children(node) -> tuple:
    if isinstance(node, Program):
        return node.body
    if isinstance(node, Assign):
        return (Name(node.target), node.expr)
    if isinstance(node, For):
        return (Name(node.var), node.iterable) + node.body
    if isinstance(node, If):
        return (node.cond,) + node.body
    if isinstance(node, Return):
        return (node.expr,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


def _node_label(node) -> str:
    if isinstance(node, Program):
        return "program"
    if isinstance(node, Assign):
        return "assign"
    if isinstance(node, For):
        return "for"
    if isinstance(node, If):
        return "if"
    if isinstance(node, Return):
        return "return"
    if isinstance(node, BinOp):
        return f"binop[{node.op}]"
    if isinstance(node, Call):
        return f"call[{node.fn}]"
    if isinstance(node, Literal):
        return "lit:list" if type(node.value) is tuple else "lit:int"
    if isinstance(node, Name):
        return "name"
    raise TypeError(f"unknown node {node!r}")


def _signature(node):
    return (_node_label(node),
            tuple(_signature(c) for c in _node_children(node)))


def _internal_subtrees(root) -> Counter:
    """Multiset of full structural signatures of all internal nodes."""
    out: Counter = Counter()
    stack = [root]
    while stack:
        node = stack.pop()
        kids = _node_children(node)
        if kids:
            out[_signature(node)] += 1
            stack.extend(kids)
    return out


def syntax_match(candidate_ast, reference_ast) -> float:
    ref = _internal_subtrees(reference_ast)
    cand = _internal_subtrees(candidate_ast)
    total = sum(ref.values())
    if total == 0:
        return 1.0
    matched = sum(min(c, ref[sig]) for sig, c in cand.items())
    return matched / total


def _collect_uses(expr, sink) -> None:
    if isinstance(expr, Name):
        sink.add(expr.ident)
    elif isinstance(expr, BinOp):
        _collect_uses(expr.left, sink)
        _collect_uses(expr.right, sink)
    elif isinstance(expr, Call):
        for a in expr.args:
            _collect_uses(a, sink)


def dataflow_edges(prog: Program) -> set:
    """(source variable -> bound variable) edges from assignments and loops."""
    edges = set()

    def walk(body):
        for st in body:
            if isinstance(st, Assign):
                uses: set = set()
                _collect_uses(st.expr, uses)
                edges.update((u, st.target) for u in uses)
            elif isinstance(st, For):
                uses = set()
                _collect_uses(st.iterable, uses)
                edges.update((u, st.var) for u in uses)
                walk(st.body)
            elif isinstance(st, If):
                walk(st.body)

    walk(prog.body)
    return edges


def dataflow_match(candidate_ast, reference_ast) -> float:
    cand = dataflow_edges(candidate_ast)
    ref = dataflow_edges(reference_ast)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    hit = len(cand & ref)
    if hit == 0:
        return 0.0
    precision = hit / len(cand)
    recall = hit / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def _lenient_tokens(text: str) -> list:
    try:
        return tokenize_code(text)
    except LexError:
        return text.split()


def codebleu(candidate_text: str, reference_text: str,
             config: CodeBleuConfig = CodeBleuConfig()) -> float:
    """Weighted mix of n-gram, keyword n-gram, syntax and dataflow matches.

    A candidate that fails to lex or parse scores 0 on the syntax and
    dataflow components; the n-gram components still apply.
    """
    config.validate()
    cand_tokens = _lenient_tokens(candidate_text)
    ref_tokens = tokenize_code(reference_text)
    ngram = bleu_sentence(cand_tokens, ref_tokens,
                          BleuConfig(max_order=config.max_order,
                                     epsilon=config.epsilon))
    weighted = _weighted_bleu(cand_tokens, ref_tokens, config)
    syntax = dataflow = 0.0
    try:
        ref_ast = parse_program(ref_tokens)
        cand_ast = parse_program(cand_tokens)
    except (LexError, ParseError):
        pass
    else:
        syntax = syntax_match(cand_ast, ref_ast)
        dataflow = dataflow_match(cand_ast, ref_ast)
    return (config.ngram_weight * ngram
            + config.weighted_ngram_weight * weighted
            + config.syntax_weight * syntax
            + config.dataflow_weight * dataflow)
