"""Sketch construction: LCS supervision labels and placeholder assembly.

A sketch keeps the requirement-relevant tokens of a retrieved snippet and
collapses every dropped span into a single ``<ph>`` placeholder.  Training
labels mark the positions of one canonical longest-common-subsequence
alignment between the similar code and the target code; two alternative
labelings (identifier anonymization, bag-of-tokens overlap) are provided for
ablation experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import PH
from .errors import LengthMismatch
from .lang import token_class

Sketch = list  # token list over the code vocabulary plus PH
SketchLabels = list  # per-position keep booleans


@dataclass(frozen=True)
class Alignment:
    """Matched position pairs (i in a, j in b), strictly increasing."""
    pairs: tuple

    def __len__(self):
        return len(self.pairs)

    def a_positions(self):
        return [i for i, _ in self.pairs]

    def b_positions(self):
        return [j for _, j in self.pairs]


def _encode_pair(a, b):
    codes: dict[str, int] = {}
    def enc(seq):
        out = np.empty(len(seq), dtype=np.int64)
        for i, tok in enumerate(seq):
            out[i] = codes.setdefault(tok, len(codes))
        return out
    return enc(a), enc(b)


def lcs(a: list, b: list) -> Alignment:
    """Canonical LCS alignment via the standard O(|a|*|b|) table.

    Backtrace from (|a|, |b|): take the diagonal on a token match, otherwise
    move up (drop from a) when it preserves the table value, else left.
    """
    if not a or not b:
        return Alignment(pairs=())
    ea, eb = _encode_pair(a, b)
    table = kernels.lcs_table(ea, eb)
    pairs = []
    i, j = len(a), len(b)
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif table[i - 1, j] >= table[i, j - 1]:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return Alignment(pairs=tuple(pairs))


def lcs_length(a: list, b: list) -> int:
    if not a or not b:
        return 0
    ea, eb = _encode_pair(a, b)
    return int(kernels.lcs_table(ea, eb)[len(a), len(b)])


def make_labels(similar: list, target: list) -> SketchLabels:
    """keep[i] is true iff position i lies on the canonical LCS alignment."""
    keep = [False] * len(similar)
    for i in lcs(similar, target).a_positions():
        keep[i] = True
    return keep


def assemble_sketch(similar: list, keep: SketchLabels) -> Sketch:
    """Copy kept tokens; each maximal dropped run becomes one placeholder."""
    if len(similar) != len(keep):
        raise LengthMismatch(
            f"{len(similar)} tokens vs {len(keep)} labels")
    sketch: list = []
    for tok, k in zip(similar, keep):
        if k:
            sketch.append(tok)
        elif not sketch or sketch[-1] != PH:
            sketch.append(PH)
    return sketch


def merge_placeholders(tokens: list) -> Sketch:
    out: list = []
    for tok in tokens:
        if tok == PH and out and out[-1] == PH:
            continue
        out.append(tok)
    return out


def oracle_sketch(similar: list, target: list) -> Sketch:
    return assemble_sketch(similar, make_labels(similar, target))


def anonymize_sketch(similar: list) -> Sketch:
    """Replace identifiers and literals with placeholders (NL-independent)."""
    keep = [token_class(tok) not in ("ident", "int") for tok in similar]
    return assemble_sketch(similar, keep)


def make_overlap_labels(similar: list, target: list) -> SketchLabels:
    """keep[i] is true iff the token value occurs anywhere in the target."""
    bag = set(target)
    return [tok in bag for tok in similar]
