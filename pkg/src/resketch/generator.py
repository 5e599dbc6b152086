"""Synthetic templated corpus of CardLang list-processing functions.

Each family is a multi-statement code template over integer lists with
parameterized comparison operators and constants; descriptions are rendered
from phrase templates with lexical variation.  Bodies are deliberately long
enough (roughly 50-70 tokens) that reproducing one exactly from the
description alone is hard at desk scale, while a retrieved sibling supplies
most of the structure.  Every statement feeds the return value, so operator
mutations stay observable.  Unit tests are produced by executing the gold
program on seeded argument lists that include the discriminating boundary
values, making every sample self-consistent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Sample, TestCase
from .errors import ConfigError
from .lang import parse_text, run_program

NOUNS = ("values", "items", "numbers", "elements", "entries")

OP_PHRASES = {
    ">": ("greater than", "more than", "above", "strictly greater than"),
    ">=": ("at least", "greater than or equal to", "no less than"),
    "<": ("less than", "smaller than", "below", "strictly less than"),
    "<=": ("at most", "less than or equal to", "no greater than"),
}


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    family_count: int = 12
    samples_per_family: int = 200
    test_cases_per_sample: int = 4
    split_fractions: tuple = (5 / 6, 1 / 12, 1 / 12)


def _pick(rng, options):
    return options[int(rng.integers(0, len(options)))]


def _random_list(rng, lo, hi, min_len=3, max_len=8):
    n = int(rng.integers(min_len, max_len + 1))
    return [int(v) for v in rng.integers(lo, hi + 1, size=n)]


def _boundary_list(rng, boundary, lo, hi):
    vals = list(boundary) + _random_list(rng, lo, hi, min_len=2, max_len=4)
    perm = rng.permutation(len(vals))
    return [int(vals[i]) for i in perm]


def _threshold_args(rng, consts, n_tests):
    boundary = []
    for c in consts:
        boundary.extend((c - 1, c, c + 1))
    lo, hi = min(consts) - 6, max(consts) + 7
    lists = [_boundary_list(rng, boundary, lo, hi)]
    for _ in range(n_tests - 1):
        lists.append(_random_list(rng, lo, hi))
    return lists


def _plain_args(rng, n_tests):
    return [_random_list(rng, -9, 30) for _ in range(n_tests)]


def _two_close_constants(rng):
    c1 = int(rng.integers(2, 22))
    c2 = c1 + int(rng.integers(2, 9))
    return c1, c2


def _count_bands_family(name):
    # count above a low bar, then above a high bar; combine as 100x + y.
    # Half the samples also fold the matched values themselves into the
    # first count ("adding them in as well"), one extra statement whose
    # tokens all occur in the plain variant — so a retrieved neighbor of
    # the opposite variant differs by exactly one insertable/droppable
    # statement.
    def build(rng):
        op = _pick(rng, (">", ">="))
        c1, c2 = _two_close_constants(rng)
        noun = _pick(rng, NOUNS)
        phrase = _pick(rng, OP_PHRASES[op])
        add_in = bool(rng.integers(0, 2))
        clause = _pick(rng, (" adding them in as well",
                             " with their sum included",
                             " summing them in too")) if add_in else ""
        nl = _pick(rng, (
            f"count the {noun} {phrase} {c1}{clause} , then those {phrase} {c2} .",
            f"count how many {noun} are {phrase} {c1}{clause} , and how many are {phrase} {c2} .",
            f"return the number of {noun} {phrase} {c1}{clause} , and also {phrase} {c2} .",
        ))
        extra = "            result = result + x\n" if add_in else ""
        code = (
            f"def {name} ( xs ) :\n"
            f"    result = 0\n"
            f"    for x in xs :\n"
            f"        if x {op} {c1} :\n"
            f"{extra}"
            f"            result = result + 1\n"
            f"    bonus = 0\n"
            f"    for x in xs :\n"
            f"        if x {op} {c2} :\n"
            f"            bonus = bonus + 1\n"
            f"    return result * 100 + bonus\n"
        )
        return nl, code, ("threshold", (c1, c2))
    return build


def _count_above_family(name):
    # single-band count plus the input length, combined as 100x + n
    def build(rng):
        op = _pick(rng, (">", ">="))
        c = int(rng.integers(2, 30))
        noun = _pick(rng, NOUNS)
        phrase = _pick(rng, OP_PHRASES[op])
        nl = _pick(rng, (
            f"count the {noun} {phrase} {c} next to the overall length .",
            f"how many {noun} are {phrase} {c} , alongside the length ?",
            f"combine the count of {noun} {phrase} {c} with the length .",
        ))
        code = (
            f"def {name} ( xs ) :\n"
            f"    result = 0\n"
            f"    for x in xs :\n"
            f"        if x {op} {c} :\n"
            f"            result = result + 1\n"
            f"    n = len ( xs )\n"
            f"    return result * 100 + n\n"
        )
        return nl, code, ("threshold", (c,))
    return build


def _sum_window_family(name):
    # sum inside an inclusive window, count strictly under it
    def build(rng):
        lo = int(rng.integers(1, 16))
        hi = lo + int(rng.integers(2, 13))
        noun = _pick(rng, NOUNS)
        nl = _pick(rng, (
            f"add up the {noun} between {lo} and {hi} inclusive , counting the rest below {lo} .",
            f"sum the {noun} from {lo} through {hi} and count the ones beneath {lo} .",
            f"return the total of {noun} in the range {lo} to {hi} plus a count under {lo} .",
        ))
        code = (
            f"def {name} ( xs ) :\n"
            f"    total = 0\n"
            f"    for v in xs :\n"
            f"        if v >= {lo} and v <= {hi} :\n"
            f"            total = total + v\n"
            f"    under = 0\n"
            f"    for v in xs :\n"
            f"        if v < {lo} :\n"
            f"            under = under + 1\n"
            f"    return total * 10 + under\n"
        )
        return nl, code, ("threshold", (lo, hi))
    return build


def _window_family(name):
    def build(rng):
        lo = int(rng.integers(1, 16))
        hi = lo + int(rng.integers(2, 13))
        noun = _pick(rng, NOUNS)
        nl = _pick(rng, (
            f"count the {noun} between {lo} and {hi} inclusive , and those under {lo} .",
            f"how many {noun} lie in the range {lo} to {hi} , and how many fall below {lo} ?",
            f"count the {noun} from {lo} through {hi} plus the ones beneath {lo} .",
        ))
        code = (
            f"def {name} ( xs ) :\n"
            f"    result = 0\n"
            f"    for x in xs :\n"
            f"        if x >= {lo} and x <= {hi} :\n"
            f"            result = result + 1\n"
            f"    outside = 0\n"
            f"    for x in xs :\n"
            f"        if x < {lo} :\n"
            f"            outside = outside + 1\n"
            f"    return result * 100 + outside\n"
        )
        return nl, code, ("threshold", (lo, hi))
    return build


def _sum_family(name, ops):
    # sum the band, count the band, combine as 10x + n
    def build(rng):
        op = _pick(rng, ops)
        c = int(rng.integers(2, 30))
        noun = _pick(rng, NOUNS)
        phrase = _pick(rng, OP_PHRASES[op])
        nl = _pick(rng, (
            f"add up the {noun} {phrase} {c} and count them .",
            f"return the sum of the {noun} {phrase} {c} along with their count .",
            f"sum all {noun} that are {phrase} {c} , counting them as well .",
        ))
        code = (
            f"def {name} ( xs ) :\n"
            f"    total = 0\n"
            f"    for v in xs :\n"
            f"        if v {op} {c} :\n"
            f"            total = total + v\n"
            f"    n = 0\n"
            f"    for v in xs :\n"
            f"        if v {op} {c} :\n"
            f"            n = n + 1\n"
            f"    return total * 10 + n\n"
        )
        return nl, code, ("threshold", (c,))
    return build


def _keep_family(name, ops):
    # filter into a list, then append a fixed end marker
    def build(rng):
        op = _pick(rng, ops)
        c = int(rng.integers(2, 30))
        noun = _pick(rng, NOUNS)
        phrase = _pick(rng, OP_PHRASES[op])
        nl = _pick(rng, (
            f"return a list of the {noun} {phrase} {c} , ending with a marker .",
            f"keep only the {noun} {phrase} {c} and close the list with a marker .",
            f"collect the {noun} {phrase} {c} into a marker terminated list .",
        ))
        code = (
            f"def {name} ( xs ) :\n"
            f"    kept = [ ]\n"
            f"    for x in xs :\n"
            f"        if x {op} {c} :\n"
            f"            kept = kept + x\n"
            f"    marker = 0 - 1\n"
            f"    kept = kept + marker\n"
            f"    return kept\n"
        )
        return nl, code, ("threshold", (c,))
    return build


def _scale_affine_family(name):
    # affine map: multiply then offset each element; half the samples also
    # fold the original element back in — the same opposite-variant
    # retrieval trap as the banded count family
    def build(rng):
        k1 = int(rng.integers(2, 10))
        k2 = int(rng.integers(1, 10))
        noun = _pick(rng, NOUNS)
        with_self = bool(rng.integers(0, 2))
        clause = _pick(rng, (" plus itself",
                             " with the original added back",
                             " and itself on top")) if with_self else ""
        nl = _pick(rng, (
            f"multiply each of the {noun} by {k1} then add {k2}{clause} .",
            f"scale every one of the {noun} by {k1} and shift by {k2}{clause} .",
            f"return the list with each of the {noun} times {k1} plus {k2}{clause} .",
        ))
        extra = "        y = y + v\n" if with_self else ""
        code = (
            f"def {name} ( xs ) :\n"
            f"    out = [ ]\n"
            f"    for v in xs :\n"
            f"        y = v * {k1}\n"
            f"        y = y + {k2}\n"
            f"{extra}"
            f"        out = out + y\n"
            f"    return out\n"
        )
        return nl, code, ("plain",)
    return build


def _shift_family(name):
    # shift every element, then append the input length
    def build(rng):
        op = _pick(rng, ("+", "-"))
        k = int(rng.integers(1, 10))
        noun = _pick(rng, NOUNS)
        if op == "+":
            nl = _pick(rng, (
                f"add {k} to every one of the {noun} and append the length .",
                f"increase each of the {noun} by {k} , appending the length at the end .",
            ))
        else:
            nl = _pick(rng, (
                f"subtract {k} from every one of the {noun} and append the length .",
                f"decrease each of the {noun} by {k} , appending the length at the end .",
            ))
        code = (
            f"def {name} ( xs ) :\n"
            f"    out = [ ]\n"
            f"    for v in xs :\n"
            f"        y = v {op} {k}\n"
            f"        out = out + y\n"
            f"    n = len ( xs )\n"
            f"    out = out + n\n"
            f"    return out\n"
        )
        return nl, code, ("plain",)
    return build


def _extreme_family(name, biggest):
    # extreme value times ten, plus how many times it occurs
    def build(rng):
        noun = _pick(rng, NOUNS)
        if biggest:
            nl = _pick(rng, (
                f"return ten times the largest of the {noun} plus how often it appears .",
                f"find the maximum of the {noun} , times ten , plus its count .",
                f"what is ten times the biggest of the {noun} plus its multiplicity ?",
            ))
            init, op = "0 - 1000000", ">"
        else:
            nl = _pick(rng, (
                f"return ten times the smallest of the {noun} plus how often it appears .",
                f"find the minimum of the {noun} , times ten , plus its count .",
                f"what is ten times the littlest of the {noun} plus its multiplicity ?",
            ))
            init, op = "1000000", "<"
        code = (
            f"def {name} ( xs ) :\n"
            f"    best = {init}\n"
            f"    for x in xs :\n"
            f"        if x {op} best :\n"
            f"            best = x\n"
            f"    hits = 0\n"
            f"    for x in xs :\n"
            f"        if x == best :\n"
            f"            hits = hits + 1\n"
            f"    return best * 10 + hits\n"
        )
        return nl, code, ("plain",)
    return build


FAMILIES = (
    ("count_bands", _count_bands_family("count_bands")),
    ("count_window", _window_family("count_window")),
    ("count_above", _count_above_family("count_above")),
    ("sum_above", _sum_family("sum_above", (">", ">="))),
    ("sum_below", _sum_family("sum_below", ("<", "<="))),
    ("sum_window", _sum_window_family("sum_window")),
    ("keep_above", _keep_family("keep_above", (">", ">="))),
    ("keep_below", _keep_family("keep_below", ("<", "<="))),
    ("scale_affine", _scale_affine_family("scale_affine")),
    ("shift_all", _shift_family("shift_all")),
    ("largest", _extreme_family("largest", True)),
    ("smallest", _extreme_family("smallest", False)),
)


def family_of(sample_id: str) -> str:
    return sample_id.rsplit("-", 1)[0]


def _make_tests(rng, prog, meta, n_tests):
    if meta[0] == "threshold":
        arg_lists = _threshold_args(rng, meta[1], n_tests)
    else:
        arg_lists = _plain_args(rng, n_tests)
    return [TestCase(args=[xs], expected=run_program(prog, [xs]))
            for xs in arg_lists]


def generate_corpus(config: GenConfig) -> Dataset:
    if config.family_count <= 0 or config.family_count > len(FAMILIES):
        raise ConfigError(
            f"family_count must be in 1..{len(FAMILIES)}")
    if config.samples_per_family <= 0:
        raise ConfigError("samples_per_family must be positive")
    if config.test_cases_per_sample <= 0:
        raise ConfigError("test_cases_per_sample must be positive")
    fracs = tuple(config.split_fractions)
    if len(fracs) != 3 or any(f < 0 for f in fracs):
        raise ConfigError("split_fractions must be three non-negative numbers")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise ConfigError("split_fractions must sum to 1")

    rng = np.random.default_rng(config.seed)
    samples = []
    for fam_name, build in FAMILIES[:config.family_count]:
        for i in range(config.samples_per_family):
            nl, code, meta = build(rng)
            prog = parse_text(code)
            tests = _make_tests(rng, prog, meta, config.test_cases_per_sample)
            samples.append(Sample(id=f"{fam_name}-{i:04d}", nl_text=nl,
                                  code_text=code, tests=tests))

    n = len(samples)
    n_train = int(round(fracs[0] * n))
    n_dev = int(round(fracs[1] * n))
    n_test = n - n_train - n_dev
    if min(n_train, n_dev, n_test) < 0:
        raise ConfigError("split_fractions produce a negative split size")
    order = rng.permutation(n)
    for rank, idx in enumerate(order):
        if rank < n_train:
            samples[idx].split = "train"
        elif rank < n_train + n_dev:
            samples[idx].split = "dev"
        else:
            samples[idx].split = "test"
    _ensure_family_train_presence(samples)
    return Dataset(samples)


def _ensure_family_train_presence(samples):
    """Every family with held-out samples must keep a train sibling."""
    by_family: dict[str, list[Sample]] = {}
    for s in samples:
        by_family.setdefault(family_of(s.id), []).append(s)
    donors = [s for s in samples
              if s.split == "train"
              and sum(1 for t in by_family[family_of(s.id)]
                      if t.split == "train") > 1]
    for fam, members in sorted(by_family.items()):
        if any(s.split == "train" for s in members):
            continue
        held = next(s for s in members if s.split != "train")
        donor = donors.pop()
        held.split, donor.split = donor.split, held.split
