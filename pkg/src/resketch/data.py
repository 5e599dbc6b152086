"""Data model: samples, datasets, NL tokenization, JSONL persistence, vocab."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import EmptyCorpus, SchemaError
from .lang import is_value

SPLITS = ("train", "dev", "test")

PAD, UNK, BOS, EOS, SEP, PH = "<pad>", "<unk>", "<bos>", "<eos>", "<sep>", "<ph>"
SPECIALS = (PAD, UNK, BOS, EOS, SEP, PH)

_NL_RE = re.compile(r"[a-z0-9_]+|[^a-z0-9_\s]")


def tokenize_nl(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; punctuation kept."""
    return _NL_RE.findall(text.lower())


@dataclass
class TestCase:
    __test__ = False  # keep pytest from collecting this as a test class

    args: list
    expected: object


@dataclass
class Sample:
    id: str
    nl_text: str
    code_text: str
    tests: list = field(default_factory=list)
    split: str = "train"


class Dataset:
    def __init__(self, samples: list[Sample]):
        self.samples = list(samples)
        self.by_id = {}
        for s in self.samples:
            if s.id in self.by_id:
                raise SchemaError(f"duplicate sample id {s.id!r}")
            if s.split not in SPLITS:
                raise SchemaError(f"unknown split {s.split!r}", field="split")
            self.by_id[s.id] = s

    def split(self, name: str) -> list[Sample]:
        return [s for s in self.samples if s.split == name]

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return _dataset_records(self) == _dataset_records(other)


def _sample_record(s: Sample) -> dict:
    return {
        "id": s.id,
        "nl": s.nl_text,
        "code": s.code_text,
        "tests": [{"args": t.args, "expected": t.expected} for t in s.tests],
        "split": s.split,
    }


def _dataset_records(ds: Dataset) -> list[dict]:
    return [_sample_record(s) for s in ds.samples]


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in dataset.samples:
            fh.write(json.dumps(_sample_record(s), sort_keys=True))
            fh.write("\n")


def _check_value(v, line_no, field_name):
    ok = is_value(v) if not isinstance(v, list) else all(
        type(x) is int for x in v)
    if not ok:
        raise SchemaError(f"bad value {v!r}", line_number=line_no,
                          field=field_name)
    return v


def load_dataset(path) -> Dataset:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON: {e}", line_number=line_no) from None
            if not isinstance(rec, dict):
                raise SchemaError("record is not an object", line_number=line_no)
            for key, kind in (("id", str), ("nl", str), ("code", str),
                              ("split", str)):
                if key not in rec:
                    raise SchemaError(f"missing field {key!r}",
                                      line_number=line_no, field=key)
                if not isinstance(rec[key], kind):
                    raise SchemaError(f"field {key!r} has wrong type",
                                      line_number=line_no, field=key)
            if rec["split"] not in SPLITS:
                raise SchemaError(f"unknown split {rec['split']!r}",
                                  line_number=line_no, field="split")
            tests = []
            for t in rec.get("tests", []):
                if not isinstance(t, dict) or "args" not in t or "expected" not in t:
                    raise SchemaError("test case needs args and expected",
                                      line_number=line_no, field="tests")
                if not isinstance(t["args"], list):
                    raise SchemaError("test args must be an array",
                                      line_number=line_no, field="tests")
                args = [_check_value(a, line_no, "tests") for a in t["args"]]
                tests.append(TestCase(args=args,
                                      expected=_check_value(t["expected"],
                                                            line_no, "tests")))
            samples.append(Sample(id=rec["id"], nl_text=rec["nl"],
                                  code_text=rec["code"], tests=tests,
                                  split=rec["split"]))
    return Dataset(samples)


class Vocabulary:
    """Frozen token <-> id mapping with reserved specials at ids 0-5."""

    def __init__(self, tokens: Iterable[str]):
        self.id_to_token = list(SPECIALS)
        seen = set(SPECIALS)
        for tok in tokens:
            if not tok:
                raise SchemaError("empty token in vocabulary")
            if tok not in seen:
                seen.add(tok)
                self.id_to_token.append(tok)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        self.pad_id = self.token_to_id[PAD]
        self.unk_id = self.token_to_id[UNK]
        self.bos_id = self.token_to_id[BOS]
        self.eos_id = self.token_to_id[EOS]
        self.sep_id = self.token_to_id[SEP]
        self.ph_id = self.token_to_id[PH]

    def __len__(self):
        return len(self.id_to_token)

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.id_to_token == other.id_to_token

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        unk = self.unk_id
        get = self.token_to_id.get
        return np.array([get(t, unk) for t in tokens], dtype=np.int32)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[int(i)] for i in ids]


def build_vocabulary(dataset: Dataset, min_count: int = 0,
                     tokenize_code_fn=None) -> Vocabulary:
    """Joint NL+code vocabulary over the train split only."""
    from .lang import tokenize_code as _tc
    tokenize_code_fn = tokenize_code_fn or _tc
    train = dataset.split("train")
    if not train:
        raise EmptyCorpus("no train samples to build a vocabulary from")
    counts: dict[str, int] = {}
    for s in train:
        for tok in tokenize_nl(s.nl_text):
            counts[tok] = counts.get(tok, 0) + 1
        for tok in tokenize_code_fn(s.code_text):
            counts[tok] = counts.get(tok, 0) + 1
    keep = [t for t, c in counts.items() if c >= max(min_count, 1)]
    keep.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(keep)
