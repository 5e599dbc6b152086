"""BM25 retrieval over NL descriptions, with a seeded random baseline.

The index is an inverted file over :func:`resketch.data.tokenize_nl` tokens
of the retained samples.  Scoring follows the Lucene-style formulation

    score(q, d) = sum_t IDF(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len_d / avg_len))
    IDF(t)      = ln((N - df + 0.5) / (df + 0.5) + 1)

summed per query-token occurrence.  The +1 inside the logarithm keeps all
scores non-negative.
"""

from __future__ import annotations

import io
import logging
import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .data import Dataset, Sample, tokenize_nl
from .errors import DataError, EmptyCorpus, UnknownDoc

log = logging.getLogger(__name__)

INDEX_MAGIC = b"SKIX"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked ``(doc_id, score)`` pairs, scores non-increasing."""
    hits: tuple

    def ids(self):
        return [doc_id for doc_id, _ in self.hits]

    def __len__(self):
        return len(self.hits)


class RetrievalIndex:
    def __init__(self, sample_ids, doc_lens, postings, samples=None):
        self.sample_ids = list(sample_ids)
        self.id_to_pos = {sid: i for i, sid in enumerate(self.sample_ids)}
        self.doc_lens = np.asarray(doc_lens, dtype=np.float64)
        self.n_docs = len(self.sample_ids)
        self.avg_len = float(self.doc_lens.mean()) if self.n_docs else 0.0
        # term -> (positions int32, term frequencies float64), sorted by position
        self.postings = postings
        self.samples = dict(samples) if samples else {}

    def sample(self, doc_id: str) -> Sample:
        try:
            return self.samples[doc_id]
        except KeyError:
            raise UnknownDoc(doc_id) from None

    def attach(self, dataset: Dataset) -> "RetrievalIndex":
        self.samples = {sid: dataset.by_id[sid] for sid in self.sample_ids}
        return self

    def idf(self, term: str) -> float:
        entry = self.postings.get(term)
        df = entry[0].shape[0] if entry else 0
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)


def build_index(dataset: Dataset, split_filter=("train",)) -> RetrievalIndex:
    kept = [s for s in dataset if s.split in set(split_filter)]
    if not kept:
        raise EmptyCorpus(f"no samples in splits {sorted(split_filter)!r}")
    sample_ids = [s.id for s in kept]
    doc_lens = []
    raw: dict[str, list] = {}
    for pos, s in enumerate(kept):
        toks = tokenize_nl(s.nl_text)
        doc_lens.append(len(toks))
        tf: dict[str, int] = {}
        for t in toks:
            tf[t] = tf.get(t, 0) + 1
        for t, c in tf.items():
            raw.setdefault(t, []).append((pos, c))
    postings = {
        t: (np.array([p for p, _ in plist], dtype=np.int32),
            np.array([c for _, c in plist], dtype=np.float64))
        for t, plist in raw.items()
    }
    return RetrievalIndex(sample_ids, doc_lens, postings,
                          samples={s.id: s for s in kept})


def _length_norms(index: RetrievalIndex, params: Bm25Params) -> np.ndarray:
    key = (params.k1, params.b)
    cache = getattr(index, "_norm_cache", None)
    if cache is None or cache[0] != key:
        norms = 1.0 - params.b + params.b * index.doc_lens / index.avg_len
        index._norm_cache = (key, norms)
    return index._norm_cache[1]


def bm25_score(index: RetrievalIndex, query: list[str], doc_id: str,
               params: Bm25Params = Bm25Params()) -> float:
    """Score a single document, accumulating per query-token occurrence."""
    if doc_id not in index.id_to_pos:
        raise UnknownDoc(doc_id)
    pos = index.id_to_pos[doc_id]
    norm = float(_length_norms(index, params)[pos])
    score = 0.0
    for tok in query:
        entry = index.postings.get(tok)
        if entry is None:
            continue
        positions, tfs = entry
        i = int(np.searchsorted(positions, pos))
        if i >= positions.shape[0] or positions[i] != pos:
            continue
        tf = float(tfs[i])
        score += index.idf(tok) * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    return score


def score_all(index: RetrievalIndex, query: list[str],
              params: Bm25Params = Bm25Params()) -> np.ndarray:
    """BM25 scores of every document for ``query`` (term-major accumulation)."""
    norms = _length_norms(index, params)
    scores = np.zeros(index.n_docs, dtype=np.float64)
    pos_chunks, tf_chunks, idfs, offsets = [], [], [], [0]
    for tok in query:
        entry = index.postings.get(tok)
        if entry is not None:
            pos_chunks.append(entry[0])
            tf_chunks.append(entry[1])
            idfs.append(index.idf(tok))
            offsets.append(offsets[-1] + entry[0].shape[0])
    if not idfs:
        return scores
    kernels.bm25_accumulate(
        scores,
        np.concatenate(pos_chunks),
        np.concatenate(tf_chunks),
        np.array(offsets, dtype=np.int64),
        np.array(idfs, dtype=np.float64),
        norms,
        params.k1,
    )
    return scores


def retrieve(index: RetrievalIndex, query: list[str], k: int,
             exclude_id: Optional[str] = None,
             params: Bm25Params = Bm25Params()) -> RetrievalResult:
    """Top-k documents by BM25 score; ties break by ascending doc id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.n_docs == 0:
        raise EmptyCorpus("empty retrieval index")
    scores = score_all(index, query, params)
    order = sorted(
        (p for p in range(index.n_docs)
         if index.sample_ids[p] != exclude_id),
        key=lambda p: (-scores[p], index.sample_ids[p]),
    )
    hits = tuple((index.sample_ids[p], float(scores[p])) for p in order[:k])
    if exclude_id is not None and exclude_id in index.samples:
        gold = index.samples[exclude_id].code_text
        for doc_id, _ in hits:
            if index.samples.get(doc_id) is not None and \
                    index.samples[doc_id].code_text == gold:
                log.debug("retrieved exact duplicate of excluded %s: %s",
                          exclude_id, doc_id)
    return RetrievalResult(hits=hits)


def retrieve_random(index: RetrievalIndex, k: int, seed: int,
                    exclude_id: Optional[str] = None) -> RetrievalResult:
    """Uniform sample without replacement; scores reported as 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.n_docs == 0:
        raise EmptyCorpus("empty retrieval index")
    pool = [sid for sid in index.sample_ids if sid != exclude_id]
    rng = np.random.default_rng(seed)
    take = min(k, len(pool))
    chosen = rng.choice(len(pool), size=take, replace=False)
    return RetrievalResult(hits=tuple((pool[int(i)], 0.0) for i in chosen))


# -- binary persistence -------------------------------------------------------
#
# Layout (little-endian):
#   magic "SKIX" | u32 version
#   u32 n_docs | then per doc: u32 id_len, id bytes (utf-8), f64 doc_len
#   u32 n_terms | per term: u32 term_len, term bytes, u32 df,
#                 df * (u32 doc_pos, u32 tf)
# Sample texts are not stored; reattach a dataset with ``attach`` when the
# retrieved code is needed.

def save_index(index: RetrievalIndex, path) -> None:
    buf = io.BytesIO()
    buf.write(INDEX_MAGIC)
    buf.write(struct.pack("<I", INDEX_VERSION))
    buf.write(struct.pack("<I", index.n_docs))
    for sid, dlen in zip(index.sample_ids, index.doc_lens):
        raw = sid.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<d", float(dlen)))
    terms = sorted(index.postings)
    buf.write(struct.pack("<I", len(terms)))
    for term in terms:
        raw = term.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        positions, tfs = index.postings[term]
        buf.write(struct.pack("<I", positions.shape[0]))
        for p, tf in zip(positions, tfs):
            buf.write(struct.pack("<II", int(p), int(tf)))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_index(path) -> RetrievalIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    view = io.BytesIO(data)

    def read(fmt):
        size = struct.calcsize(fmt)
        chunk = view.read(size)
        if len(chunk) != size:
            raise DataError(f"truncated index file {path}")
        return struct.unpack(fmt, chunk)

    if view.read(4) != INDEX_MAGIC:
        raise DataError(f"{path} is not an index file (bad magic)")
    (version,) = read("<I")
    if version != INDEX_VERSION:
        raise DataError(f"unsupported index version {version}")
    (n_docs,) = read("<I")
    sample_ids, doc_lens = [], []
    for _ in range(n_docs):
        (id_len,) = read("<I")
        sample_ids.append(view.read(id_len).decode("utf-8"))
        doc_lens.append(read("<d")[0])
    (n_terms,) = read("<I")
    postings = {}
    for _ in range(n_terms):
        (t_len,) = read("<I")
        term = view.read(t_len).decode("utf-8")
        (df,) = read("<I")
        pairs = [read("<II") for _ in range(df)]
        postings[term] = (
            np.array([p for p, _ in pairs], dtype=np.int32),
            np.array([tf for _, tf in pairs], dtype=np.float64),
        )
    return RetrievalIndex(sample_ids, doc_lens, postings)
