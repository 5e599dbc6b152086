"""Beam search with length-normalized scoring.

Hypotheses are ranked during the search by cumulative log-probability and
finally by ``logprob / length`` (length counts every scored position,
including the closing <eos>).  All tie-breaks are deterministic: candidate
expansion prefers smaller token ids, then smaller parent beams; final
selection prefers the lexicographically smaller token sequence.  When
``beam_width > 1`` the greedy rollout is also scored and included in the
final pool, so widening the beam never yields a worse normalized score.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def _normalized(logprob: float, length: int) -> float:
    return logprob / max(length, 1)


def beam_search(step_fn: Callable, reorder_fn: Callable, state,
                bos_id: int, eos_id: int, beam_width: int, max_len: int):
    """Generic beam search over an incremental decoder.

    ``step_fn(state, last_ids)`` returns next-token log-probs (n, V) and
    advances the cached state; ``reorder_fn(state, parents)`` gathers the
    state rows after beam selection.  Returns (tokens, normalized_score)
    of the best finished hypothesis (a running one if nothing finished).
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    live_tokens = [()]
    live_scores = np.zeros(1, dtype=np.float64)
    last_ids = np.array([bos_id], dtype=np.int32)
    finished: list[tuple] = []  # (tokens, normalized score)
    for _ in range(max_len):
        logp = step_fn(state, last_ids)
        n, V = logp.shape
        cand = live_scores[:, None] + logp
        flat = cand.reshape(-1)
        k = min(beam_width, flat.shape[0])
        token_ids = np.tile(np.arange(V), n)
        parent_ids = np.repeat(np.arange(n), V)
        top = np.lexsort((parent_ids, token_ids, -flat))[:k]
        next_tokens, next_scores, parents, next_ids = [], [], [], []
        for c in top:
            parent = int(parent_ids[c])
            tok = int(token_ids[c])
            score = float(flat[c])
            seq = live_tokens[parent] + (tok,)
            if tok == eos_id:
                finished.append((live_tokens[parent],
                                 _normalized(score, len(seq))))
            else:
                next_tokens.append(seq)
                next_scores.append(score)
                parents.append(parent)
                next_ids.append(tok)
        if len(finished) >= beam_width or not next_tokens:
            break
        live_tokens = next_tokens
        live_scores = np.array(next_scores, dtype=np.float64)
        last_ids = np.array(next_ids, dtype=np.int32)
        reorder_fn(state, np.array(parents, dtype=np.intp))
    if not finished:
        finished = [(toks, _normalized(s, len(toks)))
                    for toks, s in zip(live_tokens, live_scores)]
    return min(finished, key=lambda f: (-f[1], f[0]))


def beam_decode(model, nl_tokens: list, sketch_tokens: list,
                beam_width: int = 10, max_len: int = None) -> list:
    """Decode code tokens for (NL, sketch) with the editor model."""
    if max_len is None:
        max_len = model.config.max_code_len
    max_len = min(max_len, model.config.max_code_len)
    v = model.vocab

    def run(width):
        state = model.begin_decode(nl_tokens, sketch_tokens)
        return beam_search(lambda st, ids: model.decode_step(st, ids),
                           model.reorder_state, state,
                           v.bos_id, v.eos_id, width, max_len)

    best = run(beam_width)
    if beam_width > 1:
        greedy = run(1)
        best = min([best, greedy], key=lambda f: (-f[1], f[0]))
    return v.decode(best[0])
