"""Sketcher (token-keep classifier) and editor (encoder-decoder) models.

Inputs are laid out as ``[<bos>, NL..., <sep>, code-or-sketch..., <eos>]``.
The sketcher adds segment embeddings distinguishing the NL and code halves
and emits a keep probability for every code position from a 2-way softmax
head.  The editor shares one embedding table between source and target and
ties the output projection to it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..data import Vocabulary
from ..errors import ConfigError, LengthOverflow, VocabMismatch
from ..sketching import Sketch, assemble_sketch
from .layers import (
    Dense,
    DecoderBlock,
    Embeddings,
    EncoderBlock,
    ParamStore,
    log_softmax,
    mask_bias,
    softmax,
)


@dataclass(frozen=True)
class TrainConfig:
    d: int = 64
    heads: int = 4
    sketcher_layers: int = 2
    editor_layers: int = 2
    max_nl_len: int = 48
    max_code_len: int = 96
    batch_size: int = 32
    learning_rate: float = 1e-3
    epochs: int = 6
    grad_clip: float = 1.0
    seed: int = 0
    keep_threshold: float = 0.5

    def validate(self) -> "TrainConfig":
        if not (0.0 < self.keep_threshold < 1.0):
            raise ConfigError("keep_threshold must lie in (0, 1)")
        for field_name in ("d", "heads", "sketcher_layers", "editor_layers",
                           "max_nl_len", "max_code_len", "batch_size"):
            if getattr(self, field_name) < 1:
                raise ConfigError(f"{field_name} must be >= 1")
        if self.d % self.heads:
            raise ConfigError("d must be divisible by heads")
        return self

    def arch_dict(self, kind: str) -> dict:
        cfg = asdict(self)
        return {"kind": kind, **{k: cfg[k] for k in (
            "d", "heads", "sketcher_layers", "editor_layers",
            "max_nl_len", "max_code_len")}}


def _pad_rows(rows: list[np.ndarray], pad_id: int) -> np.ndarray:
    width = max(r.shape[0] for r in rows)
    out = np.full((len(rows), width), pad_id, dtype=np.int32)
    for i, r in enumerate(rows):
        out[i, :r.shape[0]] = r
    return out


def _valid_mask(rows: list[np.ndarray], width: int) -> np.ndarray:
    valid = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        valid[i, :r.shape[0]] = True
    return valid


class Sketcher:
    kind = "sketcher"

    def __init__(self, vocab: Vocabulary, config: TrainConfig, rng,
                 dtype=np.float32):
        config.validate()
        self.vocab = vocab
        self.config = config
        self.store = ParamStore(dtype)
        max_total = config.max_nl_len + config.max_code_len + 3
        self.emb = Embeddings(self.store, "emb", len(vocab), max_total,
                              config.d, rng, segments=2)
        self.blocks = [EncoderBlock(self.store, f"enc{i}", config.d,
                                    config.heads, rng)
                       for i in range(config.sketcher_layers)]
        self.head = Dense(self.store, "head", config.d, 2, rng)

    def _check_vocab(self):
        if self.emb.tok.value.shape[0] != len(self.vocab):
            raise VocabMismatch("embedding table does not match vocabulary")

    def encode_pair(self, nl_tokens: list, code_tokens: list) -> dict:
        """Encode one (NL, code) pair, truncated to the configured maxima."""
        v = self.vocab
        nl = v.encode(nl_tokens[:self.config.max_nl_len])
        code = v.encode(code_tokens[:self.config.max_code_len])
        ids = np.concatenate([
            np.array([v.bos_id], dtype=np.int32), nl,
            np.array([v.sep_id], dtype=np.int32), code,
            np.array([v.eos_id], dtype=np.int32),
        ])
        seg = np.zeros(ids.shape[0], dtype=np.int32)
        code_start = nl.shape[0] + 2
        seg[code_start:] = 1
        return {"ids": ids, "seg": seg, "code_start": code_start,
                "code_len": code.shape[0]}

    def forward_rows(self, rows: list[dict], with_grads: bool = False):
        """Keep logits (B, T, 2) over the padded batch."""
        self._check_vocab()
        pad = self.vocab.pad_id
        ids = _pad_rows([r["ids"] for r in rows], pad)
        seg = _pad_rows([r["seg"] for r in rows], 0)
        valid = _valid_mask([r["ids"] for r in rows], ids.shape[1])
        bias = mask_bias(valid[:, None, None, :], self.store.dtype)
        if with_grads:
            x = self.emb(ids, seg)
            for blk in self.blocks:
                x = blk(x, bias)
            return self.head(x)
        x = self.emb.infer(ids, seg)
        for blk in self.blocks:
            x = blk.infer(x, bias)
        return self.head.infer(x)

    def backward_rows(self, dlogits: np.ndarray) -> None:
        dx = self.head.backward(dlogits)
        for blk in reversed(self.blocks):
            dx = blk.backward(dx)
        self.emb.backward(dx)

    def loss_rows(self, rows: list[dict], labels: list[np.ndarray],
                  with_grads: bool = False) -> float:
        """Mean over rows of the per-pair summed binary cross entropy."""
        logits = self.forward_rows(rows, with_grads=with_grads)
        B, T, _ = logits.shape
        code_mask = np.zeros((B, T), dtype=bool)
        lab = np.zeros((B, T), dtype=logits.dtype)
        for i, (r, l) in enumerate(zip(rows, labels)):
            s, n = r["code_start"], r["code_len"]
            if len(l) != n:
                raise VocabMismatch("labels do not match code length")
            code_mask[i, s:s + n] = True
            lab[i, s:s + n] = np.asarray(l, dtype=logits.dtype)
        logp = log_softmax(logits)
        per_pos = -(lab * logp[..., 1] + (1.0 - lab) * logp[..., 0])
        loss = float((per_pos * code_mask).sum() / B)
        if with_grads:
            target = np.stack([1.0 - lab, lab], axis=-1)
            dlogits = (np.exp(logp) - target) * code_mask[..., None] / B
            self.backward_rows(dlogits.astype(logits.dtype))
        return loss


def sketcher_forward(model: Sketcher, nl_tokens: list,
                     similar_tokens: list) -> np.ndarray:
    """Keep-class probabilities for each (truncated) similar-code token."""
    row = model.encode_pair(nl_tokens, similar_tokens)
    logits = model.forward_rows([row])
    s, n = row["code_start"], row["code_len"]
    return softmax(logits[0, s:s + n])[:, 1]


def sketcher_loss(p: np.ndarray, labels) -> float:
    """Summed binary cross entropy between keep probabilities and labels."""
    lab = np.asarray(labels, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if p.shape[0] != lab.shape[0]:
        raise VocabMismatch(
            f"{p.shape[0]} probabilities vs {lab.shape[0]} labels")
    q = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-(lab * np.log(q) + (1.0 - lab) * np.log(1.0 - q)).sum())


def predict_sketch(model: Sketcher, nl_tokens: list, similar_tokens: list,
                   threshold: float = None) -> Sketch:
    """Threshold keep probabilities, then assemble with placeholder merge."""
    t = model.config.keep_threshold if threshold is None else threshold
    if not (0.0 < t < 1.0):
        raise ConfigError("threshold must lie in (0, 1)")
    similar = list(similar_tokens)[:model.config.max_code_len]
    if not similar:
        return []
    p = sketcher_forward(model, nl_tokens, similar)
    keep = [bool(pi > t) for pi in p]
    return assemble_sketch(similar, keep)


class Editor:
    kind = "editor"

    def __init__(self, vocab: Vocabulary, config: TrainConfig, rng,
                 dtype=np.float32):
        config.validate()
        self.vocab = vocab
        self.config = config
        self.store = ParamStore(dtype)
        max_src = config.max_nl_len + config.max_code_len + 3
        max_tgt = config.max_code_len + 2
        self.emb = Embeddings(self.store, "emb", len(vocab),
                              max(max_src, max_tgt), config.d, rng)
        self.enc_blocks = [EncoderBlock(self.store, f"enc{i}", config.d,
                                        config.heads, rng)
                           for i in range(config.editor_layers)]
        self.dec_blocks = [DecoderBlock(self.store, f"dec{i}", config.d,
                                        config.heads, rng)
                           for i in range(config.editor_layers)]
        # output projection is tied to the embedding table

    def _check_vocab(self):
        if self.emb.tok.value.shape[0] != len(self.vocab):
            raise VocabMismatch("embedding table does not match vocabulary")

    def encode_source(self, nl_tokens: list, sketch_tokens: list) -> np.ndarray:
        v = self.vocab
        nl = v.encode(nl_tokens[:self.config.max_nl_len])
        sk = v.encode(sketch_tokens[:self.config.max_code_len])
        return np.concatenate([
            np.array([v.bos_id], dtype=np.int32), nl,
            np.array([v.sep_id], dtype=np.int32), sk,
            np.array([v.eos_id], dtype=np.int32),
        ])

    def encode_target(self, target_tokens: list):
        if len(target_tokens) > self.config.max_code_len:
            raise LengthOverflow(
                f"target length {len(target_tokens)} exceeds "
                f"max_code_len {self.config.max_code_len}")
        v = self.vocab
        tgt = v.encode(target_tokens)
        dec_in = np.concatenate([np.array([v.bos_id], dtype=np.int32), tgt])
        dec_out = np.concatenate([tgt, np.array([v.eos_id], dtype=np.int32)])
        return dec_in, dec_out

    def make_batch(self, items: list[tuple]) -> dict:
        """items: (nl_tokens, sketch_tokens, target_tokens) triples."""
        pad = self.vocab.pad_id
        enc_rows = [self.encode_source(nl, sk) for nl, sk, _ in items]
        dec_pairs = [self.encode_target(tgt) for _, _, tgt in items]
        enc_ids = _pad_rows(enc_rows, pad)
        dec_ids = _pad_rows([p[0] for p in dec_pairs], pad)
        targets = _pad_rows([p[1] for p in dec_pairs], pad)
        return {
            "enc_ids": enc_ids,
            "enc_valid": _valid_mask(enc_rows, enc_ids.shape[1]),
            "dec_ids": dec_ids,
            "dec_valid": _valid_mask([p[0] for p in dec_pairs],
                                     dec_ids.shape[1]),
            "targets": targets,
        }

    def _masks(self, enc_valid, dec_valid):
        dtype = self.store.dtype
        Tt = dec_valid.shape[1]
        causal = np.tril(np.ones((Tt, Tt), dtype=bool))
        causal_bias = mask_bias(
            causal[None, None, :, :] & dec_valid[:, None, None, :], dtype)
        mem_bias = mask_bias(enc_valid[:, None, None, :], dtype)
        return causal_bias, mem_bias

    def forward_batch(self, batch: dict, with_grads: bool = False):
        """Next-token logits (B, Tt, V) under teacher forcing."""
        self._check_vocab()
        enc_ids, enc_valid = batch["enc_ids"], batch["enc_valid"]
        dec_ids, dec_valid = batch["dec_ids"], batch["dec_valid"]
        enc_bias = mask_bias(enc_valid[:, None, None, :], self.store.dtype)
        causal_bias, mem_bias = self._masks(enc_valid, dec_valid)
        if with_grads:
            mem = self.emb(enc_ids)
            self._enc_emb_cache = self.emb._cache
            for blk in self.enc_blocks:
                mem = blk(mem, enc_bias)
            x = self.emb(dec_ids)
            self._dec_emb_cache = self.emb._cache
            for blk in self.dec_blocks:
                x = blk(x, mem, causal_bias, mem_bias)
            self._dec_out = x
            return x @ self.emb.tok.value.T
        mem = self.emb.infer(enc_ids)
        for blk in self.enc_blocks:
            mem = blk.infer(mem, enc_bias)
        x = self.emb.infer(dec_ids)
        for blk in self.dec_blocks:
            x = blk.infer(x, mem, causal_bias, mem_bias)
        return x @ self.emb.tok.value.T

    def backward_batch(self, dlogits: np.ndarray) -> None:
        d = self.config.d
        V = len(self.vocab)
        # tied projection: the gradient reaches both the decoder output and
        # the embedding table
        self.emb.tok.grad += dlogits.reshape(-1, V).T @ \
            self._dec_out.reshape(-1, d)
        dx = dlogits @ self.emb.tok.value
        dmem_total = None
        for blk in reversed(self.dec_blocks):
            dx, dmem = blk.backward(dx)
            dmem_total = dmem if dmem_total is None else dmem_total + dmem
        self.emb._cache = self._dec_emb_cache
        self.emb.backward(dx)
        for blk in reversed(self.enc_blocks):
            dmem_total = blk.backward(dmem_total)
        self.emb._cache = self._enc_emb_cache
        self.emb.backward(dmem_total)

    def loss_batch(self, batch: dict, with_grads: bool = False) -> float:
        """Mean over rows of teacher-forced CE summed over real positions."""
        logits = self.forward_batch(batch, with_grads=with_grads)
        targets, mask = batch["targets"], batch["dec_valid"]
        B, Tt, _ = logits.shape
        logp = log_softmax(logits)
        rows = np.arange(B)[:, None]
        cols = np.arange(Tt)[None, :]
        picked = logp[rows, cols, targets]
        loss = float(-(picked * mask).sum() / B)
        if with_grads:
            dlogits = np.exp(logp)
            dlogits[rows, cols, targets] -= 1.0
            dlogits *= mask[..., None] / np.float64(B)
            self.backward_batch(dlogits.astype(logits.dtype))
        return loss

    # -- incremental decoding ----------------------------------------------

    def begin_decode(self, nl_tokens: list, sketch_tokens: list) -> dict:
        """Encode the source once and set up per-layer decode caches."""
        self._check_vocab()
        enc_row = self.encode_source(nl_tokens, sketch_tokens)
        enc_ids = enc_row[None, :]
        mem = self.emb.infer(enc_ids)
        for blk in self.enc_blocks:
            mem = blk.infer(mem, None)  # single unpadded sequence
        dtype = self.store.dtype
        h, hd = self.config.heads, self.config.d // self.config.heads
        state = {
            "t": 0,
            "cross_kv": [blk.cross_attn.project_kv(mem)
                         for blk in self.dec_blocks],
            "self_k": [np.zeros((1, h, 0, hd), dtype=dtype)
                       for _ in self.dec_blocks],
            "self_v": [np.zeros((1, h, 0, hd), dtype=dtype)
                       for _ in self.dec_blocks],
        }
        return state

    def reorder_state(self, state: dict, parents: np.ndarray) -> None:
        """Gather per-beam self-attention caches after beam selection."""
        state["self_k"] = [k[parents] for k in state["self_k"]]
        state["self_v"] = [v[parents] for v in state["self_v"]]

    def decode_step(self, state: dict, last_ids: np.ndarray) -> np.ndarray:
        """Advance one position; returns next-token log-probs (n, V)."""
        n = last_ids.shape[0]
        if state["t"] >= self.config.max_code_len + 1:
            raise LengthOverflow("decoder position limit reached")
        x = self.emb.infer(last_ids[:, None].astype(np.int32),
                           pos_offset=state["t"])
        for i, blk in enumerate(self.dec_blocks):
            if state["self_k"][i].shape[0] != n:
                # first step after beam fan-out: broadcast the empty cache
                state["self_k"][i] = np.broadcast_to(
                    state["self_k"][i],
                    (n,) + state["self_k"][i].shape[1:]).copy()
                state["self_v"][i] = np.broadcast_to(
                    state["self_v"][i],
                    (n,) + state["self_v"][i].shape[1:]).copy()
            a, k, v = blk.self_attn.step_infer(x, state["self_k"][i],
                                               state["self_v"][i])
            state["self_k"][i], state["self_v"][i] = k, v
            x = blk.ln1.infer(x + a)
            ck, cv = state["cross_kv"][i]
            c = blk.cross_attn.infer_cached(x, ck, cv)
            x = blk.ln2.infer(x + c)
            x = blk.ln3.infer(x + blk.ff.infer(x))
        state["t"] += 1
        logits = x[:, 0, :] @ self.emb.tok.value.T
        return log_softmax(logits.astype(np.float64))


def editor_loss(model: Editor, nl_tokens: list, sketch_tokens: list,
                target_tokens: list) -> float:
    """Teacher-forced cross entropy for one triple, summed over the wrapped
    target positions (the target tokens plus the closing <eos>)."""
    batch = model.make_batch([(nl_tokens, sketch_tokens, target_tokens)])
    return model.loss_batch(batch)
