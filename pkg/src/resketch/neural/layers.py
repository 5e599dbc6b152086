"""Transformer building blocks in numpy with hand-written backward passes.

Every layer caches what its backward pass needs during the forward call, so
a layer instance supports one in-flight forward/backward pair at a time.
Blocks use post-layer-norm residual wiring.  Attention masks are boolean
"allowed" arrays broadcastable to (batch, heads, queries, keys); disallowed
scores are replaced by a large negative constant, and the corresponding
score gradients are zeroed.  Self-attention projects Q, K and V with one
fused matrix, cross-attention fuses K and V.
"""

from __future__ import annotations

import numpy as np

_NEG = -1e9


class Param:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


class ParamStore:
    """Ordered registry of named parameter tensors."""

    def __init__(self, dtype=np.float32):
        self.dtype = dtype
        self.params: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        p = Param(name, np.ascontiguousarray(value, dtype=self.dtype))
        self.params[name] = p
        return p

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad[...] = 0.0

    def n_params(self) -> int:
        return sum(p.value.size for p in self.params.values())


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_inplace(x: np.ndarray) -> np.ndarray:
    """Row softmax over the last axis, reusing the input buffer."""
    np.subtract(x, x.max(axis=-1, keepdims=True), out=x)
    np.exp(x, out=x)
    x /= x.sum(axis=-1, keepdims=True)
    return x


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def mask_bias(allowed: np.ndarray, dtype) -> np.ndarray:
    """Additive attention bias: 0 where allowed, a large negative where not.

    Disallowed attention weights underflow to exactly zero after the
    softmax, so the backward pass needs no separate masking.
    """
    return np.where(allowed, dtype(0.0), dtype(_NEG))


class Dense:
    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int, rng):
        self.w = store.add(f"{name}.w",
                           rng.normal(0.0, 0.02, size=(d_in, d_out)))
        self.b = store.add(f"{name}.b", np.zeros(d_out))
        self._x = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w.value + self.b.value

    def infer(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        d_in, d_out = self.w.value.shape
        self.w.grad += x.reshape(-1, d_in).T @ dy.reshape(-1, d_out)
        self.b.grad += dy.reshape(-1, d_out).sum(axis=0)
        return dy @ self.w.value.T


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, d: int, eps: float = 1e-5):
        self.g = store.add(f"{name}.g", np.ones(d))
        self.b = store.add(f"{name}.b", np.zeros(d))
        self.eps = eps
        self._cache = None

    def _norm(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        return xc * inv, inv

    def __call__(self, x: np.ndarray) -> np.ndarray:
        xhat, inv = self._norm(x)
        self._cache = (xhat, inv)
        return xhat * self.g.value + self.b.value

    def infer(self, x: np.ndarray) -> np.ndarray:
        xhat, _ = self._norm(x)
        return xhat * self.g.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv = self._cache
        axes = tuple(range(dy.ndim - 1))
        self.g.grad += (dy * xhat).sum(axis=axes)
        self.b.grad += dy.sum(axis=axes)
        dxhat = dy * self.g.value
        return inv * (dxhat
                      - dxhat.mean(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


def _split_heads(x, h, hd):
    B, T, _ = x.shape
    return np.ascontiguousarray(
        x.reshape(B, T, h, hd).transpose(0, 2, 1, 3))


def _join_heads(x):
    B, h, T, hd = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(B, T, h * hd)


class _AttentionCore:
    """Scaled dot-product attention over pre-split head tensors.

    ``bias`` is an additive mask from :func:`mask_bias`; masked weights are
    exactly zero after the softmax, so the gradient needs no re-masking.
    """

    def __init__(self, heads: int, head_dim: int):
        self.h = heads
        self.hd = head_dim
        self.scale = 1.0 / np.sqrt(head_dim)
        self._cache = None

    def forward(self, q, k, v, bias, keep_cache):
        scores = q @ k.transpose(0, 1, 3, 2)
        scores *= scores.dtype.type(self.scale)
        if bias is not None:
            scores += bias
        attn = softmax_inplace(scores)
        if keep_cache:
            self._cache = (q, k, v, attn)
        return attn @ v

    def backward(self, dctx):
        q, k, v, attn = self._cache
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        # reuse the dattn buffer for dscores
        dattn = dctx @ v.transpose(0, 1, 3, 2)
        dattn -= (dattn * attn).sum(axis=-1, keepdims=True)
        dattn *= attn
        dattn *= dattn.dtype.type(self.scale)
        dq = dattn @ k
        dk = dattn.transpose(0, 1, 3, 2) @ q
        return dq, dk, dv


class SelfAttention:
    """Multi-head self-attention with a fused QKV projection."""

    def __init__(self, store: ParamStore, name: str, d: int, heads: int, rng):
        if d % heads:
            raise ValueError("model width must be divisible by head count")
        self.d = d
        self.core = _AttentionCore(heads, d // heads)
        self.wqkv = Dense(store, f"{name}.wqkv", d, 3 * d, rng)
        self.wo = Dense(store, f"{name}.wo", d, d, rng)

    def _project(self, x, dense_call):
        h, hd = self.core.h, self.core.hd
        qkv = dense_call(x)
        d = self.d
        q = _split_heads(qkv[..., :d], h, hd)
        k = _split_heads(qkv[..., d:2 * d], h, hd)
        v = _split_heads(qkv[..., 2 * d:], h, hd)
        return q, k, v

    def __call__(self, x, bias):
        q, k, v = self._project(x, self.wqkv)
        ctx = self.core.forward(q, k, v, bias, keep_cache=True)
        return self.wo(_join_heads(ctx))

    def infer(self, x, bias):
        q, k, v = self._project(x, self.wqkv.infer)
        ctx = self.core.forward(q, k, v, bias, keep_cache=False)
        return self.wo.infer(_join_heads(ctx))

    def step_infer(self, x_new, k_cache, v_cache):
        """One decode step: returns (output, new_k, new_v) for the cache."""
        q, k_new, v_new = self._project(x_new, self.wqkv.infer)
        k = np.concatenate([k_cache, k_new], axis=2)
        v = np.concatenate([v_cache, v_new], axis=2)
        ctx = self.core.forward(q, k, v, None, keep_cache=False)
        return self.wo.infer(_join_heads(ctx)), k, v

    def backward(self, dout):
        dctx = _split_heads(self.wo.backward(dout), self.core.h, self.core.hd)
        dq, dk, dv = self.core.backward(dctx)
        dqkv = np.concatenate(
            [_join_heads(dq), _join_heads(dk), _join_heads(dv)], axis=-1)
        return self.wqkv.backward(dqkv)


class CrossAttention:
    """Multi-head attention over encoder memory with a fused KV projection."""

    def __init__(self, store: ParamStore, name: str, d: int, heads: int, rng):
        if d % heads:
            raise ValueError("model width must be divisible by head count")
        self.d = d
        self.core = _AttentionCore(heads, d // heads)
        self.wq = Dense(store, f"{name}.wq", d, d, rng)
        self.wkv = Dense(store, f"{name}.wkv", d, 2 * d, rng)
        self.wo = Dense(store, f"{name}.wo", d, d, rng)

    def _project_kv(self, mem, dense_call):
        h, hd = self.core.h, self.core.hd
        kv = dense_call(mem)
        k = _split_heads(kv[..., :self.d], h, hd)
        v = _split_heads(kv[..., self.d:], h, hd)
        return k, v

    def __call__(self, x, mem, bias):
        h, hd = self.core.h, self.core.hd
        q = _split_heads(self.wq(x), h, hd)
        k, v = self._project_kv(mem, self.wkv)
        ctx = self.core.forward(q, k, v, bias, keep_cache=True)
        return self.wo(_join_heads(ctx))

    def infer(self, x, mem, bias):
        h, hd = self.core.h, self.core.hd
        q = _split_heads(self.wq.infer(x), h, hd)
        k, v = self._project_kv(mem, self.wkv.infer)
        ctx = self.core.forward(q, k, v, bias, keep_cache=False)
        return self.wo.infer(_join_heads(ctx))

    def project_kv(self, mem):
        return self._project_kv(mem, self.wkv.infer)

    def infer_cached(self, x, k, v, bias=None):
        q = _split_heads(self.wq.infer(x), self.core.h, self.core.hd)
        ctx = self.core.forward(q, k, v, bias, keep_cache=False)
        return self.wo.infer(_join_heads(ctx))

    def backward(self, dout):
        dctx = _split_heads(self.wo.backward(dout), self.core.h, self.core.hd)
        dq, dk, dv = self.core.backward(dctx)
        dx = self.wq.backward(_join_heads(dq))
        dkv = np.concatenate([_join_heads(dk), _join_heads(dv)], axis=-1)
        dmem = self.wkv.backward(dkv)
        return dx, dmem


_GELU_C = 0.7978845608028654  # sqrt(2 / pi)
_GELU_A = 0.044715


def _gelu_parts(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * (x * x * x)))
    return 0.5 * x * (1.0 + t), t


class FeedForward:
    """Two dense layers around a GELU (smooth, so finite differences hold)."""

    def __init__(self, store: ParamStore, name: str, d: int, rng):
        self.lin1 = Dense(store, f"{name}.lin1", d, 4 * d, rng)
        self.lin2 = Dense(store, f"{name}.lin2", 4 * d, d, rng)
        self._h = None
        self._t = None

    def __call__(self, x):
        self._h = self.lin1(x)
        act, self._t = _gelu_parts(self._h)
        return self.lin2(act)

    def infer(self, x):
        return self.lin2.infer(_gelu_parts(self.lin1.infer(x))[0])

    def backward(self, dy):
        h, t = self._h, self._t
        dact = 0.5 * (1.0 + t) + \
            0.5 * h * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * (h * h))
        dh = self.lin2.backward(dy) * dact
        return self.lin1.backward(dh)


class EncoderBlock:
    def __init__(self, store: ParamStore, name: str, d: int, heads: int, rng):
        self.attn = SelfAttention(store, f"{name}.attn", d, heads, rng)
        self.ln1 = LayerNorm(store, f"{name}.ln1", d)
        self.ff = FeedForward(store, f"{name}.ff", d, rng)
        self.ln2 = LayerNorm(store, f"{name}.ln2", d)

    def __call__(self, x, bias):
        x = self.ln1(x + self.attn(x, bias))
        return self.ln2(x + self.ff(x))

    def infer(self, x, bias):
        x = self.ln1.infer(x + self.attn.infer(x, bias))
        return self.ln2.infer(x + self.ff.infer(x))

    def backward(self, dout):
        d2 = self.ln2.backward(dout)
        dx1 = d2 + self.ff.backward(d2)
        d1 = self.ln1.backward(dx1)
        return d1 + self.attn.backward(d1)


class DecoderBlock:
    def __init__(self, store: ParamStore, name: str, d: int, heads: int, rng):
        self.self_attn = SelfAttention(store, f"{name}.self", d, heads, rng)
        self.ln1 = LayerNorm(store, f"{name}.ln1", d)
        self.cross_attn = CrossAttention(store, f"{name}.cross", d, heads, rng)
        self.ln2 = LayerNorm(store, f"{name}.ln2", d)
        self.ff = FeedForward(store, f"{name}.ff", d, rng)
        self.ln3 = LayerNorm(store, f"{name}.ln3", d)

    def __call__(self, x, memory, causal_bias, mem_bias):
        x = self.ln1(x + self.self_attn(x, causal_bias))
        x = self.ln2(x + self.cross_attn(x, memory, mem_bias))
        return self.ln3(x + self.ff(x))

    def infer(self, x, memory, causal_bias, mem_bias):
        x = self.ln1.infer(x + self.self_attn.infer(x, causal_bias))
        x = self.ln2.infer(x + self.cross_attn.infer(x, memory, mem_bias))
        return self.ln3.infer(x + self.ff.infer(x))

    def backward(self, dout):
        d3 = self.ln3.backward(dout)
        dx2 = d3 + self.ff.backward(d3)
        d2 = self.ln2.backward(dx2)
        dq_c, dmem = self.cross_attn.backward(d2)
        dx1 = d2 + dq_c
        d1 = self.ln1.backward(dx1)
        return d1 + self.self_attn.backward(d1), dmem


class Embeddings:
    """Token + learned positional (+ optional segment) embeddings."""

    def __init__(self, store: ParamStore, name: str, vocab_size: int,
                 max_len: int, d: int, rng, segments: int = 0):
        self.tok = store.add(f"{name}.tok",
                             rng.normal(0.0, 0.02, size=(vocab_size, d)))
        self.pos = store.add(f"{name}.pos",
                             rng.normal(0.0, 0.02, size=(max_len, d)))
        self.seg = (store.add(f"{name}.seg",
                              rng.normal(0.0, 0.02, size=(segments, d)))
                    if segments else None)
        self._cache = None

    def _gather(self, ids, segs, pos_offset):
        T = ids.shape[1]
        positions = np.arange(pos_offset, pos_offset + T)
        out = self.tok.value[ids] + self.pos.value[positions][None, :, :]
        if segs is not None:
            out = out + self.seg.value[segs]
        return out, positions

    def __call__(self, ids, segs=None, pos_offset: int = 0):
        out, positions = self._gather(ids, segs, pos_offset)
        self._cache = (ids, segs, positions)
        return out

    def infer(self, ids, segs=None, pos_offset: int = 0):
        return self._gather(ids, segs, pos_offset)[0]

    def backward(self, dy):
        ids, segs, positions = self._cache
        d = dy.shape[-1]
        np.add.at(self.tok.grad, ids.reshape(-1), dy.reshape(-1, d))
        self.pos.grad[positions] += dy.sum(axis=0)
        if segs is not None:
            np.add.at(self.seg.grad, segs.reshape(-1), dy.reshape(-1, d))
