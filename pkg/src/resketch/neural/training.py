"""Training loops (Adam + global-norm clipping) and finite-difference checks.

Both trainers are deterministic under ``config.seed``: one stream
initializes parameters, a second drives batch shuffling.  Batches are formed
from length-sorted items so padding stays small; the batch order is
reshuffled each epoch.  When a dev set is supplied, the parameters from the
best dev-loss epoch are restored at the end (dev is used for early selection
only, never for gradient updates).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import EmptyTrainingSet, NonFiniteGradient
from .layers import ParamStore
from .models import Editor, Sketcher, TrainConfig


@dataclass
class TrainingStats:
    epoch_losses: list = field(default_factory=list)
    dev_losses: list = field(default_factory=list)
    steps: int = 0
    best_epoch: Optional[int] = None


class Adam:
    def __init__(self, store: ParamStore, lr: float, clip: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.clip = clip
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.value) for n, p in store.params.items()}
        self.v = {n: np.zeros_like(p.value) for n, p in store.params.items()}

    def step(self) -> None:
        self.t += 1
        if self.clip and self.clip > 0:
            total = 0.0
            for p in self.store.params.values():
                total += float((p.grad.astype(np.float64) ** 2).sum())
            norm = np.sqrt(total)
            if norm > self.clip:
                scale = self.store.dtype(self.clip / norm)
                for p in self.store.params.values():
                    p.grad *= scale
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.store.params.items():
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _snapshot(store: ParamStore) -> dict:
    return {n: p.value.copy() for n, p in store.params.items()}


def _restore(store: ParamStore, snap: dict) -> None:
    for n, p in store.params.items():
        p.value[...] = snap[n]


def _length_sorted_batches(lengths: list[int], batch_size: int):
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    return [order[i:i + batch_size]
            for i in range(0, len(order), batch_size)]


def _run_epochs(store, config: TrainConfig, batches, loss_on_batch,
                dev_loss: Optional[Callable[[], float]]):
    opt = Adam(store, config.learning_rate, config.grad_clip)
    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence(config.seed).spawn(2)[1])
    stats = TrainingStats()
    best = None
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(len(batches))
        total, count = 0.0, 0
        for bi in order:
            batch_idx = batches[bi]
            store.zero_grads()
            loss = loss_on_batch(batch_idx)
            total += loss * len(batch_idx)
            count += len(batch_idx)
            opt.step()
            stats.steps += 1
        stats.epoch_losses.append(total / count)
        if dev_loss is not None:
            d = dev_loss()
            stats.dev_losses.append(d)
            if best is None or d < best[0]:
                best = (d, len(stats.epoch_losses) - 1, _snapshot(store))
    if best is not None:
        stats.best_epoch = best[1]
        _restore(store, best[2])
    return stats


def train_sketcher(triples: list, vocab, config: TrainConfig,
                   dev_triples: Optional[list] = None,
                   dtype=np.float32):
    """triples: (nl_tokens, similar_tokens, keep_labels) tuples."""
    if not triples:
        raise EmptyTrainingSet("no sketcher training triples")
    config.validate()
    init_rng = np.random.default_rng(
        np.random.SeedSequence(config.seed).spawn(2)[0])
    model = Sketcher(vocab, config, init_rng, dtype=dtype)
    rows = [model.encode_pair(nl, sim) for nl, sim, _ in triples]
    labels = [np.asarray(lab[:model.config.max_code_len], dtype=np.float64)
              for _, _, lab in triples]
    batches = _length_sorted_batches([r["ids"].shape[0] for r in rows],
                                     config.batch_size)

    def loss_on_batch(batch_idx):
        return model.loss_rows([rows[i] for i in batch_idx],
                               [labels[i] for i in batch_idx],
                               with_grads=True)

    dev_loss = None
    if dev_triples:
        dev_rows = [model.encode_pair(nl, sim) for nl, sim, _ in dev_triples]
        dev_labels = [np.asarray(lab[:model.config.max_code_len],
                                 dtype=np.float64)
                      for _, _, lab in dev_triples]
        dev_batches = _length_sorted_batches(
            [r["ids"].shape[0] for r in dev_rows], config.batch_size)

        def dev_loss():
            total = 0.0
            for bi in dev_batches:
                total += model.loss_rows([dev_rows[i] for i in bi],
                                         [dev_labels[i] for i in bi]) * len(bi)
            return total / len(dev_rows)

    stats = _run_epochs(model.store, config, batches, loss_on_batch, dev_loss)
    return model, stats


def train_editor(triples: list, vocab, config: TrainConfig,
                 dev_triples: Optional[list] = None,
                 dtype=np.float32):
    """triples: (nl_tokens, sketch_tokens, target_tokens) tuples."""
    if not triples:
        raise EmptyTrainingSet("no editor training triples")
    config.validate()
    init_rng = np.random.default_rng(
        np.random.SeedSequence(config.seed).spawn(2)[0])
    model = Editor(vocab, config, init_rng, dtype=dtype)
    lengths = [len(nl) + 2 * len(sk) + 2 * len(tgt) for nl, sk, tgt in triples]
    batches = _length_sorted_batches(lengths, config.batch_size)
    prepared = {}

    def loss_on_batch(batch_idx):
        key = tuple(batch_idx)
        batch = prepared.get(key)
        if batch is None:
            batch = model.make_batch([triples[i] for i in batch_idx])
            prepared[key] = batch
        return model.loss_batch(batch, with_grads=True)

    dev_loss = None
    if dev_triples:
        dev_lengths = [len(nl) + 2 * len(sk) + 2 * len(tgt)
                       for nl, sk, tgt in dev_triples]
        dev_batches = [
            model.make_batch([dev_triples[i] for i in bi])
            for bi in _length_sorted_batches(dev_lengths, config.batch_size)
        ]

        def dev_loss():
            total = 0.0
            for b in dev_batches:
                total += model.loss_batch(b) * b["enc_ids"].shape[0]
            return total / len(dev_triples)

    stats = _run_epochs(model.store, config, batches, loss_on_batch, dev_loss)
    return model, stats


def cast_model(model, dtype):
    """Clone a model with its parameters cast to ``dtype``."""
    cls = type(model)
    clone = cls(model.vocab, model.config, np.random.default_rng(0),
                dtype=dtype)
    for name, p in model.store.params.items():
        clone.store.params[name].value[...] = p.value.astype(dtype)
    return clone


def grad_check(loss_fn: Callable[[bool], float], store: ParamStore,
               eps: float = 1e-4, seed: int = 0,
               samples_per_tensor: int = 200) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(with_grads)`` must recompute the same scalar loss on every
    call; with ``with_grads=True`` it must populate ``store`` gradients.
    Up to ``samples_per_tensor`` coordinates per tensor are probed.  Run
    this on a float64 model: float32 finite differences drown in rounding.
    """
    rng = np.random.default_rng(seed)
    store.zero_grads()
    loss_fn(True)
    analytic = {}
    for name, p in store.params.items():
        if not np.isfinite(p.grad).all():
            raise NonFiniteGradient(f"non-finite gradient in {name}")
        analytic[name] = p.grad.copy()
    worst = 0.0
    for name, p in store.params.items():
        flat = p.value.reshape(-1)
        size = flat.shape[0]
        if size <= samples_per_tensor:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=samples_per_tensor, replace=False)
        ga = analytic[name].reshape(-1)
        for c in coords:
            keep = flat[c]
            flat[c] = keep + eps
            up = loss_fn(False)
            flat[c] = keep - eps
            down = loss_fn(False)
            flat[c] = keep
            fd = (up - down) / (2.0 * eps)
            denom = max(abs(ga[c]), abs(fd), 1e-8)
            worst = max(worst, abs(ga[c] - fd) / denom)
    return worst
