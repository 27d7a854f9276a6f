"""Sentence edit model.

A retrieved template sentence is re-encoded by a bidirectional LSTM whose
initial hidden state is a learned map of the input embedding and the previous
sentence's context vector; the resulting context z feeds a deep LSTM decoder
that sees [token embedding; z] at every step. Decoding is greedy and can be
forced to begin with a typed prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import BOS_ID, EOS_ID
from .errors import CorpusError, ShapeMismatchError, TrainingError
from .nn import Adam, clip_global_norm, load_tensors, save_tensors
from .nn.lstm import lstm_backward, lstm_forward, lstm_step
from .nn.ops import log_softmax


@dataclass
class EditInput:
    """Everything one edit step conditions on."""

    template: list[int]
    embedding: np.ndarray
    prev_context: np.ndarray | None = None
    prefix: list[int] | None = None
    max_len: int = 40

    def __post_init__(self) -> None:
        if not self.template:
            raise CorpusError("edit input needs a nonempty template")
        if self.max_len < 1:
            raise CorpusError("max_len must be positive")
        if self.prefix and len(self.prefix) >= self.max_len:
            raise CorpusError("prefix must be shorter than max_len")


@dataclass
class EditorParams:
    vocab_size: int
    token_dim: int = 64
    hidden: int = 128
    feature_dim: int = 96
    enc_layers: int = 2
    dec_layers: int = 3
    bidirectional: bool = True
    max_len: int = 40
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_dirs(self) -> int:
        return 2 if self.bidirectional else 1

    def directions(self) -> tuple[str, ...]:
        return ("f", "b") if self.bidirectional else ("f",)

    @classmethod
    def init(cls, vocab_size: int, seed: int = 0, **kwargs) -> "EditorParams":
        p = cls(vocab_size=vocab_size, **kwargs)
        rng = np.random.default_rng(seed)
        h = p.hidden

        def w(*shape, fan):
            return rng.standard_normal(shape) / np.sqrt(fan)

        def lstm_tensors(prefix: str, in_dim: int):
            p.tensors[f"{prefix}_W"] = w(in_dim, 4 * h, fan=in_dim)
            p.tensors[f"{prefix}_U"] = w(h, 4 * h, fan=h)
            bias = np.zeros(4 * h)
            bias[h : 2 * h] = 1.0  # forget gate open at init
            p.tensors[f"{prefix}_b"] = bias

        p.tensors["emb"] = w(vocab_size, p.token_dim, fan=p.token_dim)
        p.tensors["cond_Wf"] = w(p.feature_dim, h, fan=p.feature_dim)
        p.tensors["cond_Wz"] = w(h, h, fan=h)
        for layer in range(p.enc_layers):
            in_dim = p.token_dim if layer == 0 else h * p.n_dirs
            for d in p.directions():
                lstm_tensors(f"enc{layer}{d}", in_dim)
        p.tensors["ctx_W"] = w(h * p.n_dirs, h, fan=h * p.n_dirs)
        p.tensors["ctx_b"] = np.zeros(h)
        for layer in range(p.dec_layers):
            in_dim = p.token_dim + h if layer == 0 else h
            lstm_tensors(f"dec{layer}", in_dim)
        p.tensors["out_W"] = w(h, vocab_size, fan=h)
        p.tensors["out_b"] = np.zeros(vocab_size)
        return p

    def save(self, path) -> None:
        meta = np.array(
            [self.vocab_size, self.token_dim, self.hidden, self.feature_dim,
             self.enc_layers, self.dec_layers, int(self.bidirectional), self.max_len],
            dtype=np.float64,
        )
        out = {"meta": meta}
        out.update({f"t.{k}": v for k, v in self.tensors.items()})
        save_tensors(path, out)

    @classmethod
    def load(cls, path) -> "EditorParams":
        raw = load_tensors(path)
        meta = [int(x) for x in raw["meta"]]
        p = cls(
            vocab_size=meta[0], token_dim=meta[1], hidden=meta[2], feature_dim=meta[3],
            enc_layers=meta[4], dec_layers=meta[5], bidirectional=bool(meta[6]),
            max_len=meta[7],
        )
        p.tensors = {k[2:]: v for k, v in raw.items() if k.startswith("t.")}
        return p


def _check_tokens(tokens: Sequence[int], vocab_size: int, what: str) -> None:
    for tok in tokens:
        if not 0 <= tok < vocab_size:
            raise CorpusError(f"{what} token id {tok} outside vocabulary of {vocab_size}")


# ---------------------------------------------------------------- encoder ---


def _encode_batch(params: EditorParams, tokens: np.ndarray, feats: np.ndarray,
                  z_prev: np.ndarray):
    """tokens (L, B) int, feats (B, Df), z_prev (B, H) -> z (B, H), cache."""
    t = params.tensors
    h0 = feats @ t["cond_Wf"] + z_prev @ t["cond_Wz"]
    c0 = np.zeros_like(h0)
    x = t["emb"][tokens]  # (L, B, E)
    layer_caches = []
    finals = None
    for layer in range(params.enc_layers):
        name = f"enc{layer}"
        hf_seq, (hf, _), cache_f = lstm_forward(
            x, h0, c0, t[f"{name}f_W"], t[f"{name}f_U"], t[f"{name}f_b"]
        )
        if params.bidirectional:
            hb_seq, (hb, _), cache_b = lstm_forward(
                x[::-1], h0, c0, t[f"{name}b_W"], t[f"{name}b_U"], t[f"{name}b_b"]
            )
            x = np.concatenate([hf_seq, hb_seq[::-1]], axis=2)
            finals = np.concatenate([hf, hb], axis=1)
            layer_caches.append((cache_f, cache_b))
        else:
            x = hf_seq
            finals = hf
            layer_caches.append((cache_f, None))
    z = finals @ t["ctx_W"] + t["ctx_b"]
    cache = (tokens, feats, z_prev, layer_caches, finals)
    return z, cache


def _encode_backward(dz: np.ndarray, cache, params: EditorParams,
                     grads: dict[str, np.ndarray]) -> None:
    t = params.tensors
    tokens, feats, z_prev, layer_caches, finals = cache
    h = params.hidden

    grads["ctx_W"] += finals.T @ dz
    grads["ctx_b"] += dz.sum(axis=0)
    d_finals = dz @ t["ctx_W"].T

    batch = dz.shape[0]
    d_h0 = np.zeros((batch, h))
    d_x_above = None  # gradient on the current layer's output sequence
    for layer in range(params.enc_layers - 1, -1, -1):
        name = f"enc{layer}"
        cache_f, cache_b = layer_caches[layer]
        length = len(cache_f[0])
        if d_x_above is None:
            d_seq_f = np.zeros((length, batch, h))
            d_seq_b = np.zeros((length, batch, h))
        else:
            d_seq_f = d_x_above[:, :, :h]
            d_seq_b = d_x_above[::-1, :, h:] if params.bidirectional else None
        if layer == params.enc_layers - 1:
            dh_last_f = d_finals[:, :h]
            dh_last_b = d_finals[:, h:] if params.bidirectional else None
        else:
            dh_last_f = np.zeros((batch, h))
            dh_last_b = np.zeros((batch, h)) if params.bidirectional else None
        zero_c = np.zeros((batch, h))

        dx_f, dh0_f, _, dW, dU, db = lstm_backward(d_seq_f, dh_last_f, zero_c, cache_f)
        grads[f"{name}f_W"] += dW
        grads[f"{name}f_U"] += dU
        grads[f"{name}f_b"] += db
        d_h0 += dh0_f
        d_x = dx_f
        if params.bidirectional:
            dx_b, dh0_b, _, dW, dU, db = lstm_backward(d_seq_b, dh_last_b, zero_c, cache_b)
            grads[f"{name}b_W"] += dW
            grads[f"{name}b_U"] += dU
            grads[f"{name}b_b"] += db
            d_h0 += dh0_b
            d_x = d_x + dx_b[::-1]
        d_x_above = d_x

    grads["cond_Wf"] += feats.T @ d_h0
    grads["cond_Wz"] += z_prev.T @ d_h0
    np.add.at(grads["emb"], tokens.reshape(-1), d_x_above.reshape(-1, params.token_dim))


# ---------------------------------------------------------------- decoder ---


def _decode_train(params: EditorParams, z: np.ndarray, dec_in: np.ndarray,
                  targets: np.ndarray):
    """Teacher-forced pass: returns (summed CE, logit grads ready dict, dz).

    dec_in/targets are (Lt, B) int arrays; loss is summed over tokens here,
    normalization happens in the caller.
    """
    t = params.tensors
    length, batch = dec_in.shape
    h = params.hidden
    token_vecs = t["emb"][dec_in]  # (Lt, B, E)
    z_tiled = np.broadcast_to(z, (length, batch, h))
    x = np.concatenate([token_vecs, z_tiled], axis=2)
    zeros = np.zeros((batch, h))
    caches = []
    for layer in range(params.dec_layers):
        name = f"dec{layer}"
        x, _, cache = lstm_forward(x, zeros, zeros, t[f"{name}_W"], t[f"{name}_U"], t[f"{name}_b"])
        caches.append(cache)

    flat_h = x.reshape(length * batch, h)
    logits = flat_h @ t["out_W"] + t["out_b"]
    logp = log_softmax(logits)
    flat_targets = targets.reshape(-1)
    picked = logp[np.arange(flat_targets.size), flat_targets]
    loss_sum = -float(picked.sum())

    dlogits = np.exp(logp)
    dlogits[np.arange(flat_targets.size), flat_targets] -= 1.0

    grads: dict[str, np.ndarray] = {k: np.zeros_like(v) for k, v in t.items()}
    grads["out_W"] += flat_h.T @ dlogits
    grads["out_b"] += dlogits.sum(axis=0)
    d_x = (dlogits @ t["out_W"].T).reshape(length, batch, h)
    zero_last = np.zeros((batch, h))
    for layer in range(params.dec_layers - 1, -1, -1):
        name = f"dec{layer}"
        d_x, _, _, dW, dU, db = lstm_backward(d_x, zero_last, zero_last, caches[layer])
        grads[f"{name}_W"] += dW
        grads[f"{name}_U"] += dU
        grads[f"{name}_b"] += db
    np.add.at(grads["emb"], dec_in.reshape(-1), d_x[:, :, : params.token_dim].reshape(-1, params.token_dim))
    dz = d_x[:, :, params.token_dim :].sum(axis=0)
    return loss_sum, grads, dz


def _batch_loss_and_grads(params: EditorParams, batch: dict):
    z, enc_cache = _encode_batch(params, batch["template"], batch["embedding"], batch["prev_context"])
    loss_sum, grads, dz = _decode_train(params, z, batch["dec_in"], batch["targets"])
    _encode_backward(dz, enc_cache, params, grads)
    n_tokens = batch["targets"].size
    for g in grads.values():
        g /= n_tokens
    return loss_sum / n_tokens, grads, n_tokens


# ----------------------------------------------------------------- public ---


def encode_template(edit: EditInput, params: EditorParams) -> np.ndarray:
    """Context vector for one template under (embedding, previous context)."""
    _check_tokens(edit.template, params.vocab_size, "template")
    if edit.embedding.shape != (params.feature_dim,):
        raise ShapeMismatchError(
            f"embedding shape {edit.embedding.shape} does not match ({params.feature_dim},)"
        )
    z_prev = edit.prev_context
    if z_prev is None:
        z_prev = np.zeros(params.hidden)
    elif z_prev.shape != (params.hidden,):
        raise ShapeMismatchError(
            f"prev_context shape {z_prev.shape} does not match ({params.hidden},)"
        )
    tokens = np.asarray(edit.template, dtype=np.int64)[:, None]
    z, _ = _encode_batch(params, tokens, edit.embedding[None, :], z_prev[None, :])
    return z[0]


def decode_sentence(z: np.ndarray, params: EditorParams,
                    prefix: Sequence[int] | None = None,
                    max_len: int | None = None) -> list[int]:
    """Greedy decode from a context vector.

    A prefix is emitted verbatim (it counts against max_len and ignores the
    end token); free steps take the argmax, ties resolved to the lowest
    token id, and stop on the end token.
    """
    t = params.tensors
    limit = max_len if max_len is not None else params.max_len
    forced = list(prefix or [])
    _check_tokens(forced, params.vocab_size, "prefix")
    if z.shape != (params.hidden,):
        raise ShapeMismatchError(f"context shape {z.shape} does not match ({params.hidden},)")

    states = [(np.zeros((1, params.hidden)), np.zeros((1, params.hidden)))
              for _ in range(params.dec_layers)]
    z_row = z[None, :]
    next_in = BOS_ID
    result: list[int] = []
    while len(result) < limit:
        x = np.concatenate([t["emb"][next_in][None, :], z_row], axis=1)
        for layer in range(params.dec_layers):
            name = f"dec{layer}"
            h, c = lstm_step(x, *states[layer], t[f"{name}_W"], t[f"{name}_U"], t[f"{name}_b"])
            states[layer] = (h, c)
            x = h
        if len(result) < len(forced):
            tok = forced[len(result)]
        else:
            logits = (x @ t["out_W"] + t["out_b"])[0]
            tok = int(np.argmax(logits))
            if tok == EOS_ID:
                break
        result.append(tok)
        next_in = tok
    return result


def edit_sentence(edit: EditInput, params: EditorParams) -> tuple[list[int], np.ndarray]:
    """Encode the template and decode the edited sentence; returns (tokens, z)."""
    z = encode_template(edit, params)
    tokens = decode_sentence(z, params, prefix=edit.prefix, max_len=edit.max_len)
    return tokens, z


@dataclass
class EditorTrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 128
    clip_norm: float = 5.0
    seed: int = 0


def _bucket_batches(params: EditorParams, pairs, batch_size: int) -> list[dict]:
    buckets: dict[tuple[int, int], list[tuple[EditInput, list[int]]]] = {}
    for edit, target in pairs:
        if not target:
            raise CorpusError("training target must be nonempty")
        _check_tokens(edit.template, params.vocab_size, "template")
        _check_tokens(target, params.vocab_size, "target")
        buckets.setdefault((len(edit.template), len(target)), []).append((edit, target))
    batches = []
    for key in sorted(buckets):
        group = buckets[key]
        for start in range(0, len(group), batch_size):
            chunk = group[start : start + batch_size]
            templates = np.array([e.template for e, _ in chunk], dtype=np.int64).T
            feats = np.array([e.embedding for e, _ in chunk])
            prevs = np.array(
                [np.zeros(params.hidden) if e.prev_context is None else e.prev_context
                 for e, _ in chunk]
            )
            tgt = np.array([tg for _, tg in chunk], dtype=np.int64)
            dec_in = np.concatenate(
                [np.full((len(chunk), 1), BOS_ID, dtype=np.int64), tgt[:, :-1]], axis=1
            ).T
            batches.append(
                {
                    "template": templates,
                    "embedding": feats,
                    "prev_context": prevs,
                    "dec_in": dec_in,
                    "targets": tgt.T,
                }
            )
    return batches


def train_editor(pairs, params: EditorParams, config: EditorTrainConfig | None = None) -> EditorParams:
    """Teacher-forced training with Adam and global-norm clipping.

    `pairs` is a sequence of (EditInput, target token ids); the end token is
    appended internally. Batches group identical (template, target) lengths;
    batch order is reshuffled deterministically per epoch from the seed.
    """
    config = config or EditorTrainConfig()
    prepared = [(e, list(tg) + [EOS_ID]) for e, tg in pairs]
    batches = _bucket_batches(params, prepared, config.batch_size)
    if not batches:
        raise CorpusError("no training pairs")
    opt = Adam(params.tensors, lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(batches))
        total, tokens_seen = 0.0, 0
        for b in order:
            batch = batches[int(b)]
            loss, grads, n_tokens = _batch_loss_and_grads(params, batch)
            if not np.isfinite(loss):
                raise TrainingError(f"editor loss became non-finite in epoch {epoch}")
            clip_global_norm(grads, config.clip_norm)
            opt.step(params.tensors, grads)
            total += loss * n_tokens
            tokens_seen += n_tokens
        params.loss_history.append(total / tokens_seen)
    return params


def editor_gradient_check(params: EditorParams, pairs, tolerance: float | None = None,
                          **kwargs) -> float:
    """Finite-difference check of one prepared batch against the analytic pass."""
    from .nn import gradient_check

    prepared = [(e, list(tg) + [EOS_ID]) for e, tg in pairs]
    batches = _bucket_batches(params, prepared, batch_size=len(prepared))
    if len(batches) != 1:
        raise CorpusError("gradient check needs pairs of identical lengths")
    batch = batches[0]

    def fn(tensors):
        params.tensors = tensors
        loss, grads, _ = _batch_loss_and_grads(params, batch)
        return loss, grads

    return gradient_check(fn, params.tensors, tolerance=tolerance, **kwargs)
