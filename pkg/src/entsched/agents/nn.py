"""Pre-norm Transformer encoder and two-layer perceptron with hand-written
backward passes, on plain numpy arrays.

Parameters live in an ordered ``name -> ndarray`` dict so that checkpoints
and the optimizer can walk them in a fixed order.  Every ``forward`` returns
the output and a cache; ``backward`` consumes the cache and the output
gradient and returns a gradient dict with the same keys as ``params``.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..errors import ConfigError
from .encoding import N_DIM, QUBIT_DIM

VARIANTS = ("qupairs", "qubit", "fc")
LN_EPS = 1e-5


@dataclass
class ModelConfig:
    variant: str = "qupairs"
    blocks: int = 3
    embed_dim: int = 32
    heads: int = 1
    ff_dim: int = 64
    qubit_variant_embed: int = 320
    qubit_variant_ff: int = 640
    qubit_variant_blocks: int = 1
    fc_hidden: int = 1000
    fc_n_qubits: int | None = None
    seed: int = 0

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        e, h, _, b = self.dims()
        if self.variant != "fc":
            if e % h:
                raise ConfigError(f"embed_dim {e} is not divisible by heads {h}")
            if b < 1:
                raise ConfigError("need at least one block")
        elif not self.fc_n_qubits or self.fc_n_qubits < 2:
            raise ConfigError("the fc variant needs fc_n_qubits >= 2")
        return self

    def dims(self) -> tuple[int, int, int, int]:
        """``(embed, heads, ff, blocks)`` actually used by this variant."""
        if self.variant == "qubit":
            return self.qubit_variant_embed, self.heads, self.qubit_variant_ff, self.qubit_variant_blocks
        return self.embed_dim, self.heads, self.ff_dim, self.blocks

    @property
    def n_dim(self) -> int:
        return QUBIT_DIM if self.variant == "qubit" else N_DIM


def _xavier(rng, fan_in, fan_out, dtype):
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype)


# --- primitive layers ------------------------------------------------------

def layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xh = (x - mu) * inv
    return xh * g + b, (xh, inv)


def layer_norm_backward(dy, g, cache):
    xh, inv = cache
    dxh = dy * g
    dx = inv * (dxh - dxh.mean(axis=-1, keepdims=True) - xh * (dxh * xh).mean(axis=-1, keepdims=True))
    return dx, (dy * xh).sum(axis=0), dy.sum(axis=0)


def softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def _split(x, h):
    t, e = x.shape
    return x.reshape(t, h, e // h).transpose(1, 0, 2)


def _merge(x):
    h, t, d = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * d)


# --- transformer encoder ---------------------------------------------------

class Encoder:
    """Bidirectional encoder: embed, ``blocks`` pre-norm blocks, final norm,
    scalar head per token."""

    def __init__(self, config: ModelConfig, params: OrderedDict | None = None, dtype=np.float32):
        self.config = config.validate()
        self.embed, self.heads, self.ff, self.n_blocks = config.dims()
        self.n_dim = config.n_dim
        self.params = params if params is not None else self.init_params(dtype)

    def init_params(self, dtype) -> OrderedDict:
        rng = rngmod.stream(self.config.seed, rngmod.INIT)
        e, f = self.embed, self.ff
        p = OrderedDict()
        p["embed.w"] = _xavier(rng, self.n_dim, e, dtype)
        p["embed.b"] = np.zeros(e, dtype)
        for k in range(self.n_blocks):
            pre = f"block{k}."
            p[pre + "ln1.g"] = np.ones(e, dtype)
            p[pre + "ln1.b"] = np.zeros(e, dtype)
            for m in ("q", "k", "v", "o"):
                p[pre + f"attn.w{m}"] = _xavier(rng, e, e, dtype)
                p[pre + f"attn.b{m}"] = np.zeros(e, dtype)
            p[pre + "ln2.g"] = np.ones(e, dtype)
            p[pre + "ln2.b"] = np.zeros(e, dtype)
            p[pre + "ff.w1"] = _xavier(rng, e, f, dtype)
            p[pre + "ff.b1"] = np.zeros(f, dtype)
            p[pre + "ff.w2"] = _xavier(rng, f, e, dtype)
            p[pre + "ff.b2"] = np.zeros(e, dtype)
        p["lnf.g"] = np.ones(e, dtype)
        p["lnf.b"] = np.zeros(e, dtype)
        # small head so an untrained model barely perturbs the greedy matrix
        p["head.w"] = (0.1 * _xavier(rng, e, 1, dtype)).reshape(e)
        p["head.b"] = np.zeros(1, dtype)
        return p

    def _attention(self, a, pre, chunk):
        p = self.params
        h = self.heads
        q = _split(a @ p[pre + "attn.wq"] + p[pre + "attn.bq"], h)
        k = _split(a @ p[pre + "attn.wk"] + p[pre + "attn.bk"], h)
        v = _split(a @ p[pre + "attn.wv"] + p[pre + "attn.bv"], h)
        scale = 1.0 / math.sqrt(q.shape[-1])
        t = a.shape[0]
        if chunk is None or chunk >= t:
            probs = softmax((q @ k.transpose(0, 2, 1)) * scale)
            o = probs @ v
        else:
            # query blocks keep memory at chunk x T per head
            probs = None
            o = np.empty_like(q)
            kt = k.transpose(0, 2, 1)
            for s in range(0, t, chunk):
                o[:, s:s + chunk] = softmax((q[:, s:s + chunk] @ kt) * scale) @ v
        om = _merge(o)
        out = om @ p[pre + "attn.wo"] + p[pre + "attn.bo"]
        return out, (a, q, k, v, probs, om, scale)

    def _attention_backward(self, dout, pre, cache, grads):
        p = self.params
        a, q, k, v, probs, om, scale = cache
        grads[pre + "attn.wo"] = om.T @ dout
        grads[pre + "attn.bo"] = dout.sum(axis=0)
        do = _split(dout @ p[pre + "attn.wo"].T, self.heads)
        dprobs = do @ v.transpose(0, 2, 1)
        dv = probs.transpose(0, 2, 1) @ do
        ds = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 2, 1) @ q
        da = np.zeros_like(a)
        for m, d in (("q", dq), ("k", dk), ("v", dv)):
            dm = _merge(d)
            grads[pre + f"attn.w{m}"] = a.T @ dm
            grads[pre + f"attn.b{m}"] = dm.sum(axis=0)
            da += dm @ p[pre + f"attn.w{m}"].T
        return da

    def forward(self, x: np.ndarray, chunk: int | None = None, keep: bool = False):
        """Per-token scalar predictions for ``x`` of shape ``(T, n_dim)``.

        ``chunk`` bounds attention memory at inference; it cannot be combined
        with ``keep`` (the backward pass needs full attention maps)."""
        if x.ndim != 2 or x.shape[1] != self.n_dim:
            raise ValueError(f"expected tokens of width {self.n_dim}, got shape {x.shape}")
        if keep and chunk is not None:
            raise ValueError("chunked attention is inference-only")
        p = self.params
        x = x.astype(p["embed.w"].dtype, copy=False)
        caches = []
        hcur = x @ p["embed.w"] + p["embed.b"]
        for k in range(self.n_blocks):
            pre = f"block{k}."
            a, c_ln1 = layer_norm(hcur, p[pre + "ln1.g"], p[pre + "ln1.b"])
            att, c_att = self._attention(a, pre, chunk)
            hmid = hcur + att
            b, c_ln2 = layer_norm(hmid, p[pre + "ln2.g"], p[pre + "ln2.b"])
            z1 = b @ p[pre + "ff.w1"] + p[pre + "ff.b1"]
            r = np.maximum(z1, 0.0)
            hcur = hmid + r @ p[pre + "ff.w2"] + p[pre + "ff.b2"]
            if keep:
                caches.append((c_ln1, c_att, c_ln2, b, z1, r))
        y, c_lnf = layer_norm(hcur, p["lnf.g"], p["lnf.b"])
        out = y @ p["head.w"] + p["head.b"][0]
        cache = (x, caches, c_lnf, y) if keep else None
        return out, cache

    def backward(self, cache, dout: np.ndarray) -> OrderedDict:
        p = self.params
        x, caches, c_lnf, y = cache
        grads = OrderedDict()
        grads["head.w"] = y.T @ dout
        grads["head.b"] = np.array([dout.sum()], dtype=dout.dtype)
        dy = np.outer(dout, p["head.w"])
        dh, grads["lnf.g"], grads["lnf.b"] = layer_norm_backward(dy, p["lnf.g"], c_lnf)
        for k in reversed(range(self.n_blocks)):
            pre = f"block{k}."
            c_ln1, c_att, c_ln2, b, z1, r = caches[k]
            grads[pre + "ff.w2"] = r.T @ dh
            grads[pre + "ff.b2"] = dh.sum(axis=0)
            dz1 = (dh @ p[pre + "ff.w2"].T) * (z1 > 0)
            grads[pre + "ff.w1"] = b.T @ dz1
            grads[pre + "ff.b1"] = dz1.sum(axis=0)
            db = dz1 @ p[pre + "ff.w1"].T
            dx2, grads[pre + "ln2.g"], grads[pre + "ln2.b"] = layer_norm_backward(db, p[pre + "ln2.g"], c_ln2)
            dhmid = dh + dx2
            da = self._attention_backward(dhmid, pre, c_att, grads)
            dx1, grads[pre + "ln1.g"], grads[pre + "ln1.b"] = layer_norm_backward(da, p[pre + "ln1.g"], c_ln1)
            dh = dhmid + dx1
        grads["embed.w"] = x.T @ dh
        grads["embed.b"] = dh.sum(axis=0)
        return OrderedDict((name, grads[name]) for name in p)


# --- fully connected baseline --------------------------------------------

class FCNet:
    """Two hidden ReLU layers over the flattened token matrix.

    The input width is fixed by ``fc_n_qubits``; other system sizes are
    rejected."""

    def __init__(self, config: ModelConfig, params: OrderedDict | None = None, dtype=np.float32):
        self.config = config.validate()
        self.n_qubits = config.fc_n_qubits
        self.n_dim = config.n_dim
        self.params = params if params is not None else self.init_params(dtype)

    def init_params(self, dtype) -> OrderedDict:
        rng = rngmod.stream(self.config.seed, rngmod.INIT)
        n2 = self.n_qubits ** 2
        d, h = n2 * self.n_dim, self.config.fc_hidden
        p = OrderedDict()
        p["fc1.w"] = _xavier(rng, d, h, dtype)
        p["fc1.b"] = np.zeros(h, dtype)
        p["fc2.w"] = _xavier(rng, h, h, dtype)
        p["fc2.b"] = np.zeros(h, dtype)
        p["out.w"] = 0.1 * _xavier(rng, h, n2, dtype)
        p["out.b"] = np.zeros(n2, dtype)
        return p

    def forward(self, x: np.ndarray, chunk: int | None = None, keep: bool = False):
        n2 = self.n_qubits ** 2
        if x.shape != (n2, self.n_dim):
            raise ValueError(
                f"fc model was built for {self.n_qubits} qubits ({n2} tokens of width {self.n_dim}), got tokens of shape {x.shape}"
            )
        p = self.params
        v = x.astype(p["fc1.w"].dtype, copy=False).reshape(-1)
        z1 = v @ p["fc1.w"] + p["fc1.b"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["fc2.w"] + p["fc2.b"]
        h2 = np.maximum(z2, 0.0)
        out = h2 @ p["out.w"] + p["out.b"]
        return out, ((v, z1, h1, z2, h2) if keep else None)

    def backward(self, cache, dout: np.ndarray) -> OrderedDict:
        p = self.params
        v, z1, h1, z2, h2 = cache
        g = OrderedDict()
        g["out.w"] = np.outer(h2, dout)
        g["out.b"] = dout.copy()
        dz2 = (dout @ p["out.w"].T) * (z2 > 0)
        g["fc2.w"] = np.outer(h1, dz2)
        g["fc2.b"] = dz2
        dz1 = (dz2 @ p["fc2.w"].T) * (z1 > 0)
        g["fc1.w"] = np.outer(v, dz1)
        g["fc1.b"] = dz1
        return OrderedDict((name, g[name]) for name in p)


def build_model(config: ModelConfig, params: OrderedDict | None = None, dtype=np.float32):
    config.validate()
    if config.variant == "fc":
        return FCNet(config, params, dtype)
    return Encoder(config, params, dtype)


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    m = mask.astype(bool)
    if not m.any():
        return 0.0
    d = pred[m] - target[m]
    return float((d * d).mean())


def batch_loss_and_grads(model, batch) -> tuple[float, OrderedDict]:
    """Masked mean-squared error over every unmasked token of every sample.

    ``batch`` is a sequence of ``(tokens, targets, mask)``.  Tokens with
    ``mask == 0`` contribute neither to the loss nor to the gradient."""
    total = sum(int(np.count_nonzero(m)) for _, _, m in batch)
    grads = OrderedDict((k, np.zeros_like(v)) for k, v in model.params.items())
    if total == 0:
        return 0.0, grads
    loss = 0.0
    for tokens, target, mask in batch:
        m = mask.astype(bool)
        if not m.any():
            continue
        pred, cache = model.forward(tokens, keep=True)
        diff = np.where(m, pred - target, 0.0).astype(pred.dtype)
        loss += float((diff.astype(np.float64) ** 2).sum())
        g = model.backward(cache, (2.0 / total) * diff)
        for k in grads:
            grads[k] += g[k]
    return loss / total, grads


class Adam:
    def __init__(self, params: OrderedDict, lr: float = 3e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.t = 0
        self.m = OrderedDict((k, np.zeros_like(v)) for k, v in params.items())
        self.v = OrderedDict((k, np.zeros_like(v)) for k, v in params.items())

    def step(self, params: OrderedDict, grads: OrderedDict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
