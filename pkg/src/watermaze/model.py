"""GPT-2 style decoder-only Q-network.

Observation windows are embedded linearly, offset by a learned positional
table, passed through pre-LN causal transformer blocks and a final layer
norm, and projected to one Q-value per action at every position.

The per-head projections W_i^Q, W_i^K, W_i^V are stored side by side as
column blocks of one [d, h*d_k] matrix per layer, so head ``i`` owns
columns ``i*d_k:(i+1)*d_k``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 128
    num_layers: int = 2
    num_heads: int = 8
    ffn_dim: int = 512
    num_actions: int = 4
    max_seq_len: int = 45
    dropout_p: float = 0.4
    obs_dim: int = 24
    distance_scale: float = 1.0 / 20.0

    def __post_init__(self):
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be at least 1")
        if self.num_actions != 4:
            raise ValueError("the maze has exactly 4 actions")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")

    @property
    def head_dim(self):
        return self.embed_dim // self.num_heads

    @classmethod
    def for_maze(cls, maze_radius=10.0, **kw):
        return cls(distance_scale=1.0 / (2.0 * maze_radius), **kw)


def parameter_count(cfg):
    d, f = cfg.embed_dim, cfg.ffn_dim
    per_layer = 4 * d * d + 4 * d + d * f + f + f * d + d
    return (
        cfg.obs_dim * d + d
        + cfg.max_seq_len * d
        + cfg.num_layers * per_layer
        + 2 * d
        + d * cfg.num_actions + cfg.num_actions
    )


def init_params(cfg, rng):
    """Normal(0, 0.02) matrices, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(rng)
    d, f = cfg.embed_dim, cfg.ffn_dim

    def normal(*shape):
        return Tensor(rng.normal(0.0, 0.02, size=shape), requires_grad=True)

    def const(value, *shape):
        return Tensor(np.full(shape, value), requires_grad=True)

    p = OrderedDict()
    p["embed.w"] = normal(cfg.obs_dim, d)
    p["embed.b"] = const(0.0, d)
    p["pos"] = normal(cfg.max_seq_len, d)
    for i in range(cfg.num_layers):
        pre = f"layers.{i}."
        p[pre + "ln1.g"] = const(1.0, d)
        p[pre + "ln1.b"] = const(0.0, d)
        p[pre + "attn.w_q"] = normal(d, d)
        p[pre + "attn.w_k"] = normal(d, d)
        p[pre + "attn.w_v"] = normal(d, d)
        p[pre + "attn.w_o"] = normal(d, d)
        p[pre + "ln2.g"] = const(1.0, d)
        p[pre + "ln2.b"] = const(0.0, d)
        p[pre + "ffn.w1"] = normal(d, f)
        p[pre + "ffn.b1"] = const(0.0, f)
        p[pre + "ffn.w2"] = normal(f, d)
        p[pre + "ffn.b2"] = const(0.0, d)
    p["ln_f.g"] = const(1.0, d)
    p["ln_f.b"] = const(0.0, d)
    p["head.w"] = normal(d, cfg.num_actions)
    p["head.b"] = const(0.0, cfg.num_actions)
    return p


def attention(q, k, v, causal=True):
    """Scaled dot-product attention over the last two axes."""
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = ag.matmul(q, ag.transpose(k, _swap_last(k.ndim))) * scale
    return ag.matmul(ag.masked_softmax(scores, causal=causal), v)


def _swap_last(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return axes


def multi_head(x, w_q, w_k, w_v, w_o, num_heads):
    """Causal multi-head self-attention of x [batch, n, d]."""
    b, n, d = x.shape
    dk = w_q.shape[1] // num_heads

    def split(t):
        return ag.transpose(ag.reshape(t, (b, n, num_heads, dk)), (0, 2, 1, 3))

    heads = attention(split(x @ w_q), split(x @ w_k), split(x @ w_v), causal=True)
    concat = ag.reshape(ag.transpose(heads, (0, 2, 1, 3)), (b, n, num_heads * dk))
    return concat @ w_o


def decoder_block(x, p, prefix, cfg, training=False, rng=None):
    drop = cfg.dropout_p
    h = ag.layer_norm(x, p[prefix + "ln1.g"], p[prefix + "ln1.b"])
    h = multi_head(
        h,
        p[prefix + "attn.w_q"],
        p[prefix + "attn.w_k"],
        p[prefix + "attn.w_v"],
        p[prefix + "attn.w_o"],
        cfg.num_heads,
    )
    x = x + ag.dropout(h, drop, training, rng)
    h = ag.layer_norm(x, p[prefix + "ln2.g"], p[prefix + "ln2.b"])
    h = ag.gelu(h @ p[prefix + "ffn.w1"] + p[prefix + "ffn.b1"])
    h = h @ p[prefix + "ffn.w2"] + p[prefix + "ffn.b2"]
    return x + ag.dropout(h, drop, training, rng)


class QTransformer:
    """Parameters plus the forward pass; no optimizer state."""

    def __init__(self, config=None, params=None, seed=None):
        self.config = config or ModelConfig()
        self.params = params if params is not None else init_params(self.config, seed)
        self._feature_scale = np.ones(self.config.obs_dim)
        self._feature_scale[0::2] = self.config.distance_scale

    def parameters(self):
        return list(self.params.values())

    def embed(self, obs):
        """[batch, n, obs_dim] observations -> [batch, n, d] embeddings."""
        obs = np.asarray(obs, dtype=ag.default_dtype())
        n = obs.shape[-2]
        if n > self.config.max_seq_len:
            raise ValueError(f"sequence length {n} exceeds max_seq_len {self.config.max_seq_len}")
        x = Tensor(obs * self._feature_scale.astype(obs.dtype))
        pos = ag.reshape(self.params["pos"], (1,) + self.params["pos"].shape)
        h = x @ self.params["embed.w"] + self.params["embed.b"]
        if n == self.config.max_seq_len:
            return h + pos
        return h + ag.narrow(pos, 1, 0, n)

    def forward(self, obs, training=False, rng=None):
        """Q-values [batch, n, num_actions]; a 2-D input gives [n, num_actions]."""
        obs = np.asarray(obs)
        if obs.ndim == 2:
            return ag.reshape(self.forward(obs[None], training, rng), (obs.shape[0], self.config.num_actions))
        if obs.shape[-2] == 0:
            raise ValueError("empty observation sequence")
        if obs.shape[-1] != self.config.obs_dim:
            raise ValueError(f"observation width {obs.shape[-1]} != {self.config.obs_dim}")
        if training and rng is None:
            raise ValueError("training mode needs an rng for dropout")
        x = self.embed(obs)
        for i in range(self.config.num_layers):
            x = decoder_block(x, self.params, f"layers.{i}.", self.config, training, rng)
        x = ag.layer_norm(x, self.params["ln_f.g"], self.params["ln_f.b"])
        return x @ self.params["head.w"] + self.params["head.b"]

    __call__ = forward

    def q_values(self, obs):
        """Evaluation-mode Q-values as a plain array, nothing taped."""
        with ag.no_grad():
            return self.forward(obs).data

    def act_greedy(self, context):
        """Argmax of the last position's Q-values; ties go to the lowest code."""
        context = np.asarray(context)
        if context.shape[0] == 0:
            raise ValueError("empty context")
        return int(np.argmax(self.q_values(context[-self.config.max_seq_len:])[-1]))

    def copy(self):
        params = OrderedDict((k, Tensor(v.data, requires_grad=True)) for k, v in self.params.items())
        return QTransformer(self.config, params)

    def load_state_from(self, other):
        """Copy ``other``'s parameter values into this model, bit for bit."""
        for k, v in self.params.items():
            np.copyto(v.data, other.params[k].data)

