"""Temporal convolutional network with self-attention, in plain numpy.

Input batches are shaped ``(batch, time, features)``. The network is

    [residual block: causal conv -> relu -> causal conv -> relu, + skip] x len(dilations)
    -> single-head scaled dot-product self-attention (residual)
    -> mean pooling over time          (= activation vector)
    -> linear layer -> softmax

Convolution weights are weight-normalized (``w = g * v / ||v||`` per output
channel). Training passes may apply dropout after each convolution's ReLU.
Every layer has a hand-written backward pass.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class TCNConfig:
    input_width: int
    n_classes: int
    channels: int = 32
    kernel_size: int = 3
    dilations: tuple[int, ...] = (1, 2, 4)
    attention: bool = True
    attention_dim: int = 32
    dropout: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TCNConfig":
        d = dict(d)
        d["dilations"] = tuple(d["dilations"])
        return cls(**d)

    @property
    def activation_width(self) -> int:
        return self.channels if self.dilations else self.input_width


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# ------------------------------------------------------------------ layers

def _shifted(x: np.ndarray, shift: int) -> np.ndarray:
    if shift == 0:
        return x
    out = np.zeros_like(x)
    if shift < x.shape[1]:
        out[:, shift:] = x[:, :-shift]
    return out


def causal_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray, dilation: int):
    """``y[t] = sum_k w[k] . x[t - (K-1-k) * dilation] + b`` with zero history."""
    k = w.shape[0]
    cols = np.concatenate([_shifted(x, (k - 1 - j) * dilation) for j in range(k)], axis=-1)
    y = cols @ w.reshape(-1, w.shape[-1]) + b
    return y, cols


def causal_conv_backward(dy, cols, w, dilation):
    k, cin, cout = w.shape
    flat_dy = dy.reshape(-1, cout)
    dw = (cols.reshape(-1, k * cin).T @ flat_dy).reshape(w.shape)
    db = flat_dy.sum(axis=0)
    dcols = dy @ w.reshape(-1, cout).T
    dx = np.zeros(dy.shape[:2] + (cin,))
    t = dy.shape[1]
    for j in range(k):
        s = (k - 1 - j) * dilation
        part = dcols[..., j * cin:(j + 1) * cin]
        if s == 0:
            dx += part
        elif s < t:
            dx[:, :t - s] += part[:, s:]
    return dx, dw, db


def weight_norm(v: np.ndarray, g: np.ndarray):
    norm = np.sqrt((v**2).sum(axis=(0, 1)))
    return g * v / norm, norm


def weight_norm_backward(dw, v, g, norm):
    dg = (dw * v).sum(axis=(0, 1)) / norm
    dv = (g / norm) * dw - (g * dg / norm**2) * v
    return dv, dg


# ------------------------------------------------------------------- model

def init_params(cfg: TCNConfig, seed: int) -> dict[str, np.ndarray]:
    """He-style uniform fan-in initialization, fully determined by ``seed``."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    p: dict[str, np.ndarray] = {}
    cin = cfg.input_width
    c = cfg.channels
    k = cfg.kernel_size
    for i, _ in enumerate(cfg.dilations):
        for j in (1, 2):
            fan_in = k * (cin if j == 1 else c)
            v = uniform((k, cin if j == 1 else c, c), fan_in)
            p[f"b{i}.v{j}"] = v
            p[f"b{i}.g{j}"] = np.sqrt((v**2).sum(axis=(0, 1)))
            p[f"b{i}.c{j}"] = np.zeros(c)
        if cin != c:
            p[f"b{i}.wr"] = uniform((cin, c), cin)
            p[f"b{i}.br"] = np.zeros(c)
        cin = c
    if cfg.attention:
        a = cfg.attention_dim
        for name in ("wq", "wk", "wv"):
            p[f"att.{name}"] = uniform((cin, a), cin)
        p["att.wo"] = uniform((a, cin), a) * 0.5
    width = cin
    p["fc.w"] = uniform((width, cfg.n_classes), width) * 0.5
    p["fc.b"] = np.zeros(cfg.n_classes)
    return p


class TCN:
    """Parameters plus forward/backward passes of the classifier network."""

    def __init__(self, cfg: TCNConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = init_params(cfg, seed) if params is None else params

    # The conv stack alone; exposed for causality probes.
    def _dropout_mask(self, shape, rng):
        if rng is None or not self.cfg.dropout:
            return None
        keep = 1.0 - self.cfg.dropout
        return (rng.random(shape) < keep) / keep

    def conv_features(self, x: np.ndarray, cache: list | None = None, rng=None) -> np.ndarray:
        """Output of the residual blocks; ``rng`` switches dropout on."""
        p = self.params
        h = x
        for i, d in enumerate(self.cfg.dilations):
            w1, n1 = weight_norm(p[f"b{i}.v1"], p[f"b{i}.g1"])
            z1, cols1 = causal_conv(h, w1, p[f"b{i}.c1"], d)
            a1 = np.maximum(z1, 0.0)
            m1 = self._dropout_mask(a1.shape, rng)
            if m1 is not None:
                a1 = a1 * m1
            w2, n2 = weight_norm(p[f"b{i}.v2"], p[f"b{i}.g2"])
            z2, cols2 = causal_conv(a1, w2, p[f"b{i}.c2"], d)
            a2 = np.maximum(z2, 0.0)
            m2 = self._dropout_mask(a2.shape, rng)
            if m2 is not None:
                a2 = a2 * m2
            res = h @ p[f"b{i}.wr"] + p[f"b{i}.br"] if f"b{i}.wr" in p else h
            s = a2 + res
            out = np.maximum(s, 0.0)
            if cache is not None:
                cache.append((h, w1, n1, z1, cols1, m1, w2, n2, z2, cols2, m2, s))
            h = out
        return h

    def forward(self, x: np.ndarray, cache: dict | None = None, rng=None):
        """Return ``(probabilities, activation vectors, logits)``."""
        if x.ndim != 3 or x.shape[-1] != self.cfg.input_width:
            raise ValueError(f"expected (batch, time, {self.cfg.input_width}) input, got {x.shape}")
        p = self.params
        blocks: list | None = [] if cache is not None else None
        h = self.conv_features(x, blocks, rng)
        if self.cfg.attention:
            q, k, v = h @ p["att.wq"], h @ p["att.wk"], h @ p["att.wv"]
            scale = 1.0 / np.sqrt(q.shape[-1])
            attn = softmax(q @ k.transpose(0, 2, 1) * scale)
            ctx = attn @ v
            h_att = h + ctx @ p["att.wo"]
        else:
            h_att = h
        act = h_att.mean(axis=1)
        logits = act @ p["fc.w"] + p["fc.b"]
        probs = softmax(logits)
        if cache is not None:
            cache["blocks"] = blocks
            cache["h"] = h
            cache["act"] = act
            cache["T"] = x.shape[1]
            if self.cfg.attention:
                cache.update(q=q, k=k, v=v, attn=attn, ctx=ctx, scale=scale)
        return probs, act, logits

    def backward(self, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        g: dict[str, np.ndarray] = {}
        act = cache["act"]
        g["fc.w"] = act.T @ dlogits
        g["fc.b"] = dlogits.sum(axis=0)
        dact = dlogits @ p["fc.w"].T
        t = cache["T"]
        dh_att = np.repeat(dact[:, None, :] / t, t, axis=1)

        if self.cfg.attention:
            h, q, k, v = cache["h"], cache["q"], cache["k"], cache["v"]
            attn, ctx, scale = cache["attn"], cache["ctx"], cache["scale"]
            dh = dh_att.copy()
            g["att.wo"] = ctx.reshape(-1, ctx.shape[-1]).T @ dh_att.reshape(-1, dh_att.shape[-1])
            dctx = dh_att @ p["att.wo"].T
            dattn = dctx @ v.transpose(0, 2, 1)
            dv = attn.transpose(0, 2, 1) @ dctx
            ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * scale
            dq = ds @ k
            dk = ds.transpose(0, 2, 1) @ q
            hf = h.reshape(-1, h.shape[-1])
            for name, d in (("wq", dq), ("wk", dk), ("wv", dv)):
                df = d.reshape(-1, d.shape[-1])
                g[f"att.{name}"] = hf.T @ df
                dh += d @ p[f"att.{name}"].T
        else:
            dh = dh_att

        for i in reversed(range(len(self.cfg.dilations))):
            d = self.cfg.dilations[i]
            h_in, w1, n1, z1, cols1, m1, w2, n2, z2, cols2, m2, s = cache["blocks"][i]
            ds_ = dh * (s > 0)
            if f"b{i}.wr" in p:
                g[f"b{i}.wr"] = h_in.reshape(-1, h_in.shape[-1]).T @ ds_.reshape(-1, ds_.shape[-1])
                g[f"b{i}.br"] = ds_.sum(axis=(0, 1))
                dh_in = ds_ @ p[f"b{i}.wr"].T
            else:
                dh_in = ds_.copy()
            dz2 = ds_ * (z2 > 0) if m2 is None else ds_ * m2 * (z2 > 0)
            da1, dw2, g[f"b{i}.c2"] = causal_conv_backward(dz2, cols2, w2, d)
            g[f"b{i}.v2"], g[f"b{i}.g2"] = weight_norm_backward(dw2, p[f"b{i}.v2"], p[f"b{i}.g2"], n2)
            dz1 = da1 * (z1 > 0) if m1 is None else da1 * m1 * (z1 > 0)
            dx1, dw1, g[f"b{i}.c1"] = causal_conv_backward(dz1, cols1, w1, d)
            g[f"b{i}.v1"], g[f"b{i}.g1"] = weight_norm_backward(dw1, p[f"b{i}.v1"], p[f"b{i}.g1"], n1)
            dh = dh_in + dx1
        return g

    def loss_and_grads(self, x, y, weights=None, rng=None):
        """Class-weighted mean cross-entropy and its parameter gradients.
        Passing ``rng`` applies dropout."""
        cache: dict = {}
        probs, _, _ = self.forward(x, cache, rng)
        w = np.ones(len(y)) if weights is None else weights[y]
        total = w.sum()
        picked = probs[np.arange(len(y)), y]
        loss = float(-(w * np.log(np.maximum(picked, 1e-300))).sum() / total)
        dlogits = probs.copy()
        dlogits[np.arange(len(y)), y] -= 1.0
        dlogits *= (w / total)[:, None]
        return loss, self.backward(cache, dlogits)

    def loss(self, x, y, weights=None) -> float:
        probs, _, _ = self.forward(x)
        w = np.ones(len(y)) if weights is None else weights[y]
        picked = probs[np.arange(len(y)), y]
        return float(-(w * np.log(np.maximum(picked, 1e-300))).sum() / w.sum())
