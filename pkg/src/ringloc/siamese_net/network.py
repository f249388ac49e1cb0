"""Convolutional embedding network with hand-written backpropagation.

Layer stack: ``[conv (same padding) -> ReLU -> max-pool along buckets]*``
``-> [dense -> ReLU]* -> dense``.  All arithmetic is float64 numpy.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, DivergenceError, FormatError


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: tuple = (16, 80)
    conv_layers: tuple = ((3, 3, 8, 2), (3, 3, 16, 2))
    hidden: tuple = (128,)
    output_dim: int = 64
    margin: float = 12.0
    seed: int = 0
    input_transform: str = "identity"
    input_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "conv_layers",
                           tuple(tuple(int(v) for v in layer) for layer in self.conv_layers))
        object.__setattr__(self, "hidden", tuple(int(v) for v in self.hidden))
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise ConfigError(f"bad input shape {self.input_shape}")
        if self.output_dim < 1:
            raise ConfigError("output_dim must be >= 1")
        if not self.margin > 0:
            raise ConfigError("margin must be positive")
        h, w = self.input_shape
        for kh, kw, cout, pool in self.conv_layers:
            if min(kh, kw, cout, pool) < 1:
                raise ConfigError(f"bad conv layer {(kh, kw, cout, pool)}")
            w //= pool
            if w < 1:
                raise ConfigError("pooling reduces the bucket axis to nothing")
        if any(n < 1 for n in self.hidden):
            raise ConfigError("hidden widths must be positive")
        if self.input_transform not in ("identity", "sqrt"):
            raise ConfigError(f"unknown input transform {self.input_transform!r}")
        if not self.input_scale > 0:
            raise ConfigError("input_scale must be positive")

    def conv_output_shapes(self):
        """(channels, height, width) after each conv block, input first."""
        c, (h, w) = 1, self.input_shape
        shapes = [(c, h, w)]
        for _, _, cout, pool in self.conv_layers:
            c, w = cout, w // pool
            shapes.append((c, h, w))
        return shapes

    def param_shapes(self) -> list:
        shapes = []
        cin = 1
        for kh, kw, cout, _ in self.conv_layers:
            shapes += [(cout, cin, kh, kw), (cout,)]
            cin = cout
        width = int(np.prod(self.conv_output_shapes()[-1]))
        for n in self.hidden + (self.output_dim,):
            shapes += [(width, n), (n,)]
            width = n
        return shapes

    def layer_names(self) -> list:
        names = [f"conv{i}" for i in range(len(self.conv_layers))]
        names += [f"dense{i}" for i in range(len(self.hidden) + 1)]
        return names

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape),
                "conv_layers": [list(c) for c in self.conv_layers],
                "hidden": list(self.hidden), "output_dim": self.output_dim,
                "margin": float(self.margin), "seed": int(self.seed),
                "input_transform": self.input_transform, "input_scale": float(self.input_scale)}

    @classmethod
    def from_dict(cls, d) -> "NetworkConfig":
        return cls(tuple(d["input_shape"]), tuple(tuple(c) for c in d["conv_layers"]),
                   tuple(d["hidden"]), int(d["output_dim"]), float(d["margin"]), int(d["seed"]),
                   d.get("input_transform", "identity"), float(d.get("input_scale", 1.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_json().encode()).digest()


@dataclass(eq=False)
class NetworkParams:
    """Weights and biases in declared layer order (w0, b0, w1, b1, ...)."""

    config: NetworkConfig
    tensors: list = field(default_factory=list)

    def __post_init__(self):
        shapes = self.config.param_shapes()
        if len(self.tensors) != len(shapes):
            raise FormatError(f"expected {len(shapes)} tensors, got {len(self.tensors)}")
        self.tensors = [np.array(t, dtype=float) for t in self.tensors]
        for t, s in zip(self.tensors, shapes):
            if t.shape != tuple(s):
                raise FormatError(f"tensor shape {t.shape} does not match {s}")

    @classmethod
    def initialize(cls, config: NetworkConfig, seed=None) -> "NetworkParams":
        """Gaussian weights with std 1/sqrt(fan_in); zero biases."""
        rng = np.random.default_rng(config.seed if seed is None else seed)
        tensors = []
        for shape in config.param_shapes():
            if len(shape) == 1:
                tensors.append(np.zeros(shape))
            else:
                fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
                tensors.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape))
        return cls(config, tensors)

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "NetworkParams":
        return cls(config, [np.zeros(s) for s in config.param_shapes()])

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, [t.copy() for t in self.tensors])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors)


def _pad_amounts(k):
    lo = (k - 1) // 2
    return lo, k - 1 - lo


def _conv_forward(x, w, b):
    """Same-padded convolution on channels-last input (B, H, W, Cin)."""
    cout, cin, kh, kw = w.shape
    bsz, h, wd, _ = x.shape
    (pt, pb), (pl, pr) = _pad_amounts(kh), _pad_amounts(kw)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # B, H, W, Cin, kh, kw
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(bsz * h * wd, kh * kw * cin)
    wmat = w.transpose(0, 2, 3, 1).reshape(cout, -1)
    out = cols @ wmat.T + b
    return out.reshape(bsz, h, wd, cout), cols


def _conv_backward(dout, cols, x_shape, w):
    cout, cin, kh, kw = w.shape
    bsz, h, wd, _ = x_shape
    d2 = dout.reshape(-1, cout)
    dw = (d2.T @ cols).reshape(cout, kh, kw, cin).transpose(0, 3, 1, 2)
    db = d2.sum(axis=0)
    wmat = w.transpose(0, 2, 3, 1).reshape(cout, -1)
    dcols = (d2 @ wmat).reshape(bsz, h, wd, kh, kw, cin)
    (pt, _), (pl, _) = _pad_amounts(kh), _pad_amounts(kw)
    dxp = np.zeros((bsz, h + kh - 1, wd + kw - 1, cin))
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + h, j:j + wd, :] += dcols[:, :, :, i, j, :]
    return dxp[:, pt:pt + h, pl:pl + wd, :], np.ascontiguousarray(dw), db


def _pool_forward(x, p):
    """Max-pool along the bucket axis (axis 2); first maximum wins ties."""
    if p == 1:
        return x, None
    wo = x.shape[2] // p
    out = x[:, :, 0:wo * p:p, :].copy()
    arg = np.zeros(out.shape, dtype=np.int8)
    for k in range(1, p):
        cand = x[:, :, k:wo * p:p, :]
        better = cand > out
        out = np.where(better, cand, out)
        arg[better] = k
    return out, arg


def _pool_backward(dout, arg, p, x_shape):
    if p == 1:
        return dout
    wo = x_shape[2] // p
    dx = np.zeros(x_shape)
    for k in range(p):
        dx[:, :, k:wo * p:p, :] = np.where(arg == k, dout, 0.0)
    return dx


def _check(name, arr):
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"non-finite values in layer {name}")


def prepare_input(config: NetworkConfig, images) -> np.ndarray:
    """Fixed elementwise input transform applied before the first layer."""
    x = np.asarray(images, dtype=float)
    if config.input_transform == "sqrt":
        x = np.sqrt(np.maximum(x, 0.0))
    return x * config.input_scale if config.input_scale != 1.0 else x


def forward_batch(params: NetworkParams, images):
    """Embed a batch of (N, b) images; returns (B, d) fingerprints and a cache."""
    cfg = params.config
    x = np.asarray(images, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != cfg.input_shape:
        raise FormatError(f"input shape {x.shape[1:]} does not match {cfg.input_shape}")
    x = prepare_input(cfg, x)[:, :, :, None]
    cache = []
    t = params.tensors
    k = 0
    for i, (_, _, _, pool) in enumerate(cfg.conv_layers):
        z, cols = _conv_forward(x, t[k], t[k + 1])
        _check(f"conv{i}", z)
        a = np.maximum(z, 0.0)
        y, arg = _pool_forward(a, pool)
        cache.append(("conv", x.shape, cols, z, a.shape, arg, pool))
        x = y
        k += 2
    # Flatten in (channel, ring, bucket) order.
    h = x.transpose(0, 3, 1, 2).reshape(x.shape[0], -1)
    cache.append(("flatten", x.shape))
    n_dense = len(cfg.hidden) + 1
    for j in range(n_dense):
        z = h @ t[k] + t[k + 1]
        _check(f"dense{j}", z)
        last = j == n_dense - 1
        cache.append(("dense", h, z, last))
        h = z if last else np.maximum(z, 0.0)
        k += 2
    return h, cache


def backward_batch(params: NetworkParams, cache, dout) -> list:
    """Gradients of sum(dout * output) with respect to every tensor."""
    grads = [None] * len(params.tensors)
    t = params.tensors
    k = len(t)
    g = np.asarray(dout, dtype=float)
    names = params.config.layer_names()
    layer = len(names)
    for entry in reversed(cache):
        kind = entry[0]
        if kind == "dense":
            _, h_in, z, last = entry
            k -= 2
            layer -= 1
            if not last:
                g = g * (z > 0)
            grads[k] = h_in.T @ g
            grads[k + 1] = g.sum(axis=0)
            g = g @ t[k].T
            _check(names[layer], g)
        elif kind == "flatten":
            b, hh, ww, c = entry[1]
            g = g.reshape(b, c, hh, ww).transpose(0, 2, 3, 1)
        else:
            _, x_shape, cols, z, a_shape, arg, pool = entry
            k -= 2
            layer -= 1
            g = _pool_backward(g, arg, pool, a_shape) * (z > 0)
            g, grads[k], grads[k + 1] = _conv_backward(g, cols, x_shape, t[k])
            _check(names[layer], g)
    return grads


def forward(params: NetworkParams, image) -> np.ndarray:
    """Fingerprint of a single representation (array or RangeHistogramImage)."""
    values = getattr(image, "values", image)
    values = np.asarray(values, dtype=float)
    if values.shape != params.config.input_shape:
        raise FormatError(f"input shape {values.shape} does not match {params.config.input_shape}")
    out, _ = forward_batch(params, values[None])
    return out[0]


def embedding_distance(f1, f2) -> float:
    a, b = np.asarray(f1, dtype=float), np.asarray(f2, dtype=float)
    if a.shape != b.shape:
        raise FormatError(f"fingerprint dimensions differ: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sqrt(np.dot(diff, diff)))
