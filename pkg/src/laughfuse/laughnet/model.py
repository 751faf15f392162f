"""A small 1-D CNN over fused sequences with hand-written backprop.

Layout: per-channel input standardization (fixed, fitted on training data)
-> conv1d+ReLU stack (same zero padding, stride 1) -> global average pool
-> dense+ReLU stack -> single sigmoid unit. Dropout, when enabled, is
applied to the input of every dense layer including the head.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PROB_CLAMP = 1e-7
FORMAT_VERSION = 1


class ModelError(ValueError):
    pass


class ShapeMismatchError(ModelError):
    pass


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: int

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ModelError(f"conv kernel must be odd and positive, got {self.kernel}")
        if self.out_channels < 1:
            raise ModelError("conv out_channels must be positive")


@dataclass(frozen=True)
class ModelConfig:
    conv_layers: tuple = (ConvSpec(16, 5), ConvSpec(32, 5))
    dense_layers: tuple = (24,)
    dropout_p: float = 0.2
    l2_lambda: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        convs = tuple(c if isinstance(c, ConvSpec) else ConvSpec(**c) for c in self.conv_layers)
        if not convs:
            raise ModelError("at least one conv layer is required")
        object.__setattr__(self, "conv_layers", convs)
        object.__setattr__(self, "dense_layers", tuple(int(u) for u in self.dense_layers))
        if not 0.0 <= self.dropout_p < 1.0:
            raise ModelError("dropout_p must lie in [0, 1)")
        if self.l2_lambda < 0:
            raise ModelError("l2_lambda must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["conv_layers"] = [asdict(c) for c in self.conv_layers]
        d["dense_layers"] = list(self.dense_layers)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "conv_layers" in d:
            d["conv_layers"] = tuple(ConvSpec(**c) for c in d["conv_layers"])
        if "dense_layers" in d:
            d["dense_layers"] = tuple(d["dense_layers"])
        return cls(**d)


def layer_shapes(cfg: ModelConfig, input_d):
    """Ordered ``(name, shape)`` of every trainable tensor."""
    shapes = []
    c_in = input_d
    for i, c in enumerate(cfg.conv_layers):
        shapes += [(f"conv{i}.W", (c.kernel, c_in, c.out_channels)), (f"conv{i}.b", (c.out_channels,))]
        c_in = c.out_channels
    for i, units in enumerate(cfg.dense_layers):
        shapes += [(f"dense{i}.W", (c_in, units)), (f"dense{i}.b", (units,))]
        c_in = units
    shapes += [("head.W", (c_in, 1)), ("head.b", (1,))]
    return shapes


def count_params(cfg: ModelConfig, input_d):
    return {"total": int(sum(np.prod(s) for _, s in layer_shapes(cfg, input_d)))}


@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    input_d: int
    tensors: dict
    input_mean: np.ndarray = field(default=None)
    input_scale: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.input_mean is None:
            self.input_mean = np.zeros(self.input_d)
        if self.input_scale is None:
            self.input_scale = np.ones(self.input_d)
        expected = dict(layer_shapes(self.config, self.input_d))
        if set(expected) != set(self.tensors):
            raise ShapeMismatchError(f"tensor names {sorted(self.tensors)} do not match config")
        for name, shape in expected.items():
            if tuple(np.shape(self.tensors[name])) != tuple(shape):
                raise ShapeMismatchError(f"{name}: shape {np.shape(self.tensors[name])}, expected {shape}")
        if np.shape(self.input_mean) != (self.input_d,) or np.shape(self.input_scale) != (self.input_d,):
            raise ShapeMismatchError("input normalization vectors must have length input_d")

    @property
    def names(self):
        return [n for n, _ in layer_shapes(self.config, self.input_d)]

    def copy(self):
        return ModelParams(
            self.config,
            self.input_d,
            {k: v.copy() for k, v in self.tensors.items()},
            self.input_mean.copy(),
            self.input_scale.copy(),
        )

    def zeros_like(self):
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def init_params(cfg: ModelConfig, input_d) -> ModelParams:
    """He-uniform weights (bound sqrt(6/fan_in)) from PCG64(cfg.seed); zero biases.

    The sigmoid head starts at zero so the untrained model scores exactly 0.5
    and the initial loss is ln 2 plus the L2 term.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    tensors = {}
    for name, shape in layer_shapes(cfg, input_d):
        if name.endswith(".b") or name == "head.W":
            tensors[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = np.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(cfg, input_d, tensors)


def he_bound(shape):
    return float(np.sqrt(6.0 / int(np.prod(shape[:-1]))))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_batch(params, xs):
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != params.input_d:
        raise ShapeMismatchError(f"input of shape {np.shape(xs)} does not match input_d={params.input_d}")
    return X


def dropout_masks(params: ModelParams, batch_size, seed):
    """One inverted-dropout mask per dense-layer input, scaled by 1/(1-p)."""
    p = params.config.dropout_p
    rng = np.random.Generator(np.random.PCG64(seed))
    widths = [params.config.conv_layers[-1].out_channels, *params.config.dense_layers]
    return [(rng.random((batch_size, w)) >= p) / (1.0 - p) for w in widths]


def forward_batch(params: ModelParams, X, masks=None):
    """Return (logits (B,), cache). ``masks`` None means eval mode."""
    cfg = params.config
    t = params.tensors
    h = (X - params.input_mean) / params.input_scale
    cache = {"convs": [], "dense": [], "masks": masks}
    for i, c in enumerate(cfg.conv_layers):
        pad = c.kernel // 2
        hp = np.pad(h, ((0, 0), (pad, pad), (0, 0)))
        win = sliding_window_view(hp, c.kernel, axis=1)  # (B, T, C_in, k)
        z = np.einsum("btck,kco->bto", win, t[f"conv{i}.W"], optimize=True) + t[f"conv{i}.b"]
        cache["convs"].append((hp, z))
        h = np.maximum(z, 0.0)
    g = h.mean(axis=1)
    cache["T"] = h.shape[1]
    for i in range(len(cfg.dense_layers)):
        u = g * masks[i] if masks is not None else g
        z = u @ t[f"dense{i}.W"] + t[f"dense{i}.b"]
        cache["dense"].append((u, z))
        g = np.maximum(z, 0.0)
    u = g * masks[-1] if masks is not None else g
    logits = (u @ t["head.W"] + t["head.b"])[:, 0]
    cache["head_in"] = u
    return logits, cache


def forward(params: ModelParams, x, train_mode=False, dropout_seed=0):
    """Score one T x d sequence; returns (score, cache)."""
    X = _as_batch(params, x)
    masks = None
    if train_mode and params.config.dropout_p > 0:
        masks = dropout_masks(params, X.shape[0], dropout_seed)
    logits, cache = forward_batch(params, X, masks)
    cache["logits"] = logits
    return float(_sigmoid(logits)[0]), cache


def l2_penalty(params: ModelParams):
    return float(sum(np.sum(params.tensors[n] ** 2) for n in params.names if n.endswith(".W")))


def loss_and_grads(params: ModelParams, batch, train_mode=False, dropout_seed=0):
    """Mean BCE (probabilities clamped) plus L2 on weights, with exact gradients.

    ``batch`` is a sequence of ``(x, label)`` pairs with equal-length ``x``.
    Returns ``(loss, grads, probs)``.
    """
    if len(batch) == 0:
        raise ModelError("empty batch")
    X = _as_batch(params, np.stack([np.asarray(x, dtype=np.float64) for x, _ in batch]))
    y = np.array([float(lbl) for _, lbl in batch])
    B = X.shape[0]
    cfg = params.config
    t = params.tensors
    masks = None
    if train_mode and cfg.dropout_p > 0:
        masks = dropout_masks(params, B, dropout_seed)
    logits, cache = forward_batch(params, X, masks)
    p = _sigmoid(logits)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    bce = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    loss = float(bce.mean()) + cfg.l2_lambda * l2_penalty(params)

    grads = {}
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    dz = (np.where(inside, p - y, 0.0) / B)[:, None]  # (B, 1)
    grads["head.W"] = cache["head_in"].T @ dz
    grads["head.b"] = dz.sum(axis=0)
    dg = dz @ t["head.W"].T
    if masks is not None:
        dg = dg * masks[-1]
    for i in reversed(range(len(cfg.dense_layers))):
        u, z = cache["dense"][i]
        dz_i = dg * (z > 0)
        grads[f"dense{i}.W"] = u.T @ dz_i
        grads[f"dense{i}.b"] = dz_i.sum(axis=0)
        dg = dz_i @ t[f"dense{i}.W"].T
        if masks is not None:
            dg = dg * masks[i]
    T = cache["T"]
    dh = np.broadcast_to(dg[:, None, :] / T, (B, T, dg.shape[1]))
    for i in reversed(range(len(cfg.conv_layers))):
        c = cfg.conv_layers[i]
        hp, z = cache["convs"][i]
        W = t[f"conv{i}.W"]
        dzc = dh * (z > 0)
        win = sliding_window_view(hp, c.kernel, axis=1)
        grads[f"conv{i}.W"] = np.einsum("btck,bto->kco", win, dzc, optimize=True)
        grads[f"conv{i}.b"] = dzc.sum(axis=(0, 1))
        if i > 0:
            dhp = np.zeros_like(hp)
            for j in range(c.kernel):
                dhp[:, j : j + T, :] += dzc @ W[j].T
            pad = c.kernel // 2
            dh = dhp[:, pad : pad + T, :]

    if cfg.l2_lambda:
        for n in params.names:
            if n.endswith(".W"):
                grads[n] = grads[n] + 2.0 * cfg.l2_lambda * t[n]
    return loss, grads, p


def predict_scores(params: ModelParams, xs):
    X = _as_batch(params, xs)
    logits, _ = forward_batch(params, X)
    return np.clip(_sigmoid(logits), PROB_CLAMP, 1.0 - PROB_CLAMP)


def predict_score(params: ModelParams, fused):
    """Eval-mode score in (0, 1) for a FusedSequence or raw T x d array."""
    x = getattr(fused, "steps", fused)
    return float(predict_scores(params, np.asarray(x, dtype=np.float64)[None])[0])


# ---------------------------------------------------------------- model file


def params_to_json(params: ModelParams):
    tensors = [
        {"name": n, "shape": list(params.tensors[n].shape), "values": params.tensors[n].ravel().tolist()}
        for n in params.names
    ]
    tensors.append({"name": "input.mean", "shape": [params.input_d], "values": params.input_mean.tolist()})
    tensors.append({"name": "input.scale", "shape": [params.input_d], "values": params.input_scale.tolist()})
    return {
        "format_version": FORMAT_VERSION,
        "model_config": params.config.to_dict(),
        "input_d": params.input_d,
        "tensors": tensors,
    }


def params_from_json(doc) -> ModelParams:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format_version {doc.get('format_version')!r}")
    cfg = ModelConfig.from_dict(doc["model_config"])
    d = int(doc["input_d"])
    tensors = {}
    for t in doc["tensors"]:
        vals = np.asarray(t["values"], dtype=np.float64)
        shape = tuple(t["shape"])
        if vals.size != int(np.prod(shape)):
            raise ShapeMismatchError(f"{t['name']}: {vals.size} values for shape {shape}")
        tensors[t["name"]] = vals.reshape(shape)
    mean = tensors.pop("input.mean", None)
    scale = tensors.pop("input.scale", None)
    return ModelParams(cfg, d, tensors, mean, scale)


def save_model(params: ModelParams, path):
    Path(path).write_text(json.dumps(params_to_json(params)) + "\n", encoding="utf-8")


def load_model(path) -> ModelParams:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid model JSON ({exc})") from None
    return params_from_json(doc)
