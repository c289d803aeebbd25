"""Small shared MLP: blended feature + encoded position -> SH color and opacity.

The standard network is one hidden layer of 64 LeakyReLU units followed by
per-quantity heads (raw color head, sigmoid opacity head, optional geometry
heads for the pose-shift backends). The ConditionOnly variant deepens the
hidden stack to four layers so the total linear-layer count is five.

Weights are stored float32 as (in, out) matrices; all math runs in float64.
Backward passes are hand-derived and checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

PE_OCTAVES = 4
LEAKY_SLOPE = 0.01
HIDDEN_WIDTH = 64

# head name -> output activation applied after the linear map
HEAD_ACTIVATIONS = {
    "color": "linear",
    "alpha": "sigmoid",
    "dmu": "linear",
    "rot": "linear",
}


def pe_width(octaves: int = PE_OCTAVES) -> int:
    """Raw coordinate plus sin/cos at each octave, per axis."""
    return 3 + 3 * 2 * octaves


def encode_position(mu: np.ndarray, scene_bounds) -> np.ndarray:
    """Sinusoidal positional encoding of centers normalized to the scene box.

    mu: (N, 3) world coordinates; scene_bounds: (lo, hi) arrays of 3.
    Returns (N, 3 + 6*octaves): [x_hat, sin(2^o pi x_hat), cos(2^o pi x_hat), ...].
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in scene_bounds)
    span = hi - lo
    if np.any(span <= 0):
        raise ShapeError("scene bounds are degenerate")
    mu = np.asarray(mu, dtype=np.float64)
    x_hat = 2.0 * (mu - lo) / span - 1.0
    parts = [x_hat]
    for o in range(PE_OCTAVES):
        arg = (2.0**o) * np.pi * x_hat
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    return np.concatenate(parts, axis=1)


def encode_position_backward(mu: np.ndarray, scene_bounds, d_pe: np.ndarray) -> np.ndarray:
    """Chain gradients through encode_position back to mu. Returns (N, 3)."""
    lo, hi = (np.asarray(b, dtype=np.float64) for b in scene_bounds)
    span = hi - lo
    mu = np.asarray(mu, dtype=np.float64)
    x_hat = 2.0 * (mu - lo) / span - 1.0
    d_xhat = d_pe[:, 0:3].copy()
    for o in range(PE_OCTAVES):
        arg = (2.0**o) * np.pi * x_hat
        scale = (2.0**o) * np.pi
        d_sin = d_pe[:, 3 + 6 * o : 6 + 6 * o]
        d_cos = d_pe[:, 6 + 6 * o : 9 + 6 * o]
        d_xhat += scale * (np.cos(arg) * d_sin - np.sin(arg) * d_cos)
    return d_xhat * (2.0 / span)


@dataclass
class TinyMLPWeights:
    """Hidden stack plus named output heads.

    hidden: list of (W, b) with W shaped (in, out); heads: name -> (W, b).
    The conventional accessors layer1 / layer2_color / layer2_alpha map onto
    the first hidden layer and the color/alpha heads.
    """

    hidden: list = field(default_factory=list)
    heads: dict = field(default_factory=dict)
    leaky_slope: float = LEAKY_SLOPE

    @property
    def layer1(self):
        return self.hidden[0]

    @property
    def layer2_color(self):
        return self.heads["color"]

    @property
    def layer2_alpha(self):
        return self.heads["alpha"]

    @property
    def in_dim(self) -> int:
        return self.hidden[0][0].shape[0]

    def named_tensors(self):
        """Stable (name, array) iteration used by optimizer and checkpoint."""
        for i, (W, b) in enumerate(self.hidden):
            yield f"hidden{i}.W", W
            yield f"hidden{i}.b", b
        for name in sorted(self.heads):
            W, b = self.heads[name]
            yield f"head.{name}.W", W
            yield f"head.{name}.b", b

    def set_tensor(self, name: str, value: np.ndarray):
        if name.startswith("hidden"):
            stem, leaf = name.split(".")
            i = int(stem[len("hidden") :])
            W, b = self.hidden[i]
            self.hidden[i] = (value, b) if leaf == "W" else (W, value)
        elif name.startswith("head."):
            _, head, leaf = name.split(".")
            W, b = self.heads[head]
            self.heads[head] = (value, b) if leaf == "W" else (W, value)
        else:
            raise KeyError(name)

    def copy(self) -> "TinyMLPWeights":
        return TinyMLPWeights(
            hidden=[(W.copy(), b.copy()) for (W, b) in self.hidden],
            heads={k: (W.copy(), b.copy()) for k, (W, b) in self.heads.items()},
            leaky_slope=self.leaky_slope,
        )


def mlp_init(
    rng: np.random.Generator,
    in_dim: int,
    head_dims: dict,
    n_hidden_layers: int = 1,
    hidden_width: int = HIDDEN_WIDTH,
    zero_heads=(),
) -> TinyMLPWeights:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for every layer.

    zero_heads lists head names whose weights and biases start at zero
    (geometry heads must predict no shift at step 0).
    """
    hidden = []
    d = in_dim
    for _ in range(n_hidden_layers):
        k = 1.0 / np.sqrt(d)
        W = rng.uniform(-k, k, size=(d, hidden_width)).astype(np.float32)
        b = rng.uniform(-k, k, size=hidden_width).astype(np.float32)
        hidden.append((W, b))
        d = hidden_width
    heads = {}
    for name, out_dim in head_dims.items():
        if name in zero_heads:
            W = np.zeros((d, out_dim), dtype=np.float32)
            b = np.zeros(out_dim, dtype=np.float32)
        else:
            k = 1.0 / np.sqrt(d)
            W = rng.uniform(-k, k, size=(d, out_dim)).astype(np.float32)
            b = rng.uniform(-k, k, size=out_dim).astype(np.float32)
        heads[name] = (W, b)
    return TinyMLPWeights(hidden=hidden, heads=heads)


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def mlp_forward(x: np.ndarray, w: TinyMLPWeights):
    """Batched forward pass.

    x: (N, in_dim) float64. Returns (outputs dict name -> array, cache).
    The color head is raw; the alpha head is squashed by a sigmoid. Inputs
    exactly at the LeakyReLU kink take the negative-side slope.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.in_dim:
        raise ShapeError(f"mlp input must be (N, {w.in_dim}), got {x.shape}")
    h = x
    pre_acts = []
    hiddens = [h]
    for W, b in w.hidden:
        pre = h @ W.astype(np.float64) + b.astype(np.float64)
        h = _leaky(pre, w.leaky_slope)
        pre_acts.append(pre)
        hiddens.append(h)
    outputs = {}
    head_pre = {}
    for name, (W, b) in w.heads.items():
        pre = h @ W.astype(np.float64) + b.astype(np.float64)
        head_pre[name] = pre
        if HEAD_ACTIVATIONS.get(name, "linear") == "sigmoid":
            outputs[name] = 1.0 / (1.0 + np.exp(-pre))
        else:
            outputs[name] = pre
    cache = (x, pre_acts, hiddens, head_pre, outputs)
    return outputs, cache


def mlp_backward(w: TinyMLPWeights, cache, d_outputs: dict):
    """Gradients w.r.t. the input batch and every weight tensor.

    d_outputs maps head name -> upstream gradient (missing heads contribute
    nothing). Returns (d_x (N, in_dim), grads dict keyed like named_tensors).
    """
    x, pre_acts, hiddens, head_pre, outputs = cache
    h_last = hiddens[-1]
    grads = {}
    d_h = np.zeros_like(h_last)
    for name, (W, b) in w.heads.items():
        d_out = d_outputs.get(name)
        if d_out is None:
            grads[f"head.{name}.W"] = np.zeros_like(W, dtype=np.float64)
            grads[f"head.{name}.b"] = np.zeros(b.shape, dtype=np.float64)
            continue
        if HEAD_ACTIVATIONS.get(name, "linear") == "sigmoid":
            s = outputs[name]
            d_pre = d_out * s * (1.0 - s)
        else:
            d_pre = d_out
        grads[f"head.{name}.W"] = h_last.T @ d_pre
        grads[f"head.{name}.b"] = d_pre.sum(axis=0)
        d_h = d_h + d_pre @ W.astype(np.float64).T
    for i in range(len(w.hidden) - 1, -1, -1):
        W, b = w.hidden[i]
        pre = pre_acts[i]
        d_pre = d_h * np.where(pre > 0.0, 1.0, w.leaky_slope)
        grads[f"hidden{i}.W"] = hiddens[i].T @ d_pre
        grads[f"hidden{i}.b"] = d_pre.sum(axis=0)
        d_h = d_pre @ W.astype(np.float64).T
    return d_h, grads
