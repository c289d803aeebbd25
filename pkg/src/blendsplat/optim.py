"""Adam optimizer with per-group learning rates and row-level bookkeeping.

The cloud's per-gaussian tensors grow and shrink during densification, so the
optimizer exposes `select_rows` / `append_rows` that the trainer calls with
the exact same indexing it applies to the cloud columns. Moment buffers for
fresh rows start at zero; per-tensor step counts are retained.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .model import AnimGaussianCloud, TrainConfig
from .transforms import normalize_quat

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-15

# groups whose learning rate decays exponentially to 1% over config.iters
_DECAYED_GROUPS = frozenset({"mu", "mlp"})

_GROUP_LR_FIELD = {
    "mu": "lr_mu",
    "rot": "lr_rot",
    "scale": "lr_scale",
    "feat": "lr_feat",
    "static_alpha": "lr_static_alpha",
    "mlp": "lr_mlp",
}


class Adam(object):
    def __init__(self, cloud: AnimGaussianCloud, config: TrainConfig):
        self.cloud = cloud
        self.config = config
        self.it = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}
        self.group_of: dict[str, str] = {}
        for name, arr, group in cloud.named_parameters():
            self.m[name] = np.zeros(arr.shape, dtype=np.float32)
            self.v[name] = np.zeros(arr.shape, dtype=np.float32)
            self.t[name] = 0
            self.group_of[name] = group

    def lr_of(self, group: str, it: int | None = None) -> float:
        base = getattr(self.config, _GROUP_LR_FIELD[group])
        if group not in _DECAYED_GROUPS:
            return base
        if it is None:
            it = self.it
        frac = min(it, self.config.iters) / max(self.config.iters, 1)
        return base * 0.01**frac

    def step(self, grads: dict[str, np.ndarray]):
        """Apply one Adam update in place; unknown names raise ShapeError."""
        self.it += 1
        params = {name: arr for name, arr, _ in self.cloud.named_parameters()}
        for name, g in grads.items():
            if name not in self.m:
                raise ShapeError(f"gradient for unregistered parameter {name!r}")
            arr = params[name]
            if g.shape != arr.shape:
                raise ShapeError(
                    f"gradient shape {g.shape} != parameter shape {arr.shape} for {name!r}"
                )
            self.t[name] += 1
            t = self.t[name]
            g = np.asarray(g, dtype=np.float64)
            m = ADAM_BETA1 * self.m[name].astype(np.float64) + (1 - ADAM_BETA1) * g
            v = ADAM_BETA2 * self.v[name].astype(np.float64) + (1 - ADAM_BETA2) * g * g
            self.m[name] = m.astype(np.float32)
            self.v[name] = v.astype(np.float32)
            m_hat = m / (1.0 - ADAM_BETA1**t)
            v_hat = v / (1.0 - ADAM_BETA2**t)
            lr = self.lr_of(self.group_of[name])
            arr -= (lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(arr.dtype)
        rot = self.cloud.rot
        rot[:] = normalize_quat(rot.astype(np.float64)).astype(np.float32)

    def _row_names(self):
        return [n for n in self.cloud.gaussian_column_names() if n in self.m]

    def select_rows(self, idx: np.ndarray):
        """Keep moment rows at `idx`, mirroring the same selection on the cloud."""
        for name in self._row_names():
            self.m[name] = self.m[name][idx]
            self.v[name] = self.v[name][idx]

    def append_rows(self, count: int):
        """Extend moment buffers with `count` zeroed rows per gaussian tensor."""
        for name in self._row_names():
            pad = np.zeros((count,) + self.m[name].shape[1:], dtype=np.float32)
            self.m[name] = np.concatenate([self.m[name], pad], axis=0)
            self.v[name] = np.concatenate([self.v[name], pad], axis=0)

    def state_dict(self) -> dict:
        return {
            "it": self.it,
            "t": dict(self.t),
            "m": {k: a.copy() for k, a in self.m.items()},
            "v": {k: a.copy() for k, a in self.v.items()},
        }

    def load_state_dict(self, state: dict):
        self.it = int(state["it"])
        for name in self.m:
            if name not in state["m"]:
                raise ShapeError(f"optimizer state missing tensor {name!r}")
            self.t[name] = int(state["t"][name])
            self.m[name] = np.asarray(state["m"][name], dtype=np.float32)
            self.v[name] = np.asarray(state["v"][name], dtype=np.float32)
