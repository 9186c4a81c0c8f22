"""Small numpy MLP with disentangled embedding heads, plus Adam.

Layout (``x`` is the flattened input)::

    h     = relu(x @ W1 + b1)
    e     = tanh(h @ W2 + b2)          # [shape (D_s) | pose (D_p)]
    cls   = e_shape @ Wc + bc          # C logits
    rot   = e_pose @ Wr + br           # N bin logits, then N x 6 deltas
    trans = h @ Wt + bt                # M bin logits, then M x 3 deltas (optional)

Translation reads the hidden layer, not the pose embedding, so the pose
embedding stays free of translation.
"""

import json

import numpy as np

from . import rotation as rot
from .errors import ShapeMismatch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class EmbeddingMLP:
    def __init__(self, params, dims):
        self.params = params
        self.dims = dict(dims)

    @classmethod
    def init(cls, rng, n_in, hidden, d_shape, d_pose, n_classes, n_bins, n_tbins=0,
             delta_init=None):
        """He/Glorot-style init. ``delta_init`` (N, 6) seeds the per-bin delta biases."""
        def dense(a, b, gain):
            return rng.standard_normal((a, b)) * (gain / np.sqrt(a))

        p = {
            "W1": dense(n_in, hidden, np.sqrt(2.0)), "b1": np.zeros(hidden),
            "W2": dense(hidden, d_shape + d_pose, 1.0), "b2": np.zeros(d_shape + d_pose),
            "Wc": dense(d_shape, n_classes, 1.0), "bc": np.zeros(n_classes),
            "Wr": dense(d_pose, n_bins * 7, 0.1), "br": np.zeros(n_bins * 7),
        }
        if delta_init is None:
            delta_init = np.tile(rot.rotation_to_sixd(np.eye(3)).T.reshape(6), (n_bins, 1))
        p["br"][n_bins:] = np.asarray(delta_init, dtype=float).reshape(-1)
        if n_tbins:
            p["Wt"] = dense(hidden, n_tbins * 4, 0.1)
            p["bt"] = np.zeros(n_tbins * 4)
            p["bt"][n_tbins:] = 0.5
        dims = dict(n_in=n_in, hidden=hidden, d_shape=d_shape, d_pose=d_pose,
                    n_classes=n_classes, n_bins=n_bins, n_tbins=n_tbins)
        return cls(p, dims)

    def embed(self, x):
        p = self.params
        h = np.maximum(x @ p["W1"] + p["b1"], 0.0)
        e = np.tanh(h @ p["W2"] + p["b2"])
        return h, e

    def forward(self, x):
        """Head outputs keyed like ``losses.total_loss`` expects, plus a backward cache."""
        d = self.dims
        p = self.params
        h, e = self.embed(x)
        ds = d["d_shape"]
        n = d["n_bins"]
        rot_out = e[:, ds:] @ p["Wr"] + p["br"]
        out = {
            "embed": e,
            "cls": e[:, :ds] @ p["Wc"] + p["bc"],
            "bin_r": rot_out[:, :n],
            "delta_r": rot_out[:, n:].reshape(len(x), n, 6),
        }
        if d["n_tbins"]:
            m = d["n_tbins"]
            t_out = h @ p["Wt"] + p["bt"]
            out["bin_t"] = t_out[:, :m]
            out["delta_t"] = t_out[:, m:].reshape(len(x), m, 3)
        return out, (x, h, e)

    def backward(self, cache, grads):
        x, h, e = cache
        d = self.dims
        p = self.params
        ds = d["d_shape"]
        g = {k: np.zeros_like(v) for k, v in p.items()}
        ge = np.zeros_like(e)
        if "embed" in grads:
            ge += grads["embed"]
        if "cls" in grads:
            g["Wc"] = e[:, :ds].T @ grads["cls"]
            g["bc"] = grads["cls"].sum(axis=0)
            ge[:, :ds] += grads["cls"] @ p["Wc"].T
        if "bin_r" in grads or "delta_r" in grads:
            n = d["n_bins"]
            gr = np.zeros((len(x), n * 7))
            if "bin_r" in grads:
                gr[:, :n] = grads["bin_r"]
            if "delta_r" in grads:
                gr[:, n:] = grads["delta_r"].reshape(len(x), n * 6)
            g["Wr"] = e[:, ds:].T @ gr
            g["br"] = gr.sum(axis=0)
            ge[:, ds:] += gr @ p["Wr"].T
        gh = np.zeros_like(h)
        if d["n_tbins"] and ("bin_t" in grads or "delta_t" in grads):
            m = d["n_tbins"]
            gt = np.zeros((len(x), m * 4))
            if "bin_t" in grads:
                gt[:, :m] = grads["bin_t"]
            if "delta_t" in grads:
                gt[:, m:] = grads["delta_t"].reshape(len(x), m * 3)
            g["Wt"] = h.T @ gt
            g["bt"] = gt.sum(axis=0)
            gh += gt @ p["Wt"].T
        gpre2 = ge * (1.0 - e * e)
        g["W2"] = h.T @ gpre2
        g["b2"] = gpre2.sum(axis=0)
        gh += gpre2 @ p["W2"].T
        gpre1 = gh * (h > 0)
        g["W1"] = x.T @ gpre1
        g["b1"] = gpre1.sum(axis=0)
        return g

    def to_dict(self):
        return {"dims": self.dims,
                "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                           for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d):
        params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"])
                  for k, v in d["params"].items()}
        return cls(params, d["dims"])

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


class AdamState:
    def __init__(self):
        self.t = 0
        self.m = {}
        self.v = {}


def adam_step(params, grads, state, lr=1e-4, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """Bias-corrected Adam update; returns new params and mutates ``state``."""
    if set(params) != set(grads):
        raise ShapeMismatch(f"gradient keys {sorted(grads)} do not match params {sorted(params)}")
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    new = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{k}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[k], state.v[k] = m, v
        new[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return new, state
