"""Loss terms with analytic gradients.

Every function takes arrays with optional leading batch dimensions, averages
per-sample losses over the batch and returns ``(loss, grad)`` where ``grad``
has the shape of the prediction argument.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ClassOutOfRange, DegenerateSixD
from .rotation import SIXD_EPS
from .retrieval import l1_embedding_loss

ACOS_CLAMP = 1e-7


def _batch_size(shape, event_dims):
    return int(np.prod(shape[:len(shape) - event_dims])) if len(shape) > event_dims else 1


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def soft_bce_loss(logits, labels):
    """Per-bin sigmoid binary cross entropy against soft labels.

    ``-(1/N) sum[y log x + (1 - y) log(1 - x)]`` with ``x = sigmoid(logits)``,
    evaluated as ``softplus(z) - y z`` so saturated logits stay finite.
    """
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = z.shape[-1]
    b = _batch_size(z.shape, 1)
    per = np.logaddexp(0.0, z) - y * z
    loss = per.sum() / (n * b)
    grad = (sigmoid(z) - y) / (n * b)
    return float(loss), grad


def cross_entropy_loss(logits, gt_class):
    """Softmax cross entropy; ``gt_class`` is an int or an int array over the batch."""
    z = np.asarray(logits, dtype=float)
    c = z.shape[-1]
    if c < 2:
        raise ValueError("cross entropy needs at least two classes")
    gt = np.asarray(gt_class)
    if np.any(gt < 0) or np.any(gt >= c):
        raise ClassOutOfRange(f"class index outside [0, {c})")
    z2 = z.reshape(-1, c)
    gt = gt.reshape(-1)
    zmax = z2.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z2 - zmax).sum(axis=1))
    rows = np.arange(len(z2))
    b = len(z2)
    loss = (lse - z2[rows, gt]).sum() / b
    p = np.exp(z2 - lse[:, None])
    p[rows, gt] -= 1.0
    return float(loss), (p / b).reshape(z.shape)


def huber_loss(pred, target, delta=1.0):
    """Elementwise Huber, averaged over all components."""
    r = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    a = np.abs(r)
    quad = a <= delta
    per = np.where(quad, 0.5 * r * r, delta * (a - 0.5 * delta))
    grad = np.where(quad, r, delta * np.sign(r)) / r.size
    return float(per.mean()), grad


def _gram_schmidt(s):
    a1, a2 = s[..., :3], s[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        b1 = a1 / n1
    dot = np.sum(b1 * a2, axis=-1, keepdims=True)
    u = a2 - dot * b1
    n2 = np.linalg.norm(u, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):    # callers reject tiny norms
        b2 = u / n2
    b3 = np.cross(b1, b2)
    return a2, n1, b1, dot, n2, b2, b3


def _normalize_backward(b, norm, g):
    return (g - b * np.sum(b * g, axis=-1, keepdims=True)) / norm


def sixd_backward(s, grad_r):
    """Pull a gradient w.r.t. the rotation matrix back to the 6D input."""
    a2, n1, b1, dot, n2, b2, _ = _gram_schmidt(s)
    g1, g2, g3 = grad_r[..., :, 0], grad_r[..., :, 1], grad_r[..., :, 2]
    # b3 = b1 x b2
    gb1 = g1 + np.cross(b2, g3)
    gb2 = g2 + np.cross(g3, b1)
    gu = _normalize_backward(b2, n2, gb2)
    # u = a2 - (b1 . a2) b1
    ga2 = gu - b1 * np.sum(b1 * gu, axis=-1, keepdims=True)
    gb1 = gb1 - dot * gu - a2 * np.sum(b1 * gu, axis=-1, keepdims=True)
    ga1 = _normalize_backward(b1, n1, gb1)
    return np.concatenate([ga1, ga2], axis=-1)


def delta_geodesic_loss(pred_deltas, target_deltas, active):
    """Mean over bins of the geodesic error of each active bin's delta.

    ``pred_deltas``: ``(..., N, 6)`` 6D vectors; ``target_deltas``:
    ``(..., N, 3, 3)``; ``active``: ``(..., N)`` bool. Inactive bins contribute
    nothing but still count in the ``1/N`` normaliser.
    """
    s = np.asarray(pred_deltas, dtype=float)
    t = np.asarray(target_deltas, dtype=float)
    act = np.asarray(active, dtype=bool)
    n = s.shape[-2]
    b = _batch_size(s.shape, 2)
    if not np.all(act.reshape(b, n).any(axis=1)):
        raise ValueError("every sample needs at least one active bin")
    sa, ta = s[act], t[act]
    a2, n1, b1, dot, n2, b2, b3 = _gram_schmidt(sa)
    if np.any(~(n1 > SIXD_EPS)) or np.any(~(n2 > SIXD_EPS)):
        raise DegenerateSixD("degenerate predicted delta")
    r = np.stack([b1, b2, b3], axis=-1)
    cos = (np.einsum("kij,kij->k", r, ta) - 1.0) / 2.0
    lim = 1.0 - ACOS_CLAMP
    cos_c = np.clip(cos, -lim, lim)
    loss = np.arccos(cos_c).sum() / (n * b)
    # d acos(c)/dc, zero where the clamp is active; d tr(R T^T)/dR = T
    dc = np.where(np.abs(cos) < lim, -1.0 / np.sqrt(1.0 - cos_c**2), 0.0)
    grad_r = (dc / (2.0 * n * b))[:, None, None] * ta
    grad = np.zeros_like(s)
    grad[act] = sixd_backward(sa, grad_r)
    return float(loss), grad


@dataclass
class LossBreakdown:
    embed: float = 0.0
    cls: float = 0.0
    bin_r: float = 0.0
    delta_r: float = 0.0
    bin_t: float = 0.0
    delta_t: float = 0.0

    @property
    def total(self):
        return self.embed + self.cls + self.bin_r + self.delta_r + self.bin_t + self.delta_t

    def as_dict(self):
        d = asdict(self)
        d["total"] = self.total
        return d


STAGE_TERMS = {
    1: ("cls", "bin_r", "delta_r"),
    2: ("embed", "cls", "bin_r", "delta_r", "bin_t", "delta_t"),
}


def total_loss(outputs, targets, stage, huber_delta=1.0):
    """Unweighted sum of the active loss terms.

    ``outputs`` holds head predictions keyed ``embed``, ``cls``, ``bin_r``,
    ``delta_r``, ``bin_t``, ``delta_t`` (``delta_t`` as ``(..., M, 3)``).
    ``targets`` holds ``embed``, ``cls`` (int class), ``rot_labels`` (soft
    labels), ``rot_deltas`` (``(..., N, 3, 3)``), ``trans_bin`` (int) and
    ``trans_delta`` (``(..., 3)``). Only the ground-truth translation bin's
    delta is regressed. Returns ``(LossBreakdown, grads)`` where ``grads`` has
    an entry per active head; inactive terms are exactly zero.
    """
    if stage not in STAGE_TERMS:
        raise ValueError(f"stage must be 1 or 2, got {stage}")
    terms = STAGE_TERMS[stage]
    out = LossBreakdown()
    grads = {}
    if "embed" in terms:
        out.embed, grads["embed"] = l1_embedding_loss(outputs["embed"], targets["embed"])
    out.cls, grads["cls"] = cross_entropy_loss(outputs["cls"], targets["cls"])
    labels = np.asarray(targets["rot_labels"])
    out.bin_r, grads["bin_r"] = soft_bce_loss(outputs["bin_r"], labels)
    out.delta_r, grads["delta_r"] = delta_geodesic_loss(outputs["delta_r"], targets["rot_deltas"], labels > 0)
    if "bin_t" in terms:
        out.bin_t, grads["bin_t"] = cross_entropy_loss(outputs["bin_t"], targets["trans_bin"])
        dt = np.asarray(outputs["delta_t"], dtype=float)
        m = dt.shape[-2]
        flat = dt.reshape(-1, m, 3)
        tb = np.asarray(targets["trans_bin"]).reshape(-1)
        rows = np.arange(len(flat))
        picked = flat[rows, tb]
        out.delta_t, g = huber_loss(picked, np.asarray(targets["trans_delta"]).reshape(-1, 3), huber_delta)
        gfull = np.zeros_like(flat)
        gfull[rows, tb] = g
        grads["delta_t"] = gfull.reshape(dt.shape)
    return out, grads
