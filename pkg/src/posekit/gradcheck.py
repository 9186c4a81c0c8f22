"""Central finite-difference checks for the analytic loss gradients."""

import numpy as np

from . import losses, rotation as rot
from .retrieval import l1_embedding_loss

FD_STEP = 1e-6
KINK_MARGIN = 1e-3


def numeric_grad(f, x, h=FD_STEP):
    """Central differences of scalar ``f`` at every coordinate of ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def relative_error(analytic, numeric):
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def _point_soft_bce(rng):
    z = rng.normal(0.0, 2.0, (3, 8))
    y = rng.choice([0.0, 0.1, 1.0], size=(3, 8))
    return z, lambda v: losses.soft_bce_loss(v, y)


def _point_cross_entropy(rng):
    z = rng.normal(0.0, 2.0, (4, 8))
    gt = rng.integers(0, 8, 4)
    return z, lambda v: losses.cross_entropy_loss(v, gt)


def _point_huber(rng):
    delta = rng.uniform(0.3, 2.0)
    target = rng.normal(size=(4, 3))
    while True:
        pred = target + rng.normal(0.0, 1.5, (4, 3))
        if np.all(np.abs(np.abs(pred - target) - delta) > KINK_MARGIN):
            return pred, lambda v: losses.huber_loss(v, target, delta)


def _point_l1(rng):
    target = rng.normal(size=16)
    while True:
        pred = target + rng.normal(size=16)
        if np.all(np.abs(pred - target) > KINK_MARGIN):
            return pred, lambda v: l1_embedding_loss(v, target)


def _point_delta_geodesic(rng):
    n = 4
    targets = rot.random_rotations(rng, 2 * n).reshape(2, n, 3, 3)
    active = np.zeros((2, n), dtype=bool)
    active[0, rng.integers(n)] = True
    active[1] = rng.random(n) < 0.5
    active[1, 0] = True
    while True:
        s = rng.normal(size=(2, n, 6))
        r = rot.sixd_to_rotation_batch(s.reshape(-1, 6)).reshape(2, n, 3, 3)
        ang = np.array([rot.geodesic_distance(a, b) for a, b in zip(r.reshape(-1, 3, 3), targets.reshape(-1, 3, 3))])
        if np.all((ang > 0.05) & (ang < np.pi - 0.05)):
            return s, lambda v: losses.delta_geodesic_loss(v, targets, active)


GRADIENT_CASES = {
    "soft_bce": _point_soft_bce,
    "cross_entropy": _point_cross_entropy,
    "huber": _point_huber,
    "l1_embedding": _point_l1,
    "delta_geodesic": _point_delta_geodesic,
}


def check_gradient(name, points=100, seed=0):
    """Largest relative error between analytic and FD gradients over ``points`` draws."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        x, fn = GRADIENT_CASES[name](rng)
        _, analytic = fn(x)
        numeric = numeric_grad(lambda v: fn(v)[0], x)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
