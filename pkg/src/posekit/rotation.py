"""Rotation algebra on SO(3).

Rotations are plain ``(3, 3)`` float arrays. Quaternions are ``[w, x, y, z]``.
The 6D representation is a ``(3, 2)`` array whose columns are ``a1`` and
``a2``; flat 6-vectors are read as ``[a1, a2]``.

Euler convention (azimuth, elevation, inplane), camera facing::

    R = Rz(inplane) @ Rx(-elevation) @ Rz(-azimuth)
"""

from typing import NamedTuple

import numpy as np

from .errors import DegenerateSixD

SIXD_EPS = 1e-8
DEFAULT_TOL = 1e-9


class EulerPose(NamedTuple):
    azimuth: float
    elevation: float
    inplane: float


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(m, tol=DEFAULT_TOL):
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    ortho = np.linalg.norm(m.T @ m - np.eye(3))
    return bool(ortho <= tol and abs(np.linalg.det(m) - 1.0) <= tol)


def geodesic_distance(r1, r2):
    """Angle in radians of the relative rotation ``r1 @ r2.T``, in [0, pi]."""
    cos = (np.trace(np.asarray(r1) @ np.asarray(r2).T) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def geodesic_distances(r, rs):
    """Distance from a single rotation ``r`` to each of a stack ``(n, 3, 3)``."""
    # tr(A @ B.T) == sum(A * B)
    traces = np.einsum("nij,ij->n", np.asarray(rs), np.asarray(r))
    return np.arccos(np.clip((traces - 1.0) / 2.0, -1.0, 1.0))


def pairwise_geodesic(rs_a, rs_b):
    traces = np.einsum("aij,bij->ab", np.asarray(rs_a), np.asarray(rs_b))
    return np.arccos(np.clip((traces - 1.0) / 2.0, -1.0, 1.0))


def sixd_to_rotation(s):
    """Gram-Schmidt map from ``[a1 a2]`` to a rotation with columns ``b1, b2, b3``.

    Accepts a ``(3, 2)`` array or a flat 6-vector ``[a1, a2]``. Raises
    ``DegenerateSixD`` when ``a1`` vanishes or ``a2`` is parallel to it.
    """
    a1, a2 = _split_sixd(s)
    n1 = np.linalg.norm(a1)
    if not n1 > SIXD_EPS:
        raise DegenerateSixD(f"|a1| = {n1:.3g} is below {SIXD_EPS}")
    b1 = a1 / n1
    u = a2 - (b1 @ a2) * b1
    n2 = np.linalg.norm(u)
    if not n2 > SIXD_EPS:
        raise DegenerateSixD("a2 is parallel to a1")
    b2 = u / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def sixd_to_rotation_batch(s):
    """Vectorised ``sixd_to_rotation`` for ``(..., 6)`` inputs."""
    s = np.asarray(s, dtype=float)
    a1, a2 = s[..., :3], s[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(~(n1 > SIXD_EPS)):
        raise DegenerateSixD("|a1| vanishes in batch")
    b1 = a1 / n1
    u = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(~(n2 > SIXD_EPS)):
        raise DegenerateSixD("a2 parallel to a1 in batch")
    b2 = u / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rotation_to_sixd(r):
    """First two columns of ``r``, as a ``(3, 2)`` array."""
    return np.array(np.asarray(r, dtype=float)[:, :2])


def _split_sixd(s):
    s = np.asarray(s, dtype=float)
    if s.shape == (3, 2):
        return s[:, 0], s[:, 1]
    if s.shape == (6,):
        return s[:3], s[3:]
    raise ValueError(f"6D representation must have shape (3, 2) or (6,), got {s.shape}")


def compose(r1, r2):
    return np.asarray(r1) @ np.asarray(r2)


def quat_to_rotation(q):
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_rotation_batch(q):
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1)
    return m.reshape(q.shape[:-1] + (3, 3))


def rotation_to_quat(r):
    """Unit quaternion with ``w >= 0`` (Shepperd's method)."""
    m = np.asarray(r, dtype=float)
    tr = np.trace(m)
    diag = np.diag(m)
    k = int(np.argmax([tr, *diag]))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [s / 4, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, s / 4, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, s / 4, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, s / 4]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def quat_angle(q1, q2):
    """Rotation angle between two unit quaternions, sign-agnostic."""
    d = abs(float(np.dot(q1, q2)))
    return 2.0 * float(np.arccos(min(d, 1.0)))


def euler_to_rotation(e):
    azimuth, elevation, inplane = e
    return rot_z(inplane) @ rot_x(-elevation) @ rot_z(-azimuth)


def random_quaternions(rng, n):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_rotation(rng_seed=None):
    """Haar-uniform rotation from a normalised 4D Gaussian.

    ``rng_seed`` is an int seed or a ``numpy.random.Generator`` the caller owns.
    """
    rng = np.random.default_rng(rng_seed)
    return quat_to_rotation(random_quaternions(rng, 1)[0])


def random_rotations(rng_seed, n):
    rng = np.random.default_rng(rng_seed)
    return quat_to_rotation_batch(random_quaternions(rng, n))


def to_json(r):
    """Row-major 9-element list."""
    return [float(v) for v in np.asarray(r, dtype=float).reshape(9)]


def from_json(values):
    m = np.asarray(values, dtype=float)
    if m.size != 9:
        raise ValueError(f"rotation needs 9 values, got {m.size}")
    return m.reshape(3, 3)
