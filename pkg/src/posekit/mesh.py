"""Triangle meshes: procedural shapes and a minimal OBJ reader/writer."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMesh, InvalidParams

SHAPE_KINDS = ("box", "cylinder", "ellipsoid", "lshape")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray    # (V, 3) float
    triangles: np.ndarray   # (T, 3) int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        t = np.asarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if v.ndim != 2 or v.shape[1] != 3:
            raise DegenerateMesh(f"vertices must be (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise DegenerateMesh("mesh needs at least one triangle")
        if t.min() < 0 or t.max() >= len(v):
            raise DegenerateMesh("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise DegenerateMesh("non-finite vertex")

    def corners(self):
        """``(T, 3, 3)`` triangle corner coordinates."""
        return self.vertices[self.triangles]

    def transformed(self, rotation=None, translation=None, scale=1.0):
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return TriangleMesh(v, self.triangles)

    def centroid(self):
        return self.vertices.mean(axis=0)

    def is_watertight(self):
        """Every undirected edge is shared by exactly two triangles."""
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges.sort(axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def signed_volume(self):
        c = self.corners()
        return float(np.einsum("ti,ti->t", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


def _box(size):
    sx, sy, sz = np.asarray(size, dtype=float) / 2
    v = np.array([[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)])
    # vertex id = 4*ix + 2*iy + iz
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return v, np.array(tris)


def _cylinder(radius, height, segments):
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    h = height / 2
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    v = np.vstack([bottom, top, [[0, 0, -h], [0, 0, h]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [(i, j, segments + j), (i, segments + j, segments + i)]
        tris += [(cb, j, i), (ct, segments + i, segments + j)]
    return v, np.array(tris)


def _icosphere(subdivisions):
    p = (1 + 5**0.5) / 2
    v = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
         (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(x, dtype=float) / np.linalg.norm(x) for x in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts), np.array(faces)


def _lshape(arm_x, arm_y, thickness, depth):
    a, b, t = arm_x, arm_y, thickness
    outline = np.array([(0, 0), (a, 0), (a, t), (t, t), (t, b), (0, b)], dtype=float)
    outline -= outline.mean(axis=0)
    d = depth / 2
    v = np.vstack([np.column_stack([outline, np.full(6, -d)]),
                   np.column_stack([outline, np.full(6, d)])])
    # cap fan from the reflex corner (index 3)
    cap = [(3, 4, 5), (3, 5, 0), (3, 0, 1), (3, 1, 2)]
    tris = [(i, k, j) for i, j, k in cap] + [(6 + i, 6 + j, 6 + k) for i, j, k in cap]
    for i in range(6):
        j = (i + 1) % 6
        tris += [(i, j, 6 + j), (i, 6 + j, 6 + i)]
    return v, np.array(tris)


def make_synthetic_shape(kind, params=None, seed=None):
    """Watertight procedural mesh with outward-facing triangles.

    ``params`` missing from the dict are drawn from ``seed``:

    - box: ``size`` (3,)
    - cylinder: ``radius``, ``height``, ``segments`` (default 16)
    - ellipsoid: ``radii`` (3,), ``subdivisions`` (default 3)
    - lshape: ``arm_x``, ``arm_y``, ``thickness``, ``depth``
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "box":
        size = np.asarray(params.get("size", rng.uniform(0.5, 1.5, 3)), dtype=float)
        if size.shape != (3,) or np.any(size <= 0):
            raise InvalidParams(f"box size must be three positive lengths, got {size}")
        v, t = _box(size)
    elif kind == "cylinder":
        radius = float(params.get("radius", rng.uniform(0.25, 0.75)))
        height = float(params.get("height", rng.uniform(0.5, 1.5)))
        segments = int(params.get("segments", 16))
        if radius <= 0 or height <= 0 or segments < 3:
            raise InvalidParams("cylinder needs radius > 0, height > 0, segments >= 3")
        v, t = _cylinder(radius, height, segments)
    elif kind == "ellipsoid":
        radii = np.asarray(params.get("radii", rng.uniform(0.25, 0.75, 3)), dtype=float)
        subdivisions = int(params.get("subdivisions", 3))
        if radii.shape != (3,) or np.any(radii <= 0) or subdivisions < 0:
            raise InvalidParams("ellipsoid needs three positive radii and subdivisions >= 0")
        v, t = _icosphere(subdivisions)
        v = v * radii
    elif kind == "lshape":
        arm_x = float(params.get("arm_x", rng.uniform(0.8, 1.5)))
        arm_y = float(params.get("arm_y", rng.uniform(0.5, 1.2)))
        thickness = float(params.get("thickness", rng.uniform(0.2, 0.4)))
        depth = float(params.get("depth", rng.uniform(0.2, 0.6)))
        if min(arm_x, arm_y, thickness, depth) <= 0 or thickness >= min(arm_x, arm_y):
            raise InvalidParams("lshape needs positive sizes and thickness below both arms")
        v, t = _lshape(arm_x, arm_y, thickness, depth)
    else:
        raise InvalidParams(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    return TriangleMesh(v, t)


def read_obj(text):
    """Parse ``v``/``f`` lines of an OBJ file; polygons are fan-triangulated."""
    verts, tris = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise DegenerateMesh(f"line {lineno}: face with fewer than 3 vertices")
            tris += [(idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1)]
    if not tris:
        raise DegenerateMesh("OBJ contains no faces")
    return TriangleMesh(np.array(verts, dtype=float), np.array(tris))


def write_obj(mesh):
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"
