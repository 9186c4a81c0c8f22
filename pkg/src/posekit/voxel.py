"""Occupancy grids: binvox I/O, mesh voxelisation and rotation resampling.

Grids are boolean arrays indexed ``data[x, y, z]``. Flat exports (raw bitset)
use x-fastest ordering, i.e. ``data.ravel(order="F")``. The binvox payload
itself is y-fastest, then z, then x, as the format requires.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMesh, DimensionMismatch, MalformedHeader, TruncatedRLEPayload

DEFAULT_RESOLUTION = 32
# fixed sub-voxel offset keeps parity rays off grid-aligned edges
RAY_OFFSET = (np.sqrt(2.0) * 1e-4, np.sqrt(3.0) * 1e-4)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    data: np.ndarray
    translate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=bool)
        if d.ndim != 3 or len(set(d.shape)) != 1:
            raise DimensionMismatch(f"occupancy grid must be cubic, got {d.shape}")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "translate", np.asarray(self.translate, dtype=float))

    @property
    def resolution(self):
        return self.data.shape[0]

    @property
    def count(self):
        return int(self.data.sum())

    def __eq__(self, other):
        return isinstance(other, OccupancyGrid) and np.array_equal(self.data, other.data)

    def to_bitset(self):
        """Packed x-fastest bits plus metadata for JSON export."""
        bits = np.packbits(self.data.ravel(order="F"))
        meta = {"resolution": self.resolution, "order": "x-fastest",
                "translate": self.translate.tolist(), "scale": self.scale}
        return bits.tobytes(), meta


def read_binvox(raw):
    """Parse a binvox v1 file from bytes."""
    lines = []
    pos = 0
    while len(lines) < 5:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise MalformedHeader("header ends before the 'data' line")
        lines.append(raw[pos:end].strip())
        pos = end + 1
        if lines[-1] == b"data":
            break
    if not lines[0].startswith(b"#binvox"):
        raise MalformedHeader("missing '#binvox' magic")
    fields = {}
    for line in lines[1:]:
        parts = line.split()
        if parts:
            fields[parts[0]] = parts[1:]
    if lines[-1] != b"data" or b"dim" not in fields:
        raise MalformedHeader("header needs 'dim' and a terminating 'data' line")
    try:
        dims = [int(v) for v in fields[b"dim"]]
        translate = [float(v) for v in fields.get(b"translate", [0, 0, 0])]
        scale = float(fields.get(b"scale", [1])[0])
    except (ValueError, IndexError) as exc:
        raise MalformedHeader(f"bad header value: {exc}") from None
    if len(dims) != 3 or len(translate) != 3:
        raise MalformedHeader("'dim' and 'translate' need three values")
    if len(set(dims)) != 1:
        raise DimensionMismatch(f"only cubic grids are supported, got dims {dims}")

    payload = np.frombuffer(raw[pos:], dtype=np.uint8)
    if len(payload) % 2:
        raise TruncatedRLEPayload("payload ends inside a (value, count) pair")
    values, counts = payload[::2], payload[1::2].astype(np.int64)
    total = int(counts.sum())
    expected = dims[0] ** 3
    if total < expected:
        raise TruncatedRLEPayload(f"payload covers {total} of {expected} voxels")
    if total > expected:
        raise DimensionMismatch(f"payload covers {total} voxels, header says {expected}")
    flat = np.repeat(values.astype(bool), counts)
    d = dims[0]
    data = flat.reshape(d, d, d).transpose(0, 2, 1)   # stored as [x, z, y]
    return OccupancyGrid(data, np.array(translate), scale)


def rle_encode(flat):
    """binvox run-length pairs for a flat boolean array."""
    flat = np.asarray(flat, dtype=np.uint8)
    if len(flat) == 0:
        return b""
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [len(flat)]]))
    out = bytearray()
    for value, length in zip(flat[starts], lengths):
        while length > 0:
            run = min(int(length), 255)
            out += bytes((int(value), run))
            length -= run
    return bytes(out)


def write_binvox(grid):
    d = grid.resolution
    t = " ".join(f"{v:.9g}" for v in grid.translate)
    header = f"#binvox 1\ndim {d} {d} {d}\ntranslate {t}\nscale {grid.scale:.9g}\ndata\n"
    flat = grid.data.transpose(0, 2, 1).ravel()
    return header.encode("ascii") + rle_encode(flat)


def _fit_transform(mesh, resolution, fit):
    v = mesh.vertices
    room = resolution - 2
    if fit == "box":
        lo, hi = v.min(axis=0), v.max(axis=0)
        center = (lo + hi) / 2
        extent = float((hi - lo).max())
    elif fit == "sphere":
        center = v.mean(axis=0)
        extent = 2.0 * float(np.linalg.norm(v - center, axis=1).max())
    else:
        raise ValueError(f"fit must be 'box' or 'sphere', got {fit!r}")
    if not extent > 0:
        raise DegenerateMesh("mesh has zero extent")
    return center, room / extent


def _parity_fill(tri, resolution):
    """Solid occupancy by counting +x ray crossings (grid coordinates)."""
    res = resolution
    jj, kk = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    ray_y = (jj + 0.5 + RAY_OFFSET[0]).ravel()
    ray_z = (kk + 0.5 + RAY_OFFSET[1]).ravel()
    hist = np.zeros((res * res, res + 1), dtype=np.int64)

    p0, p1, p2 = tri[:, 0], tri[:, 1], tri[:, 2]
    det = (p1[:, 1] - p0[:, 1]) * (p2[:, 2] - p0[:, 2]) - (p2[:, 1] - p0[:, 1]) * (p1[:, 2] - p0[:, 2])
    keep = np.abs(det) > 1e-14
    p0, p1, p2, det = p0[keep], p1[keep], p2[keep], det[keep]
    for s in range(0, len(det), 256):
        a, b, c, dt = p0[s:s + 256], p1[s:s + 256], p2[s:s + 256], det[s:s + 256, None]
        qy = ray_y[None, :]
        qz = ray_z[None, :]

        def cross(u, v):
            return ((u[:, 1, None] - qy) * (v[:, 2, None] - qz)
                    - (v[:, 1, None] - qy) * (u[:, 2, None] - qz))

        wa = cross(b, c) / dt
        wb = cross(c, a) / dt
        wc = 1.0 - wa - wb
        hit = (wa >= 0) & (wb >= 0) & (wc >= 0)
        t_idx, r_idx = np.nonzero(hit)
        x = (wa[t_idx, r_idx] * a[t_idx, 0] + wb[t_idx, r_idx] * b[t_idx, 0]
             + wc[t_idx, r_idx] * c[t_idx, 0])
        # voxel i lies left of the crossing iff i + 0.5 < x
        m = np.clip(np.ceil(x - 0.5), 0, res).astype(np.int64)
        np.add.at(hist, (r_idx, m), 1)

    left_of = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1][:, 1:]   # crossings beyond voxel i
    occ = (left_of % 2 == 1).reshape(res, res, res)             # [y, z, x]
    return occ.transpose(2, 0, 1)


def _tri_box_overlap(tri, centers, half=0.5):
    """Separating-axis test of one triangle against many axis-aligned cubes."""
    v = tri[None, :, :] - centers[:, None, :]          # (m, 3, 3)
    edges = [tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]]
    ok = np.ones(len(centers), dtype=bool)
    axes = [np.eye(3)[i] for i in range(3)]
    axes.append(np.cross(edges[0], edges[1]))
    for e in edges:
        for i in range(3):
            axes.append(np.cross(np.eye(3)[i], e))
    for axis in axes:
        if not np.any(axis):
            continue
        p = v @ axis
        r = half * np.abs(axis).sum()
        ok &= ~((p.min(axis=1) > r) | (p.max(axis=1) < -r))
    return ok


def _surface_fill(tri, resolution):
    occ = np.zeros((resolution,) * 3, dtype=bool)
    for t in tri:
        lo = np.clip(np.floor(t.min(axis=0)).astype(int), 0, resolution - 1)
        hi = np.clip(np.floor(t.max(axis=0)).astype(int), 0, resolution - 1)
        idx = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)],
                                   indexing="ij"), axis=-1).reshape(-1, 3)
        hit = _tri_box_overlap(t, idx + 0.5)
        occ[tuple(idx[hit].T)] = True
    return occ


def voxelize_mesh(mesh, resolution=DEFAULT_RESOLUTION, fit="box"):
    """Occupancy grid of ``mesh`` scaled to leave a one-voxel margin.

    ``fit="box"`` centres the bounding box and maps its longest side to
    ``resolution - 2`` voxels. ``fit="sphere"`` maps the bounding sphere about
    the vertex centroid instead, which is rotation invariant.

    Watertight meshes are filled by parity ray casting along +x (voxel
    occupied iff its centre is inside). Open meshes fall back to marking
    every voxel the surface touches.
    """
    if resolution < 3:
        raise ValueError("resolution must be at least 3")
    center, scale = _fit_transform(mesh, resolution, fit)
    tri = (mesh.corners() - center) * scale + resolution / 2.0
    if mesh.is_watertight():
        data = _parity_fill(tri, resolution)
    else:
        data = _surface_fill(tri, resolution)
    return OccupancyGrid(data, translate=center - (resolution / 2.0) / scale, scale=float(resolution / scale))


def rotate_grid(grid, r):
    """Nearest-neighbour resample of ``grid`` rotated by ``r`` about its centre."""
    res = grid.resolution
    c = (res - 1) / 2.0
    idx = np.indices((res, res, res)).reshape(3, -1).T.astype(float)
    src = (idx - c) @ np.asarray(r, dtype=float) + c    # rows: r.T @ (v - c)
    src = np.rint(src).astype(np.int64)
    inside = np.all((src >= 0) & (src < res), axis=1)
    out = np.zeros(res**3, dtype=bool)
    s = src[inside]
    out[inside] = grid.data[s[:, 0], s[:, 1], s[:, 2]]
    return OccupancyGrid(out.reshape(res, res, res), grid.translate, grid.scale)


def avg_pool(data, factor):
    """Average-pool a cubic grid by ``factor`` along each axis."""
    d = np.asarray(data, dtype=float)
    res = d.shape[0]
    if res % factor:
        raise ValueError(f"resolution {res} is not divisible by {factor}")
    m = res // factor
    return d.reshape(m, factor, m, factor, m, factor).mean(axis=(1, 3, 5))
