"""Cropped depth-shaded renders used as the toy "images" for Stage II.

A pinhole camera (focal length 1) at the origin looks down +z. The mesh is
normalised to bounding radius ``OBJECT_RADIUS`` about its vertex centroid,
rotated and placed at the translation. Like a detector crop, the raster shows
a square box around the object: centred on the projected centroid, with side
``2 * CROP_MARGIN * OBJECT_RADIUS / t_z`` (the projected bounding sphere), so
the object keeps the same apparent size whatever its pose or distance. Where
the object sits in the full image goes into the crop box ``(cx, cy, side)``,
which is the only translation cue.

Covered pixels hold ``0.4 + 0.6 * nearness`` with nearness in [0, 1] from the
far to the near side of the object; background is 0.
"""

import numpy as np

RASTER_SIZE = 32
OBJECT_RADIUS = 0.25
CROP_MARGIN = 1.1


def place(mesh, rotation, translation):
    """Camera-frame vertices and their object-local depth in [-1, 1]."""
    v = mesh.vertices - mesh.vertices.mean(axis=0)
    v = v / np.linalg.norm(v, axis=1).max()
    v = v @ np.asarray(rotation, dtype=float).T
    cam = v * OBJECT_RADIUS + np.asarray(translation, dtype=float)
    if np.any(cam[:, 2] <= 1e-6):
        raise ValueError("object crosses the camera plane; increase t_z")
    return cam, v[:, 2]


def crop_box(translation):
    t = np.asarray(translation, dtype=float)
    center = t[:2] / t[2]
    side = 2.0 * CROP_MARGIN * OBJECT_RADIUS / t[2]
    return center, side


def rasterize(uv, shade, triangles, size):
    """Z-buffered fill of projected triangles; ``shade`` is per vertex, larger wins."""
    tri_uv = uv[triangles]
    tri_s = shade[triangles]
    centers = (np.arange(size) + 0.5) / size - 0.5
    px, py = np.meshgrid(centers, centers, indexing="xy")
    px, py = px.ravel(), py.ravel()

    a, b, c = tri_uv[:, 0], tri_uv[:, 1], tri_uv[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    keep = np.abs(det) > 1e-12
    a, b, c, det, tri_s = a[keep], b[keep], c[keep], det[keep, None], tri_s[keep]

    def cross(u, w):
        return (u[:, 0, None] - px) * (w[:, 1, None] - py) - (w[:, 0, None] - px) * (u[:, 1, None] - py)

    wa = cross(b, c) / det
    wb = cross(c, a) / det
    wc = 1.0 - wa - wb
    inside = (wa >= 0) & (wb >= 0) & (wc >= 0)
    s = wa * tri_s[:, 0, None] + wb * tri_s[:, 1, None] + wc * tri_s[:, 2, None]
    s = np.where(inside, s, -np.inf).max(axis=0)
    img = np.where(np.isfinite(s), s, 0.0)
    return img.reshape(size, size)


def render_crop(mesh, rotation, translation, size=RASTER_SIZE, binary=False):
    """Return ``(raster, box)``: the ``(size, size)`` crop and ``[cx, cy, side]``.

    ``raster[row, col]`` has rows along image y. ``box`` is in normalised
    image coordinates (x / z, y / z).
    """
    cam, local_z = place(mesh, rotation, translation)
    uv = cam[:, :2] / cam[:, 2:3]
    center, side = crop_box(translation)
    nearness = (1.0 - local_z) / 2.0
    shade = np.ones_like(nearness) if binary else 0.4 + 0.6 * nearness
    img = rasterize((uv - center) / side, shade, mesh.triangles, size)
    return img, np.array([center[0], center[1], side])


def box_features(box):
    """Network-friendly encoding of a crop box: ``[cx, cy, log(side)]``."""
    box = np.asarray(box, dtype=float)
    return np.concatenate([box[..., :2], np.log(box[..., 2:3])], axis=-1)
