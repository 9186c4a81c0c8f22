"""Desk-scale two-stage trainer on procedural shapes.

Stage I learns the disentangled embedding from rotated occupancy grids with
shape classification and rotation bin + delta heads. Stage II regresses the
Stage I embeddings (plus class, rotation and translation codes) from cropped
depth-shaded renders of the same shapes together with their crop boxes.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses, rotation as rot, so3grid, translation as tr
from .errors import ConfigError
from .mesh import make_synthetic_shape
from .model import AdamState, EmbeddingMLP, adam_step
from .render import RASTER_SIZE, box_features, render_crop
from .retrieval import DatabaseEntry, ShapeDatabase, nearest_shapes
from .voxel import avg_pool, voxelize_mesh

# L-prisms with unequal arms have no rotational symmetry, so every pose is
# identifiable; boxes, cylinders and ellipsoids are not.
DEFAULT_SHAPES = (
    {"id": "L0", "kind": "lshape", "params": {"arm_x": 1.6, "arm_y": 0.7, "thickness": 0.3, "depth": 0.35}},
    {"id": "L1", "kind": "lshape", "params": {"arm_x": 0.8, "arm_y": 1.5, "thickness": 0.25, "depth": 0.5}},
    {"id": "L2", "kind": "lshape", "params": {"arm_x": 1.2, "arm_y": 0.9, "thickness": 0.5, "depth": 0.3}},
    {"id": "L3", "kind": "lshape", "params": {"arm_x": 1.4, "arm_y": 1.0, "thickness": 0.2, "depth": 0.2}},
    {"id": "L4", "kind": "lshape", "params": {"arm_x": 1.0, "arm_y": 0.6, "thickness": 0.3, "depth": 0.8}},
    {"id": "L5", "kind": "lshape", "params": {"arm_x": 1.5, "arm_y": 1.4, "thickness": 0.35, "depth": 0.6}},
    {"id": "L6", "kind": "lshape", "params": {"arm_x": 0.9, "arm_y": 0.5, "thickness": 0.45, "depth": 0.45}},
    {"id": "L7", "kind": "lshape", "params": {"arm_x": 1.8, "arm_y": 0.45, "thickness": 0.25, "depth": 0.25}},
)


@dataclass
class TrainConfig:
    shapes: list = field(default_factory=lambda: [dict(s) for s in DEFAULT_SHAPES])
    n_bins: int = 8
    alpha: float = 0.1
    beta: float = None          # defaults to the table spacing
    resolution: int = 32
    pool: int = 4
    hidden: int = 256
    d_shape: int = 128
    d_pose: int = 128
    lr: float = 1e-3
    batch_size: int = 64
    stage1_epochs: int = 50
    stage1_samples_per_shape: int = 1000
    stage2_epochs: int = 40
    stage2_train: int = 6000
    stage2_test: int = 200
    probe_rotations: int = 25
    holdout_per_shape: int = 25
    translation_ranges: list = field(default_factory=lambda: [list(r) for r in tr.DEFAULT_RANGES])
    translation_divisions: list = field(default_factory=lambda: list(tr.DEFAULT_DIVISIONS))
    covering_samples: int = so3grid.COVERING_SAMPLES

    def validate(self):
        if len(self.shapes) < 4:
            raise ConfigError("need at least 4 synthetic shapes")
        ids = [s.get("id") for s in self.shapes]
        if None in ids or len(set(ids)) != len(ids):
            raise ConfigError("every shape needs a unique 'id'")
        for name in ("n_bins", "resolution", "pool", "hidden", "d_shape", "d_pose", "batch_size",
                     "stage1_epochs", "stage1_samples_per_shape", "stage2_epochs",
                     "stage2_train", "stage2_test"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.resolution % self.pool:
            raise ConfigError("resolution must be divisible by pool")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        return self

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                return cls.from_dict(json.load(f))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None

    def to_dict(self):
        return asdict(self)


def sixd_flat(r):
    """Flat ``[a1, a2]`` 6-vector of a rotation (or stack of rotations)."""
    r = np.asarray(r, dtype=float)
    return np.swapaxes(r[..., :, :2], -1, -2).reshape(r.shape[:-2] + (6,))


def build_meshes(cfg, seed):
    return [make_synthetic_shape(s["kind"], s.get("params"), seed=seed + i)
            for i, s in enumerate(cfg.shapes)]


def voxel_features(mesh, r, cfg):
    grid = voxelize_mesh(mesh.transformed(rotation=r), cfg.resolution, fit="sphere")
    return avg_pool(grid.data, cfg.pool).ravel()


def image_features(mesh, r, t):
    """Flattened crop raster followed by the encoded crop box."""
    img, box = render_crop(mesh, r, t, RASTER_SIZE)
    return np.concatenate([img.ravel(), box_features(box)])


def rotation_targets(rs, table, cfg):
    beta = cfg.beta if cfg.beta is not None else table.spacing
    labels = np.stack([so3grid.soft_labels(r, table, cfg.alpha, beta) for r in rs])
    deltas = np.einsum("nij,bjk->bnik", table.bins, rs)
    return labels, deltas


def _batches(rng, n, batch_size):
    order = rng.permutation(n)
    for s in range(0, n, batch_size):
        yield order[s:s + batch_size]


def _run_epoch(model, state, rng, x, targets, stage, cfg):
    sums = losses.LossBreakdown()
    count = 0
    for idx in _batches(rng, len(x), cfg.batch_size):
        out, cache = model.forward(x[idx])
        batch_t = {k: v[idx] for k, v in targets.items()}
        bd, grads = losses.total_loss(out, batch_t, stage)
        g = model.backward(cache, grads)
        model.params, state = adam_step(model.params, g, state, cfg.lr)
        w = len(idx)
        for k in ("embed", "cls", "bin_r", "delta_r", "bin_t", "delta_t"):
            setattr(sums, k, getattr(sums, k) + w * getattr(bd, k))
        count += w
    for k in ("embed", "cls", "bin_r", "delta_r", "bin_t", "delta_t"):
        setattr(sums, k, getattr(sums, k) / count)
    return sums


def decode_rotations(out, table):
    """Highest-scoring bin plus its delta, mapped back through ``R_hat.T @ delta``."""
    k = np.argmax(out["bin_r"], axis=1)
    deltas = rot.sixd_to_rotation_batch(out["delta_r"][np.arange(len(k)), k])
    return np.einsum("bji,bjk->bik", table.bins[k], deltas), k


def decode_translations(out, ttable):
    k = np.argmax(out["bin_t"], axis=1)
    delta = np.clip(out["delta_t"][np.arange(len(k)), k], 0.0, 1.0)
    mins = np.stack([ttable.cube_min(int(i)) for i in k])
    return mins + delta * ttable.cube_dims


@dataclass
class Stage1Result:
    model: EmbeddingMLP
    database: ShapeDatabase
    table: so3grid.RotationBinTable
    history: list
    holdout_accuracy: float
    holdout_pose_mederr: float


def train_stage1(cfg, seed, log=None):
    cfg.validate()
    rng = np.random.default_rng(seed)
    meshes = build_meshes(cfg, seed)
    table = so3grid.generate_bin_table(cfg.n_bins, seed=seed, covering_samples=cfg.covering_samples)
    n_shapes = len(meshes)

    def dataset(per_shape):
        labels = np.repeat(np.arange(n_shapes), per_shape)
        rs = rot.quat_to_rotation_batch(rot.random_quaternions(rng, len(labels)))
        x = np.stack([voxel_features(meshes[c], r, cfg) for c, r in zip(labels, rs)])
        return x, labels, rs

    x, cls, rs = dataset(cfg.stage1_samples_per_shape)
    rot_labels, rot_deltas = rotation_targets(rs, table, cfg)
    targets = {"cls": cls, "rot_labels": rot_labels, "rot_deltas": rot_deltas}

    delta_init = sixd_flat(np.einsum("nij,njk->nik", table.bins, table.bins))
    model = EmbeddingMLP.init(rng, x.shape[1], cfg.hidden, cfg.d_shape, cfg.d_pose,
                              n_shapes, cfg.n_bins, delta_init=delta_init)
    state = AdamState()
    history = []
    for epoch in range(cfg.stage1_epochs):
        bd = _run_epoch(model, state, rng, x, targets, 1, cfg)
        history.append(bd)
        if log:
            log(f"stage1 epoch {epoch + 1}: total={bd.total:.5f}")

    hx, hcls, hrs = dataset(cfg.holdout_per_shape)
    out, _ = model.forward(hx)
    acc = float(np.mean(np.argmax(out["cls"], axis=1) == hcls))
    pred_r, _ = decode_rotations(out, table)
    errs = [rot.geodesic_distance(a, b) for a, b in zip(pred_r, hrs)]

    canon = np.stack([voxel_features(m, np.eye(3), cfg) for m in meshes])
    _, e = model.embed(canon)
    db = ShapeDatabase(DatabaseEntry(s["id"], s["kind"], e[i, :cfg.d_shape])
                       for i, s in enumerate(cfg.shapes))
    return Stage1Result(model, db, table, history, acc, float(np.degrees(np.median(errs))))


def disentanglement_probe(stage1, cfg, seed):
    """Stability of pose bins under shape swaps and of retrieval under rotation swaps.

    Returns ``(pose_bin_stability, retrieval_stability)``, each the fraction
    of probe pairs whose prediction did not change.
    """
    rng = np.random.default_rng(seed)
    meshes = build_meshes(cfg, seed)
    n = len(meshes)
    rs = rot.quat_to_rotation_batch(rot.random_quaternions(rng, cfg.probe_rotations))
    feats = np.stack([[voxel_features(m, r, cfg) for m in meshes] for r in rs])   # (R, S, F)
    flat = feats.reshape(-1, feats.shape[-1])
    out, _ = stage1.model.forward(flat)
    bins = np.argmax(out["bin_r"], axis=1).reshape(len(rs), n)
    retrieved, _ = nearest_shapes(out["embed"][:, :cfg.d_shape], stage1.database)
    retrieved = retrieved.reshape(len(rs), n)

    iu = np.triu_indices(n, 1)
    pose_pairs = bins[:, iu[0]] == bins[:, iu[1]]          # same rotation, different shapes
    ir = np.triu_indices(len(rs), 1)
    shape_pairs = retrieved[ir[0], :] == retrieved[ir[1], :]   # same shape, different rotations
    return float(pose_pairs.mean()), float(shape_pairs.mean())


@dataclass
class Stage2Result:
    model: EmbeddingMLP
    ttable: tr.TranslationBinTable
    history: list
    top1: float
    mederr_deg: float
    translation_error: float
    records: list


def _stage2_dataset(rng, stage1, meshes, ttable, cfg, count):
    n_shapes = len(meshes)
    cls = rng.integers(0, n_shapes, count)
    rs = rot.quat_to_rotation_batch(rot.random_quaternions(rng, count))
    lo, hi = ttable.ranges[:, 0], ttable.ranges[:, 1]
    ts = lo + rng.random((count, 3)) * (hi - lo)
    imgs = np.stack([image_features(meshes[c], r, t) for c, r, t in zip(cls, rs, ts)])
    vox = np.stack([voxel_features(meshes[c], r, cfg) for c, r in zip(cls, rs)])
    _, emb = stage1.model.embed(vox)
    codes = [tr.encode_translation(t, ttable) for t in ts]
    return imgs, cls, rs, ts, emb, codes


def train_stage2(cfg, stage1, seed, log=None):
    cfg.validate()
    rng = np.random.default_rng(seed + 1)
    meshes = build_meshes(cfg, seed)
    table = stage1.table
    ttable = tr.generate_translation_bins(cfg.translation_ranges, cfg.translation_divisions)

    x, cls, rs, ts, emb, codes = _stage2_dataset(rng, stage1, meshes, ttable, cfg, cfg.stage2_train)
    rot_labels, rot_deltas = rotation_targets(rs, table, cfg)
    targets = {
        "embed": emb, "cls": cls, "rot_labels": rot_labels, "rot_deltas": rot_deltas,
        "trans_bin": np.array([c.bin_index for c in codes]),
        "trans_delta": np.stack([c.delta for c in codes]),
    }
    delta_init = sixd_flat(np.einsum("nij,njk->nik", table.bins, table.bins))
    model = EmbeddingMLP.init(rng, x.shape[1], cfg.hidden, cfg.d_shape, cfg.d_pose,
                              len(meshes), cfg.n_bins, n_tbins=ttable.n, delta_init=delta_init)
    state = AdamState()
    history = []
    for epoch in range(cfg.stage2_epochs):
        bd = _run_epoch(model, state, rng, x, targets, 2, cfg)
        history.append(bd)
        if log:
            log(f"stage2 epoch {epoch + 1}: total={bd.total:.5f}")

    hx, hcls, hrs, hts, _, _ = _stage2_dataset(rng, stage1, meshes, ttable, cfg, cfg.stage2_test)
    out, _ = model.forward(hx)
    retrieved, _ = nearest_shapes(out["embed"][:, :cfg.d_shape], stage1.database)
    ids = stage1.database.ids
    gt_ids = [cfg.shapes[c]["id"] for c in hcls]
    pred_ids = [ids[k] for k in retrieved]
    top1 = float(np.mean([a == b for a, b in zip(pred_ids, gt_ids)]))
    pred_r, _ = decode_rotations(out, table)
    errs = np.array([rot.geodesic_distance(a, b) for a, b in zip(pred_r, hrs)])
    pred_t = decode_translations(out, ttable)
    t_err = float(np.median(np.linalg.norm(pred_t - hts, axis=1)))
    # the last input feature is log(crop side), so the crop area is exp(2 * it)
    records = [
        {"instance_id": f"test-{i:04d}", "pred_rotation": rot.to_json(pred_r[i]),
         "gt_rotation": rot.to_json(hrs[i]), "pred_shape_id": pred_ids[i], "gt_shape_id": gt_ids[i],
         "bbox_area": float(np.exp(2.0 * hx[i, -1])), "occluded": False, "truncated": False,
         "category": cfg.shapes[hcls[i]]["kind"]}
        for i in range(len(hx))
    ]
    return Stage2Result(model, ttable, history, top1, float(np.degrees(np.median(errs))), t_err, records)


HISTORY_FIELDS = ("stage", "epoch", "embed", "cls", "bin_r", "delta_r", "bin_t", "delta_t", "total")


def history_csv(rows):
    """CSV text of ``(stage, epoch, LossBreakdown)`` rows with full float precision."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_FIELDS)
    for stage, epoch, bd in rows:
        d = bd.as_dict()
        w.writerow([stage, epoch] + [repr(float(d[k])) for k in HISTORY_FIELDS[2:]])
    return buf.getvalue()
