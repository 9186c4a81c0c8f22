"""Disentangled embeddings, the shape database and L2 retrieval."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DuplicateId, EmptyDatabase, ParseError

EMBED_DIM = 512


@dataclass(frozen=True, eq=False)
class EmbeddingPair:
    shape: np.ndarray
    pose: np.ndarray

    def __post_init__(self):
        for name in ("shape", "pose"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} embedding must be a finite 1-D vector")
            object.__setattr__(self, name, v)

    def concat(self):
        return np.concatenate([self.shape, self.pose])


@dataclass(frozen=True)
class DatabaseEntry:
    shape_id: str
    category: str
    vec: np.ndarray


class ShapeDatabase:
    """Ordered, immutable set of canonical-pose shape embeddings."""

    def __init__(self, entries):
        entries = list(entries)
        seen = set()
        dim = None
        clean = []
        for e in entries:
            if not isinstance(e, DatabaseEntry):
                e = DatabaseEntry(*e)
            vec = np.asarray(e.vec, dtype=float)
            if vec.ndim != 1:
                raise DimensionMismatch(f"entry {e.shape_id!r} is not a vector")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DimensionMismatch(f"entry {e.shape_id!r} has dim {len(vec)}, expected {dim}")
            if e.shape_id in seen:
                raise DuplicateId(f"duplicate shape id {e.shape_id!r}")
            seen.add(e.shape_id)
            clean.append(DatabaseEntry(str(e.shape_id), str(e.category), vec))
        self.entries = tuple(clean)
        self.dim = dim
        self._matrix = np.stack([e.vec for e in clean]) if clean else np.zeros((0, 0))

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return (isinstance(other, ShapeDatabase) and len(self) == len(other)
                and all(a.shape_id == b.shape_id and a.category == b.category
                        and np.array_equal(a.vec, b.vec)
                        for a, b in zip(self.entries, other.entries)))

    @property
    def ids(self):
        return [e.shape_id for e in self.entries]

    def matrix(self):
        return self._matrix

    def to_dict(self):
        return {"dim": self.dim,
                "entries": [{"id": e.shape_id, "category": e.category, "vec": e.vec.tolist()}
                            for e in self.entries]}

    @classmethod
    def from_dict(cls, d):
        try:
            entries = [DatabaseEntry(e["id"], e.get("category", ""), np.asarray(e["vec"], dtype=float))
                       for e in d["entries"]]
            dim = d.get("dim")
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed database: {exc}") from None
        db = cls(entries)
        if dim is not None and db.dim is not None and dim != db.dim:
            raise DimensionMismatch(f"header dim {dim} but vectors have {db.dim}")
        return db

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            text = f.read()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
        return cls.from_dict(d)


def build_database(entries):
    return ShapeDatabase(entries)


def nearest_shape(query, db):
    """``(shape_id, distance)`` of the closest entry; ties go to the earliest entry.

    Only the shape half of an embedding is consulted.
    """
    if len(db) == 0:
        raise EmptyDatabase("cannot retrieve from an empty database")
    q = np.asarray(query, dtype=float)
    if q.shape != (db.dim,):
        raise DimensionMismatch(f"query has shape {q.shape}, database dim is {db.dim}")
    d = np.linalg.norm(db.matrix() - q, axis=1)
    k = int(np.argmin(d))
    return db.entries[k].shape_id, float(d[k])


def nearest_shapes(queries, db):
    """Batch form of ``nearest_shape`` returning entry indices and distances."""
    if len(db) == 0:
        raise EmptyDatabase("cannot retrieve from an empty database")
    q = np.asarray(queries, dtype=float)
    if q.ndim != 2 or q.shape[1] != db.dim:
        raise DimensionMismatch(f"queries have shape {q.shape}, database dim is {db.dim}")
    idx = np.empty(len(q), dtype=np.int64)
    dist = np.empty(len(q))
    m = db.matrix()
    for i, row in enumerate(q):
        d = np.linalg.norm(m - row, axis=1)
        idx[i] = np.argmin(d)
        dist[i] = d[idx[i]]
    return idx, dist


def l1_embedding_loss(pred, target):
    """Mean absolute difference over the concatenated shape and pose vectors.

    Returns ``(loss, grad)`` with ``grad`` shaped like the concatenation.
    """
    p = pred.concat() if isinstance(pred, EmbeddingPair) else np.asarray(pred, dtype=float)
    t = target.concat() if isinstance(target, EmbeddingPair) else np.asarray(target, dtype=float)
    if isinstance(pred, EmbeddingPair) and isinstance(target, EmbeddingPair):
        if pred.shape.shape != target.shape.shape or pred.pose.shape != target.pose.shape:
            raise DimensionMismatch("shape/pose dimensions differ between pred and target")
    if p.shape != t.shape:
        raise DimensionMismatch(f"pred {p.shape} vs target {t.shape}")
    diff = p - t
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size
