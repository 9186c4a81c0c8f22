"""Pose and retrieval metrics: MedErr, Acc pi/6, Top-1-Acc and bucketed reports."""

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import rotation as rot
from .errors import EmptyAfterFilter, ParseError

log = logging.getLogger(__name__)

ACC_THRESHOLD = np.pi / 6
# acos round-off puts an exact 30 degree rotation a few ulps either side of
# pi/6; errors this close to the threshold count as on the boundary (a failure).
BOUNDARY_TOL = 1e-9
BUCKETS = ("default", "small", "large", "occluded", "truncated")


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    instance_id: str
    pred_rotation: np.ndarray
    gt_rotation: np.ndarray
    pred_shape_id: str
    gt_shape_id: str
    bbox_area: float = 0.0
    occluded: bool = False
    truncated: bool = False
    category: str = ""

    @property
    def error(self):
        """Geodesic pose error in radians."""
        return rot.geodesic_distance(self.pred_rotation, self.gt_rotation)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                instance_id=str(d["instance_id"]),
                pred_rotation=rot.from_json(d["pred_rotation"]),
                gt_rotation=rot.from_json(d["gt_rotation"]),
                pred_shape_id=str(d.get("pred_shape_id", "")),
                gt_shape_id=str(d.get("gt_shape_id", "")),
                bbox_area=float(d.get("bbox_area", 0.0)),
                occluded=bool(d.get("occluded", False)),
                truncated=bool(d.get("truncated", False)),
                category=str(d.get("category", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad prediction record: {exc}") from None

    def to_dict(self):
        return {
            "instance_id": self.instance_id,
            "pred_rotation": rot.to_json(self.pred_rotation),
            "gt_rotation": rot.to_json(self.gt_rotation),
            "pred_shape_id": self.pred_shape_id,
            "gt_shape_id": self.gt_shape_id,
            "bbox_area": self.bbox_area,
            "occluded": self.occluded,
            "truncated": self.truncated,
            "category": self.category,
        }


def read_jsonl(text):
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(PredictionRecord.from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    return records


def write_jsonl(records):
    return "".join(json.dumps(r.to_dict()) + "\n" for r in records)


def _nonempty(records):
    records = list(records)
    if not records:
        raise EmptyAfterFilter("no records left to evaluate")
    return records


def pose_errors(records):
    return np.array([r.error for r in records])


def med_err(records):
    """Median geodesic error in degrees."""
    records = _nonempty(records)
    return float(np.degrees(np.median(pose_errors(records))))


def acc_pi6(records):
    """Fraction of records whose pose error is strictly below 30 degrees."""
    records = _nonempty(records)
    return float(np.mean(pose_errors(records) < ACC_THRESHOLD - BOUNDARY_TOL))


def top1_acc(records):
    records = _nonempty(records)
    return float(np.mean([r.pred_shape_id == r.gt_shape_id for r in records]))


def is_default(r):
    return not (r.occluded or r.truncated)


def buckets(records):
    """Record lists per bucket.

    ``default`` drops occluded or truncated records; ``small`` and ``large`` are
    the bottom and top thirds (``n // 3``) of the default set by bbox area,
    ties ordered by instance id; ``occluded`` and ``truncated`` take every
    record with that flag.
    """
    default = [r for r in records if is_default(r)]
    ranked = sorted(default, key=lambda r: (r.bbox_area, r.instance_id))
    k = len(ranked) // 3
    return {
        "default": default,
        "small": ranked[:k],
        "large": ranked[len(ranked) - k:] if k else [],
        "occluded": [r for r in records if r.occluded],
        "truncated": [r for r in records if r.truncated],
    }


def summarize(records):
    return {"count": len(records), "med_err_deg": med_err(records),
            "acc_pi6": acc_pi6(records), "top1_acc": top1_acc(records)}


def bucketed_report(records, per_category=False):
    """Metrics per bucket; empty buckets are left out with a warning."""
    records = list(records)
    if len(records) < 3:
        raise ValueError("bucketed report needs at least 3 records")
    report = {}
    for name, recs in buckets(records).items():
        if not recs:
            log.warning("bucket %r is empty; omitted from report", name)
            continue
        report[name] = summarize(recs)
    if per_category:
        cats = sorted({r.category for r in records if is_default(r)})
        report["per_category"] = {
            c: summarize([r for r in records if is_default(r) and r.category == c]) for c in cats
        }
    return report
