import logging

import numpy as np
import pytest

from posekit import metrics, rotation as rot
from posekit.errors import EmptyAfterFilter, ParseError
from posekit.metrics import PredictionRecord


def rec(iid, err_deg, area=1.0, occluded=False, truncated=False, correct=True, axis=rot.rot_z, category="c"):
    return PredictionRecord(iid, axis(np.radians(err_deg)), np.eye(3), "a" if correct else "b", "a",
                            area, occluded, truncated, category)


def test_med_err():
    assert metrics.med_err([rec("x", 0), rec("y", 0)]) == 0.0
    assert metrics.med_err([rec("x", 10), rec("y", 20), rec("z", 30)]) == pytest.approx(20)


def test_med_err_matches_sort_oracle():
    rng = np.random.default_rng(0)
    rs = rot.random_rotations(rng, 1000)
    records = [PredictionRecord(str(i), r, np.eye(3), "a", "a") for i, r in enumerate(rs)]
    errs = sorted(np.degrees(rot.geodesic_distance(r, np.eye(3))) for r in rs)
    assert metrics.med_err(records) == pytest.approx((errs[499] + errs[500]) / 2)
    shuffled = [records[i] for i in rng.permutation(1000)]
    assert metrics.med_err(shuffled) == metrics.med_err(records)
    assert 0 <= metrics.med_err(records) <= 180


def test_acc_pi6():
    assert metrics.acc_pi6([rec("x", 0)]) == 1.0
    assert metrics.acc_pi6([rec("x", 10), rec("y", 40)]) == 0.5


@pytest.mark.parametrize("axis", [rot.rot_x, rot.rot_y, rot.rot_z])
def test_acc_boundary_is_a_failure(axis):
    assert metrics.acc_pi6([rec("x", 30, axis=axis)]) == 0.0
    assert metrics.acc_pi6([rec("x", 29.999, axis=axis)]) == 1.0


def test_top1():
    assert metrics.top1_acc([rec("x", 0), rec("y", 0)]) == 1.0
    assert metrics.top1_acc([rec("x", 0, correct=False)]) == 0.0
    assert metrics.top1_acc([rec(str(i), 0, correct=i != 2) for i in range(4)]) == 0.75


@pytest.mark.parametrize("fn", [metrics.med_err, metrics.acc_pi6, metrics.top1_acc])
def test_empty(fn):
    with pytest.raises(EmptyAfterFilter):
        fn([])


def test_thirds():
    b = metrics.buckets([rec("p", 0, area=2), rec("q", 0, area=1), rec("r", 0, area=3)])
    assert [r.instance_id for r in b["small"]] == ["q"]
    assert [r.instance_id for r in b["large"]] == ["r"]


def test_area_ties_break_on_id():
    b = metrics.buckets([rec("b", 0, area=1), rec("a", 0, area=1), rec("c", 0, area=1)])
    assert b["small"][0].instance_id == "a" and b["large"][0].instance_id == "c"


@pytest.fixture
def bucket_records():
    return [
        rec("a", 10, area=1),
        rec("b", 20, area=5, correct=False),
        rec("c", 40, area=3),
        rec("d", 50, area=9),
        rec("e", 25, area=2, occluded=True),
        rec("f", 60, area=4, truncated=True, correct=False),
        rec("g", 5, area=7, occluded=True, truncated=True),
    ]


def test_bucketed_report_by_hand(bucket_records):
    rep = metrics.bucketed_report(bucket_records)
    assert rep["default"]["count"] == 4
    assert rep["default"]["med_err_deg"] == pytest.approx(30.0)
    assert rep["default"]["acc_pi6"] == 0.5
    assert rep["default"]["top1_acc"] == 0.75
    assert rep["small"] == {"count": 1, "med_err_deg": pytest.approx(10), "acc_pi6": 1.0, "top1_acc": 1.0}
    assert rep["large"] == {"count": 1, "med_err_deg": pytest.approx(50), "acc_pi6": 0.0, "top1_acc": 1.0}
    assert rep["occluded"]["count"] == 2
    assert rep["occluded"]["med_err_deg"] == pytest.approx(15.0)
    assert rep["occluded"]["acc_pi6"] == 1.0
    assert rep["truncated"]["med_err_deg"] == pytest.approx(32.5)
    assert rep["truncated"]["acc_pi6"] == 0.5
    assert rep["truncated"]["top1_acc"] == 0.5


def test_report_is_permutation_invariant(bucket_records):
    assert metrics.bucketed_report(bucket_records[::-1]) == metrics.bucketed_report(bucket_records)


def test_all_occluded_warns(caplog):
    records = [rec(str(i), 10 * i, occluded=True) for i in range(3)]
    with caplog.at_level(logging.WARNING, logger="posekit.metrics"):
        rep = metrics.bucketed_report(records)
    assert "default" not in rep and "small" not in rep
    assert rep["occluded"]["count"] == 3
    assert any("default" in m for m in caplog.messages)


def test_report_needs_three():
    with pytest.raises(ValueError):
        metrics.bucketed_report([rec("a", 0), rec("b", 0)])


def test_per_category():
    records = [rec("a", 10, category="car"), rec("b", 20, category="car"), rec("c", 40, category="bus")]
    rep = metrics.bucketed_report(records, per_category=True)
    assert rep["per_category"]["car"]["med_err_deg"] == pytest.approx(15)
    assert rep["per_category"]["bus"]["acc_pi6"] == 0.0


def test_jsonl_roundtrip():
    records = [rec("a", 10, area=2.5, occluded=True), rec("b", 70, correct=False)]
    back = metrics.read_jsonl(metrics.write_jsonl(records))
    assert [r.to_dict() for r in back] == [r.to_dict() for r in records]


@pytest.mark.parametrize("text", ["{not json}\n", '{"instance_id": "x"}\n',
                                  '{"instance_id": "x", "pred_rotation": [1], "gt_rotation": [1]}\n'])
def test_jsonl_errors(text):
    with pytest.raises(ParseError):
        metrics.read_jsonl(text)
