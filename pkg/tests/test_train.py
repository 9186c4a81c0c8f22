import numpy as np
import pytest

from posekit import metrics, render, rotation as rot
from posekit.errors import ConfigError
from posekit.mesh import make_synthetic_shape
from posekit.train import (
    DEFAULT_SHAPES, HISTORY_FIELDS, TrainConfig, disentanglement_probe, history_csv, sixd_flat,
    train_stage1, train_stage2,
)


def tiny_config(**over):
    cfg = dict(shapes=[dict(s) for s in DEFAULT_SHAPES[:4]], resolution=16, pool=4, hidden=32,
               d_shape=8, d_pose=8, stage1_epochs=3, stage1_samples_per_shape=8, stage2_epochs=2,
               stage2_train=24, stage2_test=6, probe_rotations=3, holdout_per_shape=2,
               covering_samples=1000, batch_size=16)
    cfg.update(over)
    return TrainConfig.from_dict(cfg)


@pytest.fixture(scope="module")
def stage1():
    return train_stage1(tiny_config(), seed=3)


def test_stage1_shapes(stage1):
    assert len(stage1.history) == 3
    assert len(stage1.database) == 4 and stage1.database.dim == 8
    assert stage1.table.n == 8
    assert 0 <= stage1.holdout_accuracy <= 1
    for bd in stage1.history:
        assert bd.embed == 0.0 and bd.bin_t == 0.0 and bd.delta_t == 0.0


def test_stage1_deterministic(stage1):
    again = train_stage1(tiny_config(), seed=3)
    assert history_csv([(1, i, b) for i, b in enumerate(again.history)]) == \
        history_csv([(1, i, b) for i, b in enumerate(stage1.history)])


def test_stage1_loss_decreases():
    res = train_stage1(tiny_config(stage1_epochs=12), seed=0)
    assert res.history[-1].total < res.history[0].total


def test_probe_fractions(stage1):
    pose, shape = disentanglement_probe(stage1, tiny_config(), seed=5)
    assert 0 <= pose <= 1 and 0 <= shape <= 1


def test_stage2_outputs(stage1):
    res = train_stage2(tiny_config(), stage1, seed=3)
    assert len(res.history) == 2 and len(res.records) == 6
    assert all(bd.embed > 0 and bd.bin_t > 0 for bd in res.history)
    records = [metrics.PredictionRecord.from_dict(r) for r in res.records]
    assert metrics.top1_acc(records) == pytest.approx(res.top1)
    assert metrics.med_err(records) == pytest.approx(res.mederr_deg)
    assert all(r.bbox_area > 0 for r in records)


def test_history_csv_layout(stage1):
    text = history_csv([(1, 1, stage1.history[0])])
    header, row = text.strip().split("\n")
    assert header.split(",") == list(HISTORY_FIELDS)
    values = row.split(",")
    assert float(values[-1]) == stage1.history[0].total


@pytest.mark.parametrize("over", [
    {"n_bins": 0}, {"alpha": 1.5}, {"lr": -1.0}, {"pool": 5}, {"shapes": [dict(DEFAULT_SHAPES[0])]},
    {"shapes": [dict(DEFAULT_SHAPES[0])] * 4}, {"no_such_key": 1},
])
def test_config_errors(over):
    with pytest.raises(ConfigError):
        tiny_config(**over)


def test_config_load_bad_json(tmp_path):
    (tmp_path / "c.json").write_text("{")
    with pytest.raises(ConfigError):
        TrainConfig.load(tmp_path / "c.json")


def test_sixd_flat_matches_rotation_to_sixd():
    r = rot.random_rotation(0)
    np.testing.assert_array_equal(sixd_flat(r), rot.rotation_to_sixd(r).T.reshape(6))
    np.testing.assert_allclose(rot.sixd_to_rotation(sixd_flat(r)), r, atol=1e-12)


class TestRender:
    mesh = make_synthetic_shape("lshape", {"arm_x": 1.5, "arm_y": 0.7, "thickness": 0.3, "depth": 0.4})

    def test_crop_is_translation_invariant_up_to_scale(self):
        a, box_a = render.render_crop(self.mesh, np.eye(3), [0.0, 0.0, 2.0])
        b, box_b = render.render_crop(self.mesh, np.eye(3), [0.0, 0.0, 4.0])
        assert box_a[2] == pytest.approx(2 * box_b[2])
        assert np.mean((a > 0) != (b > 0)) < 0.05

    def test_box_tracks_translation(self):
        _, box = render.render_crop(self.mesh, np.eye(3), [1.0, -0.5, 5.0])
        np.testing.assert_allclose(box, [0.2, -0.1, 2 * render.CROP_MARGIN * render.OBJECT_RADIUS / 5.0])
        np.testing.assert_allclose(render.box_features(box)[:2], [0.2, -0.1])

    def test_tilted_pose_has_depth_shading(self):
        flat, _ = render.render_crop(self.mesh, np.eye(3), [0, 0, 3])
        tilted, _ = render.render_crop(self.mesh, rot.rot_x(0.6) @ rot.rot_y(0.4), [0, 0, 3])
        assert len(np.unique(flat[flat > 0].round(9))) < len(np.unique(tilted[tilted > 0].round(9)))

    def test_shading_range(self):
        img, _ = render.render_crop(self.mesh, rot.random_rotation(1), [0.3, 0.2, 3])
        covered = img[img > 0]
        assert covered.min() >= 0.4 - 1e-12 and covered.max() <= 1.0 + 1e-12
        binary, _ = render.render_crop(self.mesh, rot.random_rotation(1), [0.3, 0.2, 3], binary=True)
        assert set(np.unique(binary)) <= {0.0, 1.0}

    def test_behind_camera(self):
        with pytest.raises(ValueError):
            render.render_crop(self.mesh, np.eye(3), [0, 0, 0.01])
