import numpy as np
import pytest

from posekit import losses, rotation as rot, so3grid
from posekit.errors import ShapeMismatch
from posekit.gradcheck import numeric_grad, relative_error
from posekit.model import AdamState, EmbeddingMLP, adam_step


@pytest.fixture(scope="module")
def table():
    return so3grid.generate_bin_table(4, covering_samples=500)


def tiny_model(seed=0, n_tbins=3):
    rng = np.random.default_rng(seed)
    return EmbeddingMLP.init(rng, n_in=7, hidden=6, d_shape=3, d_pose=4, n_classes=3,
                             n_bins=4, n_tbins=n_tbins)


def batch_targets(rng, table, n=5, d=7):
    rs = rot.random_rotations(rng, n)
    return {
        "embed": rng.uniform(-0.9, 0.9, (n, d)),
        "cls": rng.integers(0, 3, n),
        "rot_labels": np.stack([so3grid.soft_labels(r, table) for r in rs]),
        "rot_deltas": np.stack([so3grid.delta_targets(r, table) for r in rs]),
        "trans_bin": rng.integers(0, 3, n),
        "trans_delta": rng.random((n, 3)),
    }


@pytest.mark.parametrize("stage", [1, 2])
def test_backward_matches_finite_differences(table, stage):
    rng = np.random.default_rng(1)
    model = tiny_model()
    x = rng.normal(size=(5, 7))
    targets = batch_targets(rng, table)
    out, cache = model.forward(x)
    _, grads = losses.total_loss(out, targets, stage)
    analytic = model.backward(cache, grads)
    for name, p in model.params.items():
        def f(v, name=name):
            saved = model.params[name]
            model.params[name] = v
            o, _ = model.forward(x)
            model.params[name] = saved
            return losses.total_loss(o, targets, stage)[0].total
        num = numeric_grad(f, p)
        if not num.any() and not analytic[name].any():
            continue
        assert relative_error(analytic[name], num) < 1e-4, name


def test_stage_one_does_not_touch_translation_head(table):
    rng = np.random.default_rng(2)
    model = tiny_model()
    out, cache = model.forward(rng.normal(size=(5, 7)))
    _, grads = losses.total_loss(out, batch_targets(rng, table), 1)
    g = model.backward(cache, grads)
    assert not g["Wt"].any() and not g["bt"].any()


def test_delta_biases_seeded():
    rng = np.random.default_rng(0)
    init = rng.normal(size=(4, 6))
    model = EmbeddingMLP.init(rng, 5, 4, 2, 2, 2, 4, delta_init=init)
    out, _ = model.forward(np.zeros((1, 5)))
    np.testing.assert_allclose(out["delta_r"][0], init)


def test_output_shapes():
    out, _ = tiny_model().forward(np.ones((2, 7)))
    assert out["embed"].shape == (2, 7) and out["cls"].shape == (2, 3)
    assert out["bin_r"].shape == (2, 4) and out["delta_r"].shape == (2, 4, 6)
    assert out["bin_t"].shape == (2, 3) and out["delta_t"].shape == (2, 3, 3)
    assert np.all(np.abs(out["embed"]) < 1)


def test_save_load(tmp_path):
    m = tiny_model(3)
    m.save(tmp_path / "m.json")
    back = EmbeddingMLP.load(tmp_path / "m.json")
    assert back.dims == m.dims
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k])


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = {"w": np.array([1.0, -2.0])}
        new, _ = adam_step(p, {"w": np.zeros(2)}, AdamState(), lr=0.1)
        np.testing.assert_array_equal(new["w"], p["w"])

    def test_first_step_is_lr_times_sign(self):
        p = {"w": np.array([1.0, 1.0, 1.0])}
        g = {"w": np.array([3.0, -0.02, 50.0])}
        new, state = adam_step(p, g, AdamState(), lr=1e-3)
        np.testing.assert_allclose(new["w"] - p["w"], -1e-3 * np.sign(g["w"]), rtol=1e-5)
        assert state.t == 1

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(5)
            p = {"w": rng.normal(size=4)}
            s = AdamState()
            for _ in range(10):
                p, s = adam_step(p, {"w": 2 * p["w"] + rng.normal(size=4)}, s, lr=0.01)
            return p["w"]
        assert np.array_equal(run(), run())

    def test_minimises_quadratic(self):
        p = {"w": np.array([3.0, -4.0])}
        s = AdamState()
        for _ in range(2000):
            p, s = adam_step(p, {"w": 2 * p["w"]}, s, lr=0.05)
        assert np.abs(p["w"]).max() < 1e-2

    def test_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())
        with pytest.raises(ShapeMismatch):
            adam_step({"w": np.zeros(2)}, {"v": np.zeros(2)}, AdamState())
