"""Smoke test for the oodk extension. Run with pytest or directly."""

import math
import os
import tempfile

import oodk


def test_free_energy():
    assert math.isclose(oodk.free_energy([0.0, 0.0]), -math.log(2.0), rel_tol=1e-15)
    assert math.isclose(oodk.free_energy([1000.0, 1000.0], 2.0), -1000.0 - 2.0 * math.log(2.0))


def test_metrics():
    assert oodk.auroc([3.0, 2.0], [2.0, 1.0]) == 0.875
    assert math.isclose(oodk.aupr_in([0.0, 1.0], [2.0]), 7.0 / 12.0)
    assert oodk.balanced_accuracy([0, 0, 1], [0, 1, 1], 2) == 0.75


def test_gaussian_model():
    pts = [[1.0, 1.0], [3.0, 1.0], [2.0, 4.0], [5.0, 0.0], [7.0, 2.0]]
    model = oodk.GaussianModel.fit(pts, [0, 0, 0, 1, 1], 2)
    assert (model.classes, model.dim) == (2, 2)
    assert model.mean(0) == [2.0, 2.0]
    assert model.priors == [0.6, 0.4]
    post = model.posterior([2.0, 2.0])
    assert math.isclose(sum(post), 1.0, rel_tol=1e-12) and post[0] > post[1]
    tails = model.sample_tails(1, n=16, draws=2000, seed=3)
    assert len(tails) == 16
    assert tails == model.sample_tails(1, n=16, draws=2000, seed=3)
    assert all(model.check_energy_gap_bound(t, 1) for t in tails)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.gda")
        model.save(path)
        back = oodk.GaussianModel.load(path)
        assert back.log_density([0.5, 0.5], 1) == model.log_density([0.5, 0.5], 1)


def test_train_and_score():
    data = oodk.generate_synthetic(seed=1, config_json='{"synthetic": {"n_per_class": 40}}')
    x, y = data["train"]
    model = oodk.train(x, y, data["k_known"], mode="CE_ONLY", epochs=5, seed=2,
                       config_json='{"train": {"lr": 0.01, "batch_size": 32}}')
    xi, yi = data["test_id"]
    scores = model.score(xi)
    assert len(scores) == len(xi) and all(math.isfinite(s) for s in scores)
    assert oodk.balanced_accuracy(model.predict(xi), yi, data["k_known"]) > 0.9
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.oodm")
        model.save(path)
        assert oodk.Model.load(path).score(xi) == scores


def test_nda_and_errors():
    img = [((i * 37) % 100) / 100.0 for i in range(16 * 16 * 3)]
    out = oodk.nda(img, 16, 16, 3, seed=5)
    assert len(out) == len(img) and all(0.0 <= v <= 1.0 for v in out)
    assert out == oodk.nda(img, 16, 16, 3, seed=5)
    for bad in (lambda: oodk.auroc([], [1.0]), lambda: oodk.train([[0.0]], [0], 2, mode="NOPE")):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
    print("ok")
