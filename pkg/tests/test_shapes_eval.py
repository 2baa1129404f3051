import numpy as np
import pytest
from oracles import ray_rectangle_radius

from isac_eoe.errors import ConfigError
from isac_eoe.evaluation import MonteCarloReport, monte_carlo, one_trial
from isac_eoe.gp import GpHyperParams
from isac_eoe.shapes import ShapeSpec, radial_truth, rmse, sample_contour


def test_circle_and_square_corner():
    assert radial_truth(ShapeSpec.circle(1.0), 0.7) == 1.0
    assert radial_truth(ShapeSpec.rectangle(2.0, 2.0), np.pi / 4) == pytest.approx(2 * np.sqrt(2))


def test_rectangle_matches_ray_casting(rng):
    for _ in range(20):
        hw, hh = rng.uniform(0.2, 3, 2)
        shape = ShapeSpec.rectangle(hw, hh)
        for theta in rng.uniform(-np.pi, np.pi, 50):
            assert abs(radial_truth(shape, theta) - ray_rectangle_radius(hw, hh, theta)) < 1e-9


def test_rectangle_axis_angles_and_continuity():
    shape = ShapeSpec.rectangle(2.0, 0.5)
    for axis, expect in [(0.0, 2.0), (np.pi / 2, 0.5), (-np.pi, 2.0), (-np.pi / 2, 0.5)]:
        assert radial_truth(shape, axis) == pytest.approx(expect, abs=1e-12)
        left, right = radial_truth(shape, axis - 1e-9), radial_truth(shape, axis + 1e-9)
        assert left == pytest.approx(right, abs=1e-6)


def test_star_formula():
    s = ShapeSpec.star(2.0, 0.5, 5)
    th = np.linspace(-np.pi, np.pi, 7)
    assert np.allclose(radial_truth(s, th), 2 + 0.5 * np.cos(5 * th))
    assert ShapeSpec.star().lobes == 3


def test_shape_validation():
    with pytest.raises(ConfigError):
        ShapeSpec.star(1.0, 1.0)
    with pytest.raises(ConfigError):
        ShapeSpec.circle(0.0)
    with pytest.raises(ConfigError):
        ShapeSpec("hexagon")
    with pytest.raises(ConfigError):
        ShapeSpec.gp_sample(GpHyperParams(1.0, 1.0, 0.1, 0.0), seed=0)


def test_gp_sample_shape_deterministic_and_positive():
    h = GpHyperParams(0.04, 0.5, 0.01, 2.0)
    s = ShapeSpec.gp_sample(h, seed=3)
    th = np.linspace(-np.pi, np.pi, 500)
    a, b = radial_truth(s, th), radial_truth(ShapeSpec.gp_sample(h, seed=3), th)
    assert np.array_equal(a, b) and np.all(a > 0)
    assert radial_truth(s, -np.pi) == pytest.approx(radial_truth(s, np.pi))
    assert ShapeSpec.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("shape", [ShapeSpec.circle(1.5, (1, 2)), ShapeSpec.rectangle(1, 2),
                                   ShapeSpec.star()])
def test_dict_round_trip(shape):
    assert ShapeSpec.from_dict(shape.to_dict()) == shape


def test_sample_contour_noiseless_and_spacing():
    shape = ShapeSpec.star()
    ts = sample_contour(shape, 40, noise_std=0.0)
    assert np.array_equal(ts.radii, radial_truth(shape, ts.angles))
    gaps = np.diff(np.sort(np.append(ts.angles, ts.angles[0] + 2 * np.pi)))
    assert gaps.max() == pytest.approx(2 * np.pi / 40)
    assert ts.angles.min() >= -np.pi and ts.angles.max() < np.pi
    rnd = sample_contour(shape, 40, 0.0, np.random.default_rng(1), spacing="random")
    assert not np.allclose(np.diff(rnd.angles), rnd.angles[1] - rnd.angles[0])
    with pytest.raises(ConfigError):
        sample_contour(shape, 0)
    with pytest.raises(ConfigError):
        sample_contour(shape, 4, spacing="log")


def test_sample_noise_std():
    shape = ShapeSpec.circle(5.0)
    ts = sample_contour(shape, 10_000, 0.1, np.random.default_rng(2))
    assert abs((ts.radii - 5.0).std() / 0.1 - 1) < 0.05


def test_negative_radii_clamped():
    ts = sample_contour(ShapeSpec.circle(0.01), 1000, 1.0, np.random.default_rng(0))
    assert ts.radii.min() == 0.0


def test_rmse(rng):
    a = rng.standard_normal(30)
    assert rmse(a, a) == 0.0
    assert rmse(a, a + 0.25) == pytest.approx(0.25, abs=1e-15)
    b = rng.standard_normal(30)
    total = 0.0
    for x, y in zip(a, b):
        total += (x - y) ** 2
    assert rmse(a, b) == pytest.approx((total / 30) ** 0.5, rel=1e-12)
    with pytest.raises(ConfigError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ConfigError):
        rmse([], [])


def test_monte_carlo_reproducible():
    shape = ShapeSpec.circle(1.0)
    a = monte_carlo(shape, [16], iterations=1, base_seed=5)
    b = monte_carlo(shape, [16], iterations=1, base_seed=5)
    assert a == b
    assert a.to_dict()["mean_rmse"] == b.to_dict()["mean_rmse"]
    assert monte_carlo(shape, [16], iterations=1, base_seed=6) != a


def test_monte_carlo_independent_of_jobs():
    shape = ShapeSpec.star()
    a = monte_carlo(shape, [16, 32], iterations=4, base_seed=1, n_jobs=1)
    b = monte_carlo(shape, [16, 32], iterations=4, base_seed=1, n_jobs=2)
    assert a.mean_rmse == b.mean_rmse


def test_monte_carlo_validation():
    with pytest.raises(ConfigError):
        monte_carlo(ShapeSpec.circle(1.0), [16], iterations=0)
    with pytest.raises(ConfigError):
        monte_carlo(ShapeSpec.circle(1.0), [], iterations=1)


def test_noiseless_circle_is_exact():
    rep = monte_carlo(ShapeSpec.circle(1.0), [16, 32, 64, 128], iterations=3, noise_std=0.0)
    assert max(rep.mean_rmse) < 1e-3
    assert rep.failures == (0, 0, 0, 0)


def test_report_defaults_and_rows():
    rep = MonteCarloReport(ShapeSpec.circle(1.0), (16,), (0.1,), 1000, 0, 0.1)
    assert rep.failures == (0,)
    assert rep.csv_rows() == [(16, 0.1, 0)]


def test_one_trial_flags_failures(monkeypatch):
    import isac_eoe.evaluation as ev
    from isac_eoe.errors import IllConditionedError

    def boom(*a, **k):
        raise IllConditionedError("forced")
    monkeypatch.setattr(ev, "fit", boom)
    assert np.isnan(one_trial(ShapeSpec.circle(1.0), 8, 0.1, 0))
    rep = ev.monte_carlo(ShapeSpec.circle(1.0), [8], iterations=3)
    assert rep.failures == (3,) and np.isnan(rep.mean_rmse[0])
