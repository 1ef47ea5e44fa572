import numpy as np
import pytest

from pgvba import simulation as sim
from pgvba.operators import uniform_kernel

DELTA = np.ones((1, 1))


def dense_ssim(x, y, L):
    """Window-by-window SSIM with an explicit 11x11 Gaussian window."""
    t = np.arange(-5, 6)
    g = np.exp(-(t[:, None] ** 2 + t[None, :] ** 2) / (2 * 1.5**2))
    g /= g.sum()
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    vals = []
    for r in range(5, x.shape[0] - 5):
        for c in range(5, x.shape[1] - 5):
            a = x[r - 5:r + 6, c - 5:c + 6]
            b = y[r - 5:r + 6, c - 5:c + 6]
            ma, mb = np.sum(g * a), np.sum(g * b)
            va = np.sum(g * (a - ma) ** 2)
            vb = np.sum(g * (b - mb) ** 2)
            cab = np.sum(g * (a - ma) * (b - mb))
            vals.append((2 * ma * mb + c1) * (2 * cab + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return np.mean(vals)


class TestDegrade:
    def test_zero_image_zero_noise(self):
        y = sim.degrade(np.zeros((8, 8)), sim.DegradeSpec(uniform_kernel(3), 0.0, 1.0, seed=1))
        np.testing.assert_array_equal(y, 0.0)

    def test_seeded(self):
        x = sim.phantom((16, 16), 10.0)
        spec = sim.DegradeSpec(uniform_kernel(5), 4.0, 10.0, seed=7)
        np.testing.assert_array_equal(sim.degrade(x, spec), sim.degrade(x, spec))
        other = sim.DegradeSpec(uniform_kernel(5), 4.0, 10.0, seed=8)
        assert not np.array_equal(sim.degrade(x, spec), sim.degrade(x, other))

    def test_mean_clt_bound(self):
        # mixed noise at intensity 5 with sigma^2 = 4 has variance 9
        x = np.full((100, 100), 5.0)
        y = sim.degrade(x, sim.DegradeSpec(DELTA, 4.0, 10.0, seed=3))
        assert abs(y.mean() - 5.0) <= 3 * np.sqrt((5 + 4) / 1e4)
        assert abs(y.var() - 9.0) <= 4 * np.sqrt(2 * 81 / 1e4 + 5 / 1e4)

    def test_poisson_variance(self):
        x = np.full((100, 100), 200.0)
        y = sim.degrade(x, sim.DegradeSpec(DELTA, 0.0, 200.0, seed=4))
        assert np.all(y == np.rint(y))
        n = y.size
        assert abs(y.mean() - 200) <= 3 * np.sqrt(200 / n)
        assert abs(y.var() - 200) <= 3 * np.sqrt((2 * 200**2 + 200) / n)

    def test_blur_is_applied(self):
        x = np.zeros((16, 16))
        x[8, 8] = 1e5
        y = sim.degrade(x, sim.DegradeSpec(uniform_kernel(3), 0.0, 1e5, seed=0))
        assert np.count_nonzero(y) == 9

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            sim.degrade(-np.ones((4, 4)), sim.DegradeSpec(DELTA, 1.0, 1.0))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            sim.DegradeSpec(DELTA, -1.0, 1.0)
        with pytest.raises(ValueError):
            sim.DegradeSpec(DELTA, 1.0, 0.0)


class TestSnr:
    def test_values(self, rng):
        x = np.zeros((4, 4))
        x[0, 0] = 10.0
        e = x.copy()
        e[1, 1] = 1.0
        assert sim.snr(x, e) == pytest.approx(20.0)
        assert sim.snr(x, np.zeros_like(x)) == 0.0
        assert sim.snr(x, x) == float("inf")

    def test_scale_invariant(self, rng):
        x = rng.uniform(0, 1, (8, 8))
        e = x + 0.1 * rng.standard_normal(x.shape)
        assert sim.snr(3.7 * x, 3.7 * e) == pytest.approx(sim.snr(x, e), rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            sim.snr(np.zeros((2, 2)), np.ones((2, 2)))
        with pytest.raises(ValueError):
            sim.snr(np.ones((2, 2)), np.ones((2, 3)))


class TestSsim:
    def test_matches_dense_reference(self, rng):
        x = rng.uniform(0, 10, (16, 16))
        y = x + rng.normal(0, 1.5, x.shape)
        assert sim.ssim(x, y, 10.0) == pytest.approx(dense_ssim(x, y, 10.0), abs=1e-10)

    def test_identity_and_symmetry(self, rng):
        x = rng.uniform(0, 5, (20, 24))
        y = rng.uniform(0, 5, (20, 24))
        assert sim.ssim(x, x, 5.0) == pytest.approx(1.0, abs=1e-12)
        assert sim.ssim(x, y, 5.0) == pytest.approx(sim.ssim(y, x, 5.0), abs=1e-14)
        assert sim.ssim(x, y, 5.0) < 1.0

    def test_luminance_shift_penalized(self):
        x = sim.phantom((32, 32), 10.0)
        assert sim.ssim(x, x + 20.0, 10.0) < 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            sim.ssim(np.ones((16, 16)), np.ones((16, 15)), 1.0)
        with pytest.raises(ValueError):
            sim.ssim(np.ones((8, 8)), np.ones((8, 8)), 1.0)
        with pytest.raises(ValueError):
            sim.ssim(np.ones((16, 16)), np.ones((16, 16)), 0.0)


def test_phantom_and_rescale():
    p = sim.phantom((64, 64), 20.0)
    assert p.shape == (64, 64)
    assert p.min() >= 0 and p.max() == pytest.approx(20.0)
    r = sim.rescale(p + 3.0, 12.0)
    assert r.min() == 0.0 and r.max() == pytest.approx(12.0)
    np.testing.assert_array_equal(sim.rescale(np.ones((3, 3)), 5.0), 0.0)
    with pytest.raises(ValueError):
        sim.phantom((4, 4))
