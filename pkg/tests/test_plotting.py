import math

import numpy as np
import pytest

from eaa.analysis import GaussianFit, Profile1D, gaussian_fit
from eaa.plotting import (
    RenderFailure,
    load_png,
    nice_ticks,
    profile_annotation,
    render_image_plot,
    render_profile_plot,
    save_png,
)


def oracle_ticks(lo, hi, target=5):
    # independent round-step rule: smallest 1/2/5*10^k step >= span/target
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9:
        out.append(round(t, 12))
        t += step
    return out


class TestTicks:
    def test_round_step_oracle(self):
        for lo, hi in [(0, 100), (0, 1), (-5, 5), (3, 47), (-120, 80), (0.2, 0.9)]:
            assert nice_ticks(lo, hi) == pytest.approx(oracle_ticks(lo, hi))

    def test_spec_example_0_100(self):
        assert nice_ticks(0, 100) == pytest.approx([0, 20, 40, 60, 80, 100])

    def test_degenerate_range(self):
        assert nice_ticks(5, 5) == [5]


def sample_fit():
    x = np.linspace(-5, 5, 101)
    y = np.exp(-0.5 * (x / 1.2) ** 2) + 0.1
    return Profile1D(x, y), gaussian_fit(Profile1D(x, y))


class TestProfilePlot:
    def test_png_exists_and_annotation(self, tmp_path):
        prof, fit = sample_fit()
        path = render_profile_plot(prof, fit, tmp_path / "p.png")
        assert load_png(path).shape[2] == 3
        assert profile_annotation(fit).startswith("FWHM=")

    def test_no_peak_annotation(self, tmp_path):
        prof, _ = sample_fit()
        path = render_profile_plot(prof, None, tmp_path / "p.png")
        assert load_png(path) is not None
        assert profile_annotation(None) == "no discernible peak"

    def test_deterministic_bytes(self, tmp_path):
        prof, fit = sample_fit()
        a = render_profile_plot(prof, fit, tmp_path / "a.png")
        b = render_profile_plot(prof, fit, tmp_path / "b.png")
        assert open(a, "rb").read() == open(b, "rb").read()


class TestImagePlot:
    def test_marker_draws_red_pixels(self, tmp_path):
        data = np.linspace(0, 1, 128 * 128).reshape(128, 128)
        path = render_image_plot(data, (0, 100, 0, 100), tmp_path / "m.png", marker=(20, 30))
        img = load_png(path)
        red = (img[:, :, 0] == 255) & (img[:, :, 1] == 0) & (img[:, :, 2] == 0)
        assert red.any()

    def test_no_marker_no_red(self, tmp_path):
        data = np.linspace(0, 1, 64 * 64).reshape(64, 64)
        path = render_image_plot(data, (0, 100, 0, 100), tmp_path / "m.png")
        img = load_png(path)
        red = (img[:, :, 0] == 255) & (img[:, :, 1] == 0) & (img[:, :, 2] == 0)
        assert not red.any()

    def test_row0_drawn_at_bottom(self, tmp_path):
        # bright stripe in row 0 (minimum y) must appear in the lower half
        data = np.zeros((32, 32))
        data[0, :] = 1.0
        path = render_image_plot(data, (0, 10, 0, 10), tmp_path / "o.png")
        img = load_png(path).astype(int)
        gray = img.sum(axis=2)
        interior = gray[45:465, 75:610]
        bright_rows = np.nonzero((interior > 700).sum(axis=1) > 100)[0]
        assert bright_rows.mean() > interior.shape[0] / 2

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.uniform(size=(64, 64))
        a = render_image_plot(data, (0, 50, -25, 25), tmp_path / "a.png", marker=(10, 0))
        b = render_image_plot(data, (0, 50, -25, 25), tmp_path / "b.png", marker=(10, 0))
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_empty_scan_rejected(self, tmp_path):
        with pytest.raises(RenderFailure):
            render_image_plot(np.zeros((0, 4)), (0, 1, 0, 1), tmp_path / "x.png")

    def test_save_and_load_round_trip(self, tmp_path):
        data = np.linspace(0, 1, 64).reshape(8, 8)
        path = save_png(data, tmp_path / "r.png")
        loaded = load_png(path)
        assert loaded.shape == (8, 8)
        assert loaded[0, 0] == 0 and loaded[-1, -1] == 255
