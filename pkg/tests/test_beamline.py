import math

import numpy as np
import pytest

from eaa.analysis import box_gauss_fwhm, phase_correlate
from eaa.beamline import (
    AxisLimits,
    LimitViolation,
    LineGrid,
    SamplePattern,
    SiemensStar,
    TooManyPoints,
    default_scenario,
)
from eaa.config import load_scenario, scenario_from_dict, scenario_to_dict
from eaa.policies import focusing_scenario


def isolated_line_scenario(**overrides):
    """Single vertical line at x=0 with nothing else nearby."""
    pattern = SamplePattern(primitives=(LineGrid(pitch=1000.0, line_width=0.3),))
    return default_scenario(pattern=pattern, sigma0=0.3, **overrides)


class TestMotion:
    def test_zone_plate_move_and_drift(self, make_beamline):
        bl = make_beamline(default_scenario())
        assert bl.zone_plate_z == -200.0
        text = bl.set_zone_plate_z(-198.0)
        assert text == "zone_plate_z = -198.000 mm"
        assert bl.drift == pytest.approx([1.2 * 2.0, -0.8 * 2.0])

    def test_drift_increments_add(self, make_beamline):
        bl = make_beamline(default_scenario())
        bl.set_zone_plate_z(-198.0)
        bl.set_zone_plate_z(-195.0)
        assert bl.drift == pytest.approx([1.2 * 5.0, -0.8 * 5.0])

    def test_z_limit_violation_leaves_state(self, make_beamline):
        bl = make_beamline(default_scenario())
        before = bl.snapshot()
        with pytest.raises(LimitViolation):
            bl.set_zone_plate_z(-500.0)
        assert bl.snapshot() == before

    def test_move_stage_boundary_inclusive(self, make_beamline):
        scenario = default_scenario(x_limits=AxisLimits(-100, 100), y_limits=AxisLimits(-50, 50))
        bl = make_beamline(scenario)
        assert bl.move_stage(100.0, -50.0) == "stage_x = 100.000, stage_y = -50.000"

    def test_move_stage_beyond_max(self, make_beamline):
        scenario = default_scenario(x_limits=AxisLimits(-100, 100))
        bl = make_beamline(scenario)
        before = bl.snapshot()
        with pytest.raises(LimitViolation):
            bl.move_stage(101.0, 0.0)
        assert bl.snapshot() == before

    def test_psf_sigma_minimum_at_focus(self, make_beamline):
        bl = make_beamline(default_scenario())
        assert bl.psf_sigma(z=-193.5) == pytest.approx(0.15)
        assert bl.psf_sigma(z=-195.5) == pytest.approx(math.hypot(0.15, 0.6 * 2.0))


class TestAcquire2D:
    def test_shape_extent_and_plot(self, make_beamline):
        bl = make_beamline(default_scenario())
        rec = bl.acquire_2d(0, 0, 10, 6, 0.5)
        assert rec.data.shape == (13, 21)
        assert rec.extent == pytest.approx((-5, 5, -3, 3))
        assert rec.rendered_path.endswith("0001_acquire_image_2d.png")

    def test_point_cap(self, make_beamline):
        bl = make_beamline(default_scenario())
        with pytest.raises(TooManyPoints):
            bl.acquire_2d(0, 0, 100, 100, 0.1)

    def test_region_limit_violation(self, make_beamline):
        scenario = default_scenario(x_limits=AxisLimits(-10, 10))
        bl = make_beamline(scenario)
        before = bl.snapshot()
        with pytest.raises(LimitViolation):
            bl.acquire_2d(8, 0, 10, 10, 1.0)
        assert bl.snapshot() == before and bl.last_image is None

    def test_seed_determinism_byte_identical(self, make_beamline):
        scenario = default_scenario(noise_snr=50.0, seed=11)
        a = make_beamline(scenario).acquire_2d(0, 0, 8, 8, 0.5)
        b = make_beamline(scenario).acquire_2d(0, 0, 8, 8, 0.5)
        assert a.data.tobytes() == b.data.tobytes()

    def test_last_and_previous_image_tracked(self, make_beamline):
        bl = make_beamline(default_scenario())
        r1 = bl.acquire_2d(0, 0, 8, 8, 0.5)
        assert bl.last_image is r1 and bl.previous_image is None
        r2 = bl.acquire_2d(0, 0, 8, 8, 0.5)
        assert bl.last_image is r2 and bl.previous_image is r1


class TestLineScan:
    def test_peak_position_and_fwhm_against_convolution_oracle(self, make_beamline):
        # analytic oracle: box(line width) conv Gaussian(psf sigma), half-max width
        scenario = isolated_line_scenario()
        bl = make_beamline(scenario)
        bl.zone_plate_z = scenario.z_focus  # sharpest
        rec = bl.scan_line_1d(-4.0, 5.0, 4.0, 5.0, 161)
        assert rec.fit is not None
        peak = bl.peak_position(rec)
        assert peak[0] == pytest.approx(0.0, abs=rec.step / 2)
        expected = box_gauss_fwhm(0.3, scenario.sigma0)
        assert rec.fit.fwhm == pytest.approx(expected, rel=0.10)

    def test_fwhm_larger_when_defocused(self, make_beamline):
        scenario = isolated_line_scenario()
        bl = make_beamline(scenario)
        bl.zone_plate_z = scenario.z_focus
        sharp = bl.scan_line_1d(-4, 5, 4, 5, 121).fit.fwhm
        bl.zone_plate_z = scenario.z_focus + 4.0
        blurred = bl.scan_line_1d(-4, 5, 4, 5, 121).fit.fwhm
        assert blurred > sharp

    def test_fwhm_strictly_monotone_in_defocus(self, make_beamline):
        # blur-model monotonicity oracle over 8 z values straddling the focus
        scenario = isolated_line_scenario()
        bl = make_beamline(scenario)
        z_focus = scenario.z_focus
        zs = [z_focus + d for d in (0.0, -0.4, 0.7, -1.1, 1.6, -2.2, 2.9, -3.6)]
        fwhms = []
        for z in zs:
            bl.zone_plate_z = z
            bl.drift = [0.0, 0.0]
            fwhms.append(bl.scan_line_1d(-6, 5, 6, 5, 161).fit.fwhm)
        order = np.argsort([abs(z - z_focus) for z in zs])
        ordered = [fwhms[i] for i in order]
        assert all(a < b for a, b in zip(ordered, ordered[1:]))

    def test_empty_region_no_peak(self, make_beamline):
        bl = make_beamline(isolated_line_scenario())
        rec = bl.scan_line_1d(100.0, 100.0, 108.0, 100.0, 81)
        assert rec.fit is None

    def test_drift_shifts_apparent_peak(self, make_beamline):
        scenario = isolated_line_scenario()
        bl = make_beamline(scenario)
        bl.zone_plate_z = scenario.z_focus
        bl.drift = [1.5, 0.0]
        rec = bl.scan_line_1d(-4, 5, 4, 5, 161)
        peak = bl.peak_position(rec)
        assert peak[0] == pytest.approx(1.5, abs=rec.step)

    def test_too_few_points(self, make_beamline):
        bl = make_beamline(default_scenario())
        with pytest.raises(ValueError):
            bl.scan_line_1d(0, 0, 1, 0, 4)

    def test_endpoints_limit(self, make_beamline):
        scenario = default_scenario(x_limits=AxisLimits(-10, 10))
        bl = make_beamline(scenario)
        with pytest.raises(LimitViolation):
            bl.scan_line_1d(0, 0, 20, 0, 16)


class TestRegistrationConsistency:
    def test_zone_plate_move_recovered_within_one_pixel(self, make_beamline):
        # the registration invariant in the regime where features are sharp
        scenario = focusing_scenario()
        bl = make_beamline(scenario)
        bl.zone_plate_z = -194.0
        r1 = bl.acquire_2d(0, 4, 12, 12, 0.5)
        bl.set_zone_plate_z(-192.0)
        r2 = bl.acquire_2d(0, 4, 12, 12, 0.5)
        off = phase_correlate(r1.data, r2.data, pixel_pitch=r2.step)
        assert off.dx == pytest.approx(1.2 * 2.0, abs=r2.step)
        assert off.dy == pytest.approx(-0.8 * 2.0, abs=r2.step)


class TestScenarioConfig:
    def test_round_trip_via_dict(self):
        cfg = focusing_scenario(noise_snr=80.0, seed=5)
        again = scenario_from_dict(scenario_to_dict(cfg))
        assert again == cfg

    def test_load_toml(self, tmp_path):
        toml = """
z_focus = -193.5
z_start = -200.0
sigma0 = 0.2
drift_coeff = [1.0, -0.5]

[limits]
z = [-210.0, -180.0]

[pattern]
background = 0.1
feature = 0.9

[[pattern.stars]]
center = [5.0, 5.0]
radius = 4.0
n_spokes = 10

[[pattern.grids]]
pitch = 20.0
line_width = 1.0
"""
        path = tmp_path / "scenario.toml"
        path.write_text(toml)
        cfg = load_scenario(path)
        assert cfg.sigma0 == 0.2
        assert cfg.drift_coeff == (1.0, -0.5)
        stars = [p for p in cfg.pattern.primitives if isinstance(p, SiemensStar)]
        assert stars[0].n_spokes == 10
        assert cfg.pattern.background == 0.1

    def test_load_json(self, tmp_path):
        import json

        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(scenario_to_dict(focusing_scenario())))
        assert load_scenario(path) == focusing_scenario()

    def test_none_gives_default(self):
        assert load_scenario(None) == default_scenario()

    def test_pattern_validation(self):
        with pytest.raises(ValueError):
            SamplePattern(primitives=(SiemensStar(center=(0, 0), radius=-1, n_spokes=4),))
        with pytest.raises(ValueError):
            SamplePattern(primitives=(), background=2.0)
