"""Deterministic simulated scanning microscope.

Models a sample pattern (radial star and/or line grid), a focusing optic whose
z-position controls a Gaussian defocus blur, stage motion limits, and a linear
optics-coupled drift: moving the optic by dz shifts the apparent sample
position by ``drift_coeff * dz``.

Blur law: ``sigma_psf = sqrt(sigma0^2 + (blur_coeff * (z - z_focus))^2)`` with
z in mm and blur in sample units (um).  Single minimum at the hidden focus, so
line-scan FWHM is strictly increasing in |z - z_focus|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .analysis import GaussianFit, NoPeak, Profile1D, gaussian_fit
from .plotting import profile_annotation, render_image_plot, render_profile_plot


class BeamlineError(Exception):
    pass


class LimitViolation(BeamlineError):
    """Requested motion or scan region escapes the configured axis limits."""


class TooManyPoints(BeamlineError):
    """Scan would exceed the per-axis point cap."""


# ---------------------------------------------------------------------------
# Sample patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SiemensStar:
    center: tuple[float, float]
    radius: float
    n_spokes: int

    def to_row(self) -> list[float]:
        return [kernels.KIND_STAR, self.center[0], self.center[1], self.radius, float(self.n_spokes), 1.0]


@dataclass(frozen=True)
class LineGrid:
    pitch: float
    line_width: float
    origin: tuple[float, float] = (0.0, 0.0)

    def to_row(self) -> list[float]:
        return [kernels.KIND_GRID, self.pitch, self.line_width, self.origin[0], self.origin[1], 1.0]


@dataclass(frozen=True)
class SpeckleDots:
    """Deterministic hash-placed dot texture (one candidate dot per cell).

    Real specimens carry fine texture; without it, drift registration on the
    bare star/grid geometry has little broadband content to lock onto.
    """

    cell: float = 1.5
    fill: float = 0.25
    radius: float = 0.3
    salt: int = 0
    amplitude: float = 0.3  # texture is dim relative to fabricated features

    def to_row(self) -> list[float]:
        return [kernels.KIND_SPECKLE, self.cell, self.fill, self.radius, float(self.salt), self.amplitude]


Primitive = SiemensStar | LineGrid | SpeckleDots


@dataclass(frozen=True)
class SamplePattern:
    """Composite of primitives; a point is 'feature' if any primitive covers it."""

    primitives: tuple[Primitive, ...]
    background: float = 0.05
    feature: float = 1.0

    def __post_init__(self) -> None:
        for p in self.primitives:
            if isinstance(p, SiemensStar) and p.radius <= 0:
                raise ValueError("star radius must be positive")
            if isinstance(p, LineGrid) and (p.pitch <= 0 or p.line_width <= 0):
                raise ValueError("grid pitch and line width must be positive")
            if isinstance(p, SpeckleDots) and not (0 < p.radius <= 0.3 * p.cell):
                raise ValueError("speckle radius must be in (0, 0.3*cell] so dots stay in-cell")
        if not (0 <= self.background <= 1 and 0 <= self.feature <= 1):
            raise ValueError("intensities must lie in [0, 1]")

    def to_array(self) -> np.ndarray:
        if not self.primitives:
            return np.zeros((0, 6), dtype=np.float64)
        return np.array([p.to_row() for p in self.primitives], dtype=np.float64)

    def stars(self) -> tuple[SiemensStar, ...]:
        return tuple(p for p in self.primitives if isinstance(p, SiemensStar))


def ground_truth(pattern: SamplePattern, x: float, y: float) -> float:
    """Analytic pattern intensity at a single sample point (no blur, no drift)."""
    out = kernels.rasterize_pattern(
        np.array([float(x)]), np.array([float(y)]), pattern.to_array(),
        pattern.background, pattern.feature,
    )
    return float(out[0])


# ---------------------------------------------------------------------------
# Instrument state and scan records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AxisLimits:
    lo: float
    hi: float

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi


@dataclass(frozen=True)
class BeamlineState:
    """Numeric instrument state; frozen copies serve as guardrail snapshots."""

    stage_x: float
    stage_y: float
    zone_plate_z: float
    z_focus: float
    drift_x: float
    drift_y: float


@dataclass
class ScanRecord:
    kind: str  # "2d" | "1d"
    extent: tuple[float, float, float, float]  # x_min, x_max, y_min, y_max
    step: float
    data: np.ndarray
    rendered_path: str
    seq: int
    fit: Optional[GaussianFit] = None
    start: Optional[tuple[float, float]] = None  # 1d only
    end: Optional[tuple[float, float]] = None


@dataclass
class ScenarioConfig:
    pattern: SamplePattern
    z_focus: float = -193.5
    z_start: float = -200.0
    x_limits: AxisLimits = field(default_factory=lambda: AxisLimits(-6000.0, 6000.0))
    y_limits: AxisLimits = field(default_factory=lambda: AxisLimits(-6000.0, 6000.0))
    z_limits: AxisLimits = field(default_factory=lambda: AxisLimits(-210.0, -180.0))
    sigma0: float = 0.15  # sharpest achievable PSF sigma, um
    blur_coeff: float = 0.6  # um of PSF sigma per mm of defocus
    drift_coeff: tuple[float, float] = (1.2, -0.8)  # um of drift per mm of z travel
    noise_snr: Optional[float] = None  # None = noise off
    point_cap: int = 200
    seed: int = 0


def default_pattern() -> SamplePattern:
    # primitive order follows the scenario-file sections: stars, grids, speckles
    return SamplePattern(
        primitives=(
            SiemensStar(center=(25.0, 15.0), radius=6.0, n_spokes=12),
            LineGrid(pitch=10.0, line_width=1.2, origin=(0.0, 0.0)),
        )
    )


def default_scenario(**overrides) -> ScenarioConfig:
    cfg = ScenarioConfig(pattern=default_pattern())
    return replace(cfg, **overrides) if overrides else cfg


class VirtualBeamline:
    """One simulated instrument, owned by a single session.

    Scan outputs are written as PNGs under ``out_dir/<session>/`` and the two
    most recent 2D acquisitions are kept for the registration hook.
    """

    def __init__(self, config: ScenarioConfig, out_dir: str | Path = "eaa_out",
                 session: str = "session") -> None:
        self.config = config
        self.out_dir = Path(out_dir) / session
        self.stage_x = 0.0
        self.stage_y = 0.0
        self.zone_plate_z = config.z_start
        self.drift = [0.0, 0.0]
        self.rng = np.random.default_rng(config.seed)
        self.scan_seq = 0
        self.last_image: Optional[ScanRecord] = None
        self.previous_image: Optional[ScanRecord] = None

    # -- state inspection ---------------------------------------------------

    def snapshot(self) -> BeamlineState:
        return BeamlineState(
            stage_x=self.stage_x,
            stage_y=self.stage_y,
            zone_plate_z=self.zone_plate_z,
            z_focus=self.config.z_focus,
            drift_x=self.drift[0],
            drift_y=self.drift[1],
        )

    def psf_sigma(self, z: float | None = None) -> float:
        dz = (self.zone_plate_z if z is None else z) - self.config.z_focus
        return math.sqrt(self.config.sigma0 ** 2 + (self.config.blur_coeff * dz) ** 2)

    # -- motion -------------------------------------------------------------

    def set_zone_plate_z(self, z: float) -> str:
        if not self.config.z_limits.contains(z):
            raise LimitViolation(
                f"zone plate z={z:g} mm outside limits "
                f"[{self.config.z_limits.lo:g}, {self.config.z_limits.hi:g}]"
            )
        dz = z - self.zone_plate_z
        self.drift[0] += self.config.drift_coeff[0] * dz
        self.drift[1] += self.config.drift_coeff[1] * dz
        self.zone_plate_z = z
        return f"zone_plate_z = {z:.3f} mm"

    def move_stage(self, x: float, y: float) -> str:
        if not self.config.x_limits.contains(x) or not self.config.y_limits.contains(y):
            raise LimitViolation(
                f"stage target ({x:g}, {y:g}) outside limits "
                f"x[{self.config.x_limits.lo:g}, {self.config.x_limits.hi:g}] "
                f"y[{self.config.y_limits.lo:g}, {self.config.y_limits.hi:g}]"
            )
        self.stage_x = x
        self.stage_y = y
        return f"stage_x = {x:.3f}, stage_y = {y:.3f}"

    # -- acquisition --------------------------------------------------------

    def _check_region(self, xs: np.ndarray, ys: np.ndarray) -> None:
        if not (
            self.config.x_limits.contains(float(xs.min()))
            and self.config.x_limits.contains(float(xs.max()))
            and self.config.y_limits.contains(float(ys.min()))
            and self.config.y_limits.contains(float(ys.max()))
        ):
            raise LimitViolation(
                f"scan region x[{xs.min():g}, {xs.max():g}] y[{ys.min():g}, {ys.max():g}] "
                "exceeds stage limits"
            )

    def _observe(self, xs: np.ndarray, ys: np.ndarray, step: float) -> np.ndarray:
        """Blurred, drift-shifted pattern intensities at the given sample points.

        The pattern is rasterized on a supersampled patch (grid pitch dividing
        *step* exactly so scan points land on nodes), convolved with the
        defocus PSF, then sampled.
        """
        sigma = self.psf_sigma()
        sub = max(1, min(16, math.ceil(3.0 * step / sigma)))
        h = step / sub
        margin = (math.ceil(4.0 * sigma / h) + 2) * h
        x_lo, x_hi = float(xs.min()) - margin, float(xs.max()) + margin
        y_lo, y_hi = float(ys.min()) - margin, float(ys.max()) + margin
        nxs = int(round((x_hi - x_lo) / h)) + 1
        nys = int(round((y_hi - y_lo) / h)) + 1
        gx = x_lo + h * np.arange(nxs)
        gy = y_lo + h * np.arange(nys)
        mesh_x = np.repeat(gx[None, :], nys, axis=0).ravel()
        mesh_y = np.repeat(gy[:, None], nxs, axis=1).ravel()
        raster = kernels.rasterize_pattern(
            mesh_x - self.drift[0],
            mesh_y - self.drift[1],
            self.config.pattern.to_array(),
            self.config.pattern.background,
            self.config.pattern.feature,
        ).reshape(nys, nxs)
        blurred = kernels.gaussian_blur(raster, kernels.gaussian_weights(sigma / h))
        return kernels.bilinear_sample(blurred, x_lo, y_lo, h, xs.ravel(), ys.ravel())

    def _apply_noise(self, data: np.ndarray) -> np.ndarray:
        if self.config.noise_snr is None:
            return data
        amplitude = self.config.pattern.feature - self.config.pattern.background
        return data + self.rng.normal(0.0, amplitude / self.config.noise_snr, size=data.shape)

    def _image_path(self, tool: str) -> Path:
        return self.out_dir / f"{self.scan_seq:04d}_{tool}.png"

    def acquire_2d(self, x: float, y: float, width: float, height: float, step: float) -> ScanRecord:
        """2D raster scan centered on (x, y); row 0 of the data is the minimum y."""
        if step <= 0:
            raise ValueError("step must be positive")
        nx = int(round(width / step)) + 1
        ny = int(round(height / step)) + 1
        if nx > self.config.point_cap or ny > self.config.point_cap:
            raise TooManyPoints(
                f"scan would take {nx}x{ny} points; the cap is "
                f"{self.config.point_cap} per axis"
            )
        xs = x - (nx - 1) * step / 2.0 + step * np.arange(nx)
        ys = y - (ny - 1) * step / 2.0 + step * np.arange(ny)
        self._check_region(xs, ys)
        mesh_x = np.repeat(xs[None, :], ny, axis=0)
        mesh_y = np.repeat(ys[:, None], nx, axis=1)
        data = self._observe(mesh_x.ravel(), mesh_y.ravel(), step).reshape(ny, nx)
        data = self._apply_noise(data)

        self.scan_seq += 1
        extent = (float(xs[0]), float(xs[-1]), float(ys[0]), float(ys[-1]))
        path = render_image_plot(
            data,
            extent,
            self._image_path("acquire_image_2d"),
            title=f"2D scan {nx}x{ny} step={step:g} z={self.zone_plate_z:g}",
        )
        record = ScanRecord(
            kind="2d", extent=extent, step=step, data=data, rendered_path=path,
            seq=self.scan_seq,
        )
        self.previous_image = self.last_image
        self.last_image = record
        return record

    def scan_line_1d(
        self, x_start: float, y_start: float, x_end: float, y_end: float, n_points: int
    ) -> ScanRecord:
        """Line scan; positions in the profile are arc length from the start point."""
        if n_points < 8:
            raise ValueError("a line scan needs at least 8 points")
        if n_points > self.config.point_cap:
            raise TooManyPoints(
                f"scan would take {n_points} points; the cap is {self.config.point_cap}"
            )
        xs = np.linspace(x_start, x_end, n_points)
        ys = np.linspace(y_start, y_end, n_points)
        self._check_region(xs, ys)
        length = math.hypot(x_end - x_start, y_end - y_start)
        if length <= 0:
            raise ValueError("line scan endpoints coincide")
        step = length / (n_points - 1)
        data = self._apply_noise(self._observe(xs, ys, step))

        profile = Profile1D(positions=step * np.arange(n_points), intensities=data)
        fit: Optional[GaussianFit] = None
        try:
            fit = gaussian_fit(profile)
        except NoPeak:
            fit = None

        self.scan_seq += 1
        path = render_profile_plot(
            profile,
            fit,
            self._image_path("scan_line_1d"),
            title=f"line scan {n_points} pts z={self.zone_plate_z:g}",
            xlabel="distance along scan (um)",
        )
        return ScanRecord(
            kind="1d",
            extent=(min(x_start, x_end), max(x_start, x_end), min(y_start, y_end), max(y_start, y_end)),
            step=step,
            data=data,
            rendered_path=path,
            seq=self.scan_seq,
            fit=fit,
            start=(x_start, y_start),
            end=(x_end, y_end),
        )

    def peak_position(self, record: ScanRecord) -> Optional[tuple[float, float]]:
        """Absolute sample coordinates of a 1D record's fitted peak."""
        if record.kind != "1d" or record.fit is None or record.start is None or record.end is None:
            return None
        sx, sy = record.start
        ex, ey = record.end
        length = math.hypot(ex - sx, ey - sy)
        frac = record.fit.center / length
        return (sx + frac * (ex - sx), sy + frac * (ey - sy))


# Annotation helper re-exported for tool text (kept with the simulator's users).
__all__ = [
    "AxisLimits",
    "BeamlineError",
    "BeamlineState",
    "LimitViolation",
    "LineGrid",
    "SamplePattern",
    "ScanRecord",
    "ScenarioConfig",
    "SiemensStar",
    "TooManyPoints",
    "VirtualBeamline",
    "default_pattern",
    "default_scenario",
    "ground_truth",
    "profile_annotation",
]
