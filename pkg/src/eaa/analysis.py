"""Numerical routines behind the workflows: peak fitting and image registration.

The sharpness metric for focusing is the FWHM of a Gaussian fitted to a 1D
intensity profile; drift between consecutive 2D acquisitions is recovered by
FFT phase correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FWHM_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.354820045...


class AnalysisError(Exception):
    pass


class NoPeak(AnalysisError):
    """The profile contains no discernible peak."""


class NonFinite(AnalysisError):
    """Input contains NaN or infinite values."""


class NonPositiveSigma(AnalysisError):
    pass


class SizeMismatch(AnalysisError):
    pass


class DegenerateSpectrum(AnalysisError):
    """Registration input has no usable spectrum (e.g. all-zero image)."""


@dataclass(frozen=True)
class GaussianFit:
    """Fitted peak parameters; ``fwhm`` is always ``FWHM_FACTOR * sigma``."""

    amplitude: float
    center: float
    sigma: float
    baseline: float
    fwhm: float
    residual_rms: float


@dataclass(frozen=True)
class Offset2D:
    """Translational offset in sample units plus a [0, 1] registration confidence."""

    dx: float
    dy: float
    confidence: float


@dataclass(frozen=True)
class Profile1D:
    """1D intensity profile on monotone positions (length >= 8 for fitting)."""

    positions: np.ndarray
    intensities: np.ndarray

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=np.float64)
        inten = np.asarray(self.intensities, dtype=np.float64)
        if pos.shape != inten.shape or pos.ndim != 1:
            raise ValueError("positions and intensities must be equal-length 1D arrays")
        if pos.size >= 2 and not np.all(np.diff(pos) > 0):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "intensities", inten)


def fwhm_from_sigma(sigma: float) -> float:
    """Full width at half maximum of a Gaussian with the given sigma."""
    if sigma <= 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    return FWHM_FACTOR * sigma


def _gauss(x: np.ndarray, a: float, mu: float, sigma: float, b: float) -> np.ndarray:
    return a * np.exp(-0.5 * ((x - mu) / sigma) ** 2) + b


def _lm_descend(
    x: np.ndarray, y: np.ndarray, p0: np.ndarray, max_iter: int, tol: float, span: float
) -> tuple[np.ndarray, float]:
    """Damped least-squares descent from p0; returns (params, final cost)."""

    def cost_of(params: np.ndarray) -> float:
        r = y - _gauss(x, *params)
        return float(r @ r)

    p = p0.copy()
    lam = 1e-3
    cost = cost_of(p)
    for _ in range(max_iter):
        a, mu, sigma, b = p
        z = (x - mu) / sigma
        e = np.exp(-0.5 * z * z)
        r = y - (a * e + b)
        jac = np.column_stack([e, a * e * z / sigma, a * e * z * z / sigma, np.ones_like(x)])
        jtj = jac.T @ jac
        g = jac.T @ r
        step = None
        for _ in range(12):
            damped = jtj + lam * np.diag(np.diag(jtj))
            try:
                delta = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = p + delta
            cand[2] = abs(cand[2])
            if cand[2] == 0.0 or cand[2] > 100.0 * span or not np.all(np.isfinite(cand)):
                lam *= 10.0
                continue
            cand_cost = cost_of(cand)
            if cand_cost < cost:
                step = (cand, cand_cost, delta)
                lam = max(lam / 3.0, 1e-14)
                break
            lam *= 10.0
        if step is None:
            break
        p, cost, delta = step
        rel = float(np.max(np.abs(delta) / np.maximum(np.abs(p), 1e-30)))
        if rel < tol:
            break
    return p, cost


def gaussian_fit(profile: Profile1D, max_iter: int = 200, tol: float = 1e-8) -> GaussianFit:
    """Least-squares Gaussian peak fit via damped (Levenberg-Marquardt) iteration.

    Initialization: baseline = min, amplitude = max - min, center = argmax
    position, sigma = quarter of the scanned span.  Iterates until the largest
    relative parameter change drops below *tol* or *max_iter* is reached.

    Raises NoPeak when the profile is flat, the fitted amplitude is below three
    times the residual noise, or the fitted sigma exceeds the scanned span.
    """
    x = profile.positions
    y = profile.intensities
    if x.size < 8:
        raise ValueError(f"profile too short for fitting: {x.size} < 8 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFinite("profile contains non-finite values")

    span = float(x[-1] - x[0])
    b0 = float(y.min())
    a0 = float(y.max() - y.min())
    if a0 <= 0.0 or span <= 0.0:
        raise NoPeak("profile is constant")

    p0 = np.array([a0, float(x[np.argmax(y)]), span / 4.0, b0])
    p, cost = _lm_descend(x, y, p0, max_iter, tol, span)
    if p[0] <= 0.0 or abs(p[2]) > span:
        # the quarter-span start can fall into the flat local minimum when the
        # true peak is much narrower; retry once from a moment-based width
        w = np.maximum(y - b0, 0.0)
        if w.sum() > 0.0:
            mu_m = float((w * x).sum() / w.sum())
            sigma_m = math.sqrt(float((w * (x - mu_m) ** 2).sum() / w.sum()))
            if sigma_m > 0.0:
                p_retry, cost_retry = _lm_descend(
                    x, y, np.array([a0, mu_m, sigma_m, b0]), max_iter, tol, span
                )
                if cost_retry < cost:
                    p, cost = p_retry, cost_retry

    a, mu, sigma, b = p
    sigma = abs(sigma)
    residual_rms = math.sqrt(cost / x.size)
    if a <= 0.0 or sigma > span or (residual_rms > 0.0 and a / residual_rms < 3.0):
        raise NoPeak(
            f"no discernible peak (amplitude={a:.4g}, noise={residual_rms:.4g}, sigma={sigma:.4g})"
        )
    return GaussianFit(
        amplitude=a,
        center=mu,
        sigma=sigma,
        baseline=b,
        fwhm=FWHM_FACTOR * sigma,
        residual_rms=residual_rms,
    )


def box_gauss_fwhm(line_width: float, sigma: float, n: int = 20001) -> float:
    """FWHM of a box profile of the given width convolved with a Gaussian.

    Independent closed-form oracle (difference of error functions) for what a
    line scan across a thin line should measure.
    """
    half = line_width / 2.0
    denom = math.sqrt(2.0) * sigma

    def value(u: float) -> float:
        return math.erf((u + half) / denom) - math.erf((u - half) / denom)

    peak = value(0.0)
    target = peak / 2.0
    hi = half + 6.0 * sigma
    xs = np.linspace(0.0, hi, n)
    vals = np.array([value(u) for u in xs])
    below = np.nonzero(vals <= target)[0]
    if below.size == 0:
        raise ValueError("half-maximum crossing not bracketed")
    i = below[0]
    # linear interpolation between the bracketing samples
    x0, x1 = xs[i - 1], xs[i]
    v0, v1 = vals[i - 1], vals[i]
    crossing = x0 + (target - v0) * (x1 - x0) / (v1 - v0)
    return 2.0 * crossing


def phase_correlate(
    image_a: np.ndarray,
    image_b: np.ndarray,
    pixel_pitch: float | tuple[float, float] = 1.0,
    subpixel: bool = False,
    regularization: float = 0.01,
) -> Offset2D:
    """Estimate the translation of *image_b* relative to *image_a*.

    Returns the offset (dx, dy) such that shifting *image_a* by it reproduces
    *image_b* (``b(x) = a(x - d)``), scaled to sample units by the pixel pitch.
    Confidence is 1 minus the ratio of the second-highest correlation peak to
    the highest (second peak taken outside the main peak's 3x3 neighborhood).

    The cross-power spectrum is normalized by its magnitude floored at
    ``regularization * max |cross|`` (plus an absolute 1e-12 guard): spectral
    bins with no real energy would otherwise enter at full unit weight and
    drown the peak when the pair differs in blur grade.  ``regularization=0``
    gives pure whitening.
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape:
        raise SizeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2 or min(a.shape) < 16:
        raise SizeMismatch(f"images must be 2D and at least 16x16, got {a.shape}")
    if not np.any(a) or not np.any(b):
        raise DegenerateSpectrum("all-zero image")

    fa = np.fft.fft2(a)
    fb = np.fft.fft2(b)
    cross = np.conj(fa) * fb
    mag = np.abs(cross)
    cross /= np.maximum(mag, 1e-12 + regularization * float(mag.max()))
    corr = np.fft.ifft2(cross).real

    ny, nx = corr.shape
    iy, ix = np.unravel_index(int(np.argmax(corr)), corr.shape)
    peak = corr[iy, ix]

    masked = corr.copy()
    for oy in (-1, 0, 1):
        for ox in (-1, 0, 1):
            masked[(iy + oy) % ny, (ix + ox) % nx] = -np.inf
    second = float(np.max(masked))
    confidence = 0.0 if peak <= 0 else float(np.clip(1.0 - max(second, 0.0) / peak, 0.0, 1.0))

    dy = float(iy if iy <= ny // 2 else iy - ny)
    dx = float(ix if ix <= nx // 2 else ix - nx)

    if subpixel:
        dx += _parabolic_offset(corr[iy, (ix - 1) % nx], peak, corr[iy, (ix + 1) % nx])
        dy += _parabolic_offset(corr[(iy - 1) % ny, ix], peak, corr[(iy + 1) % ny, ix])

    px, py = (pixel_pitch, pixel_pitch) if np.isscalar(pixel_pitch) else pixel_pitch
    return Offset2D(dx=dx * px, dy=dy * py, confidence=confidence)


def _parabolic_offset(left: float, center: float, right: float) -> float:
    denom = 2.0 * (2.0 * center - left - right)
    if denom == 0:
        return 0.0
    delta = (right - left) / denom
    return float(np.clip(delta, -0.5, 0.5))
