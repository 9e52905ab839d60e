"""Wavelength grids, Gaussian emission peaks, and tissue emission synthesis.

All spectra live on a shared uniform wavelength grid so that downstream
optics (filters, windows, detector channels) compose by pointwise
multiplication regardless of the analytic form of any individual curve.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError

# sigma = fwhm / FWHM_SIGMA_FACTOR for a Gaussian profile
FWHM_SIGMA_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))

# integral of a unit-amplitude Gaussian = amplitude * fwhm * this factor
GAUSSIAN_AREA_FACTOR = math.sqrt(2.0 * math.pi) / FWHM_SIGMA_FACTOR


def gaussian_profile(lam, center, fwhm, amplitude=1.0):
    """Gaussian peak evaluated at wavelength(s) ``lam`` (nm)."""
    sigma = fwhm / FWHM_SIGMA_FACTOR
    lam = np.asarray(lam, dtype=float)
    return amplitude * np.exp(-((lam - center) ** 2) / (2.0 * sigma * sigma))


@dataclass(frozen=True)
class WavelengthGrid:
    """Uniform wavelength sampling: first sample at lambda_min, step in nm."""

    lambda_min: float
    lambda_max: float
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.lambda_min >= self.lambda_max:
            raise ValueError(
                f"grid bounds inverted: [{self.lambda_min}, {self.lambda_max}]"
            )

    @property
    def n_samples(self) -> int:
        # small epsilon absorbs float fuzz in (max - min) / step
        return int(math.floor((self.lambda_max - self.lambda_min) / self.step + 1e-9)) + 1

    @cached_property
    def wavelengths(self) -> np.ndarray:
        lam = self.lambda_min + self.step * np.arange(self.n_samples, dtype=float)
        lam.flags.writeable = False
        return lam

    def covers(self, lo: float, hi: float) -> bool:
        return self.lambda_min <= lo and hi <= self.wavelengths[-1]


@dataclass(frozen=True)
class Spectrum:
    """Sampled spectral power density (nW/nm) on a wavelength grid."""

    grid: WavelengthGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_samples,):
            raise ValueError(
                f"spectrum has {values.shape} values for a "
                f"{self.grid.n_samples}-sample grid"
            )
        if np.any(values < 0):
            raise ValueError("spectral power density must be non-negative")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def value_at(self, lam: float) -> float:
        """Linearly interpolated density at an arbitrary in-range wavelength."""
        lams = self.grid.wavelengths
        if not (lams[0] <= lam <= lams[-1]):
            raise ValueError(f"wavelength {lam} nm outside grid range")
        return float(np.interp(lam, lams, self.values))

    def scaled(self, factor: float) -> "Spectrum":
        if factor < 0:
            raise ValueError("scale factor must be non-negative")
        return Spectrum(self.grid, self.values * factor)


@dataclass(frozen=True)
class PeakModel:
    """Gaussian emission peak: center (nm), fwhm (nm), apex density (nW/nm)."""

    center: float
    fwhm: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.fwhm <= 0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be non-negative, got {self.amplitude}")


@dataclass(frozen=True)
class EmissionModel:
    """Tissue emission shape: autofluorescence plus the two PpIX peaks.

    The secondary PpIX peak's ``amplitude`` is a fraction of the primary
    peak amplitude (dimensionless, in [0, 1]), not an absolute density.
    """

    autofluor: PeakModel = PeakModel(center=510.0, fwhm=118.0, amplitude=1.0)
    ppix_primary: PeakModel = PeakModel(center=635.0, fwhm=14.0, amplitude=1.0)
    ppix_secondary: PeakModel = PeakModel(center=704.0, fwhm=30.0, amplitude=0.2)

    def __post_init__(self):
        if not 0.0 <= self.ppix_secondary.amplitude <= 1.0:
            raise ValueError(
                "secondary PpIX amplitude is a fraction of the primary peak "
                f"and must lie in [0, 1], got {self.ppix_secondary.amplitude}"
            )


def build_grid(lambda_min: float, lambda_max: float, step: float) -> WavelengthGrid:
    """Uniform grid from lambda_min to at most lambda_max (nm)."""
    return WavelengthGrid(lambda_min, lambda_max, step)


def default_grid() -> WavelengthGrid:
    """400-750 nm at 1 nm: finer than any modeled peak or channel."""
    return build_grid(400.0, 750.0, 1.0)


def evaluate_peak(peak: PeakModel, grid: WavelengthGrid) -> Spectrum:
    """Sample a Gaussian peak on the grid."""
    return Spectrum(grid, gaussian_profile(grid.wavelengths, peak.center, peak.fwhm, peak.amplitude))


def synthesize_emission(
    a_amp: float, p_amp: float, model: EmissionModel, grid: WavelengthGrid
) -> Spectrum:
    """Tissue emission spectrum for given autofluorescence / PpIX amplitudes.

    ``a_amp`` scales the autofluorescence peak and ``p_amp`` the primary
    PpIX peak; the secondary PpIX peak follows the primary at its
    configured fraction. Amplitudes multiply the model's own apex values.
    """
    if a_amp < 0 or p_amp < 0:
        raise ValueError("emission amplitudes must be non-negative")
    lam = grid.wavelengths
    auto = model.autofluor
    prim = model.ppix_primary
    sec = model.ppix_secondary
    values = (
        a_amp * gaussian_profile(lam, auto.center, auto.fwhm, auto.amplitude)
        + p_amp * gaussian_profile(lam, prim.center, prim.fwhm, prim.amplitude)
        + p_amp * sec.amplitude * gaussian_profile(lam, sec.center, sec.fwhm, prim.amplitude)
    )
    return Spectrum(grid, values)


def monochromatic_line(grid: WavelengthGrid, lam: float, power: float) -> Spectrum:
    """Single-sample line carrying ``power`` nW total at an on-grid wavelength.

    The line density is power/step at the matching sample, so trapezoidal
    integration over the grid returns the stated power. Grid endpoints get
    half trapezoid weight and are rejected.
    """
    if power < 0:
        raise ValueError("line power must be non-negative")
    lams = grid.wavelengths
    idx = int(round((lam - grid.lambda_min) / grid.step))
    if not 0 <= idx < grid.n_samples or abs(lams[idx] - lam) > 1e-6:
        raise ValueError(f"{lam} nm is not on the grid")
    if idx in (0, grid.n_samples - 1):
        raise ValueError("line must sit on an interior grid sample")
    values = np.zeros(grid.n_samples)
    values[idx] = power / grid.step
    return Spectrum(grid, values)


def integrate_band(s: Spectrum, lo: float, hi: float) -> float:
    """Trapezoidal integral of spectral density over [lo, hi] nm.

    Band endpoints need not sit on grid samples; the integrand is
    linearly interpolated there, which keeps the integral exactly
    additive over adjacent bands.
    """
    if lo >= hi:
        raise ValueError(f"band inverted or empty: [{lo}, {hi}]")
    lams = s.grid.wavelengths
    if lo < lams[0] or hi > lams[-1]:
        raise ValueError(
            f"band [{lo}, {hi}] outside grid range [{lams[0]}, {lams[-1]}]"
        )
    inside = (lams > lo) & (lams < hi)
    xs = np.concatenate(([lo], lams[inside], [hi]))
    ys = np.concatenate(
        ([np.interp(lo, lams, s.values)], s.values[inside], [np.interp(hi, lams, s.values)])
    )
    return float(np.trapezoid(ys, xs))


def total_power(s: Spectrum) -> float:
    """Trapezoidal integral over the full grid (nW)."""
    return float(np.trapezoid(s.values, s.grid.wavelengths))


def write_spectrum_csv(s: Spectrum, path) -> None:
    """Two-column CSV ``wavelength_nm,value`` with strictly increasing wavelengths."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength_nm", "value"])
        for lam, val in zip(s.grid.wavelengths, s.values):
            writer.writerow([repr(float(lam)), repr(float(val))])


def read_spectrum_csv(path) -> Spectrum:
    """Read a spectrum written by :func:`write_spectrum_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["wavelength_nm", "value"]:
            raise DataError(f"{path}: expected header 'wavelength_nm,value', got {header}")
        lams, vals = [], []
        for row in reader:
            if len(row) != 2:
                raise DataError(f"{path}: malformed row {row}")
            lams.append(float(row[0]))
            vals.append(float(row[1]))
    if len(lams) < 2:
        raise DataError(f"{path}: a spectrum needs at least two samples")
    lams_arr = np.asarray(lams)
    steps = np.diff(lams_arr)
    if np.any(steps <= 0):
        raise DataError(f"{path}: wavelengths must be strictly increasing")
    step = float(steps[0])
    if not np.allclose(steps, step, rtol=0, atol=1e-9):
        raise DataError(f"{path}: wavelength grid is not uniform")
    grid = WavelengthGrid(float(lams_arr[0]), float(lams_arr[-1]), step)
    if grid.n_samples != len(lams):
        raise DataError(f"{path}: grid reconstruction mismatch")
    return Spectrum(grid, np.asarray(vals))
