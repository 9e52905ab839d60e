"""Transmission models for filters and the tissue-contact optical window.

Filters are parametric curves (Gaussian bandpass, logistic longpass), each
sitting on a finite out-of-band floor expressed as an optical density, so
leakage between channels is part of the model rather than a bolt-on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .spectral import Spectrum, gaussian_profile

# a logistic edge quoted by its 10-90% rise width has scale = width / (2 ln 9)
_LOGISTIC_RISE_FACTOR = 2.0 * math.log(9.0)

# boundary between the "green" and "red" plateaus of the window model (nm)
WINDOW_SPLIT_NM = 570.0

# lowest representable window attenuation: keeps the state in (0, 1]
_MIN_ATTENUATION = 1e-12


def leakage_from_od(od: float) -> float:
    """Out-of-band power fraction for an optical density."""
    if od < 0:
        raise ValueError(f"optical density must be >= 0, got {od}")
    return 10.0 ** (-od)


def od_from_leakage(leakage: float) -> float:
    """Optical density matching an out-of-band power fraction."""
    if not 0.0 < leakage <= 1.0:
        raise ValueError(f"leakage fraction must be in (0, 1], got {leakage}")
    return -math.log10(leakage)


@dataclass(frozen=True)
class FilterSpec:
    """Bandpass or longpass interference filter.

    ``center_or_cutoff`` is the passband center (bandpass) or the edge
    position (longpass). ``fwhm`` applies to bandpass only; ``edge_width``
    is the longpass 10-90% rise width. Out-of-band transmission is
    peak_transmission * 10^-od_floor.
    """

    kind: str
    center_or_cutoff: float
    peak_transmission: float = 1.0
    od_floor: float = 4.0
    fwhm: float | None = None
    edge_width: float = 5.0

    def __post_init__(self):
        if self.kind not in ("bandpass", "longpass"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if not 0.0 < self.peak_transmission <= 1.0:
            raise ValueError(
                f"peak_transmission must be in (0, 1], got {self.peak_transmission}"
            )
        if self.od_floor < 0:
            raise ValueError(f"od_floor must be >= 0, got {self.od_floor}")
        if self.kind == "bandpass":
            if self.fwhm is None or self.fwhm <= 0:
                raise ValueError("bandpass filter needs a positive fwhm")
        elif self.edge_width < 0:
            raise ValueError(f"edge_width must be >= 0, got {self.edge_width}")

    @property
    def floor_transmission(self) -> float:
        return self.peak_transmission * leakage_from_od(self.od_floor)


def transmission(f: FilterSpec, lam) -> np.ndarray:
    """Filter transmission at wavelength(s) ``lam`` (nm), in (0, 1]."""
    lam = np.asarray(lam, dtype=float)
    floor = f.floor_transmission
    span = f.peak_transmission - floor
    if f.kind == "bandpass":
        shape = gaussian_profile(lam, f.center_or_cutoff, f.fwhm)
    elif f.edge_width == 0.0:
        shape = (lam >= f.center_or_cutoff).astype(float)
    else:
        scale = f.edge_width / _LOGISTIC_RISE_FACTOR
        shape = expit((lam - f.center_or_cutoff) / scale)
    return floor + span * shape


def apply_filter(s: Spectrum, f: FilterSpec) -> Spectrum:
    """Pointwise product of a spectrum with the filter transmission."""
    return Spectrum(s.grid, s.values * transmission(f, s.grid.wavelengths))


@dataclass(frozen=True)
class WindowModel:
    """Tissue-contact window: per-channel base transmission plus fouling stats.

    Base transmission is approximated as two plateaus split at 570 nm;
    fouling draws a wavelength-flat attenuation factor per contact.
    """

    material: str
    base_transmission_green: float
    base_transmission_red: float
    fouling_mean: float
    fouling_sd: float

    def __post_init__(self):
        if self.material not in ("diamond", "glass"):
            raise ValueError(f"unknown window material {self.material!r}")
        for name in ("base_transmission_green", "base_transmission_red", "fouling_mean"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {val}")
        if self.fouling_sd < 0:
            raise ValueError(f"fouling_sd must be >= 0, got {self.fouling_sd}")


def diamond_window() -> WindowModel:
    return WindowModel("diamond", base_transmission_green=0.68,
                       base_transmission_red=0.75,
                       fouling_mean=0.90, fouling_sd=0.08)


def glass_window() -> WindowModel:
    return WindowModel("glass", base_transmission_green=0.89,
                       base_transmission_red=0.92,
                       fouling_mean=0.60, fouling_sd=0.17)


@dataclass(frozen=True)
class WindowState:
    """A window plus its current wavelength-flat attenuation (1 = pristine)."""

    model: WindowModel
    current_attenuation: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.current_attenuation <= 1.0:
            raise ValueError(
                f"current_attenuation must be in (0, 1], got {self.current_attenuation}"
            )


def apply_window(s: Spectrum, w: WindowState) -> Spectrum:
    """Scale a spectrum by window base transmission and current attenuation."""
    lam = s.grid.wavelengths
    base = np.where(lam < WINDOW_SPLIT_NM,
                    w.model.base_transmission_green,
                    w.model.base_transmission_red)
    return Spectrum(s.grid, s.values * base * w.current_attenuation)


def foul_window(w: WindowState, rng: np.random.Generator) -> WindowState:
    """Draw a fresh post-contact attenuation from the window's fouling model.

    The normal draw is truncated into the physical range (0, 1] by
    clamping, so the returned state never amplifies and never goes dark.
    """
    draw = rng.normal(w.model.fouling_mean, w.model.fouling_sd)
    attenuation = float(np.clip(draw, _MIN_ATTENUATION, 1.0))
    return replace(w, current_attenuation=attenuation)
