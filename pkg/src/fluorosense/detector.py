"""Two-channel filter-photodiode sensor model and the spectrometer oracle.

Each detection channel is a Gaussian bandpass sitting on an optical-density
floor, so out-of-band leakage into the wrong channel falls out of the same
integral as the in-band signal. Detection noise is additive white Gaussian
in the power domain with sigma = NEP * sqrt(bandwidth), followed by an ADC
quantization step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .optics import FilterSpec, transmission
from .spectral import FWHM_SIGMA_FACTOR, Spectrum


@dataclass(frozen=True)
class ChannelSpec:
    """One detection channel: center/fwhm of the passband plus its OD floor."""

    center: float
    od_floor: float
    fwhm: float = 45.0
    peak_transmission: float = 1.0

    def __post_init__(self):
        if self.fwhm <= 0:
            raise ValueError(f"channel fwhm must be positive, got {self.fwhm}")
        if self.od_floor < 0:
            raise ValueError(f"od_floor must be >= 0, got {self.od_floor}")
        if not 0.0 < self.peak_transmission <= 1.0:
            raise ValueError(
                f"peak_transmission must be in (0, 1], got {self.peak_transmission}"
            )

    def as_filter(self) -> FilterSpec:
        return FilterSpec(kind="bandpass", center_or_cutoff=self.center,
                          peak_transmission=self.peak_transmission,
                          od_floor=self.od_floor, fwhm=self.fwhm)


def channel_514(od_floor: float = 2.35, fwhm: float = 45.0) -> ChannelSpec:
    """Green channel; OD floor back-solved from its measured leakage fraction."""
    return ChannelSpec(center=514.0, od_floor=od_floor, fwhm=fwhm)


def channel_635(od_floor: float = 2.43, fwhm: float = 45.0) -> ChannelSpec:
    """Red channel; OD floor back-solved from its measured leakage fraction."""
    return ChannelSpec(center=635.0, od_floor=od_floor, fwhm=fwhm)


@dataclass(frozen=True)
class DetectorConfig:
    """Noise and quantization model shared by both channels.

    full_scale_power keeps strong on-phantom readings near the top of the
    ADC range without saturating; it folds photodiode responsivity and
    amplifier gain into a single calibrated power-to-counts scale.
    """

    nep: float = 4.0
    bandwidth: float = 1.0
    adc_bits: int = 16
    full_scale_power: float = 160.0

    def __post_init__(self):
        if self.nep < 0:
            raise ValueError(f"nep must be >= 0, got {self.nep}")
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not 1 <= self.adc_bits <= 32:
            raise ValueError(f"adc_bits must be in [1, 32], got {self.adc_bits}")
        if self.full_scale_power <= 0:
            raise ValueError(
                f"full_scale_power must be positive, got {self.full_scale_power}"
            )

    @property
    def max_count(self) -> int:
        return (1 << self.adc_bits) - 1

    @property
    def noise_sigma(self) -> float:
        """Power-domain noise sigma (nW) for one read."""
        return self.nep * math.sqrt(self.bandwidth)


@dataclass(frozen=True)
class ChannelReading:
    """One ADC sample: quantized counts plus the pre-noise in-band power."""

    channel: int
    counts: int
    in_band_power: float
    saturated: bool = False

    def __post_init__(self):
        if self.counts < 0:
            raise ValueError("counts cannot be negative")
        if self.in_band_power < 0:
            raise ValueError("in_band_power cannot be negative")


def channel_power(s: Spectrum, c: ChannelSpec) -> float:
    """Optical power (nW) the channel collects from a spectrum.

    Integrates s(lambda) * T(lambda) over the full grid, so leakage through
    the OD floor is part of the reading rather than a separate term.
    """
    t = transmission(c.as_filter(), s.grid.wavelengths)
    return float(np.trapezoid(s.values * t, s.grid.wavelengths))


def read_channel(p: float, cfg: DetectorConfig,
                 rng: np.random.Generator | None = None,
                 channel: int = 0) -> ChannelReading:
    """Quantize one noisy power sample into ADC counts.

    Noise is a single Normal(0, nep*sqrt(bandwidth)) draw added in the
    power domain and clamped at zero; counts clamp at the ADC rails with
    the high-rail clamp surfaced through the saturated flag.
    """
    if p < 0:
        raise ValueError(f"optical power must be >= 0, got {p}")
    sigma = cfg.noise_sigma
    if sigma > 0:
        if rng is None:
            raise ValueError("noisy read requires a random generator")
        noisy = p + sigma * rng.standard_normal()
    else:
        noisy = p
    noisy = max(noisy, 0.0)
    raw = round(noisy / cfg.full_scale_power * cfg.max_count)
    counts = min(max(raw, 0), cfg.max_count)
    return ChannelReading(channel=channel, counts=counts, in_band_power=p,
                          saturated=raw > cfg.max_count)


def spectrometer_read(s: Spectrum, resolution: float,
                      rng: np.random.Generator | None = None,
                      noise_floor: float = 0.0) -> Spectrum:
    """Spectrometer model: Gaussian instrument broadening plus a noise floor.

    ``resolution`` is the instrument FWHM (nm) and must be at least the
    grid step; at exactly the grid step the kernel is narrower than one
    sample and is treated as a delta. ``noise_floor`` is the additive
    per-sample noise sigma (nW/nm); negative noisy samples clamp to zero.
    """
    step = s.grid.step
    if resolution < step:
        raise ValueError(
            f"resolution {resolution} nm is below the grid step {step} nm"
        )
    if resolution > step:
        sigma_samples = resolution / FWHM_SIGMA_FACTOR / step
        values = gaussian_filter1d(s.values, sigma_samples,
                                   mode="constant", cval=0.0)
    else:
        values = s.values.copy()
    if noise_floor > 0:
        if rng is None:
            raise ValueError("noisy spectrometer read requires a random generator")
        values = values + noise_floor * rng.standard_normal(values.shape)
        values = np.maximum(values, 0.0)
    return Spectrum(s.grid, values)


def min_detectable_excitation(cfg: DetectorConfig, emission_ratio: float) -> float:
    """Excitation power (nW) at which collected emission equals the noise floor.

    emission_ratio is collected emission power per unit excitation power;
    the detection limit is nep*sqrt(bandwidth) / emission_ratio.
    """
    if emission_ratio <= 0:
        raise ValueError(
            f"emission_ratio must be positive, got {emission_ratio}"
        )
    return cfg.noise_sigma / emission_ratio
