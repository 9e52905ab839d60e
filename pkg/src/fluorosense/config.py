"""Experiment configuration: strict YAML with documented defaults.

Every key has a default reproducing the reference bench geometry, so an
empty config file (or none at all) runs the standard experiment. Unknown
keys are hard errors: a typo must never silently fall back to a default.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import yaml

from .detector import ChannelSpec, DetectorConfig
from .errors import ConfigError
from .optics import FilterSpec, WindowModel, WindowState, diamond_window, glass_window
from .phantom import PhantomConfig
from .scanner import NOMINAL_EXCITATION_NW, ScanConfig
from .spectral import EmissionModel, PeakModel, WavelengthGrid

DEFAULTS: dict = {
    "seed": 20260819,
    "out": "out",
    "grid": {
        "lambda_min": 400.0,
        "lambda_max": 750.0,
        "step": 1.0,
    },
    "emission": {
        "autofluor": {"center": 510.0, "fwhm": 118.0, "amplitude": 1.0},
        "ppix_primary": {"center": 635.0, "fwhm": 14.0, "amplitude": 1.0},
        # secondary amplitude is a fraction of the primary peak
        "ppix_secondary": {"center": 704.0, "fwhm": 30.0, "amplitude": 0.2},
    },
    "filters": {
        "excitation_bandpass": {
            "center": 405.0, "fwhm": 10.0,
            "peak_transmission": 0.9, "od_floor": 4.0,
        },
        "emission_longpass": {
            "cutoff": 425.0, "edge_width": 5.0,
            "peak_transmission": 0.95, "od_floor": 4.0,
        },
        # excitation source spur near 550 nm, relative to the 405 nm peak
        "led_secondary_fraction": 0.05,
    },
    "window": {
        "material": "diamond",
        # null = take the material preset; set explicitly to override
        "base_transmission_green": None,
        "base_transmission_red": None,
        "fouling_mean": None,
        "fouling_sd": None,
    },
    "channels": {
        "ch514": {"center": 514.0, "fwhm": 45.0,
                  "peak_transmission": 1.0, "od_floor": 2.35},
        "ch635": {"center": 635.0, "fwhm": 45.0,
                  "peak_transmission": 1.0, "od_floor": 2.43},
    },
    "detector": {
        "nep": 4.0,
        "bandwidth": 1.0,
        "adc_bits": 16,
        "full_scale_power": 160.0,
    },
    "phantom": {
        "width": 12.0,
        "height": 12.0,
        "cell": 0.1,
        "tumor_center": [6.3, 5.6],
        # disc area ~5 mm^2
        "tumor_radius": math.sqrt(5.0 / math.pi),
        "ppix_peak_amp": 10.0,
        "autofluor_amp": 2.0,
        "margin_sigma": 0.5,
        "center_ratio_target": 5.0,
        "autofluor_heterogeneity": 0.05,
    },
    "scan": {
        "mode": "raster",
        "step": 1.0,
        "spot": [1.0, 1.0],
        "excitation_power": NOMINAL_EXCITATION_NW,
        "window_attenuation": 1.0,
        "fouling_per_position": False,
        "record_oracle": True,
        "oracle_resolution": 2.0,
        "oracle_noise_floor": 0.005,
        # line mode: through the default tumour center, 0.5 mm steps
        "line_start": [0.5, 5.6],
        "line_end": [11.5, 5.6],
        "line_step": 0.5,
    },
    "analysis": {
        "alpha": 0.0,
        # sensor operating point on the normalized ratio map
        "threshold": 0.21,
        # documented alternative operating point for oracle-ratio maps
        "spectral_threshold": 0.5,
        "normalized": True,
        # tumour-region extent around truth cells for the rank correlation
        "region_radius": 2.0,
    },
}


def merge_config(user: dict, defaults: dict | None = None,
                 path: str = "") -> dict:
    """Overlay a user mapping onto the defaults, rejecting unknown keys."""
    if defaults is None:
        defaults = DEFAULTS
    merged = copy.deepcopy(defaults)
    for key, value in user.items():
        dotted = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key: {dotted}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted} must be a mapping")
            merged[key] = merge_config(value, defaults[key], f"{dotted}.")
        else:
            merged[key] = value
    return merged


def _number(section: dict, key: str, path: str) -> float:
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key} must be a number, got {value!r}")
    return float(value)


def _integer(section: dict, key: str, path: str) -> int:
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key} must be an integer, got {value!r}")
    return value


def _boolean(section: dict, key: str, path: str) -> bool:
    value = section[key]
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key} must be true or false, got {value!r}")
    return value


def _pair(section: dict, key: str, path: str) -> tuple[float, float]:
    value = section[key]
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   for v in value)):
        raise ConfigError(f"{path}.{key} must be a pair of numbers, got {value!r}")
    return float(value[0]), float(value[1])


def _peak(section: dict, path: str) -> PeakModel:
    try:
        return PeakModel(center=_number(section, "center", path),
                         fwhm=_number(section, "fwhm", path),
                         amplitude=_number(section, "amplitude", path))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class AnalysisParams:
    alpha: float = 0.0
    threshold: float = 0.21
    spectral_threshold: float = 0.5
    normalized: bool = True
    region_radius: float = 2.0

    def __post_init__(self):
        if self.region_radius <= 0:
            raise ValueError("region_radius must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully built experiment: every pipeline object plus run bookkeeping."""

    seed: int
    out: str
    grid: WavelengthGrid
    emission: EmissionModel
    excitation_bandpass: FilterSpec
    emission_longpass: FilterSpec
    led_secondary_fraction: float
    window: WindowState
    ch514: ChannelSpec
    ch635: ChannelSpec
    detector: DetectorConfig
    phantom: PhantomConfig
    scan: ScanConfig
    scan_mode: str
    line_start: tuple[float, float]
    line_end: tuple[float, float]
    line_step: float
    analysis: AnalysisParams


def _build_window(section: dict, attenuation: float) -> WindowState:
    material = section["material"]
    if material == "diamond":
        preset = diamond_window()
    elif material == "glass":
        preset = glass_window()
    else:
        raise ConfigError(f"window.material must be diamond or glass, got {material!r}")
    fields = {}
    for name in ("base_transmission_green", "base_transmission_red",
                 "fouling_mean", "fouling_sd"):
        if section[name] is None:
            fields[name] = getattr(preset, name)
        else:
            fields[name] = _number(section, name, "window")
    try:
        model = WindowModel(material=material, **fields)
        return WindowState(model=model, current_attenuation=attenuation)
    except ValueError as exc:
        raise ConfigError(f"window: {exc}") from exc


def build_experiment(resolved: dict) -> ExperimentConfig:
    """Turn a merged config mapping into validated pipeline objects."""
    seed = resolved["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    out = resolved["out"]
    if not isinstance(out, str) or not out:
        raise ConfigError(f"out must be a non-empty path, got {out!r}")

    g = resolved["grid"]
    try:
        grid = WavelengthGrid(_number(g, "lambda_min", "grid"),
                              _number(g, "lambda_max", "grid"),
                              _number(g, "step", "grid"))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    e = resolved["emission"]
    try:
        emission = EmissionModel(autofluor=_peak(e["autofluor"], "emission.autofluor"),
                                 ppix_primary=_peak(e["ppix_primary"],
                                                    "emission.ppix_primary"),
                                 ppix_secondary=_peak(e["ppix_secondary"],
                                                      "emission.ppix_secondary"))
    except ValueError as exc:
        raise ConfigError(f"emission: {exc}") from exc

    f = resolved["filters"]
    bp, lp = f["excitation_bandpass"], f["emission_longpass"]
    try:
        excitation_bandpass = FilterSpec(
            kind="bandpass",
            center_or_cutoff=_number(bp, "center", "filters.excitation_bandpass"),
            fwhm=_number(bp, "fwhm", "filters.excitation_bandpass"),
            peak_transmission=_number(bp, "peak_transmission",
                                      "filters.excitation_bandpass"),
            od_floor=_number(bp, "od_floor", "filters.excitation_bandpass"))
        emission_longpass = FilterSpec(
            kind="longpass",
            center_or_cutoff=_number(lp, "cutoff", "filters.emission_longpass"),
            edge_width=_number(lp, "edge_width", "filters.emission_longpass"),
            peak_transmission=_number(lp, "peak_transmission",
                                      "filters.emission_longpass"),
            od_floor=_number(lp, "od_floor", "filters.emission_longpass"))
    except ValueError as exc:
        raise ConfigError(f"filters: {exc}") from exc
    led_secondary = _number(f, "led_secondary_fraction", "filters")
    if not 0.0 <= led_secondary <= 1.0:
        raise ConfigError("filters.led_secondary_fraction must be in [0, 1]")

    sc = resolved["scan"]
    window = _build_window(resolved["window"],
                           _number(sc, "window_attenuation", "scan"))

    def _channel(section: dict, path: str) -> ChannelSpec:
        try:
            return ChannelSpec(center=_number(section, "center", path),
                               fwhm=_number(section, "fwhm", path),
                               peak_transmission=_number(section,
                                                         "peak_transmission", path),
                               od_floor=_number(section, "od_floor", path))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    ch514 = _channel(resolved["channels"]["ch514"], "channels.ch514")
    ch635 = _channel(resolved["channels"]["ch635"], "channels.ch635")

    d = resolved["detector"]
    try:
        detector = DetectorConfig(nep=_number(d, "nep", "detector"),
                                  bandwidth=_number(d, "bandwidth", "detector"),
                                  adc_bits=_integer(d, "adc_bits", "detector"),
                                  full_scale_power=_number(d, "full_scale_power",
                                                           "detector"))
    except ValueError as exc:
        raise ConfigError(f"detector: {exc}") from exc

    p = resolved["phantom"]
    target = p["center_ratio_target"]
    if target is not None:
        target = _number(p, "center_ratio_target", "phantom")
    try:
        phantom = PhantomConfig(
            width=_number(p, "width", "phantom"),
            height=_number(p, "height", "phantom"),
            cell=_number(p, "cell", "phantom"),
            tumor_center=_pair(p, "tumor_center", "phantom"),
            tumor_radius=_number(p, "tumor_radius", "phantom"),
            ppix_peak_amp=_number(p, "ppix_peak_amp", "phantom"),
            autofluor_amp=_number(p, "autofluor_amp", "phantom"),
            margin_sigma=_number(p, "margin_sigma", "phantom"),
            center_ratio_target=target,
            autofluor_heterogeneity=_number(p, "autofluor_heterogeneity",
                                            "phantom"))
    except ValueError as exc:
        raise ConfigError(f"phantom: {exc}") from exc

    mode = sc["mode"]
    if mode not in ("raster", "line"):
        raise ConfigError(f"scan.mode must be raster or line, got {mode!r}")
    try:
        scan = ScanConfig(step=_number(sc, "step", "scan"),
                          spot=_pair(sc, "spot", "scan"),
                          excitation_power=_number(sc, "excitation_power", "scan"),
                          window=window,
                          fouling_per_position=_boolean(sc, "fouling_per_position",
                                                        "scan"),
                          record_oracle=_boolean(sc, "record_oracle", "scan"),
                          oracle_resolution=_number(sc, "oracle_resolution", "scan"),
                          oracle_noise_floor=_number(sc, "oracle_noise_floor",
                                                     "scan"))
    except ValueError as exc:
        raise ConfigError(f"scan: {exc}") from exc
    line_step = _number(sc, "line_step", "scan")
    if line_step <= 0:
        raise ConfigError("scan.line_step must be positive")

    a = resolved["analysis"]
    try:
        analysis = AnalysisParams(
            alpha=_number(a, "alpha", "analysis"),
            threshold=_number(a, "threshold", "analysis"),
            spectral_threshold=_number(a, "spectral_threshold", "analysis"),
            normalized=_boolean(a, "normalized", "analysis"),
            region_radius=_number(a, "region_radius", "analysis"))
    except ValueError as exc:
        raise ConfigError(f"analysis: {exc}") from exc

    return ExperimentConfig(seed=seed, out=out, grid=grid, emission=emission,
                            excitation_bandpass=excitation_bandpass,
                            emission_longpass=emission_longpass,
                            led_secondary_fraction=led_secondary,
                            window=window, ch514=ch514, ch635=ch635,
                            detector=detector, phantom=phantom, scan=scan,
                            scan_mode=mode,
                            line_start=_pair(sc, "line_start", "scan"),
                            line_end=_pair(sc, "line_end", "scan"),
                            line_step=line_step, analysis=analysis)


def load_config(path: str | None) -> dict:
    """Read and merge a YAML config file; None loads pure defaults."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path) as fh:
            user = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return merge_config(user)


def apply_no_noise(resolved: dict) -> dict:
    """Zero every stochastic element: detector, oracle, fouling, heterogeneity."""
    quiet = copy.deepcopy(resolved)
    quiet["detector"]["nep"] = 0.0
    quiet["scan"]["oracle_noise_floor"] = 0.0
    quiet["scan"]["fouling_per_position"] = False
    quiet["phantom"]["autofluor_heterogeneity"] = 0.0
    return quiet
