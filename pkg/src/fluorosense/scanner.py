"""Raster and line scanning of a tissue field through the optical chain.

Every scan position runs the same pipeline: boxcar spot average of the
field, emission synthesis scaled by excitation, window transmission, per
channel power integration, and a noisy ADC read. Randomness is drawn from
counter-based per-cell substreams keyed on (seed, stream tag, cell index),
so results are bit-identical regardless of evaluation order.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .detector import (ChannelReading, ChannelSpec, DetectorConfig,
                       channel_power, read_channel, spectrometer_read)
from .errors import DataError
from .optics import WindowState, apply_window, diamond_window, foul_window
from .phantom import TissueField, sample_spot
from .spectral import (EmissionModel, Spectrum, WavelengthGrid, default_grid,
                       read_spectrum_csv, synthesize_emission,
                       write_spectrum_csv)

# operating-point excitation: 40 mW/cm^2 over a 1 mm^2 spot, in nW
NOMINAL_EXCITATION_NW = 4.0e5

# substream tags: one RNG lane per consumer, keyed (seed, tag, cell index)
STREAM_PHANTOM = 0
STREAM_DETECTOR = 1
STREAM_ORACLE = 2
STREAM_FOULING = 3


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent counter-based generator for one (seed, path) key."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    seq = np.random.SeedSequence(entropy=[seed, *path])
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class ScanConfig:
    """Scan lattice, excitation, window state, and oracle instrument."""

    step: float = 1.0
    spot: tuple[float, float] = (1.0, 1.0)
    excitation_power: float = NOMINAL_EXCITATION_NW
    window: WindowState = field(default_factory=lambda: WindowState(diamond_window()))
    fouling_per_position: bool = False
    record_oracle: bool = True
    oracle_resolution: float = 2.0
    oracle_noise_floor: float = 0.005

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"scan step must be positive, got {self.step}")
        if self.spot[0] <= 0 or self.spot[1] <= 0:
            raise ValueError(f"spot dimensions must be positive, got {self.spot}")
        if self.excitation_power < 0:
            raise ValueError("excitation_power must be >= 0")
        if self.oracle_resolution <= 0:
            raise ValueError("oracle_resolution must be positive")
        if self.oracle_noise_floor < 0:
            raise ValueError("oracle_noise_floor must be >= 0")


@dataclass(frozen=True)
class ScanRecord:
    """Sensor readings (and optional oracle spectrum) at one position."""

    position: tuple[float, float]
    reading_514: ChannelReading
    reading_635: ChannelReading
    oracle: Spectrum | None = None


@dataclass(frozen=True)
class ScanMap:
    """Row-major grid of scan records with per-cell ground truth."""

    config: ScanConfig
    rows: int
    cols: int
    records: tuple[ScanRecord, ...]
    truth: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.records) != self.rows * self.cols:
            raise ValueError(
                f"{len(self.records)} records for a "
                f"{self.rows}x{self.cols} map"
            )
        if len(self.truth) != len(self.records):
            raise ValueError("truth must have one entry per record")


def _axis_positions(extent: float, spot: float, step: float) -> np.ndarray:
    """Scan centers from spot/2 onward; every spot stays inside the extent."""
    if spot > extent:
        raise ValueError("spot larger than the field")
    n = int(math.floor((extent - spot) / step + 1e-9)) + 1
    return spot / 2.0 + step * np.arange(n)


def _scan_cell(f: TissueField, x: float, y: float, sc: ScanConfig,
               ch514: ChannelSpec, ch635: ChannelSpec, det: DetectorConfig,
               em: EmissionModel, grid: WavelengthGrid, seed: int,
               index: int) -> tuple[ScanRecord, bool]:
    """Full optical chain for one scan position."""
    a_amp, p_amp, truth = sample_spot(f, x, y, sc.spot[0], sc.spot[1])
    scale = sc.excitation_power / NOMINAL_EXCITATION_NW
    s = synthesize_emission(a_amp * scale, p_amp * scale, em, grid)

    window = sc.window
    if sc.fouling_per_position:
        window = foul_window(window, substream(seed, STREAM_FOULING, index))
    s = apply_window(s, window)

    det_rng = substream(seed, STREAM_DETECTOR, index)
    r514 = read_channel(channel_power(s, ch514), det, det_rng, channel=514)
    r635 = read_channel(channel_power(s, ch635), det, det_rng, channel=635)

    oracle = None
    if sc.record_oracle:
        oracle_rng = substream(seed, STREAM_ORACLE, index)
        oracle = spectrometer_read(s, sc.oracle_resolution, oracle_rng,
                                   sc.oracle_noise_floor)
    return ScanRecord((x, y), r514, r635, oracle), truth


def raster_scan(f: TissueField, sc: ScanConfig, ch514: ChannelSpec,
                ch635: ChannelSpec, det: DetectorConfig, em: EmissionModel,
                seed: int, grid: WavelengthGrid | None = None) -> ScanMap:
    """Scan the whole field on a uniform lattice, row-major from the origin."""
    if grid is None:
        grid = default_grid()
    xs = _axis_positions(f.width, sc.spot[0], sc.step)
    ys = _axis_positions(f.height, sc.spot[1], sc.step)
    records, truths = [], []
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            index = iy * len(xs) + ix
            record, truth = _scan_cell(f, float(x), float(y), sc, ch514, ch635,
                                       det, em, grid, seed, index)
            records.append(record)
            truths.append(truth)
    return ScanMap(config=sc, rows=len(ys), cols=len(xs),
                   records=tuple(records), truth=np.asarray(truths, dtype=bool))


def line_scan(f: TissueField, start: tuple[float, float],
              end: tuple[float, float], step: float, sc: ScanConfig,
              ch514: ChannelSpec, ch635: ChannelSpec, det: DetectorConfig,
              em: EmissionModel, seed: int,
              grid: WavelengthGrid | None = None) -> ScanMap:
    """Scan along a segment at fixed displacement steps; a 1 x N map.

    Records run from start to end inclusive whenever the segment length is
    a whole number of steps.
    """
    if grid is None:
        grid = default_grid()
    if step <= 0:
        raise ValueError(f"line step must be positive, got {step}")
    dx, dy = end[0] - start[0], end[1] - start[1]
    length = math.hypot(dx, dy)
    if length == 0:
        raise ValueError("line start and end coincide")
    n = int(math.floor(length / step + 1e-9)) + 1
    ux, uy = dx / length, dy / length
    records, truths = [], []
    for i in range(n):
        x = start[0] + ux * step * i
        y = start[1] + uy * step * i
        record, truth = _scan_cell(f, x, y, sc, ch514, ch635, det, em, grid,
                                   seed, i)
        records.append(record)
        truths.append(truth)
    return ScanMap(config=sc, rows=1, cols=n, records=tuple(records),
                   truth=np.asarray(truths, dtype=bool))


def write_scanmap_csv(m: ScanMap, path) -> None:
    """Row-major scan export: `x_mm,y_mm,counts_514,counts_635,truth`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_mm", "y_mm", "counts_514", "counts_635", "truth"])
        for record, truth in zip(m.records, m.truth):
            writer.writerow([
                repr(float(record.position[0])), repr(float(record.position[1])),
                record.reading_514.counts, record.reading_635.counts,
                int(truth),
            ])


@dataclass(frozen=True)
class ScanTable:
    """Deserialized scan CSV: enough to run the analysis stage."""

    x: np.ndarray
    y: np.ndarray
    counts_514: np.ndarray
    counts_635: np.ndarray
    truth: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


def read_scanmap_csv(path) -> ScanTable:
    """Read a scan CSV written by :func:`write_scanmap_csv`."""
    expected = ["x_mm", "y_mm", "counts_514", "counts_635", "truth"]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise DataError(f"{path}: expected header {expected}, got {header}")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: empty scan file")
    try:
        x = np.array([float(r[0]) for r in rows])
        y = np.array([float(r[1]) for r in rows])
        c514 = np.array([int(r[2]) for r in rows])
        c635 = np.array([int(r[3]) for r in rows])
        truth = np.array([bool(int(r[4])) for r in rows])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed scan row: {exc}") from exc
    if np.any(c514 < 0) or np.any(c635 < 0):
        raise DataError(f"{path}: negative counts")
    return ScanTable(x, y, c514, c635, truth)


def oracle_filename(index: int) -> str:
    return f"cell_{index:04d}.csv"


def write_oracle_dir(m: ScanMap, dirpath) -> list[str]:
    """Write each recorded oracle spectrum as a CSV; returns paths written."""
    os.makedirs(dirpath, exist_ok=True)
    written = []
    for index, record in enumerate(m.records):
        if record.oracle is not None:
            path = os.path.join(dirpath, oracle_filename(index))
            write_spectrum_csv(record.oracle, path)
            written.append(path)
    return written


def read_oracle_dir(dirpath, n_records: int) -> list[Spectrum | None]:
    """Load per-cell oracle spectra; missing files load as None."""
    spectra: list[Spectrum | None] = []
    for index in range(n_records):
        path = os.path.join(dirpath, oracle_filename(index))
        spectra.append(read_spectrum_csv(path) if os.path.exists(path) else None)
    return spectra
