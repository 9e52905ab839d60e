"""Digital tissue phantoms: autofluorescence baseline plus a diffused tumour.

The tumour is a flat-top PpIX disc whose margins come from an isotropic
Gaussian blur (the Green's function of diffusion). Disc amplitude is
calibrated so the spectrometer-oracle ratio at the tumour center hits a
configured target, which pins the whole simulation to a known contrast.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DataError

# tumour truth: cells at or above this fraction of the PpIX peak
TRUTH_PEAK_FRACTION = 0.9


@dataclass(frozen=True)
class PhantomConfig:
    """Geometry and contrast of the simulated tissue slab.

    Amplitudes are peak spectral densities (nW/nm) at the nominal
    excitation operating point (see scanner); the default tumor_radius
    gives a disc area of ~5 mm^2. When center_ratio_target is set, the
    PpIX field is rescaled after blurring so the spectrometer-oracle
    ratio at the tumour center equals it.
    """

    width: float = 12.0
    height: float = 12.0
    cell: float = 0.1
    tumor_center: tuple[float, float] = (6.3, 5.6)
    tumor_radius: float = math.sqrt(5.0 / math.pi)
    ppix_peak_amp: float = 10.0
    autofluor_amp: float = 2.0
    margin_sigma: float = 0.5
    center_ratio_target: float | None = 5.0
    autofluor_heterogeneity: float = 0.05

    def __post_init__(self):
        for name in ("width", "height", "cell", "tumor_radius", "autofluor_amp"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.ppix_peak_amp < 0:
            raise ValueError("ppix_peak_amp must be >= 0")
        if self.margin_sigma < 0:
            raise ValueError("margin_sigma must be >= 0")
        if not 0.0 <= self.autofluor_heterogeneity < 1.0:
            raise ValueError("autofluor_heterogeneity must be in [0, 1)")
        if self.center_ratio_target is not None and self.center_ratio_target <= 0:
            raise ValueError("center_ratio_target must be positive")
        for dim in (self.width, self.height):
            if abs(round(dim / self.cell) * self.cell - dim) > 1e-6:
                raise ValueError("field dimensions must be multiples of the cell size")
        cx, cy = self.tumor_center
        r = self.tumor_radius
        if not (r <= cx <= self.width - r and r <= cy <= self.height - r):
            raise ValueError("tumor disc extends outside the field")

    @property
    def nx(self) -> int:
        return int(round(self.width / self.cell))

    @property
    def ny(self) -> int:
        return int(round(self.height / self.cell))


@dataclass(frozen=True)
class TissueField:
    """Per-cell emission amplitudes and ground truth on a uniform 2-D grid.

    Arrays are indexed [iy, ix]; cell (ix, iy) is centered at
    ((ix + 0.5) * cell, (iy + 0.5) * cell).
    """

    width: float
    height: float
    cell: float
    autofluor_amp: np.ndarray = field(repr=False)
    ppix_amp: np.ndarray = field(repr=False)
    truth: np.ndarray = field(repr=False)

    def __post_init__(self):
        ny = int(round(self.height / self.cell))
        nx = int(round(self.width / self.cell))
        for name in ("autofluor_amp", "ppix_amp", "truth"):
            arr = getattr(self, name)
            if arr.shape != (ny, nx):
                raise ValueError(f"{name} shape {arr.shape} != grid ({ny}, {nx})")
        if np.any(self.autofluor_amp < 0) or np.any(self.ppix_amp < 0):
            raise ValueError("emission amplitudes must be non-negative")

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(int(round(self.width / self.cell))) + 0.5) * self.cell

    @property
    def y_centers(self) -> np.ndarray:
        return (np.arange(int(round(self.height / self.cell))) + 0.5) * self.cell


def generate_phantom(cfg: PhantomConfig,
                     rng: np.random.Generator | None = None) -> TissueField:
    """Build the tissue field: baseline, blurred disc, calibration, truth.

    Heterogeneity draws one uniform multiplicative factor per cell, so the
    healthy baseline is not perfectly flat unless configured to be.
    """
    nx, ny = cfg.nx, cfg.ny
    xs = (np.arange(nx) + 0.5) * cfg.cell
    ys = (np.arange(ny) + 0.5) * cfg.cell

    autofluor = np.full((ny, nx), cfg.autofluor_amp)
    if cfg.autofluor_heterogeneity > 0:
        if rng is None:
            raise ValueError("heterogeneous phantom requires a random generator")
        h = cfg.autofluor_heterogeneity
        autofluor = autofluor * rng.uniform(1.0 - h, 1.0 + h, size=(ny, nx))

    cx, cy = cfg.tumor_center
    dist2 = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2
    ppix = np.where(dist2 <= cfg.tumor_radius ** 2, cfg.ppix_peak_amp, 0.0)
    if cfg.margin_sigma > 0:
        ppix = gaussian_filter(ppix, sigma=cfg.margin_sigma / cfg.cell,
                               mode="constant", cval=0.0)

    if cfg.center_ratio_target is not None and cfg.ppix_peak_amp > 0:
        f = TissueField(cfg.width, cfg.height, cfg.cell, autofluor, ppix,
                        np.zeros((ny, nx), dtype=bool))
        a_center, p_center = emission_at(f, cx, cy)
        if p_center <= 0:
            raise ValueError("tumour center has no PpIX signal to calibrate")
        ppix = ppix * (cfg.center_ratio_target * a_center / p_center)

    peak = float(ppix.max())
    truth = ppix >= TRUTH_PEAK_FRACTION * peak if peak > 0 \
        else np.zeros((ny, nx), dtype=bool)
    return TissueField(cfg.width, cfg.height, cfg.cell, autofluor, ppix, truth)


def emission_at(f: TissueField, x: float, y: float) -> tuple[float, float]:
    """Bilinear (a_amp, p_amp) at a point, clamped to outermost cell centers."""
    if not (0.0 <= x <= f.width and 0.0 <= y <= f.height):
        raise ValueError(f"point ({x}, {y}) outside the field")
    xs, ys = f.x_centers, f.y_centers
    # clamp into the center lattice: constant extrapolation in the half-cell rim
    xq = min(max(x, xs[0]), xs[-1])
    yq = min(max(y, ys[0]), ys[-1])
    ix = min(int((xq - xs[0]) / f.cell), len(xs) - 2)
    iy = min(int((yq - ys[0]) / f.cell), len(ys) - 2)
    tx = (xq - xs[ix]) / f.cell
    ty = (yq - ys[iy]) / f.cell

    def lerp2(arr):
        top = arr[iy, ix] * (1 - tx) + arr[iy, ix + 1] * tx
        bot = arr[iy + 1, ix] * (1 - tx) + arr[iy + 1, ix + 1] * tx
        return float(top * (1 - ty) + bot * ty)

    return lerp2(f.autofluor_amp), lerp2(f.ppix_amp)


def sample_spot(f: TissueField, x: float, y: float,
                spot_w: float, spot_h: float) -> tuple[float, float, bool]:
    """Boxcar average of (a_amp, p_amp) over a rectangular spot, plus truth.

    The spot is treated as an ideal top-hat: each field cell contributes
    by its overlap area. Spot truth is the area-majority of cell truth,
    with exact ties counted as tumour.
    """
    lo_x, hi_x = x - spot_w / 2.0, x + spot_w / 2.0
    lo_y, hi_y = y - spot_h / 2.0, y + spot_h / 2.0
    if lo_x < -1e-9 or hi_x > f.width + 1e-9 or lo_y < -1e-9 or hi_y > f.height + 1e-9:
        raise ValueError(f"spot at ({x}, {y}) overflows the field")

    def overlap(n, lo, hi):
        lefts = np.arange(n) * f.cell
        return np.clip(np.minimum(lefts + f.cell, hi) - np.maximum(lefts, lo),
                       0.0, None)

    wx = overlap(int(round(f.width / f.cell)), lo_x, hi_x)
    wy = overlap(int(round(f.height / f.cell)), lo_y, hi_y)
    w = wy[:, None] * wx[None, :]
    total = float(w.sum())
    if total <= 0:
        raise ValueError("spot has zero area on the field")
    a = float((f.autofluor_amp * w).sum() / total)
    p = float((f.ppix_amp * w).sum() / total)
    tumour_fraction = float((f.truth * w).sum() / total)
    return a, p, tumour_fraction >= 0.5 - 1e-12


def write_field_csv(f: TissueField, path) -> None:
    """Row-major field export: `x_mm,y_mm,autofluor,ppix,truth`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_mm", "y_mm", "autofluor", "ppix", "truth"])
        xs, ys = f.x_centers, f.y_centers
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                writer.writerow([
                    repr(float(x)), repr(float(y)),
                    repr(float(f.autofluor_amp[iy, ix])),
                    repr(float(f.ppix_amp[iy, ix])),
                    int(f.truth[iy, ix]),
                ])


def read_field_csv(path) -> TissueField:
    """Read a field written by :func:`write_field_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["x_mm", "y_mm", "autofluor", "ppix", "truth"]
        if header != expected:
            raise DataError(f"{path}: expected header {expected}, got {header}")
        rows = [(float(r[0]), float(r[1]), float(r[2]), float(r[3]), int(r[4]))
                for r in reader]
    if not rows:
        raise DataError(f"{path}: empty field file")
    xs = sorted({r[0] for r in rows})
    ys = sorted({r[1] for r in rows})
    if len(rows) != len(xs) * len(ys):
        raise DataError(f"{path}: incomplete field grid")
    cell = xs[0] * 2.0
    width, height = len(xs) * cell, len(ys) * cell
    a = np.zeros((len(ys), len(xs)))
    p = np.zeros_like(a)
    t = np.zeros(a.shape, dtype=bool)
    x_index = {x: i for i, x in enumerate(xs)}
    y_index = {y: i for i, y in enumerate(ys)}
    for x, y, av, pv, tv in rows:
        ix, iy = x_index[x], y_index[y]
        a[iy, ix], p[iy, ix], t[iy, ix] = av, pv, bool(tv)
    return TissueField(width, height, cell, a, p, t)
