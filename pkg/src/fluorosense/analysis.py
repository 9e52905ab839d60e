"""Diagnostic ratios, background fitting, classification, and statistics.

Two ratio routes coexist on purpose. The sensor route divides the two
channel readings directly; the oracle route takes a full spectrum, fits
the autofluorescence background, and ratios the background-corrected red
peak against the green peak. Comparing the two routes is the point of the
toolkit, so neither is expressed in terms of the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy.optimize import least_squares
from scipy.stats import rankdata

from .errors import DataError, FitError
from .spectral import FWHM_SIGMA_FACTOR, PeakModel, Spectrum

# autofluorescence fit window (nm); the red fluorophore band is excluded
FIT_WINDOW = (450.0, 600.0)
PPIX_EXCLUSION = (620.0, 720.0)

# fixed fit initialization: amplitude is taken from the data
FIT_INIT_CENTER = 510.0
FIT_INIT_FWHM = 118.0
FIT_MAX_EVALS = 200
FIT_FTOL = 1e-9

# wavelengths the ratios read out (nm)
RED_READOUT_NM = 635.0
GREEN_READOUT_NM = 510.0


def channel_ratio(i635: float, i514: float, alpha: float = 0.0) -> float:
    """Sensor diagnostic ratio: red channel over green channel minus alpha.

    Negative results are preserved so downstream sweeps see the full score
    distribution. A zero green channel signals a dead channel.
    """
    if i514 < 0 or i635 < 0:
        raise DataError("channel intensities cannot be negative")
    if i514 == 0:
        raise DataError("green channel reads zero: dead channel or no signal")
    return i635 / i514 - alpha


def background_residuals(theta: np.ndarray, lam: np.ndarray,
                         y: np.ndarray) -> np.ndarray:
    """Residuals of a Gaussian background model, parameters (amp, center, fwhm)."""
    amp, center, fwhm = theta
    sigma = fwhm / FWHM_SIGMA_FACTOR
    return amp * np.exp(-((lam - center) ** 2) / (2.0 * sigma * sigma)) - y


def background_jacobian(theta: np.ndarray, lam: np.ndarray,
                        y: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of :func:`background_residuals` wrt (amp, center, fwhm)."""
    amp, center, fwhm = theta
    sigma = fwhm / FWHM_SIGMA_FACTOR
    d = lam - center
    shape = np.exp(-(d * d) / (2.0 * sigma * sigma))
    model = amp * shape
    jac = np.empty((lam.size, 3))
    jac[:, 0] = shape
    jac[:, 1] = model * d / (sigma * sigma)
    jac[:, 2] = model * d * d * FWHM_SIGMA_FACTOR ** 2 / fwhm ** 3
    return jac


@dataclass(frozen=True)
class BackgroundFit:
    """Fitted autofluorescence peak and its value under the red readout."""

    peak: PeakModel
    i_background: float
    residual_norm: float


def fit_background(s: Spectrum) -> BackgroundFit:
    """Least-squares Gaussian fit of the autofluorescence background.

    The fit runs over the 450-600 nm window with the red fluorophore band
    excluded, from a fixed initialization, so results are deterministic.
    i_background is the fitted model evaluated at the red readout.
    """
    lam = s.grid.wavelengths
    if not s.grid.covers(*FIT_WINDOW):
        raise DataError(
            f"spectrum does not contain the {FIT_WINDOW} nm fit window"
        )
    mask = (lam >= FIT_WINDOW[0]) & (lam <= FIT_WINDOW[1])
    mask &= ~((lam >= PPIX_EXCLUSION[0]) & (lam <= PPIX_EXCLUSION[1]))
    lam_fit = lam[mask]
    y_fit = s.values[mask]
    peak_guess = float(y_fit.max())
    if peak_guess <= 0:
        raise FitError("no signal in the background fit window")

    x0 = np.array([peak_guess, FIT_INIT_CENTER, FIT_INIT_FWHM])
    result = least_squares(background_residuals, x0, jac=background_jacobian,
                           args=(lam_fit, y_fit), method="lm",
                           ftol=FIT_FTOL, max_nfev=FIT_MAX_EVALS)
    if not result.success:
        raise FitError(f"background fit did not converge: {result.message}")
    amp, center, fwhm = result.x
    fwhm = abs(fwhm)  # the Gaussian is even in fwhm; report the physical width
    if amp <= 0 or fwhm == 0:
        raise FitError("background fit collapsed to a degenerate peak")
    peak = PeakModel(center=float(center), fwhm=float(fwhm), amplitude=float(amp))
    sigma = fwhm / FWHM_SIGMA_FACTOR
    i_bg = float(amp * np.exp(-((RED_READOUT_NM - center) ** 2)
                              / (2.0 * sigma * sigma)))
    return BackgroundFit(peak=peak, i_background=i_bg,
                         residual_norm=float(np.linalg.norm(result.fun)))


def spectral_ratio(s: Spectrum) -> float:
    """Oracle diagnostic ratio from a full spectrum.

    Background-corrected red-peak density over the green-peak density;
    the correction comes from :func:`fit_background`, so autofluorescence
    alone gives a ratio near zero.
    """
    i_green = s.value_at(GREEN_READOUT_NM)
    if i_green == 0:
        raise DataError("no signal at the green readout wavelength")
    fit = fit_background(s)
    return (s.value_at(RED_READOUT_NM) - fit.i_background) / i_green


def normalize(values) -> np.ndarray:
    """Divide by the maximum so the peak becomes exactly 1."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DataError("cannot normalize an empty series")
    peak = float(values.max())
    if peak <= 0:
        raise DataError("normalization needs at least one positive value")
    return values / peak


@dataclass(frozen=True)
class RatioMap:
    """Per-cell sensor ratios, raw and peak-normalized, with ground truth."""

    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    raw_ratio: np.ndarray = field(repr=False)
    normalized_ratio: np.ndarray = field(repr=False)
    truth: np.ndarray = field(repr=False)
    alpha: float = 0.0

    def __post_init__(self):
        n = len(self.x)
        for name in ("y", "raw_ratio", "normalized_ratio", "truth"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match x")

    def __len__(self) -> int:
        return len(self.x)


def build_ratio_map(x, y, counts_514, counts_635, truth,
                    alpha: float = 0.0) -> RatioMap:
    """Sensor ratios for a whole scan, peak-normalized across the map."""
    c514 = np.asarray(counts_514, dtype=float)
    c635 = np.asarray(counts_635, dtype=float)
    raw = np.array([channel_ratio(r, g, alpha) for r, g in zip(c635, c514)])
    return RatioMap(x=np.asarray(x, float), y=np.asarray(y, float),
                    raw_ratio=raw, normalized_ratio=normalize(raw),
                    truth=np.asarray(truth, bool), alpha=alpha)


def classify(m: RatioMap, threshold: float, normalized: bool = True) -> np.ndarray:
    """Boolean tumour call per cell: ratio at or above the threshold."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    scores = m.normalized_ratio if normalized else m.raw_ratio
    return scores >= threshold


@dataclass(frozen=True)
class RocCurve:
    """Threshold sweep: (fpr, tpr) from (0,0) to (1,1), plus trapezoid AUC."""

    thresholds: np.ndarray = field(repr=False)
    fpr: np.ndarray = field(repr=False)
    tpr: np.ndarray = field(repr=False)
    auc: float = 0.0


def _check_two_classes(labels: np.ndarray) -> None:
    if labels.all() or not labels.any():
        raise DataError("need both classes present, got a single class")


def roc(scores, labels) -> RocCurve:
    """ROC by descending threshold sweep; tied scores form one step.

    The trapezoid AUC over the grouped sweep equals the pairwise
    ordering probability with ties counted half.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have equal length")
    _check_two_classes(labels)
    order = np.argsort(-scores, kind="mergesort")
    s_sorted = scores[order]
    l_sorted = labels[order]
    # last index of each tie group
    last = np.nonzero(np.diff(s_sorted))[0]
    idx = np.concatenate((last, [s_sorted.size - 1]))
    cum_tp = np.cumsum(l_sorted)
    cum_fp = np.cumsum(~l_sorted)
    n_pos = int(l_sorted.sum())
    n_neg = l_sorted.size - n_pos
    tpr = np.concatenate(([0.0], cum_tp[idx] / n_pos))
    fpr = np.concatenate(([0.0], cum_fp[idx] / n_neg))
    thresholds = np.concatenate(([np.inf], s_sorted[idx]))
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr,
                    auc=float(np.trapezoid(tpr, fpr)))


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion table at one threshold."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp)


def confusion_at(scores, labels, threshold: float) -> ConfusionCounts:
    """Confusion counts with positives called at score >= threshold."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have equal length")
    _check_two_classes(labels)
    pred = scores >= threshold
    return ConfusionCounts(tp=int((pred & labels).sum()),
                           fp=int((pred & ~labels).sum()),
                           tn=int((~pred & ~labels).sum()),
                           fn=int((~pred & labels).sum()))


def youden_threshold(curve: RocCurve) -> float:
    """Threshold maximizing sensitivity + specificity - 1 on the sweep.

    Ties resolve to the highest qualifying threshold; the sweep's
    leading sentinel (nothing called positive) is not a valid optimum.
    """
    j = curve.tpr - curve.fpr
    best = 1 + int(np.argmax(j[1:]))
    return float(curve.thresholds[best])


def spearman(x, y) -> float:
    """Rank correlation: Pearson correlation of average-ranked data."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DataError("series must have equal length")
    if x.size < 3:
        raise DataError("rank correlation needs at least 3 points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DataError("rank correlation is undefined for a constant series")
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    return float(np.corrcoef(rx, ry)[0, 1])


def region_split(x, y, truth, radius: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Split scan cells into tumour-region and healthy-region masks.

    The tumour region is every cell within ``radius`` mm of a truth-positive
    cell, which keeps the margin gradient (where the two ratio routes must
    agree) inside the region instead of only the flat tumour core.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if not truth.any():
        raise DataError("no truth-positive cells: cannot define a tumour region")
    xt, yt = x[truth], y[truth]
    d2 = (x[:, None] - xt[None, :]) ** 2 + (y[:, None] - yt[None, :]) ** 2
    tumour = d2.min(axis=1) <= radius * radius
    return tumour, ~tumour


def write_ratiomap_csv(m: RatioMap, predicted, path) -> None:
    """Export: `x_mm,y_mm,raw_ratio,normalized_ratio,predicted,truth`."""
    predicted = np.asarray(predicted, dtype=bool)
    if len(predicted) != len(m):
        raise ValueError("predicted length does not match the map")
    with open(path, "w", newline="") as fh:
        fh.write("x_mm,y_mm,raw_ratio,normalized_ratio,predicted,truth\n")
        for i in range(len(m)):
            fh.write(f"{float(m.x[i])!r},{float(m.y[i])!r},"
                     f"{float(m.raw_ratio[i])!r},"
                     f"{float(m.normalized_ratio[i])!r},{int(predicted[i])},"
                     f"{int(m.truth[i])}\n")


def read_ratiomap_csv(path) -> tuple[RatioMap, np.ndarray]:
    """Read a ratio-map CSV; returns the map and the predicted calls."""
    expected = "x_mm,y_mm,raw_ratio,normalized_ratio,predicted,truth"
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != expected:
            raise DataError(f"{path}: expected header {expected!r}, got {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise DataError(f"{path}: empty ratio map")
    try:
        cols = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise DataError(f"{path}: malformed row: {exc}") from exc
    if cols.shape[1] != 6:
        raise DataError(f"{path}: expected 6 columns, got {cols.shape[1]}")
    m = RatioMap(x=cols[:, 0], y=cols[:, 1], raw_ratio=cols[:, 2],
                 normalized_ratio=cols[:, 3], truth=cols[:, 5].astype(bool))
    return m, cols[:, 4].astype(bool)


def write_roc_csv(curve: RocCurve, path) -> None:
    """Export: `threshold,fpr,tpr`, one row per sweep step."""
    with open(path, "w", newline="") as fh:
        fh.write("threshold,fpr,tpr\n")
        for thr, fp_rate, tp_rate in zip(curve.thresholds, curve.fpr, curve.tpr):
            fh.write(f"{float(thr)!r},{float(fp_rate)!r},{float(tp_rate)!r}\n")


def write_summary(summary: dict, path) -> None:
    """Key-value report; insertion order preserved for stable diffs."""
    with open(path, "w") as fh:
        yaml.safe_dump(summary, fh, sort_keys=False)
