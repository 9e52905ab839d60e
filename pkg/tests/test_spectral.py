import math

import numpy as np
import pytest

from fluorosense.errors import DataError
from fluorosense.spectral import (
    FWHM_SIGMA_FACTOR,
    GAUSSIAN_AREA_FACTOR,
    EmissionModel,
    PeakModel,
    Spectrum,
    WavelengthGrid,
    build_grid,
    default_grid,
    evaluate_peak,
    gaussian_profile,
    integrate_band,
    monochromatic_line,
    read_spectrum_csv,
    synthesize_emission,
    total_power,
    write_spectrum_csv,
)


def test_grid_sample_counts():
    assert default_grid().n_samples == 351
    assert build_grid(400.0, 401.0, 1.0).n_samples == 2
    assert build_grid(400.0, 750.0, 0.5).n_samples == 701


def test_grid_endpoints_and_step(grid):
    lam = grid.wavelengths
    assert lam[0] == 400.0
    assert lam[-1] == 750.0
    assert np.allclose(np.diff(lam), 1.0)
    assert not lam.flags.writeable


def test_grid_rejects_bad_bounds():
    with pytest.raises(ValueError):
        WavelengthGrid(500.0, 400.0, 1.0)
    with pytest.raises(ValueError):
        WavelengthGrid(400.0, 750.0, 0.0)
    with pytest.raises(ValueError):
        WavelengthGrid(400.0, 400.0, 1.0)


def test_fwhm_sigma_factor_closed_form():
    assert FWHM_SIGMA_FACTOR == pytest.approx(2.0 * math.sqrt(2.0 * math.log(2.0)), rel=1e-15)
    assert GAUSSIAN_AREA_FACTOR == pytest.approx(math.sqrt(2.0 * math.pi) / FWHM_SIGMA_FACTOR, rel=1e-15)


def test_gaussian_apex_and_half_height(grid):
    """Value at center is the amplitude; at center +/- fwhm/2 it is half."""
    s = evaluate_peak(PeakModel(635.0, 14.0, 2.0), grid)
    assert s.value_at(635.0) == pytest.approx(2.0, rel=1e-12)
    # 628 and 642 are on-grid samples exactly half a width away
    assert s.value_at(628.0) == pytest.approx(1.0, rel=1e-12)
    assert s.value_at(642.0) == pytest.approx(1.0, rel=1e-12)


def test_gaussian_fwhm_identity_property(rng):
    # interpolated half-height crossing separation equals the requested fwhm
    grid = build_grid(400.0, 750.0, 0.1)
    lam = grid.wavelengths
    for _ in range(25):
        center = float(rng.uniform(470.0, 680.0))
        fwhm = float(rng.uniform(8.0, 60.0))
        amp = float(rng.uniform(0.2, 5.0))
        v = evaluate_peak(PeakModel(center, fwhm, amp), grid).values
        half = amp / 2.0
        above = v >= half
        lo = np.argmax(above)
        hi = len(above) - np.argmax(above[::-1]) - 1
        # linear interpolation at both shoulders
        x_lo = np.interp(half, [v[lo - 1], v[lo]], [lam[lo - 1], lam[lo]])
        x_hi = np.interp(half, [v[hi + 1], v[hi]], [lam[hi + 1], lam[hi]])
        assert x_hi - x_lo == pytest.approx(fwhm, rel=2e-4)


def test_gaussian_integral_closed_form(rng):
    grid = default_grid()
    for _ in range(40):
        center = float(rng.uniform(520.0, 640.0))
        fwhm = float(rng.uniform(5.0, 22.0))
        amp = float(rng.uniform(0.1, 10.0))
        s = evaluate_peak(PeakModel(center, fwhm, amp), grid)
        expected = amp * fwhm * GAUSSIAN_AREA_FACTOR
        assert total_power(s) == pytest.approx(expected, rel=1e-3)


def test_synthesize_unit_autofluor_at_635(grid, emission):
    s = synthesize_emission(1.0, 0.0, emission, grid)
    assert s.value_at(635.0) == pytest.approx(0.04454314745602953, rel=1e-12)
    assert s.value_at(510.0) == pytest.approx(1.0, rel=1e-12)


def test_synthesize_secondary_peak_fraction(grid, emission):
    s = synthesize_emission(0.0, 1.0, emission, grid)
    assert s.value_at(635.0) == pytest.approx(1.0, rel=1e-6)
    # shoulder apex is the configured fraction of the primary apex
    tail_635_at_704 = math.exp(-(69.0 / (14.0 / FWHM_SIGMA_FACTOR)) ** 2 / 2.0)
    expected_704 = 0.2 + tail_635_at_704
    assert s.value_at(704.0) == pytest.approx(expected_704, rel=1e-9)


def test_synthesize_rejects_negative_amplitudes(grid, emission):
    with pytest.raises(ValueError):
        synthesize_emission(-1.0, 0.0, emission, grid)
    with pytest.raises(ValueError):
        synthesize_emission(0.0, -0.5, emission, grid)


def test_synthesize_zero_is_zero(grid, emission):
    s = synthesize_emission(0.0, 0.0, emission, grid)
    assert np.all(s.values == 0.0)


def test_synthesize_linear_in_amplitudes(grid, emission, rng):
    for _ in range(20):
        a = float(rng.uniform(0.0, 3.0))
        p = float(rng.uniform(0.0, 3.0))
        c = float(rng.uniform(0.1, 7.0))
        scaled = synthesize_emission(c * a, c * p, emission, grid)
        base = synthesize_emission(a, p, emission, grid)
        assert np.allclose(scaled.values, c * base.values, rtol=1e-12, atol=0.0)


def test_emission_model_validates_secondary_fraction():
    with pytest.raises(ValueError):
        EmissionModel(ppix_secondary=PeakModel(704.0, 30.0, 1.5))


def test_spectrum_rejects_bad_values(grid):
    with pytest.raises(ValueError):
        Spectrum(grid, np.ones(5))
    with pytest.raises(ValueError):
        Spectrum(grid, np.full(grid.n_samples, -1.0))


def test_value_at_out_of_range(grid):
    s = Spectrum(grid, np.ones(grid.n_samples))
    with pytest.raises(ValueError):
        s.value_at(399.0)
    with pytest.raises(ValueError):
        s.value_at(750.5)


def test_integrate_band_constant(grid):
    s = Spectrum(grid, np.ones(grid.n_samples))
    assert integrate_band(s, 500.0, 510.0) == pytest.approx(10.0, rel=1e-12)
    # off-grid endpoints are handled by interpolation
    assert integrate_band(s, 500.25, 510.75) == pytest.approx(10.5, rel=1e-12)


def test_integrate_band_additivity(grid, emission, rng):
    s = synthesize_emission(1.3, 0.7, emission, grid)
    for _ in range(20):
        a, b, c = np.sort(rng.uniform(400.0, 750.0, size=3))
        whole = integrate_band(s, float(a), float(c))
        parts = integrate_band(s, float(a), float(b)) + integrate_band(s, float(b), float(c))
        assert parts == pytest.approx(whole, rel=1e-10, abs=1e-12)


def test_integrate_band_rejects_bad_bounds(grid):
    s = Spectrum(grid, np.ones(grid.n_samples))
    with pytest.raises(ValueError):
        integrate_band(s, 510.0, 500.0)
    with pytest.raises(ValueError):
        integrate_band(s, 390.0, 500.0)


def test_monochromatic_line_power(grid):
    s = monochromatic_line(grid, 514.0, 2.5)
    assert total_power(s) == pytest.approx(2.5, rel=1e-12)
    assert np.count_nonzero(s.values) == 1


def test_monochromatic_line_rejects_off_grid(grid):
    with pytest.raises(ValueError):
        monochromatic_line(grid, 514.3, 1.0)
    with pytest.raises(ValueError):
        monochromatic_line(grid, 400.0, 1.0)  # edge sample would clip the line


def test_spectrum_csv_round_trip(tmp_path, grid, emission):
    s = synthesize_emission(2.0, 0.9, emission, grid)
    path = tmp_path / "spec.csv"
    write_spectrum_csv(s, path)
    back = read_spectrum_csv(path)
    assert back.grid == s.grid
    assert np.array_equal(back.values, s.values)


def test_spectrum_csv_rejects_malformed(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("wavelength_nm,value\n400.0\n")
    with pytest.raises(DataError):
        read_spectrum_csv(p)
    p.write_text("nm,value\n400.0,1.0\n401.0,1.0\n")
    with pytest.raises(DataError):
        read_spectrum_csv(p)
    p.write_text("wavelength_nm,value\n400.0,1.0\n400.0,1.0\n")
    with pytest.raises(DataError):
        read_spectrum_csv(p)
    p.write_text("wavelength_nm,value\n400.0,1.0\n")
    with pytest.raises(DataError):
        read_spectrum_csv(p)


def test_gaussian_profile_vectorized():
    lam = np.array([500.0, 510.0, 520.0])
    out = gaussian_profile(lam, 510.0, 20.0, 3.0)
    assert out[1] == pytest.approx(3.0, rel=1e-15)
    assert out[0] == out[2]
