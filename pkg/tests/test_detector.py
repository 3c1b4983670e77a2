"""Signal synthesis, calibration chain, and quantization checks."""

import math

import numpy as np
import pytest

from homsim import detector, metrology

CAL_M = detector.DEFAULT_CALIBRATION_MINUS
CAL_P = detector.DEFAULT_CALIBRATION_PLUS


def poisson_shots(m: int, seed: int, mean: float = 2.0) -> metrology.ShotTable:
    rng = np.random.default_rng(seed)
    return metrology.ShotTable(
        n_plus=np.minimum(rng.poisson(mean, m), 10),
        n_minus=np.minimum(rng.poisson(mean, m), 10),
        theta=None,
    )


@pytest.fixture(scope="module")
def flat_signals():
    # no drift, no crosstalk: isolates the histogram and noise-law fits
    shots = poisson_shots(12000, seed=11)
    table = detector.synthesize_signals(
        shots,
        drift=detector.DriftSpec(peak_to_peak=0.0),
        crosstalk={"minus": 0.0, "plus": 0.0},
        seed=5,
    )
    return shots, table


@pytest.fixture(scope="module")
def fitted_minus(flat_signals):
    _, table = flat_signals
    return detector.fit_histogram(table.s_minus)


def test_synthesis_is_deterministic():
    shots = poisson_shots(500, seed=0)
    a = detector.synthesize_signals(shots, seed=9)
    b = detector.synthesize_signals(shots, seed=9)
    c = detector.synthesize_signals(shots, seed=10)
    np.testing.assert_array_equal(a.s_minus, b.s_minus)
    np.testing.assert_array_equal(a.s_plus, b.s_plus)
    assert not np.array_equal(a.s_minus, c.s_minus)


def test_signal_table_validation():
    ok = np.zeros(3)
    with pytest.raises(ValueError):
        detector.SignalTable(shot_index=np.array([0, 2, 1]), s_minus=ok, s_zero=ok, s_plus=ok)
    with pytest.raises(ValueError):
        detector.SignalTable(
            shot_index=np.arange(3), s_minus=np.array([0.0, np.nan, 1.0]), s_zero=ok, s_plus=ok
        )


def test_signal_table_csv_round_trip(tmp_path):
    shots = poisson_shots(50, seed=2)
    table = detector.synthesize_signals(shots, seed=1)
    path = tmp_path / "signals.csv"
    table.to_csv(path)
    back = detector.SignalTable.from_csv(path)
    np.testing.assert_array_equal(back.shot_index, table.shot_index)
    np.testing.assert_allclose(back.s_plus, table.s_plus, atol=1e-5)


def test_drift_offsets_sine_and_step():
    spec = detector.DriftSpec(peak_to_peak=100.0, period=400.0, step_at=10, step_size=7.0)
    off = spec.offsets(np.arange(20))
    assert off[0] == pytest.approx(7.0 * 0.0)  # phase 0, before the step
    assert off.max() <= 50.0 + 7.0 + 1e-9
    assert off[15] - 50.0 * math.sin(2 * math.pi * 15 / 400.0) == pytest.approx(7.0)


def test_crosstalk_correction_recovers_kappa():
    # low mean occupation keeps the zero-atom cluster large, where the
    # regression draws its leverage from
    shots = poisson_shots(12000, seed=3, mean=1.0)
    table = detector.synthesize_signals(
        shots, drift=detector.DriftSpec(peak_to_peak=0.0), seed=7
    )
    corrected, kappas = detector.correct_crosstalk(table)
    assert kappas["minus"] == pytest.approx(1.48e-3, abs=3e-4)
    assert kappas["plus"] == pytest.approx(1.76e-3, abs=3e-4)
    # residual correlation with the companion signal is gone
    zero = corrected.s_minus < corrected.s_minus.min() + 0.5 * CAL_M.g
    resid_slope = np.polyfit(corrected.s_zero[zero], corrected.s_minus[zero], 1)[0]
    assert abs(resid_slope) < 3e-4


def test_crosstalk_needs_enough_zero_shots():
    rng = np.random.default_rng(0)
    # lower cluster deliberately starved below the 100-shot requirement
    s = np.concatenate([
        rng.normal(250.0, 8.0, 80),
        rng.normal(1250.0, 15.0, 1200),
        rng.normal(2250.0, 15.0, 900),
    ])
    s.sort()  # strictly increasing index, order of signals is irrelevant here
    with pytest.raises(detector.CalibrationError):
        detector.correct_crosstalk(
            detector.SignalTable(
                shot_index=np.arange(len(s)),
                s_minus=s,
                s_zero=rng.normal(2e5, 3e4, len(s)),
                s_plus=s,
            )
        )


def test_drift_correction_recovers_sine():
    shots = poisson_shots(8000, seed=4, mean=1.0)
    spec = detector.DriftSpec(peak_to_peak=200.0, period=4000.0)
    table = detector.synthesize_signals(shots, drift=spec, crosstalk={"minus": 0.0, "plus": 0.0}, seed=8)
    corrected, reports = detector.correct_drift(table)
    rep = reports["minus"]
    mids = rep.starts + rep.window / 2.0
    want = spec.offsets(mids)
    resid = rep.corrections - (want - np.median(want))
    assert np.abs(resid).max() < 40.0  # counts; well under g


def test_drift_correction_null_case_stays_put():
    shots = poisson_shots(4000, seed=5)
    table = detector.synthesize_signals(
        shots, drift=detector.DriftSpec(peak_to_peak=0.0), crosstalk={"minus": 0.0, "plus": 0.0}, seed=9
    )
    corrected, reports = detector.correct_drift(table)
    for mode in ("minus", "plus"):
        rep = reports[mode]
        limit = 5.0 * np.maximum(rep.center_stderr, 1.0)
        assert np.all(np.abs(rep.corrections) < limit)


def test_drift_correction_reports_empty_window():
    rng = np.random.default_rng(1)
    n = np.zeros(1200, dtype=int)
    n[400:800] = 1  # second window has no zero-atom shots at all
    n[::7] = np.maximum(n[::7], 1)  # keep both peaks populated overall
    shots = metrology.ShotTable(n_plus=n, n_minus=n, theta=None)
    table = detector.synthesize_signals(
        shots, drift=detector.DriftSpec(peak_to_peak=0.0), crosstalk={"minus": 0.0, "plus": 0.0}, seed=2
    )
    with pytest.raises(detector.CalibrationError, match="window 1 .*minus"):
        detector.correct_drift(table)


def test_histogram_fit_recovers_scale(flat_signals, fitted_minus):
    calib = fitted_minus
    assert calib.g == pytest.approx(CAL_M.g, rel=5e-3)
    assert abs(calib.b - CAL_M.b) < 0.3 * CAL_M.g
    assert calib.sigma0 == pytest.approx(CAL_M.sigma0, abs=max(4 * calib.sigma0_err, 0.01))
    assert calib.c1 == pytest.approx(CAL_M.c1, abs=max(4 * calib.c1_err, 0.02))
    assert calib.n_max_fit >= 5
    assert len(calib.peak_heights) == calib.n_max_fit + 1


def test_round_trip_quantization(flat_signals, fitted_minus):
    shots, table = flat_signals
    occ = detector.quantize_mode(table.s_minus, fitted_minus)
    agree = np.mean(occ == shots.n_minus)
    assert agree > 0.995


def test_fit_noise_curve_exact():
    widths = np.sqrt(0.15**2 + 0.02**2 * np.arange(6))
    curve = detector.fit_noise_curve(widths)
    assert curve.sigma0 == pytest.approx(0.15, abs=1e-12)
    assert curve.c1 == pytest.approx(0.02, abs=1e-12)


def test_fit_noise_curve_guards():
    with pytest.raises(detector.CalibrationError):
        detector.fit_noise_curve(np.array([0.1, 0.2]))
    # strongly rising line through a tiny first width forces a negative intercept
    with pytest.raises(detector.CalibrationError):
        detector.fit_noise_curve(np.array([0.002, 0.3, 0.42, 0.52]))
    # slightly falling widths clamp the slope at zero instead of failing
    curve = detector.fit_noise_curve(np.array([0.2, 0.199, 0.198]))
    assert curve.c1 == 0.0
    assert curve.sigma0 > 0


def test_quantize_mode_midpoints_and_clamp():
    calib = detector.DetectorCalibration(g=100.0, b=50.0, sigma0=0.1, c1=0.0)
    vals = np.array([50.0, 100.0, 100.0 + 1e-9, -500.0, 451.0])
    np.testing.assert_array_equal(detector.quantize_mode(vals, calib), [0, 0, 1, 0, 4])


def test_quantize_builds_shot_table():
    signals = detector.SignalTable(
        shot_index=np.arange(2),
        s_minus=np.array([250.0, 250.0 + CAL_M.g]),
        s_zero=np.zeros(2),
        s_plus=np.array([250.0 + 2 * CAL_P.g, 250.0]),
    )
    tab = detector.quantize(signals, CAL_M, CAL_P, theta=0.2)
    np.testing.assert_array_equal(tab.n_minus, [0, 1])
    np.testing.assert_array_equal(tab.n_plus, [2, 0])
    assert tab.theta == 0.2


def test_detection_fidelity_frozen_values():
    assert detector.detection_fidelity(0, CAL_M) == pytest.approx(0.9993518968357167, abs=1e-15)
    assert detector.detection_fidelity(12, CAL_M) == pytest.approx(0.9990096273287542, abs=1e-15)
    assert detector.detection_fidelity(12, CAL_P) == pytest.approx(0.990687408095312, abs=1e-15)
    with pytest.raises(ValueError):
        detector.detection_fidelity(-1, CAL_M)


def test_histogram_table_shapes(flat_signals, fitted_minus):
    _, table = flat_signals
    centers, counts, model = detector.histogram_table(table.s_minus, fitted_minus)
    assert len(centers) == len(counts) == len(model)
    assert model.max() > 0
    # model tracks the tallest observed peak to within a factor of order one
    assert model.max() == pytest.approx(counts.max(), rel=0.5)


def test_calibration_json_is_serializable(fitted_minus):
    import json

    blob = json.dumps(fitted_minus.to_json())
    back = json.loads(blob)
    assert back["g"] == pytest.approx(fitted_minus.g)
    assert len(back["peak_sigmas"]) == fitted_minus.n_max_fit + 1
