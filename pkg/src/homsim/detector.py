"""Per-mode camera-count signals: synthesis, calibration, and quantization.

The detector sees one scalar fluorescence signal per mode and shot.  A signal
is modelled as

    s = n * g + b + drift(shot) + kappa * s0 + Gaussian(0, sigma_n * g)

with ``g`` counts per atom, ``b`` the zero-atom offset, a slow drift of the
background level, optical crosstalk proportional to the companion-mode signal
``s0``, and a per-occupation Gaussian width sigma_n^2 = sigma0^2 + c1^2 * n in
atom units.  Calibration inverts this chain in the order crosstalk -> drift
-> histogram fit -> noise-law fit, after which signals quantize to the
nearest-peak integer occupation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import norm

from . import stats
from .channel import BlurLaw


class CalibrationError(RuntimeError):
    """Signal data insufficient or inconsistent for the requested correction."""


@dataclass
class DetectorCalibration:
    """Result of the histogram and noise-law fits for one mode.

    Widths are kept in atom units; peak n sits at ``b + n * g`` counts and has
    rms width ``sigma(n) * g`` counts.  Quantization intervals are the
    midpoints between adjacent peaks, extended indefinitely beyond the last
    fitted peak by the even spacing.
    """

    g: float
    b: float
    sigma0: float
    c1: float
    n_max_fit: int = 12
    peak_heights: np.ndarray | None = None
    peak_sigmas: np.ndarray | None = None
    peak_sigma_errs: np.ndarray | None = None
    g_err: float = float("nan")
    b_err: float = float("nan")
    sigma0_err: float = float("nan")
    c1_err: float = float("nan")

    def sigma(self, n) -> np.ndarray:
        return np.sqrt(self.sigma0**2 + self.c1**2 * np.asarray(n, dtype=float))

    def peak_center(self, n) -> np.ndarray:
        return self.b + np.asarray(n, dtype=float) * self.g

    def blur_law(self) -> BlurLaw:
        return BlurLaw(sigma0=self.sigma0, c1=self.c1, g=self.g, b=self.b)

    def to_json(self) -> dict:
        out = {k: v for k, v in vars(self).items() if not isinstance(v, np.ndarray)}
        for k in ("peak_heights", "peak_sigmas", "peak_sigma_errs"):
            v = getattr(self, k)
            out[k] = None if v is None else [float(x) for x in v]
        return out


# Reference calibrations of the modelled experiment (b is an arbitrary offset
# default; only differences of peak positions are physical).
DEFAULT_CALIBRATION_MINUS = DetectorCalibration(g=975.8, b=250.0, sigma0=0.1466, c1=0.0114)
DEFAULT_CALIBRATION_PLUS = DetectorCalibration(g=832.5, b=250.0, sigma0=0.168, c1=0.027)
DEFAULT_CROSSTALK = {"minus": 1.48e-3, "plus": 1.76e-3}


@dataclass(frozen=True)
class SignalTable:
    """Raw or corrected per-shot scalar signals for both side modes.

    ``s_zero`` is the companion signal of the central mode, needed only as
    the crosstalk regressor.  Acquisition indices must increase strictly.
    """

    shot_index: np.ndarray
    s_minus: np.ndarray
    s_zero: np.ndarray
    s_plus: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.shot_index)
        if len(idx) > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("acquisition indices must be strictly increasing")
        for name in ("s_minus", "s_zero", "s_plus"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    def __len__(self):
        return len(self.shot_index)

    def signal(self, mode: str) -> np.ndarray:
        return {"minus": self.s_minus, "plus": self.s_plus}[mode]

    def with_signal(self, mode: str, values: np.ndarray) -> "SignalTable":
        return replace(self, **{{"minus": "s_minus", "plus": "s_plus"}[mode]: values})

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["shot_index", "s_minus", "s_zero", "s_plus"])
            for row in zip(self.shot_index, self.s_minus, self.s_zero, self.s_plus):
                w.writerow([int(row[0]), f"{row[1]:.6f}", f"{row[2]:.6f}", f"{row[3]:.6f}"])

    @classmethod
    def from_csv(cls, path) -> "SignalTable":
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        return cls(
            shot_index=data["shot_index"].astype(int),
            s_minus=data["s_minus"].astype(float),
            s_zero=data["s_zero"].astype(float),
            s_plus=data["s_plus"].astype(float),
        )


@dataclass(frozen=True)
class DriftSpec:
    """Slow background-level trajectory, peak-to-peak bounded.

    The default period puts two full cycles across a 26712-shot run, slow
    enough that a 400-shot correction window sees a nearly constant level.
    """

    peak_to_peak: float = 370.0
    period: float = 13356.0
    phase: float = 0.0
    step_at: int | None = None  # optional additional step, in shots
    step_size: float = 0.0

    def offsets(self, indices: np.ndarray) -> np.ndarray:
        i = np.asarray(indices, dtype=float)
        out = 0.5 * self.peak_to_peak * np.sin(2 * np.pi * i / self.period + self.phase)
        if self.step_at is not None:
            out = out + np.where(i >= self.step_at, self.step_size, 0.0)
        return out


@dataclass(frozen=True)
class CompanionSpec:
    """Shot-to-shot statistics of the central-mode signal used as crosstalk source."""

    mean: float = 2.0e5
    spread: float = 3.0e4


def synthesize_signals(
    shots,
    calib_minus: DetectorCalibration = DEFAULT_CALIBRATION_MINUS,
    calib_plus: DetectorCalibration = DEFAULT_CALIBRATION_PLUS,
    drift: DriftSpec | None = None,
    crosstalk: dict | None = None,
    companion: CompanionSpec = CompanionSpec(),
    seed: int = 0,
) -> SignalTable:
    """Forward model: integer occupations to raw camera counts.

    ``shots`` needs ``n_minus`` and ``n_plus`` integer arrays.  This is the
    inverse of the calibration chain and exists for round-trip validation;
    real data enters through :class:`SignalTable` CSV files instead.
    """
    drift = drift if drift is not None else DriftSpec()
    crosstalk = crosstalk if crosstalk is not None else dict(DEFAULT_CROSSTALK)
    rng = np.random.default_rng(np.random.Philox(key=np.uint64(seed)))
    m = len(shots.n_minus)
    idx = np.arange(m)
    s_zero = rng.normal(companion.mean, companion.spread, size=m)
    offsets = drift.offsets(idx)

    def one_mode(n, calib, kappa):
        n = np.asarray(n)
        noise = rng.normal(0.0, calib.sigma(n) * calib.g)
        return calib.b + n * calib.g + offsets + kappa * s_zero + noise

    return SignalTable(
        shot_index=idx,
        s_minus=one_mode(shots.n_minus, calib_minus, crosstalk["minus"]),
        s_zero=s_zero,
        s_plus=one_mode(shots.n_plus, calib_plus, crosstalk["plus"]),
    )


def _coarse_scale(values: np.ndarray) -> tuple[float, float]:
    """First-pass (g, b): peak spacing and zero-peak location of the histogram.

    A candidate peak must clear a Poisson-aware prominence floor, five
    standard errors of its smoothed bin count, so counting fluctuations on
    top of a broad cluster never register as structure.  The median spacing
    of the survivors estimates g; the lowest-signal survivor estimates b.
    """
    lo, hi = np.percentile(values, [0.1, 99.9])
    span = hi - lo
    if span <= 0:
        raise CalibrationError("signal histogram has no spread")
    nbins = max(200, min(2000, int(len(values) / 15)))
    counts, edges = np.histogram(values, bins=nbins, range=(lo - 0.02 * span, hi + 0.02 * span))
    centers = 0.5 * (edges[:-1] + edges[1:])
    binw = edges[1] - edges[0]
    smooth = np.convolve(counts, np.ones(3) / 3.0, mode="same")
    peaks, props = find_peaks(smooth, prominence=1e-9, distance=max(3, nbins // 60))
    if len(peaks):
        floor = np.maximum(5.0 * np.sqrt(smooth[peaks] / 3.0 + 1.0), 0.02 * smooth.max())
        peaks = peaks[props["prominences"] >= floor]
    if len(peaks) < 2:
        raise CalibrationError("histogram does not resolve at least two peaks")
    g0 = float(np.median(np.diff(peaks)) * binw)
    b0 = float(centers[peaks[0]])
    if g0 <= 0:
        raise CalibrationError("non-positive coarse peak spacing")
    return g0, b0


def _zero_cluster_mask(values: np.ndarray, g0: float, b0: float) -> np.ndarray:
    return values < b0 + 0.5 * g0


def _fit_cluster_slope(x: np.ndarray, y: np.ndarray) -> float:
    # one clipping pass guards against stray occupied shots inside the window
    for _ in range(2):
        kappa, icept = np.polyfit(x, y, 1)
        resid = y - (kappa * x + icept)
        keep = np.abs(resid) < 3 * resid.std()
        if keep.all():
            break
        x, y = x[keep], y[keep]
    return float(kappa)


def correct_crosstalk(signals: SignalTable) -> tuple[SignalTable, dict]:
    """Remove the companion-signal leakage from both side modes.

    Fits a line through (s0, s) over the zero-atom cluster of each mode and
    subtracts kappa * s0 everywhere; the intercept (the zero-atom level) is
    left in place for the later fits.  Selecting the cluster on the raw
    signal truncates the highest-crosstalk shots and biases the slope low,
    so a second pass rebuilds the mask from the once-corrected signal, which
    is independent of the regressor, and refits on the raw values.
    """
    out = signals
    kappas = {}
    for mode in ("minus", "plus"):
        s = signals.signal(mode)
        g0, b0 = _coarse_scale(s)
        mask = _zero_cluster_mask(s, g0, b0)
        if mask.sum() < 100:
            raise CalibrationError(f"only {int(mask.sum())} zero-atom shots in mode {mode}; need >= 100")
        kappa = _fit_cluster_slope(signals.s_zero[mask], s[mask])
        resel = s - kappa * (signals.s_zero - signals.s_zero[mask].mean())
        g1, b1 = _coarse_scale(resel)
        mask = _zero_cluster_mask(resel, g1, b1)
        if mask.sum() >= 100:
            kappa = _fit_cluster_slope(signals.s_zero[mask], s[mask])
        kappas[mode] = float(kappa)
        out = out.with_signal(mode, out.signal(mode) - kappa * signals.s_zero)
    return out, kappas


@dataclass(frozen=True)
class DriftCorrection:
    window: int
    starts: np.ndarray
    centers: np.ndarray
    corrections: np.ndarray
    center_stderr: np.ndarray


def correct_drift(signals: SignalTable, window: int = 400) -> tuple[SignalTable, dict]:
    """Track the zero-atom peak across acquisition windows and level it.

    Each window's zero-atom cluster is summarised by a Gaussian (its fitted
    center is the clipped sample mean); the median center across windows is
    taken as the reference level so that, absent drift, corrections scatter
    around zero and the global offset b survives for the histogram fit.
    """
    if len(signals) < window:
        raise CalibrationError(f"need at least {window} shots, got {len(signals)}")
    out = signals
    reports = {}
    starts = np.arange(0, len(signals), window)
    for mode in ("minus", "plus"):
        s = out.signal(mode)
        g0, b0 = _coarse_scale(s)
        centers, errs = [], []
        for k, start in enumerate(starts):
            chunk = s[start : start + window]
            zeros = chunk[_zero_cluster_mask(chunk, g0, b0)]
            if len(zeros) < 10:
                raise CalibrationError(f"window {k} has no resolvable zero-atom peak in mode {mode}")
            mu, sd = zeros.mean(), zeros.std()
            clipped = zeros[np.abs(zeros - mu) < 3 * sd] if sd > 0 else zeros
            centers.append(clipped.mean())
            errs.append(clipped.std(ddof=1) / math.sqrt(len(clipped)) if len(clipped) > 1 else 0.0)
        centers = np.array(centers)
        corrections = centers - np.median(centers)
        per_shot = np.repeat(corrections, window)[: len(s)]
        out = out.with_signal(mode, s - per_shot)
        reports[mode] = DriftCorrection(
            window=window, starts=starts, centers=centers,
            corrections=corrections, center_stderr=np.array(errs),
        )
    return out, reports


def _histogram_model(x, params, n_fit, sigma_last):
    """Sum of evenly spaced Gaussians; free widths enter as log(sigma) to stay
    positive with a smooth jacobian."""
    g, b = params[0], params[1]
    heights = params[2 : 3 + n_fit]
    sigmas = np.concatenate([np.exp(params[3 + n_fit :]), [sigma_last]])
    out = np.zeros_like(x)
    for n in range(n_fit + 1):
        w = sigmas[n] * g
        out = out + heights[n] * np.exp(-0.5 * ((x - b - n * g) / w) ** 2)
    return out


def fit_histogram(values: np.ndarray, n_max_fit: int | None = None) -> DetectorCalibration:
    """Fit the comb of per-occupation Gaussian peaks to a signal histogram.

    Bins are weighted by the inverse of the number of detection events in the
    peak they belong to, so sparse high-occupation peaks are not drowned out.
    The last fitted peak's width is not free: it is pinned to the noise-law
    prediction extrapolated from the lower peaks, iterating fit and noise law
    to convergence.
    """
    values = np.asarray(values, dtype=float)
    g0, b0 = _coarse_scale(values)
    occ = np.maximum(0, np.round((values - b0) / g0)).astype(int)
    counts_per_peak = np.bincount(occ)
    if n_max_fit is None:
        eligible = np.nonzero(counts_per_peak >= 25)[0]
        n_max_fit = int(eligible.max()) if len(eligible) else 1
        n_max_fit = max(2, min(n_max_fit, 30))

    lo = b0 - 0.75 * g0
    hi = b0 + (n_max_fit + 0.75) * g0
    width = g0 / 12.0
    nbins = int(np.ceil((hi - lo) / width))
    y, edges = np.histogram(values[(values >= lo) & (values <= hi)], bins=nbins, range=(lo, hi))
    x = 0.5 * (edges[:-1] + edges[1:])
    y = y.astype(float)

    # inverse-per-peak-event weights for each bin
    bin_peak = np.clip(np.round((x - b0) / g0), 0, n_max_fit).astype(int)
    events = np.array([max(counts_per_peak[n] if n < len(counts_per_peak) else 0, 1) for n in range(n_max_fit + 1)])
    weights = 1.0 / events[bin_peak]

    heights0 = []
    for n in range(n_max_fit + 1):
        sel = np.abs(x - (b0 + n * g0)) < 0.5 * width
        heights0.append(max(y[sel].max() if sel.any() else y.max() * 0.01, 1e-3))
    p = np.concatenate([[g0, b0], heights0, np.full(n_max_fit, math.log(0.15))])

    # box bounds keep sparse-peak widths from collapsing onto single bins
    lower = np.concatenate([[0.5 * g0, b0 - g0], np.zeros(n_max_fit + 1), np.full(n_max_fit, math.log(0.02))])
    upper = np.concatenate([[1.5 * g0, b0 + g0], np.full(n_max_fit + 1, np.inf), np.full(n_max_fit, math.log(1.5))])

    sigma0, c1 = 0.15, 0.02
    cov = None
    for _ in range(3):
        sigma_last = math.sqrt(sigma0**2 + c1**2 * n_max_fit)

        def model(xx, pp):
            return _histogram_model(xx, pp, n_max_fit, sigma_last)

        p, cov = stats.weighted_least_squares(model, x, y, p, weights=weights, bounds=(lower, upper))
        free_sigmas = np.exp(p[3 + n_max_fit :])
        # delta method: err(sigma) = sigma * err(log sigma)
        sigma_errs = free_sigmas * np.sqrt(np.diag(cov)[3 + n_max_fit :])
        curve = fit_noise_curve(free_sigmas, sigma_errs=sigma_errs)
        sigma0, c1 = curve.sigma0, curve.c1

    g, b = float(p[0]), float(p[1])
    err = np.sqrt(np.diag(cov))
    return DetectorCalibration(
        g=g,
        b=b,
        sigma0=sigma0,
        c1=c1,
        n_max_fit=n_max_fit,
        peak_heights=p[2 : 3 + n_max_fit].copy(),
        peak_sigmas=np.concatenate([free_sigmas, [math.sqrt(sigma0**2 + c1**2 * n_max_fit)]]),
        peak_sigma_errs=np.concatenate([sigma_errs, [float("nan")]]),
        g_err=float(err[0]),
        b_err=float(err[1]),
        sigma0_err=curve.sigma0_err,
        c1_err=curve.c1_err,
    )


@dataclass(frozen=True)
class NoiseCurve:
    sigma0: float
    c1: float
    sigma0_err: float
    c1_err: float


def fit_noise_curve(widths: np.ndarray, sigma_errs: np.ndarray | None = None) -> NoiseCurve:
    """Weighted linear fit of sigma_n^2 = sigma0^2 + c1^2 * n.

    Linear in the squared parameters; their standard errors propagate to
    sigma0 and c1 by the delta method.  A negative fitted sigma0^2 is
    non-physical and raises; a slightly negative slope clamps c1 to zero.
    """
    widths = np.asarray(widths, dtype=float)
    if len(widths) < 3:
        raise CalibrationError("need at least three peak widths")
    n = np.arange(len(widths), dtype=float)
    y = widths**2
    if sigma_errs is not None and np.all(np.isfinite(sigma_errs)) and np.all(sigma_errs > 0):
        w = 1.0 / (2.0 * widths * sigma_errs) ** 2
    else:
        w = np.ones_like(y)
    a = np.stack([np.ones_like(n), n], axis=1)
    aw = a * w[:, None]
    normal = a.T @ aw
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError("singular noise-curve fit") from exc
    params = cov @ (aw.T @ y)
    resid = y - a @ params
    dof = max(len(y) - 2, 1)
    cov = cov * float(resid @ (w * resid)) / dof
    s0sq, c1sq = params
    if s0sq < 0:
        raise CalibrationError(f"fitted sigma0^2 = {s0sq:.3g} is negative")
    c1sq = max(c1sq, 0.0)
    sigma0 = math.sqrt(s0sq)
    c1 = math.sqrt(c1sq)
    s0sq_err, c1sq_err = np.sqrt(np.diag(cov))
    sigma0_err = s0sq_err / (2 * sigma0) if sigma0 > 0 else math.sqrt(s0sq_err)
    c1_err = c1sq_err / (2 * c1) if c1 > 0 else math.sqrt(c1sq_err)
    return NoiseCurve(sigma0=sigma0, c1=c1, sigma0_err=float(sigma0_err), c1_err=float(c1_err))


def histogram_table(values: np.ndarray, calib: DetectorCalibration, bins_per_peak: int = 12):
    """Binned signal histogram plus the fitted peak-comb curve, for plotting."""
    values = np.asarray(values, dtype=float)
    lo = calib.b - 0.75 * calib.g
    hi = calib.b + (calib.n_max_fit + 0.75) * calib.g
    nbins = int(np.ceil((hi - lo) * bins_per_peak / calib.g))
    counts, edges = np.histogram(values[(values >= lo) & (values <= hi)], bins=nbins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    model = np.zeros_like(centers)
    if calib.peak_heights is not None:
        for n, h in enumerate(calib.peak_heights):
            w = calib.peak_sigmas[n] * calib.g
            model += h * np.exp(-0.5 * ((centers - calib.b - n * calib.g) / w) ** 2)
    return centers, counts, model


def quantize_mode(values: np.ndarray, calib: DetectorCalibration) -> np.ndarray:
    """Nearest-peak integer occupations; exact midpoints break to the lower peak."""
    x = (np.asarray(values, dtype=float) - calib.b) / calib.g
    return np.maximum(0, np.ceil(x - 0.5)).astype(int)


def quantize(signals: SignalTable, calib_minus: DetectorCalibration, calib_plus: DetectorCalibration, theta: float | None = None):
    """Quantize both modes and assemble a shot table."""
    from .metrology import ShotTable

    return ShotTable(
        n_plus=quantize_mode(signals.s_plus, calib_plus),
        n_minus=quantize_mode(signals.s_minus, calib_minus),
        theta=theta,
    )


def detection_fidelity(n: int, calib: DetectorCalibration) -> float:
    """Chance of counting exactly n atoms when n are present.

    Gaussian mass of peak n inside the symmetric half-count window; at n = 0
    this is conservative because nothing lies below the lowest peak.
    """
    if n < 0:
        raise ValueError("occupation must be non-negative")
    return float(1.0 - 2.0 * norm.cdf(-0.5 / calib.sigma(n)))
