"""State-quality and sensitivity estimators for number-resolved shot data.

Everything here consumes either fixed-N probability vectors over the
imbalance J_z or raw (N_plus, N_minus) shot tables.  The sensitivity route
is the statistical-distance one: squared Hellinger distances between
distributions at nearby rotation angles grow as (F/8)(dtheta)^2, so a fit of
that parabola estimates the classical Fisher information F without choosing
an estimator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import least_squares

from . import stats
from .fock import FixedNDistribution, TwoModeDistribution

# Default probe grid of the small-rotation interferometer sequences (rad).
SMALL_ROTATION_ANGLES = (0.0, 0.14, 0.20, 0.28, 0.35)

# The largest probe angle sits beyond the first node of the 14-atom signal,
# where the quartic expansion of d^2 stops being valid; dropping it restores
# a well-posed fit window for that atom number.
DEFAULT_EXCLUSIONS: Mapping[int, tuple[float, ...]] = {14: (0.35,)}


@dataclass(frozen=True)
class ShotTable:
    """Per-shot detected occupations of the two side modes.

    ``theta`` labels the rotation angle of the sequence that generated the
    data; None for unlabeled tables.
    """

    n_plus: np.ndarray
    n_minus: np.ndarray
    theta: float | None = None

    def __post_init__(self):
        np_ = np.asarray(self.n_plus, dtype=int)
        nm = np.asarray(self.n_minus, dtype=int)
        if np_.shape != nm.shape or np_.ndim != 1:
            raise ValueError("n_plus and n_minus must be 1-d arrays of equal length")
        if (np_ < 0).any() or (nm < 0).any():
            raise ValueError("occupations must be non-negative")
        if self.theta is not None and not 0.0 <= self.theta <= math.pi:
            raise ValueError("theta must lie in [0, pi]")
        object.__setattr__(self, "n_plus", np_)
        object.__setattr__(self, "n_minus", nm)

    def __len__(self):
        return len(self.n_plus)

    @property
    def n_total(self) -> np.ndarray:
        return self.n_plus + self.n_minus

    @property
    def jz(self) -> np.ndarray:
        return (self.n_plus - self.n_minus) / 2.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N_plus", "N_minus"])
            for a, b in zip(self.n_plus, self.n_minus):
                w.writerow([int(a), int(b)])

    @classmethod
    def from_csv(cls, path, theta: float | None = None) -> "ShotTable":
        data = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True, dtype=int))
        return cls(n_plus=data["N_plus"], n_minus=data["N_minus"], theta=theta)

    @classmethod
    def sample(cls, dist: TwoModeDistribution, n_shots: int, seed: int = 0, theta: float | None = None) -> "ShotTable":
        """Draw shots from a two-mode grid; shot order is randomized."""
        if n_shots < 1:
            raise ValueError("n_shots must be positive")
        rng = np.random.default_rng(np.random.Philox(key=np.uint64(seed)))
        flat = dist.grid.ravel()
        counts = rng.multinomial(n_shots, flat / flat.sum())
        idx = np.repeat(np.arange(flat.size), counts)
        idx = rng.permutation(idx)
        n_plus, n_minus = np.unravel_index(idx, dist.grid.shape)
        return cls(n_plus=n_plus, n_minus=n_minus, theta=theta)


def empirical_distribution(shots: ShotTable, n_total: int) -> FixedNDistribution:
    """Relative J_z frequencies within the fixed-N subspace, sample size kept."""
    mask = shots.n_total == n_total
    count = int(mask.sum())
    if count == 0:
        raise ValueError(f"no shots with total occupation {n_total}")
    hist = np.bincount(shots.n_plus[mask], minlength=n_total + 1).astype(float)
    return FixedNDistribution(n_total=n_total, probs=hist / count, n_shots=count)


def _check_same_n(p: FixedNDistribution, q: FixedNDistribution):
    if p.n_total != q.n_total:
        raise ValueError("distributions live in different fixed-N subspaces")


def fidelity(p: FixedNDistribution, q: FixedNDistribution) -> float:
    """Squared Bhattacharyya overlap of two J_z distributions."""
    _check_same_n(p, q)
    return float(np.sum(np.sqrt(p.probs * q.probs)) ** 2)


def hellinger_sq(p: FixedNDistribution, q: FixedNDistribution) -> float:
    _check_same_n(p, q)
    return _hell2(p.probs, q.probs)


def _hell2(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))


def jxjy2_estimate(post_hom: FixedNDistribution) -> float:
    """<J_x^2 + J_y^2> inferred from the J_z histogram taken after pi/2 coupling.

    The beam-splitter pulse maps J_x onto the measured J_z; the state's
    exchange symmetry makes the J_y moment equal to the J_x one, hence the
    factor two.
    """
    jz = post_hom.jz_values
    return float(2.0 * np.sum(post_hom.probs * jz**2))


@dataclass(frozen=True)
class GeneralizedSqueezing:
    linear: float
    db: float


def generalized_squeezing(var_jz: float, jxjy2: float, n_total: int) -> GeneralizedSqueezing:
    """Number-squeezing figure normalized by the transverse spin length.

    xi^2 = (N-1) Var(J_z) / (<J_x^2+J_y^2> - N/2); below one (negative dB)
    certifies entanglement-grade correlations.  A vanishing variance is
    reported with a -inf dB sentinel.
    """
    if var_jz < 0:
        raise ValueError("variance must be non-negative")
    denom = jxjy2 - n_total / 2.0
    if denom <= 0:
        raise ValueError("transverse spin length too short: <Jx^2+Jy^2> must exceed N/2")
    linear = (n_total - 1) * var_jz / denom
    db = 10.0 * math.log10(linear) if linear > 0 else float("-inf")
    return GeneralizedSqueezing(linear=float(linear), db=db)


@dataclass(frozen=True)
class FisherFit:
    """Fisher information extracted from one Hellinger-distance parabola."""

    fisher: float
    stderr: float
    intercept: float
    quartic: bool
    theta1: float | None = None


def fit_fisher(diffs, d2, sigma=None, quartic: bool = False, theta1: float | None = None) -> FisherFit:
    """Fit d^2 = (F/8) x^2 + b, optionally minus (F^2/256 - F/192) x^4.

    ``diffs`` are signed angle differences theta1 - theta2; ``sigma`` are
    per-point uncertainties (unweighted if omitted).  The intercept b soaks
    up the finite-sampling bias of measured, resampled d^2 values, so a
    (0, d^2 > 0) self-comparison point is legitimate input.  F is clamped to
    zero from below; the uncertainty is left untouched by the clamp.
    """
    x = np.asarray(diffs, dtype=float)
    y = np.asarray(d2, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("need at least three (diff, d2) points")
    s = np.ones_like(y) if sigma is None else np.asarray(sigma, dtype=float)

    def resid(p):
        f, b = p
        m = f / 8.0 * x**2 + b
        if quartic:
            m = m - (f**2 / 256.0 - f / 192.0) * x**4
        return (m - y) / s

    p0 = np.array([max(np.max(y), 0.0) * 8.0 / max(np.max(x) ** 2, 1e-6), 0.0])
    res = least_squares(resid, p0, method="lm", max_nfev=10000)
    f, b = res.x
    dof = max(len(y) - 2, 1)
    scale = 2.0 * res.cost / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * scale
        stderr = math.sqrt(cov[0, 0])
    except np.linalg.LinAlgError:
        stderr = float("nan")
    return FisherFit(fisher=max(float(f), 0.0), stderr=stderr, intercept=float(b), quartic=quartic, theta1=theta1)


def aggregate_fisher(fits) -> tuple[float, float]:
    """Weighted mean of per-angle Fisher values with w = (F / dF)^2.

    Entries whose uncertainty is non-finite or non-positive carry no usable
    weight and are skipped.
    """
    fs = np.array([f.fisher for f in fits], dtype=float)
    dfs = np.array([f.stderr for f in fits], dtype=float)
    ok = np.isfinite(dfs) & (dfs > 0)
    if not ok.any():
        raise ValueError("no aggregatable entries")
    fs, dfs = fs[ok], dfs[ok]
    w = (fs / dfs) ** 2
    if w.sum() <= 0:
        raise ValueError("all entries have zero weight")
    fbar = float(np.sum(w * fs) / np.sum(w))
    dfbar = float(np.sqrt(np.sum((w * dfs) ** 2)) / np.sum(w))
    return fbar, dfbar


@dataclass(frozen=True)
class ScalingFit:
    """Fit of F_N = r (N^s / 2 + N) across atom numbers."""

    r: float
    s: float
    r_err: float
    s_err: float
    cov: np.ndarray
    n_values: tuple
    fbar: tuple
    dfbar: tuple | None

    def predict(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return self.r * (n**self.s / 2.0 + n)

    def band(self, n_grid, level: float = 0.68, n_draws: int = 2000, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise confidence band from Gaussian parameter draws."""
        rng = np.random.default_rng(np.random.Philox(key=np.uint64(seed)))
        draws = rng.multivariate_normal([self.r, self.s], self.cov, size=n_draws)
        n_grid = np.asarray(n_grid, dtype=float)
        curves = draws[:, 0:1] * (n_grid[None, :] ** draws[:, 1:2] / 2.0 + n_grid[None, :])
        lo = np.percentile(curves, 50 * (1 - level), axis=0)
        hi = np.percentile(curves, 50 * (1 + level), axis=0)
        return lo, hi


def fit_scaling(n_values, fbar, dfbar=None) -> ScalingFit:
    """Weighted fit of the aggregated Fisher information versus atom number."""
    n = np.asarray(n_values, dtype=float)
    f = np.asarray(fbar, dtype=float)
    if len(n) < 3:
        raise ValueError("need at least three atom numbers")
    weights = None if dfbar is None else 1.0 / np.asarray(dfbar, dtype=float) ** 2

    def model(nn, p):
        return p[0] * (nn ** p[1] / 2.0 + nn)

    params, cov = stats.weighted_least_squares(model, n, f, [1.0, 2.0], weights=weights)
    return ScalingFit(
        r=float(params[0]),
        s=float(params[1]),
        r_err=float(math.sqrt(cov[0, 0])),
        s_err=float(math.sqrt(cov[1, 1])),
        cov=cov,
        n_values=tuple(int(v) for v in n),
        fbar=tuple(float(v) for v in f),
        dfbar=None if dfbar is None else tuple(float(v) for v in dfbar),
    )


@dataclass
class FisherEstimate:
    """Full statistical-distance analysis: per-angle fits, per-N averages, scaling."""

    per_theta: dict = field(default_factory=dict)  # N -> {theta1: FisherFit}
    aggregated: dict = field(default_factory=dict)  # N -> (fbar, dfbar)
    scaling: ScalingFit | None = None
    quartic: bool = True
    exclusions: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "quartic": self.quartic,
            "exclusions": {str(k): list(v) for k, v in self.exclusions.items()},
            "per_theta": {
                str(n): {
                    f"{t:.6g}": {"F": e.fisher, "F_err": e.stderr, "intercept": e.intercept}
                    for t, e in sorted(fits.items())
                }
                for n, fits in sorted(self.per_theta.items())
            },
            "aggregated": {str(n): {"F": v[0], "F_err": v[1]} for n, v in sorted(self.aggregated.items())},
            "scaling": None
            if self.scaling is None
            else {
                "r": self.scaling.r,
                "s": self.scaling.s,
                "r_err": self.scaling.r_err,
                "s_err": self.scaling.s_err,
            },
        }


def _angles_for(n_total: int, angles, exclusions) -> list[float]:
    dropped = exclusions.get(n_total, ()) if exclusions else ()
    return [a for a in angles if all(abs(a - d) > 1e-12 for d in dropped)]


def _run_pipeline(d2_of, sigma_of, n_values, angles, quartic, exclusions, fit_exponent) -> FisherEstimate:
    est = FisherEstimate(quartic=quartic, exclusions=dict(exclusions) if exclusions else {})
    for n_total in sorted(n_values):
        grid = _angles_for(n_total, angles, est.exclusions)
        fits = {}
        for t1 in grid:
            x = np.array([t1 - t2 for t2 in grid])
            y = np.array([d2_of(n_total, t1, t2) for t2 in grid])
            sig = None
            if sigma_of is not None:
                sig = np.array([max(sigma_of(n_total, t1, t2), 1e-12) for t2 in grid])
            fits[t1] = fit_fisher(x, y, sigma=sig, quartic=quartic, theta1=t1)
        est.per_theta[n_total] = fits
        est.aggregated[n_total] = aggregate_fisher(fits.values())
    if fit_exponent and len(est.aggregated) >= 3:
        ns = sorted(est.aggregated)
        est.scaling = fit_scaling(
            ns, [est.aggregated[n][0] for n in ns], [est.aggregated[n][1] for n in ns]
        )
    return est


def fisher_from_distributions(
    dists: Mapping[int, Mapping[float, np.ndarray]],
    angles=SMALL_ROTATION_ANGLES,
    quartic: bool = True,
    exclusions: Mapping[int, tuple] | None = None,
    fit_exponent: bool = True,
) -> FisherEstimate:
    """Run the full Hellinger pipeline on exact per-(N, theta) J_z distributions.

    ``dists[N][theta]`` is a probability vector over J_z at fixed N.  Every
    probe angle serves once as the reference theta1 and is compared against
    the whole grid including itself; per-angle Fisher values are averaged
    with w = (F/dF)^2 and the N-scaling law fitted to the averages.
    """

    def d2_of(n, t1, t2):
        return _hell2(np.asarray(dists[n][t1]), np.asarray(dists[n][t2]))

    return _run_pipeline(d2_of, None, list(dists), angles, quartic, exclusions, fit_exponent)


def resampled_hellinger(p: FixedNDistribution, q: FixedNDistribution, plan: stats.ResamplePlan) -> tuple[float, float]:
    """Monte-Carlo mean and spread of d^2 under multinomial re-draws of both sides.

    The mean is biased upward by sampling noise (strictly positive even for
    p = q); downstream fits absorb that through their free intercept.
    """
    _check_same_n(p, q)
    if p.n_shots is None or q.n_shots is None:
        raise ValueError("resampling needs the original sample sizes")
    ps = stats.multinomial_resample(p.probs, p.n_shots, plan)
    qs = stats.multinomial_resample(q.probs, q.n_shots, stats.ResamplePlan(plan.n_samples, plan.seed + 1))
    d2 = 0.5 * np.sum((np.sqrt(ps) - np.sqrt(qs)) ** 2, axis=1)
    return float(d2.mean()), float(d2.std(ddof=1)) if len(d2) > 1 else 0.0


def fisher_from_shots(
    tables: Mapping[float, ShotTable],
    n_values,
    plan: stats.ResamplePlan | None = None,
    quartic: bool = True,
    exclusions: Mapping[int, tuple] | None = None,
) -> FisherEstimate:
    """Sampled-data pipeline: resampled mean d^2 per angle pair, spread as weight.

    Each unordered pair is resampled once and mirrored, so the input to the
    parabola fit is symmetric in (theta1, theta2) like the exact pipeline.
    """
    plan = plan if plan is not None else stats.ResamplePlan(n_samples=200, seed=0)
    angles = sorted(tables)
    empirical = {(n, t): empirical_distribution(tables[t], n) for n in n_values for t in angles}
    pair: dict[tuple, tuple[float, float]] = {}
    for n in n_values:
        for i, t1 in enumerate(angles):
            for t2 in angles[i:]:
                mean, std = resampled_hellinger(empirical[(n, t1)], empirical[(n, t2)], plan)
                pair[(n, t1, t2)] = pair[(n, t2, t1)] = (mean, std)
    return _run_pipeline(
        lambda n, t1, t2: pair[(n, t1, t2)][0],
        lambda n, t1, t2: pair[(n, t1, t2)][1],
        list(n_values),
        angles,
        quartic,
        exclusions,
        fit_exponent=len(n_values) >= 3,
    )
