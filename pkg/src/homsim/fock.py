"""Exact two-mode Fock states, squeezed-vacuum sources, and rotation kernels.

The two side modes are labelled ``+`` and ``-``.  Joint statistics live on an
``(n_max+1) x (n_max+1)`` probability grid indexed ``[n_plus, n_minus]``; the
statistics of a fixed total atom number ``N = n_plus + n_minus`` live on a
ladder indexed by ``Jz = (n_plus - n_minus)/2``.

Amplitudes never leave this module.  A mode coupling (beam-splitter pulse) is
represented by the matrix of squared rotation amplitudes of the collective
spin ``j = N/2``; only those probabilities are observable here, so the axis
phase convention of the pulse is irrelevant and rotations about x and y give
the identical kernel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

DEFAULT_N_MAX = 20
# Untruncated source mass beyond the grid above this level sets a warning flag.
TRUNCATION_WARN_LEVEL = 1e-6

_NORM_ATOL = 1e-12


class CapacityError(ValueError):
    """Requested occupation does not fit on the configured grid."""


class DomainError(ValueError):
    """Argument outside the physically meaningful range."""


@dataclass(frozen=True)
class TwoModeDistribution:
    """Joint probability grid over occupations of the two side modes.

    grid[n_plus, n_minus] is the probability of detecting that pair of
    occupations.  ``tail_mass`` accumulates probability that fell off the
    grid during construction or propagation; the grid itself is always
    renormalized, so the tail is a diagnostic, not missing mass.
    """

    grid: np.ndarray
    n_max: int
    tail_mass: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.shape != (self.n_max + 1, self.n_max + 1):
            raise ValueError(f"grid shape {g.shape} does not match n_max={self.n_max}")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    @property
    def truncation_warning(self) -> bool:
        return self.tail_mass > TRUNCATION_WARN_LEVEL

    def validate(self, atol: float = _NORM_ATOL) -> None:
        if np.any(self.grid < 0):
            raise ValueError("negative probability in grid")
        if abs(self.grid.sum() - 1.0) > atol:
            raise ValueError(f"grid not normalized: sum={self.grid.sum()!r}")

    def total_number_marginal(self) -> np.ndarray:
        """P(N) for N = 0 .. 2*n_max, summing anti-diagonals."""
        out = np.zeros(2 * self.n_max + 1)
        for n_total in range(2 * self.n_max + 1):
            idx = _antidiagonal_indices(n_total, self.n_max)
            out[n_total] = self.grid[idx, n_total - idx].sum()
        return out

    def mode_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.sum(axis=1), self.grid.sum(axis=0)

    def mean_occupation(self) -> tuple[float, float]:
        n = np.arange(self.n_max + 1)
        p_plus, p_minus = self.mode_marginals()
        return float(n @ p_plus), float(n @ p_minus)

    def fixed_n(self, n_total: int) -> "FixedNDistribution":
        """Renormalized distribution on the anti-diagonal n_plus + n_minus = n_total."""
        if not 0 <= n_total <= 2 * self.n_max:
            raise CapacityError(f"N={n_total} outside grid")
        idx = _antidiagonal_indices(n_total, self.n_max)
        probs = np.zeros(n_total + 1)
        probs[idx] = self.grid[idx, n_total - idx]
        s = probs.sum()
        if s <= 0:
            raise ValueError(f"no probability mass at N={n_total}")
        return FixedNDistribution(n_total=n_total, probs=probs / s)


def _antidiagonal_indices(n_total: int, n_max: int) -> np.ndarray:
    """n_plus values that keep both occupations on an n_max grid."""
    return np.arange(max(0, n_total - n_max), min(n_total, n_max) + 1)


@dataclass(frozen=True)
class FixedNDistribution:
    """Probabilities over Jz = (n_plus - n_minus)/2 at fixed total atom number.

    ``probs[k]`` belongs to Jz = k - N/2, i.e. to n_plus = k.  Odd totals are
    representable (noise produces them) but carry half-integer Jz; ideal
    pair-created sources only ever populate even N.  ``n_shots`` preserves the
    sample size when the distribution came from counting data.
    """

    n_total: int
    probs: np.ndarray
    n_shots: int | None = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.n_total + 1,):
            raise ValueError(f"probs length {p.shape} does not match N={self.n_total}")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def jz_values(self) -> np.ndarray:
        return np.arange(self.n_total + 1) - self.n_total / 2.0

    def validate(self, atol: float = _NORM_ATOL) -> None:
        if np.any(self.probs < 0):
            raise ValueError("negative probability")
        if abs(self.probs.sum() - 1.0) > atol:
            raise ValueError(f"not normalized: sum={self.probs.sum()!r}")


@dataclass(frozen=True)
class SqueezedSource:
    """Pair-creating source; xi is the dimensionless squeezing parameter.

    The pair-number distribution decays geometrically with ratio tanh(xi)^2.
    ``xi_jitter`` adds an optional shot-to-shot Gaussian spread of xi, the
    minimal one-parameter departure from a plain geometric decay (off by
    default).  The coupling-rate and pulse-time product that would realize a
    given xi in hardware is deliberately not modelled here.
    """

    xi: float
    xi_jitter: float = 0.0

    def __post_init__(self):
        if self.xi < 0:
            raise DomainError("xi must be non-negative")
        if self.xi_jitter < 0:
            raise DomainError("xi_jitter must be non-negative")

    def mean_pairs(self) -> float:
        return float(np.sinh(self.xi) ** 2)


@dataclass(frozen=True)
class CollectiveMoments:
    mean_jz: float
    jz2: float
    var_jz: float
    parity: float


def twin_fock(n: int, n_max: int = DEFAULT_N_MAX) -> TwoModeDistribution:
    """Delta distribution at n atoms in each mode."""
    if n < 0:
        raise DomainError("pair count must be non-negative")
    if n > n_max:
        raise CapacityError(f"n={n} exceeds n_max={n_max}")
    grid = np.zeros((n_max + 1, n_max + 1))
    grid[n, n] = 1.0
    return TwoModeDistribution(grid=grid, n_max=n_max)


def tmsv_distribution(
    source: SqueezedSource, n_max: int = DEFAULT_N_MAX, quad_nodes: int = 32
) -> TwoModeDistribution:
    """Two-mode squeezed vacuum truncated to the grid diagonal.

    p(n, n) is proportional to tanh(xi)^(2n)/cosh(xi)^2 and renormalized over
    n <= n_max; the discarded geometric tail is reported as ``tail_mass``.
    With jitter the result is a Gauss-Hermite average (>= 16 nodes) over xi
    values, clipped at xi >= 0.
    """
    if source.xi_jitter > 0:
        nodes, weights = np.polynomial.hermite.hermgauss(max(16, quad_nodes))
        weights = weights / np.sqrt(np.pi)
        xis = np.clip(source.xi + np.sqrt(2.0) * source.xi_jitter * nodes, 0.0, None)
    else:
        xis = np.array([source.xi])
        weights = np.array([1.0])

    diag = np.zeros(n_max + 1)
    tail = 0.0
    n = np.arange(n_max + 1)
    for xi, w in zip(xis, weights):
        ratio = np.tanh(xi) ** 2
        p = ratio**n
        p /= p.sum()
        diag += w * p
        tail += w * ratio ** (n_max + 1)
    diag /= diag.sum()  # quadrature weights sum to 1 only asymptotically

    grid = np.zeros((n_max + 1, n_max + 1))
    grid[n, n] = diag
    return TwoModeDistribution(grid=grid, n_max=n_max, tail_mass=float(tail))


@lru_cache(maxsize=4096)
def _kernel(n_total: int, theta: float) -> np.ndarray:
    """|<Jz_out| exp(-i theta Jx) |Jz_in>|^2 for collective spin j = N/2.

    Jx is real symmetric tridiagonal in the Jz basis, so the propagator comes
    from one eigen-decomposition; the matrix of squared magnitudes is
    symmetric and doubly stochastic.  Valid for odd N as well (half-integer
    j), which the noise pipeline needs.
    """
    if n_total == 0:
        return np.ones((1, 1))
    j = n_total / 2.0
    m = np.arange(n_total + 1) - j
    off = 0.5 * np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
    w, v = eigh_tridiagonal(np.zeros(n_total + 1), off)
    u = (v * np.exp(-1j * theta * w)) @ v.T
    k = np.abs(u) ** 2
    np.clip(k, 0.0, 1.0, out=k)
    k.flags.writeable = False
    return k


def rotation_kernel(n_total: int, theta: float) -> np.ndarray:
    """Row-stochastic (N+1)x(N+1) matrix p(Jz_out | Jz_in) for a theta pulse.

    Row/column index k corresponds to Jz = k - N/2.  The Jz_in = 0 row at
    theta = pi/2 is the discrete arcsine distribution of perfectly
    interfering twin input beams; see :func:`holland_burnett`.
    """
    if n_total % 2 != 0:
        raise DomainError("rotation_kernel requires an even total atom number")
    if n_total < 0 or not 0.0 <= theta <= np.pi:
        raise DomainError("need n_total >= 0 and theta in [0, pi]")
    return _kernel(n_total, float(theta))


def twin_fock_output(n_total: int, theta: float) -> FixedNDistribution:
    """Exact output distribution of a twin input after a theta pulse (Jz_in = 0)."""
    row = rotation_kernel(n_total, theta)[n_total // 2]
    return FixedNDistribution(n_total=n_total, probs=row / row.sum())


def holland_burnett(n_total: int) -> FixedNDistribution:
    """Discrete arcsine distribution: twin beams after a balanced coupling.

    Only even output differences are populated; the closed form uses central
    binomial products and is exact in double precision.
    """
    if n_total % 2 != 0:
        raise DomainError("holland_burnett requires an even total atom number")
    n = n_total // 2
    probs = np.zeros(n_total + 1)
    scale = 0.25**n
    for k in range(n + 1):
        probs[2 * k] = math.comb(2 * k, k) * math.comb(2 * n - 2 * k, n - k) * scale
    return FixedNDistribution(n_total=n_total, probs=probs)


def collective_moments(dist: FixedNDistribution) -> CollectiveMoments:
    """Mean, second moment, variance of Jz, and the occupation parity.

    The parity of a fixed-N outcome is (-1)^(N/2 - Jz) = (-1)^(N - n_plus),
    an integer power for odd totals too.
    """
    p = dist.probs
    jz = dist.jz_values
    mean = float(p @ jz)
    jz2 = float(p @ jz**2)
    signs = np.where((dist.n_total - np.arange(dist.n_total + 1)) % 2 == 0, 1.0, -1.0)
    return CollectiveMoments(
        mean_jz=mean,
        jz2=jz2,
        var_jz=jz2 - mean**2,
        parity=float(p @ signs),
    )


def mixture_over_pairs(weights: np.ndarray, n_max: int = DEFAULT_N_MAX) -> TwoModeDistribution:
    """Diagonal mixture of twin states with the given pair-number weights."""
    w = np.asarray(weights, dtype=float)
    if len(w) > n_max + 1:
        raise CapacityError("more weights than grid capacity")
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    grid = np.zeros((n_max + 1, n_max + 1))
    idx = np.arange(len(w))
    grid[idx, idx] = w / w.sum()
    return TwoModeDistribution(grid=grid, n_max=n_max)


def warn_if_truncated(dist: TwoModeDistribution) -> TwoModeDistribution:
    """Emit a warning when the accumulated off-grid mass is non-negligible."""
    if dist.truncation_warning:
        warnings.warn(
            f"off-grid probability mass {dist.tail_mass:.3g} exceeds "
            f"{TRUNCATION_WARN_LEVEL:g}; consider a larger n_max",
            stacklevel=2,
        )
    return dist
