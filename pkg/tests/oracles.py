"""Independent reference implementations used only by the tests.

Each function here derives its answer through a different route than the
package (factorial sums instead of eigendecompositions, explicit enumeration
instead of matrix convolution, Bloch-vector algebra instead of state
vectors), so agreement is evidence rather than tautology.
"""

import math
from math import lgamma

import numpy as np
from scipy.special import comb
from scipy.stats import binom, norm, poisson


def wigner_d_factorial(j2: int, m2p: int, m2: int, beta: float) -> float:
    """Rotation matrix element d^j_{m',m}(beta) via the explicit factorial sum.

    Arguments are doubled (2j, 2m', 2m) so half-integers stay exact.
    """
    j = j2 / 2.0
    mp = m2p / 2.0
    m = m2 / 2.0
    pref = 0.5 * (lgamma(j + mp + 1) + lgamma(j - mp + 1) + lgamma(j + m + 1) + lgamma(j - m + 1))
    kmin = max(0, int(round(m - mp)))
    kmax = int(round(min(j + m, j - mp)))
    c = math.cos(beta / 2)
    s = math.sin(beta / 2)
    tot = 0.0
    for k in range(kmin, kmax + 1):
        sign = (-1.0) ** (mp - m + k)
        denom = lgamma(j + m - k + 1) + lgamma(k + 1) + lgamma(j - mp - k + 1) + lgamma(mp - m + k + 1)
        ce = 2 * j + m - mp - 2 * k
        se = mp - m + 2 * k
        term = sign * math.exp(pref - denom)
        if ce != 0:
            term *= c**ce
        if se != 0:
            term *= s**se
        tot += term
    return tot


def kernel_factorial(n_total: int, theta: float) -> np.ndarray:
    """Full |d|^2 transition matrix indexed by n_plus, via factorial sums."""
    n = n_total
    out = np.zeros((n + 1, n + 1))
    for i_in in range(n + 1):
        for i_out in range(n + 1):
            out[i_in, i_out] = wigner_d_factorial(n, 2 * i_out - n, 2 * i_in - n, theta) ** 2
    return out


def arcsine_row(n_total: int) -> np.ndarray:
    """Balanced-coupler output of |n>|n> from the closed-form binomial products."""
    n = n_total // 2
    row = np.zeros(n_total + 1)
    for k in range(n + 1):
        row[2 * k] = comb(2 * k, k, exact=True) * comb(2 * n - 2 * k, n - k, exact=True) * 0.25**n
    return row


def tmsv_weights_direct(xi: float, n_pairs: int) -> tuple[np.ndarray, float]:
    """Geometric pair-number weights up to n_pairs and the exact truncated tail."""
    r = math.tanh(xi) ** 2
    w = r ** np.arange(n_pairs + 1) * (1 - r)
    return w / w.sum(), r ** (n_pairs + 1)


def influx_enumerated(grid: np.ndarray, a: float, axis: int) -> tuple[np.ndarray, float]:
    """Independent Poisson atom gain along one axis by explicit shifting."""
    size = grid.shape[axis]
    out = np.zeros_like(grid)
    lost = 0.0
    pk = poisson.pmf(np.arange(4 * size), a)
    it = np.ndindex(grid.shape)
    for idx in it:
        for k, p in enumerate(pk):
            tgt = list(idx)
            tgt[axis] += k
            if tgt[axis] < size:
                out[tuple(tgt)] += p * grid[idx]
            else:
                lost += p * grid[idx]
    return out, lost


def loss_enumerated(grid: np.ndarray, rate: float, axis: int) -> np.ndarray:
    """Per-atom binomial survival along one axis by explicit enumeration."""
    size = grid.shape[axis]
    out = np.zeros_like(grid)
    for idx in np.ndindex(grid.shape):
        k = idx[axis]
        for m in range(k + 1):
            tgt = list(idx)
            tgt[axis] = m
            out[tuple(tgt)] += binom.pmf(m, k, 1 - rate) * grid[idx]
    return out


def skew_enumerated(grid: np.ndarray, skew: float) -> np.ndarray:
    """Two sequential misassignment coins, one per mode, by outcome enumeration.

    The minus coin moves one count up the minus axis, the plus coin one count
    down the plus axis; both saturate at the grid edge.
    """
    q = math.sqrt(skew) - 1.0
    out = np.zeros_like(grid)
    top = grid.shape[1] - 1
    for (ip, im), mass in np.ndenumerate(grid):
        for hit_m, pm in ((0, 1 - q), (1, q)):
            im2 = min(im + hit_m, top)
            for hit_p, pp in ((0, 1 - q), (1, q)):
                ip2 = max(ip - hit_p, 0)
                out[ip2, im2] += pm * pp * mass
    return out


def blur_column_quadrature(n: int, sigma0: float, c1: float, n_max: int) -> np.ndarray:
    """Gaussian read-out smearing of occupation n via direct cdf differences."""
    s = math.sqrt(sigma0**2 + c1**2 * n)
    edges = np.arange(n_max + 2) - 0.5
    cdf = norm.cdf(edges, loc=n, scale=s)
    cdf[0] = 0.0
    cdf[-1] = 1.0
    return np.diff(cdf)


def boundary_half(x: float) -> float:
    """Closed form of the minimal-variance boundary for j = 1/2."""
    return x**2 / 2.0


def boundary_one(x: float) -> float:
    """Closed form of the minimal-variance boundary for j = 1."""
    return (1.0 - math.sqrt(max(1.0 - x**2, 0.0))) / 2.0


def product_state_moments(bloch: np.ndarray) -> dict:
    """Exact collective moments of a pure product state of qubits.

    ``bloch`` has shape (n_atoms, 3) with unit rows (x_i, y_i, z_i).  Single
    -particle Pauli moments determine everything: squared collective spins
    need only pairwise products, and product parities factorize.
    """
    x, y, z = bloch[:, 0], bloch[:, 1], bloch[:, 2]
    n = len(bloch)
    sx, sy, sz = x.sum(), y.sum(), z.sum()
    jz = 0.5 * sz
    jz2 = 0.25 * (n + sz**2 - np.sum(z**2))
    jxjy2 = 0.25 * (2 * n + sx**2 - np.sum(x**2) + sy**2 - np.sum(y**2))
    return {
        "n_total": n,
        "mean_jz": float(jz),
        "jz2": float(jz2),
        "var_jz": float(jz2 - jz**2),
        "jxjy2": float(jxjy2),
        "parity_x": float(np.prod(x)),
        "parity_y": float(np.prod(y)),
        "parity_z": float(np.prod(z)),
    }


def random_bloch(rng: np.random.Generator, n_states: int, n_atoms: int) -> np.ndarray:
    """Uniformly random unit vectors, shape (n_states, n_atoms, 3)."""
    v = rng.normal(size=(n_states, n_atoms, 3))
    return v / np.linalg.norm(v, axis=2, keepdims=True)
