"""Monte Carlo spectra for the Gaussian orthogonal and symplectic ensembles.

Sampling conventions match the kernels module:

* beta = 1: ``2N`` levels, joint law ``|Delta| exp(-sum x**2 / 2)``, edge ``sqrt(4N)``;
* beta = 4: ``N`` Kramers-distinct levels, ``|Delta|**4 exp(-2 sum x**2)``, edge ``sqrt(2N)``.

Random numbers come from a Philox counter generator keyed by
``SeedSequence([seed, stream])``; normal and chi variates are produced by
inverse CDF so results do not depend on sampling-algorithm details.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numba
import numpy as np
from scipy import special

LEVEL_SCALE = {1: 1.0, 4: 0.5}  # target edge / sqrt(2 beta n_levels)


class ConvergenceError(ArithmeticError):
    """Tridiagonal QL iteration did not converge."""


# ---------------------------------------------------------------------------
# random variates


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    """Open-interval uniforms ``(k + 1/2) / 2**53``."""
    k = gen.integers(0, 2**53, size=shape, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / 2.0**53


def normals(gen: np.random.Generator, shape) -> np.ndarray:
    return special.ndtri(uniforms(gen, shape))


def chi_from_uniform(u: np.ndarray, dof: np.ndarray) -> np.ndarray:
    """Inverse-CDF chi variates with ``dof`` degrees of freedom."""
    return np.sqrt(2.0 * special.gammaincinv(0.5 * dof, u))


# ---------------------------------------------------------------------------
# symmetric tridiagonal eigensolver (implicit QL, Wilkinson shift)


@numba.njit(cache=True)
def _tql(d, e, max_iter):
    n = d.shape[0]
    eps = 2.220446049250313e-16
    anorm = 0.0
    for i in range(n):
        anorm = max(anorm, abs(d[i]) + abs(e[i]))
    # absolute floor so that negligible couplings deflate even when d ~ 0
    floor = eps * eps * anorm + 1e-300
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd or abs(e[m]) <= floor:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                return l
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            restart = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    restart = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if restart:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


@numba.njit(cache=True)
def _tql_batch(D, E, max_iter):
    n_samples, n = D.shape
    out = np.empty((n_samples, n))
    for k in range(n_samples):
        d = D[k].copy()
        e = np.zeros(n)
        e[: n - 1] = E[k]
        status = _tql(d, e, max_iter)
        if status >= 0:
            out[k, 0] = np.nan
            return out, k
        out[k] = np.sort(d)
    return out, -1


def tridiag_eigenvalues(diag: Sequence[float], offdiag: Sequence[float], max_iter: int = 50) -> np.ndarray:
    """All eigenvalues of a symmetric tridiagonal matrix, ascending."""
    d = np.array(diag, dtype=np.float64)
    o = np.array(offdiag, dtype=np.float64)
    if o.shape[0] != max(d.shape[0] - 1, 0):
        raise ValueError("offdiag must have length len(diag) - 1")
    if d.shape[0] == 0:
        return d
    vals, bad = _tql_batch(d[None, :], o[None, :], max_iter)
    if bad >= 0:
        raise ConvergenceError(f"QL iteration exceeded {max_iter} sweeps")
    return vals[0]


def tridiag_eigenvalues_batch(D: np.ndarray, E: np.ndarray, max_iter: int = 50) -> np.ndarray:
    vals, bad = _tql_batch(np.ascontiguousarray(D, dtype=np.float64), np.ascontiguousarray(E, dtype=np.float64), max_iter)
    if bad >= 0:
        raise ConvergenceError(f"QL iteration exceeded {max_iter} sweeps on sample {bad}")
    return vals


def sturm_count(diag: np.ndarray, offdiag: np.ndarray, lam: float) -> int:
    """Number of eigenvalues strictly below ``lam``."""
    count = 0
    q = 1.0
    tiny = 1e-150
    for i, di in enumerate(diag):
        q = di - lam - (offdiag[i - 1] ** 2 / q if i else 0.0)
        if abs(q) < tiny:
            q = tiny if q > 0 else -tiny
        if q < 0:
            count += 1
    return count


def sturm_bisection(diag: Sequence[float], offdiag: Sequence[float], tol: float = 1e-14) -> np.ndarray:
    """Eigenvalues by bisection on the Sturm count (independent oracle)."""
    d = np.asarray(diag, dtype=float)
    o = np.asarray(offdiag, dtype=float)
    n = len(d)
    rad = np.zeros(n)
    rad[:-1] += np.abs(o)
    rad[1:] += np.abs(o)
    lo0, hi0 = float((d - rad).min()), float((d + rad).max())
    width = max(hi0 - lo0, 1.0)
    out = np.empty(n)
    for k in range(n):
        lo, hi = lo0 - 1e-12 * width, hi0 + 1e-12 * width
        while hi - lo > tol * width:
            mid = 0.5 * (lo + hi)
            if sturm_count(d, o, mid) > k:
                hi = mid
            else:
                lo = mid
        out[k] = 0.5 * (lo + hi)
    return out


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True, eq=False)
class SpectrumSample:
    beta: int
    dim: int
    eigenvalues: np.ndarray

    @property
    def n_levels(self) -> int:
        return len(self.eigenvalues)


def n_levels(beta: int, N: int) -> int:
    return 2 * N if beta == 1 else N


def _check(beta: int, N: int) -> None:
    if beta not in (1, 4):
        raise ValueError(f"beta must be 1 or 4, got {beta!r}")
    if N < 1:
        raise ValueError("N must be >= 1")


def _tridiagonal_draws(beta: int, N: int, count: int, gen: np.random.Generator) -> np.ndarray:
    n = n_levels(beta, N)
    u = uniforms(gen, (count, 2 * n - 1))
    diag = special.ndtri(u[:, :n]) * math.sqrt(2.0)
    dof = beta * np.arange(n - 1, 0, -1, dtype=float)
    off = chi_from_uniform(u[:, n:], dof[None, :])
    scale = LEVEL_SCALE[beta] / math.sqrt(2.0)
    if n == 1:
        return np.sort(diag * scale, axis=1)
    return tridiag_eigenvalues_batch(diag * scale, off * scale)


def _dense_draws(beta: int, N: int, count: int, gen: np.random.Generator) -> np.ndarray:
    out = np.empty((count, n_levels(beta, N)))
    if beta == 1:
        n = 2 * N
        iu = np.triu_indices(n, 1)
        for k in range(count):
            z = normals(gen, n + len(iu[0]))
            h = np.diag(z[:n])
            h[iu] = z[n:] * math.sqrt(0.5)
            h = h + np.triu(h, 1).T
            out[k] = np.linalg.eigvalsh(h)
        return out
    n = N
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    for k in range(count):
        z = normals(gen, n + 4 * m)
        a = np.diag(z[:n] * 0.5).astype(complex)
        s = math.sqrt(1.0 / 8.0)
        a[iu] = (z[n : n + m] + 1j * z[n + m : n + 2 * m]) * s
        a = a + np.triu(a, 1).conj().T
        b = np.zeros((n, n), dtype=complex)
        b[iu] = (z[n + 2 * m : n + 3 * m] + 1j * z[n + 3 * m :]) * s
        b = b - b.T
        h = np.block([[a, b], [-b.conj(), a.conj()]])
        ev = np.linalg.eigvalsh(h)
        out[k] = 0.5 * (ev[0::2] + ev[1::2])
    return out


def sample_spectra(beta: int, N: int, n_samples: int, seed: int, method: str = "tridiagonal", stream: int = 0) -> np.ndarray:
    """``n_samples`` sorted spectra as rows; prefix-stable in ``n_samples``."""
    _check(beta, N)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    gen = generator(seed, stream)
    if method == "tridiagonal":
        return _tridiagonal_draws(beta, N, n_samples, gen)
    if method == "dense":
        return _dense_draws(beta, N, n_samples, gen)
    raise ValueError("method must be 'dense' or 'tridiagonal'")


def sample_spectrum(beta: int, N: int, seed: int, method: str = "tridiagonal", stream: int = 0) -> SpectrumSample:
    ev = sample_spectra(beta, N, 1, seed, method, stream)[0]
    return SpectrumSample(beta, 2 * N, ev)


# ---------------------------------------------------------------------------
# histograms and comparison


@dataclass(frozen=True, eq=False)
class HistogramEstimate:
    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    n_samples: int
    kind: str = "density"

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def empty_bins(self) -> np.ndarray:
        return self.counts == 0

    def total_mass(self) -> float:
        return float((self.density * self.widths).sum())

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "count", "density", "stderr"])
            for lo, hi, c, dn, se in zip(self.edges[:-1], self.edges[1:], self.counts, self.density, self.stderr):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(dn)), repr(float(se))])


def _edges(bins, data_range) -> np.ndarray:
    if np.ndim(bins) == 0:
        lo, hi = data_range
        return np.linspace(lo, hi, int(bins) + 1)
    return np.asarray(bins, dtype=float)


def _estimate(counts: np.ndarray, edges: np.ndarray, n_samples: int, kind: str) -> HistogramEstimate:
    norm = n_samples * np.diff(edges)
    return HistogramEstimate(edges, counts, counts / norm, np.sqrt(counts) / norm, n_samples, kind)


def density_histogram(samples: np.ndarray, bins=20, data_range: tuple[float, float] | None = None) -> HistogramEstimate:
    """Level density in levels per unit length per sample."""
    samples = np.atleast_2d(samples)
    if data_range is None:
        data_range = (float(samples.min()), float(samples.max()))
    edges = _edges(bins, data_range)
    flat = samples.ravel()
    counts = np.histogram(flat, bins=edges)[0]
    # np.histogram includes the right edge in the last bin; match that convention
    return _estimate(counts, edges, samples.shape[0], "density")


def pair_histogram(samples: np.ndarray, bins=20, window: tuple[float, float] = (-1.0, 1.0), s_max: float = 2.0) -> HistogramEstimate:
    """Histogram of ``s = x_j - x_i > 0`` over ordered pairs with ``x_i`` in ``window``.

    Its analytic counterpart per unit ``s`` is
    ``int_window dx  R2(x, x + s)`` averaged over the bin.
    """
    samples = np.atleast_2d(samples)
    edges = _edges(bins, (0.0, s_max))
    diffs = samples[:, None, :] - samples[:, :, None]  # [k, i, j] = x_j - x_i
    left = samples[:, :, None]
    mask = (diffs > 0) & (left >= window[0]) & (left < window[1])
    counts = np.histogram(diffs[mask], bins=edges)[0]
    return _estimate(counts, edges, samples.shape[0], "pair")


@dataclass(frozen=True)
class AnalyticGrid:
    edges: np.ndarray
    values: np.ndarray


def analytic_density_grid(rho: Callable[[float], float], edges: np.ndarray, order: int = 8) -> AnalyticGrid:
    """Bin averages of ``rho`` by Gauss-Legendre on each bin."""
    t, w = np.polynomial.legendre.leggauss(order)
    vals = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        pts = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        vals.append(0.5 * float(sum(wi * rho(p) for wi, p in zip(w, pts))))
    return AnalyticGrid(np.asarray(edges, dtype=float), np.array(vals))


def analytic_pair_grid(r2: Callable[[float, float], float], edges: np.ndarray, window: tuple[float, float],
                       x_order: int = 16, s_order: int = 4) -> AnalyticGrid:
    """Bin averages (in s) of ``int_window R2(x, x + s) dx``."""
    tx, wx = np.polynomial.legendre.leggauss(x_order)
    ts, ws = np.polynomial.legendre.leggauss(s_order)
    a, b = window
    xs = 0.5 * (b - a) * tx + 0.5 * (b + a)
    xw = 0.5 * (b - a) * wx
    vals = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        ss = 0.5 * (hi - lo) * ts + 0.5 * (hi + lo)
        acc = 0.0
        for s, sw in zip(ss, ws):
            acc += 0.5 * sw * sum(w * r2(x, x + s) for x, w in zip(xs, xw))
        vals.append(acc)
    return AnalyticGrid(np.asarray(edges, dtype=float), np.array(vals))


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    z: np.ndarray
    n_outside: int
    chi2: float
    max_allowed: int
    flagged_bins: tuple
    empty_bins: tuple

    @property
    def passed(self) -> bool:
        return self.n_outside <= self.max_allowed

    def to_json(self) -> dict:
        return {
            "z": [float(v) for v in self.z],
            "n_outside_3sigma": self.n_outside,
            "max_allowed": self.max_allowed,
            "chi2": self.chi2,
            "flagged_bins": list(self.flagged_bins),
            "empty_bins": list(self.empty_bins),
            "pass": self.passed,
        }


def compare(estimate: HistogramEstimate, analytic: AnalyticGrid, z_limit: float = 3.0) -> ComparisonReport:
    """Per-bin z-scores with the 1-bin-in-20 rule."""
    if len(analytic.edges) != len(estimate.edges) or not np.allclose(analytic.edges, estimate.edges, rtol=0, atol=1e-12):
        raise ValueError("analytic grid does not align with histogram bins")
    diff = estimate.density - analytic.values
    # an empty bin has no Poisson error estimate; use the one-count level instead
    norm = estimate.n_samples * estimate.widths
    err = np.maximum(estimate.stderr, 1.0 / norm)
    z = diff / err
    flagged = tuple(int(i) for i in np.nonzero(np.abs(z) > z_limit)[0])
    finite = np.isfinite(z)
    chi2 = float((z[finite] ** 2).sum())
    allowed = len(z) // 20
    empty = tuple(int(i) for i in np.nonzero(estimate.counts == 0)[0])
    return ComparisonReport(z, len(flagged), chi2, allowed, flagged, empty)


def spacing_histogram(samples: np.ndarray, bins=20, s_max: float = 5.0) -> HistogramEstimate:
    """Nearest-neighbour spacings of consecutive sorted levels."""
    samples = np.atleast_2d(samples)
    s = np.diff(samples, axis=1).ravel()
    edges = _edges(bins, (0.0, s_max))
    counts = np.histogram(s, bins=edges)[0]
    return _estimate(counts, edges, samples.shape[0], "spacing")
