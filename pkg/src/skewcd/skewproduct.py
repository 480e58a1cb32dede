"""Weights, quadrature and the skew-symmetric bilinear forms for beta = 1, 4.

Conventions (fixed once here, used everywhere):

* ``V(x) = sum_l u_l x**l / l`` for ``l = 1 .. d+1``.
* beta = 4: ``s4(p, q) = int (p q' - p' q) exp(-2 V) dx``.
* beta = 1: ``s1(p, q) = 1/2 iint p(x) q(y) sgn(x - y) exp(-V(x) - V(y)) dx dy``.

Both forms are evaluated from tabulated monomial moments.  Full-line
moments come from a trapezoid rule on a truncated uniform grid (spectrally
accurate for entire, super-exponentially decaying integrands); the beta = 1
double integral is reduced to a single integral over cumulative weight
integrals ``C_j(y) = int_{-inf}^y t**j exp(-V(t)) dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr, mpq

from .polybasis import DEFAULT_PRECISION, Polynomial, real, working_precision


class PotentialError(ValueError):
    """Potential violates the convergence requirements."""


class QuadratureError(RuntimeError):
    """Quadrature refinement failed to converge."""


def _to_mpq(value) -> mpq:
    if isinstance(value, mpq):
        return value
    if isinstance(value, str):
        return mpq(Fraction(value.strip()))
    if isinstance(value, float):
        return mpq(Fraction(value))
    return mpq(value)


def _mpq_to_json(q: mpq):
    f = float(q)
    if mpq(Fraction(f)) == q:
        return int(f) if f.is_integer() else f
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Potential:
    """Polynomial potential ``V(x) = sum_{l=1}^{d+1} u_l x**l / l``.

    ``u`` holds ``u_1 .. u_{d+1}`` as exact rationals.  The leading degree
    must be even with a positive coefficient so that ``exp(-V)`` is
    integrable against every polynomial.
    """

    u: tuple

    def __post_init__(self) -> None:
        u = tuple(_to_mpq(v) for v in self.u)
        object.__setattr__(self, "u", u)
        if len(u) < 2:
            raise PotentialError("potential needs at least u_1 and u_2 (degree >= 2)")
        if u[-1] == 0:
            raise PotentialError("leading deformation parameter u_{d+1} must be nonzero")
        if len(u) % 2:
            raise PotentialError(f"potential degree {len(u)} is odd; exp(-V) is not integrable")
        if u[-1] < 0:
            raise PotentialError("leading deformation parameter must be positive")

    @classmethod
    def gaussian(cls, u2=1) -> "Potential":
        return cls((0, u2))

    @classmethod
    def from_json(cls, data) -> "Potential":
        if isinstance(data, dict):
            data = data.get("u")
        if not isinstance(data, list):
            raise PotentialError("potential must be a JSON object {'u': [...]}")
        return cls(tuple(data))

    def to_json(self) -> dict:
        return {"u": [_mpq_to_json(q) for q in self.u]}

    @property
    def degree(self) -> int:
        """Degree ``d + 1`` of V."""
        return len(self.u)

    @property
    def d(self) -> int:
        return len(self.u) - 1

    @property
    def is_even(self) -> bool:
        return all(self.u[l - 1] == 0 for l in range(1, self.degree + 1, 2))

    @property
    def is_quadratic(self) -> bool:
        return self.degree == 2

    def coefficients(self, precision: int) -> list[mpfr]:
        """Monomial coefficients of V (index = power)."""
        with working_precision(precision):
            return [real(0, precision)] + [mpfr(self.u[l - 1]) / l for l in range(1, self.degree + 1)]

    def derivative_poly(self, precision: int = DEFAULT_PRECISION) -> Polynomial:
        """``V'(x) = sum_l u_l x**(l-1)``."""
        with working_precision(precision):
            return Polynomial(tuple(mpfr(v) for v in self.u), precision)

    def value(self, x, precision: int = DEFAULT_PRECISION) -> mpfr:
        with working_precision(precision):
            xv = x if isinstance(x, mpfr) else real(x, precision)
            acc = real(0, precision)
            for l in range(self.degree, 0, -1):
                acc = (acc + mpfr(self.u[l - 1]) / l) * xv
            return acc

    def __call__(self, x: float) -> float:
        return float(sum(float(self.u[l - 1]) / l * x**l for l in range(1, self.degree + 1)))

    def float_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for l in range(self.degree, 0, -1):
            out = (out + float(self.u[l - 1]) / l) * x
        return out


def weight_eval(V: Potential, x: float) -> float:
    """``exp(-V(x))``."""
    return float(gmpy2.exp(-V.value(x, 64)))


# ---------------------------------------------------------------------------
# Gauss-Legendre nodes at extended precision (panel rule for cumulative integrals)


@lru_cache(maxsize=None)
def gauss_legendre(q: int, precision: int) -> tuple[tuple[mpfr, ...], tuple[mpfr, ...]]:
    """Nodes and weights of the q-point Gauss-Legendre rule on [-1, 1]."""
    seeds, _ = np.polynomial.legendre.leggauss(q)
    nodes, weights = [], []
    with working_precision(precision + 20):
        eps = mpfr(2) ** (-(precision + 10))
        for s in seeds:
            x = mpfr(float(s))
            for _ in range(100):
                p0, p1 = mpfr(1), x
                for k in range(2, q + 1):
                    p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
                dp = q * (x * p1 - p0) / (x * x - 1)
                step = p1 / dp
                x -= step
                if abs(step) < eps:
                    break
            p0, p1 = mpfr(1), x
            for k in range(2, q + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = q * (x * p1 - p0) / (x * x - 1)
            nodes.append(x)
            weights.append(2 / ((1 - x * x) * dp * dp))
    with working_precision(precision):
        return tuple(+x for x in nodes), tuple(+w for w in weights)


# ---------------------------------------------------------------------------
# Full-line quadrature


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Trapezoid rule for ``int f(x) exp(-power * V(x)) dx``.

    ``weights`` already include the weight function, so
    ``sum(weights * f(nodes))`` approximates the weighted integral.
    """

    nodes: np.ndarray
    weights: np.ndarray
    step: mpfr
    power: int
    target_exactness: int
    precision: int
    moments: tuple = field(repr=False)

    def integrate(self, values: np.ndarray) -> mpfr:
        with working_precision(self.precision):
            return (self.weights * values).sum()


def _support_interval(V: Potential, power: int, max_degree: int, precision: int) -> tuple[float, float]:
    """Interval outside which ``|x|**max_degree exp(-power V)`` is negligible."""
    drop = (precision + 40) * math.log(2.0)

    def logf(x):
        return max_degree * np.log1p(np.abs(x)) - power * V.float_values(x)

    reach = 1.0
    while logf(np.array([reach]))[0] > -drop or logf(np.array([-reach]))[0] > -drop:
        reach *= 1.5
        if reach > 1e6:
            raise QuadratureError("could not bound the support of the weight")
    grid = np.linspace(-reach, reach, 200001)
    vals = logf(grid)
    peak = vals.max()
    keep = np.nonzero(vals > peak - drop)[0]
    lo, hi = grid[keep[0]], grid[keep[-1]]
    return math.floor(lo * 8) / 8 - 0.125, math.ceil(hi * 8) / 8 + 0.125


def _power_sums(nodes: np.ndarray, weights: np.ndarray, kmax: int) -> list[mpfr]:
    out = []
    pw = weights.copy()
    for _ in range(kmax + 1):
        out.append(pw.sum())
        pw = pw * nodes
    return out


def build_quadrature(
    V: Potential,
    power: int,
    max_degree: int,
    precision: int = DEFAULT_PRECISION,
    max_refinements: int = 12,
) -> QuadratureRule:
    """Self-refining trapezoid rule for the weight ``exp(-power V)``.

    The grid spacing is halved until every moment up to ``max_degree``
    agrees between two successive grids to ``2**-(precision - 24)`` of the
    corresponding absolute moment.
    """
    lo, hi = _support_interval(V, power, max_degree, precision)
    n0 = max(64, 4 * (max_degree // 2 + V.d + 4))
    with working_precision(precision):
        a, b = real(lo, precision), real(hi, precision)
        h = (b - a) / n0
        nodes = np.array([a + i * h for i in range(n0 + 1)], dtype=object)

        def weigh(xs):
            return np.array([h * gmpy2.exp(-power * V.value(x, precision)) for x in xs], dtype=object)

        weights = weigh(nodes)
        moments = _power_sums(nodes, weights, max_degree)
        absolute = _power_sums(np.abs(nodes), weights, max_degree)
        tol = mpfr(2) ** (-(precision - 24))
        for _ in range(max_refinements):
            mids = nodes[:-1] + h / 2
            h = h / 2
            mid_w = weigh(mids)
            new_moments = [m / 2 + s for m, s in zip(moments, _power_sums(mids, mid_w, max_degree))]
            new_abs = [m / 2 + s for m, s in zip(absolute, _power_sums(np.abs(mids), mid_w, max_degree))]
            merged = np.empty(len(nodes) + len(mids), dtype=object)
            merged[0::2] = nodes
            merged[1::2] = mids
            nodes = merged
            weights = np.array([w / 2 for w in weights], dtype=object)
            merged_w = np.empty(len(nodes), dtype=object)
            merged_w[0::2] = weights
            merged_w[1::2] = mid_w
            weights = merged_w
            worst_k, worst = 0, mpfr(0)
            for k, (m0, m1, ab) in enumerate(zip(moments, new_moments, new_abs)):
                err = abs(m1 - m0) / ab
                if err > worst:
                    worst_k, worst = k, err
            moments, absolute = new_moments, new_abs
            if worst <= tol:
                if V.is_even:
                    # symmetric grid: odd moments vanish up to rounding
                    moments = [m if k % 2 == 0 else mpfr(0) for k, m in enumerate(moments)]
                return QuadratureRule(nodes, weights, h, power, max_degree, precision, tuple(moments))
        raise QuadratureError(
            f"moment x^{worst_k} did not converge: relative change {float(worst):.3e} after "
            f"{max_refinements} refinements"
        )


# ---------------------------------------------------------------------------
# Cumulative integrals of x^j exp(-V)


class WeightIntegrals:
    """Moments and cumulative integrals of ``x**j exp(-V)`` for ``j <= jmax``.

    ``cumulative(x)`` returns ``[C_0(x), ..., C_jmax(x)]`` with
    ``C_j(x) = int_{-inf}^x t**j exp(-V(t)) dt``.  Quadratic V uses the
    closed-form error-function base plus the integration-by-parts
    recurrence; other potentials use Gauss-Legendre panels between grid
    nodes.
    """

    panel_order = 20

    def __init__(self, V: Potential, jmax: int, precision: int = DEFAULT_PRECISION, rule_degree: int | None = None):
        self.potential = V
        self.jmax = jmax
        self.precision = precision
        self.rule = build_quadrature(V, 1, max(rule_degree or 0, 2 * jmax + V.d), precision)
        self.moments = self.rule.moments[: jmax + 1]
        with working_precision(precision):
            self._ucoef = [mpfr(v) for v in V.u]
            if V.is_quadratic:
                self.node_table = np.array([self._closed_form(x) for x in self.rule.nodes], dtype=object)
            else:
                self.node_table = self._panel_table()

    # -- closed form for quadratic V
    def _closed_form(self, x: mpfr) -> list[mpfr]:
        u1, u2 = self._ucoef
        shift = u1 / u2
        w = gmpy2.exp(-(u1 * x + u2 * x * x / 2))
        base = gmpy2.exp(u1 * u1 / (2 * u2)) * gmpy2.sqrt(gmpy2.const_pi() / (2 * u2))
        c = [base * gmpy2.erfc(-(x + shift) * gmpy2.sqrt(u2 / 2))]
        # u2 C_{m+1} = m C_{m-1} - u1 C_m - x^m w
        xm = mpfr(1)
        for m in range(0, self.jmax):
            prev = m * c[m - 1] if m else mpfr(0)
            c.append((prev - u1 * c[m] - xm * w) / u2)
            xm *= x
        return c

    def _panel_increments(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """``int_left^right t**j exp(-V)`` for each interval, shape (intervals, jmax+1)."""
        gx, gw = gauss_legendre(self.panel_order, self.precision)
        half = (right - left) / 2
        mid = (right + left) / 2
        pts = np.array([[m + hh * t for t in gx] for m, hh in zip(mid, half)], dtype=object)
        wts = np.array(
            [[hh * wt * gmpy2.exp(-self.potential.value(p, self.precision)) for p, wt in zip(row, gw)]
             for row, hh in zip(pts, half)],
            dtype=object,
        )
        out = np.empty((len(left), self.jmax + 1), dtype=object)
        for j in range(self.jmax + 1):
            out[:, j] = wts.sum(axis=1)
            wts = wts * pts
        return out

    def _panel_table(self) -> np.ndarray:
        nodes = self.rule.nodes
        inc = self._panel_increments(nodes[:-1], nodes[1:])
        table = np.empty((len(nodes), self.jmax + 1), dtype=object)
        table[0, :] = mpfr(0)
        for i in range(1, len(nodes)):
            table[i, :] = table[i - 1, :] + inc[i - 1, :]
        return table

    def cumulative(self, x) -> np.ndarray:
        with working_precision(self.precision):
            xv = x if isinstance(x, mpfr) else real(x, self.precision)
            nodes = self.rule.nodes
            if self.potential.is_quadratic:
                return np.array(self._closed_form(xv), dtype=object)
            if xv <= nodes[0]:
                return np.array([mpfr(0)] * (self.jmax + 1), dtype=object)
            if xv >= nodes[-1]:
                return np.array(list(self.moments), dtype=object)
            i = int((xv - nodes[0]) / self.rule.step)
            i = min(max(i, 0), len(nodes) - 2)
            while nodes[i] > xv:
                i -= 1
            while nodes[i + 1] <= xv:
                i += 1
            if xv == nodes[i]:
                return self.node_table[i, :].copy()
            inc = self._panel_increments(np.array([nodes[i]], dtype=object), np.array([xv], dtype=object))
            return self.node_table[i, :] + inc[0, :]

    def epsilon_transform(self, p: Polynomial, x) -> mpfr:
        """``int p(y) exp(-V(y)) sgn(x - y) dy = 2 C_p(x) - int p exp(-V)``."""
        if p.degree > self.jmax:
            raise ValueError(f"polynomial degree {p.degree} exceeds table size {self.jmax}")
        with working_precision(self.precision):
            if x == math.inf:
                c = np.array(list(self.moments), dtype=object)
            elif x == -math.inf:
                c = np.array([mpfr(0)] * (self.jmax + 1), dtype=object)
            else:
                c = self.cumulative(x)
            coeffs = np.array(p.coeffs, dtype=object)
            k = len(coeffs)
            return 2 * coeffs.dot(c[:k]) - coeffs.dot(np.array(self.moments[:k], dtype=object))


@lru_cache(maxsize=16)
def weight_integrals(V: Potential, jmax: int, precision: int = DEFAULT_PRECISION) -> WeightIntegrals:
    return WeightIntegrals(V, jmax, precision)


def epsilon_transform(f: Polynomial, V: Potential, x: float) -> float:
    """``int f(y) exp(-V(y)) sgn(x - y) dy`` for polynomial ``f``."""
    wi = weight_integrals(V, max(f.degree, 1), f.precision)
    return float(wi.epsilon_transform(f, x))


# ---------------------------------------------------------------------------
# Skew moment tables


@dataclass(frozen=True, eq=False)
class SkewMomentTable:
    """``m[j, k] = s_beta(x**j, x**k)`` for ``0 <= j, k <= n_max``."""

    beta: int
    potential: Potential
    n_max: int
    precision: int
    m: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.n_max + 1

    def pair(self, p: Sequence, q: Sequence) -> mpfr:
        """Bilinear form on coefficient vectors (zero-padded)."""
        with working_precision(self.precision):
            a = np.array(list(p) + [0] * (self.size - len(p)), dtype=object)
            b = np.array(list(q) + [0] * (self.size - len(q)), dtype=object)
            return a.dot(self.m.dot(b))

    def to_json(self) -> dict:
        entries = [str(self.m[j, k]) for j in range(self.size) for k in range(j + 1, self.size)]
        return {
            "beta": self.beta,
            "potential": self.potential.to_json()["u"],
            "n_max": self.n_max,
            "precision": self.precision,
            "entries": entries,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SkewMomentTable":
        n = int(data["n_max"]) + 1
        prec = int(data.get("precision", DEFAULT_PRECISION))
        entries = data["entries"]
        if len(entries) != n * (n - 1) // 2:
            raise ValueError("moment table entry count does not match n_max")
        m = np.empty((n, n), dtype=object)
        it = iter(entries)
        for j in range(n):
            m[j, j] = real(0, prec)
            for k in range(j + 1, n):
                m[j, k] = real(str(next(it)), prec)
        with working_precision(prec):
            for j in range(n):
                for k in range(j):
                    m[j, k] = -m[k, j]
        return cls(int(data["beta"]), Potential(tuple(data["potential"])), n - 1, prec, m)


def _check_beta(beta: int) -> None:
    if beta not in (1, 4):
        raise ValueError(f"beta must be 1 or 4, got {beta!r}")


def beta1_pairing(wi: WeightIntegrals, n: int, upper_only: bool = True) -> np.ndarray:
    """``s1(x**j, x**k)`` from quadrature over cumulative integrals.

    With ``upper_only`` the strictly-upper triangle is computed and mirrored;
    otherwise every entry is computed independently (used to test
    antisymmetry of the quadrature itself).
    """
    rule = wi.rule
    with working_precision(wi.precision):
        wy = np.empty((len(rule.nodes), n), dtype=object)
        col = rule.weights.copy()
        for k in range(n):
            wy[:, k] = col
            col = col * rule.nodes
        mu = wi.moments
        m = np.empty((n, n), dtype=object)
        for j in range(n):
            m[j, j] = mpfr(0)
            start = j + 1 if upper_only else 0
            if start >= n:
                continue
            t = wi.node_table[:, j].dot(wy[:, start:])
            for off, k in enumerate(range(start, n)):
                if k != j:
                    m[j, k] = mu[j] * mu[k] / 2 - t[off]
        if upper_only:
            for j in range(n):
                for k in range(j):
                    m[j, k] = -m[k, j]
        return m


def build_moment_table(V: Potential, beta: int, n_max: int, precision: int = DEFAULT_PRECISION) -> SkewMomentTable:
    """Tabulate ``s_beta`` on monomials ``x**0 .. x**n_max``."""
    _check_beta(beta)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n = n_max + 1
    with working_precision(precision):
        if beta == 4:
            rule = build_quadrature(V, 2, max(2 * n_max - 1, 1), precision)
            mu = rule.moments
            m = np.empty((n, n), dtype=object)
            for j in range(n):
                for k in range(n):
                    m[j, k] = (k - j) * mu[j + k - 1] if j + k >= 1 else mpfr(0)
        else:
            wi = weight_integrals(V, n_max, precision)
            m = beta1_pairing(wi, n)
            if V.is_even:
                # parity: s1(x^j, x^k) vanishes exactly when j + k is even
                for j in range(n):
                    for k in range(j % 2, n, 2):
                        m[j, k] = mpfr(0)
    return SkewMomentTable(beta, V, n_max, precision, m)


@lru_cache(maxsize=32)
def cached_moment_table(V: Potential, beta: int, n_max: int, precision: int) -> SkewMomentTable:
    return build_moment_table(V, beta, n_max, precision)


def skew_product(p: Polynomial, q: Polynomial, V: Potential, beta: int) -> mpfr:
    """Skew product ``s_beta(p, q)`` at the polynomials' precision."""
    _check_beta(beta)
    prec = max(p.precision, q.precision)
    n_max = max(p.degree, q.degree, 1)
    table = cached_moment_table(V, beta, n_max, prec)
    return table.pair(p.coeffs, q.coeffs)
