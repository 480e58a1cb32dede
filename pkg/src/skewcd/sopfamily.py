"""Skew-orthogonal polynomial families and their quasi-functions.

A family holds polynomials ``Pi_0 .. Pi_nmax`` with

    s(Pi_2m, Pi_2n+1) = ghat_n delta_mn,   s(Pi_2m, Pi_2n) = s(Pi_2m+1, Pi_2n+1) = 0,

and ``g[2n] = g[2n+1] = ghat_n > 0``.  The quasi-functions are

    phi_n = Pi_n exp(-V) / sqrt(g_n)
    psi_n = phi_n'                                  (beta = 4)
    psi_n(x) = 1/2 int phi_n(y) sgn(x - y) dy        (beta = 1)

With these choices ``int phi_n psi_m dx`` equals the canonical pairing
``s(Pi_n, Pi_m) / sqrt(g_n g_m)`` for both ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .polybasis import DEFAULT_PRECISION, Polynomial, real, working_precision
from .skewproduct import (
    Potential,
    SkewMomentTable,
    cached_moment_table,
    weight_integrals,
)

NORMALIZATIONS = ("monic", "paper-gaussian")
FAMILY_SCHEMA = "skewcd.family/1"


class PrecisionLossError(ArithmeticError):
    """Skew Gram-Schmidt lost skew-orthogonality at the working precision."""

    def __init__(self, order: int, residual: float):
        self.order = order
        self.residual = residual
        super().__init__(
            f"skew-orthogonality lost at order {order} (relative residual {residual:.3e}); "
            "increase precision or reduce n_max"
        )


@dataclass(frozen=True, eq=False)
class SopFamily:
    beta: int
    potential: Potential
    pi: tuple
    g: tuple
    normalization: str = "monic"
    gauge: tuple = ()
    precision: int = DEFAULT_PRECISION
    table: SkewMomentTable | None = field(default=None, repr=False)

    @property
    def n_max(self) -> int:
        return len(self.pi) - 1

    @property
    def ghat(self) -> tuple:
        return self.g[0::2]

    @property
    def moment_table(self) -> SkewMomentTable:
        if self.table is not None:
            return self.table
        return cached_moment_table(self.potential, self.beta, self.n_max, self.precision)

    # -- coefficient matrices ------------------------------------------------
    @cached_property
    def coeff_matrix(self) -> np.ndarray:
        """Row n holds the monomial coefficients of Pi_n (object array)."""
        n = self.n_max + 1
        c = np.empty((n, n), dtype=object)
        zero = real(0, self.precision)
        for i, p in enumerate(self.pi):
            c[i, :] = [p[k] if k <= p.degree else zero for k in range(n)]
        return c

    @cached_property
    def pairing_columns(self) -> np.ndarray:
        """``m @ coeff_matrix.T``: for coefficient row p, ``p @ cols`` gives ``s(p, Pi_j)``."""
        with working_precision(self.precision):
            return self.moment_table.m.dot(self.coeff_matrix.T)

    @cached_property
    def inv_sqrt_g(self) -> np.ndarray:
        with working_precision(self.precision):
            return np.array([1 / gmpy2.sqrt(v) for v in self.g], dtype=object)

    @cached_property
    def _psi4_matrix(self) -> np.ndarray:
        # polynomial part of phi_n': Pi_n' - V' Pi_n
        vp = self.potential.derivative_poly(self.precision)
        width = self.n_max + 1 + vp.degree
        out = np.empty((self.n_max + 1, width), dtype=object)
        zero = real(0, self.precision)
        for i, p in enumerate(self.pi):
            q = p.derivative() - vp * p
            out[i, :] = [q[k] if k <= q.degree else zero for k in range(width)]
        return out

    @cached_property
    def _weight_integrals(self):
        return weight_integrals(self.potential, self.n_max, self.precision)

    # -- evaluation ----------------------------------------------------------
    def _powers(self, x: mpfr, count: int) -> np.ndarray:
        out = np.empty(count, dtype=object)
        acc = real(1, self.precision)
        for k in range(count):
            out[k] = acc
            acc = acc * x
        return out

    def phi_values_mp(self, x, upto: int | None = None) -> np.ndarray:
        """``phi_0(x) .. phi_{upto-1}(x)`` at the family precision."""
        upto = self.n_max + 1 if upto is None else upto
        with working_precision(self.precision):
            xv = real(x, self.precision) if not isinstance(x, mpfr) else x
            pw = self._powers(xv, upto)
            vals = self.coeff_matrix[:upto, :upto].dot(pw)
            w = gmpy2.exp(-self.potential.value(xv, self.precision))
            return vals * self.inv_sqrt_g[:upto] * w

    def psi_values_mp(self, x, upto: int | None = None) -> np.ndarray:
        """``psi_0(x) .. psi_{upto-1}(x)`` at the family precision."""
        upto = self.n_max + 1 if upto is None else upto
        with working_precision(self.precision):
            xv = real(x, self.precision) if not isinstance(x, mpfr) else x
            if self.beta == 4:
                mat = self._psi4_matrix[:upto, : upto + self.potential.d]
                vals = mat.dot(self._powers(xv, mat.shape[1]))
                w = gmpy2.exp(-self.potential.value(xv, self.precision))
                return vals * self.inv_sqrt_g[:upto] * w
            wi = self._weight_integrals
            cum = wi.cumulative(xv)[:upto]
            mu = np.array(wi.moments[:upto], dtype=object)
            vals = self.coeff_matrix[:upto, :upto].dot(cum - mu / 2)
            return vals * self.inv_sqrt_g[:upto]

    def phi_values(self, x, upto: int | None = None) -> np.ndarray:
        return np.array([float(v) for v in self.phi_values_mp(x, upto)])

    def psi_values(self, x, upto: int | None = None) -> np.ndarray:
        return np.array([float(v) for v in self.psi_values_mp(x, upto)])

    # -- serialization -------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "schema": FAMILY_SCHEMA,
            "beta": self.beta,
            "potential": self.potential.to_json()["u"],
            "normalization": self.normalization,
            "gauge": [str(v) for v in self.gauge],
            "precision": self.precision,
            "n_max": self.n_max,
            "orders": [
                {"n": n, "coeffs": p.to_json()["coeffs"], "g": str(gv)}
                for n, (p, gv) in enumerate(zip(self.pi, self.g))
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SopFamily":
        try:
            prec = int(data.get("precision", DEFAULT_PRECISION))
            beta = int(data["beta"])
            if beta not in (1, 4):
                raise ValueError(f"beta must be 1 or 4, got {beta}")
            V = Potential(tuple(data["potential"]))
            orders = sorted(data["orders"], key=lambda o: int(o["n"]))
            if [int(o["n"]) for o in orders] != list(range(len(orders))):
                raise ValueError("family orders are not contiguous from 0")
            pi = tuple(Polynomial.from_json(o, prec) for o in orders)
            g = tuple(real(str(o["g"]), prec) for o in orders)
            gauge = tuple(real(str(v), prec) for v in data.get("gauge", []))
            norm = data.get("normalization", "monic")
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed family file: {exc!r}") from exc
        for n, p in enumerate(pi):
            if p.degree != n:
                raise ValueError(f"Pi_{n} has degree {p.degree}")
        if len(pi) % 2:
            raise ValueError("family must contain an even number of orders")
        return cls(beta, V, pi, g, norm, gauge, prec)


@dataclass(frozen=True)
class QuasiFunction:
    family: SopFamily
    n: int
    kind: str = "phi"

    def __post_init__(self) -> None:
        if self.kind not in ("phi", "psi"):
            raise ValueError("kind must be 'phi' or 'psi'")
        if not 0 <= self.n <= self.family.n_max:
            raise ValueError(f"order {self.n} outside family range 0..{self.family.n_max}")


def quasi_eval(q: QuasiFunction, x) -> float:
    """Value of ``phi_n(x)`` or ``psi_n(x)``."""
    f = q.family
    vals = f.phi_values_mp(x, q.n + 1) if q.kind == "phi" else f.psi_values_mp(x, q.n + 1)
    return float(vals[q.n])


# ---------------------------------------------------------------------------
# construction


def paper_gaussian_leading(beta: int, n: int, precision: int) -> mpfr:
    """Leading coefficient of Pi_n in the Gaussian reference normalization."""
    with working_precision(precision):
        if beta == 4:
            return gmpy2.sqrt(mpfr(2)) ** (3 * n - 1)
        k = n // 2
        return mpfr(4) ** k if n % 2 == 0 else -(mpfr(4) ** k)


def _reference_potential(beta: int) -> Potential:
    return Potential((0, 1)) if beta == 1 else Potential((0, 2))


def _pairing_residual(c: np.ndarray, m: np.ndarray, ghat: Sequence[mpfr], precision: int) -> tuple[int, float]:
    """First order whose block pairing deviates from canonical form, with max residual."""
    n = c.shape[0]
    with working_precision(precision):
        gram = c.dot(m).dot(c.T)
        scale = [gmpy2.sqrt(ghat[i // 2]) for i in range(n)]
        worst_order, worst = -1, 0.0
        for i in range(n):
            for j in range(i + 1, n):
                target = ghat[i // 2] if (i % 2 == 0 and j == i + 1) else 0
                r = float(abs(gram[i, j] - target) / (scale[i] * scale[j]))
                if r > worst:
                    worst = r
                if r > 1e-25 and worst_order < 0:
                    worst_order = j
    return worst_order, worst


def build_sop(
    V: Potential,
    beta: int,
    n_max: int,
    normalization: str = "monic",
    precision: int = DEFAULT_PRECISION,
    check: bool = True,
) -> SopFamily:
    """Skew Gram-Schmidt on monomial pairs ``(x**2n, x**2n+1)``.

    Each new pair is projected against all earlier pairs twice (classical
    Gram-Schmidt with one reorthogonalization pass).  The odd member is then
    reduced so that its ``x**2n`` coefficient vanishes, and negated if
    needed to make ``ghat_n`` positive.

    Raises
    ------
    PrecisionLossError
        If the final pairing matrix deviates from canonical form by more
        than ``1e-25`` (relative to ``sqrt(g_i g_j)``).
    """
    if beta not in (1, 4):
        raise ValueError(f"beta must be 1 or 4, got {beta!r}")
    if n_max < 1 or n_max % 2 == 0:
        raise ValueError(f"n_max must be odd and >= 1, got {n_max}")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if normalization == "paper-gaussian" and V != _reference_potential(beta):
        raise ValueError(
            "paper-gaussian normalization is defined only for u=[0,1] (beta=1) and u=[0,2] (beta=4)"
        )

    table = cached_moment_table(V, beta, n_max, precision)
    m = table.m
    size = n_max + 1
    with working_precision(precision):
        zero, one = mpfr(0), mpfr(1)
        c = np.empty((size, size), dtype=object)
        mc = np.empty((size, size), dtype=object)  # column j = M @ c_j
        ghat: list[mpfr] = []

        def project(p: np.ndarray, npairs: int) -> np.ndarray:
            for _ in range(2):
                if npairs == 0:
                    return p
                ev = p.dot(mc[:, 0 : 2 * npairs : 2])
                od = p.dot(mc[:, 1 : 2 * npairs : 2])
                gh = np.array(ghat[:npairs], dtype=object)
                p = p - (od / gh).dot(c[0 : 2 * npairs : 2, :]) + (ev / gh).dot(c[1 : 2 * npairs : 2, :])
            return p

        for k in range(size // 2):
            e = np.array([zero] * size, dtype=object)
            e[2 * k] = one
            p_even = project(e, k)
            e = np.array([zero] * size, dtype=object)
            e[2 * k + 1] = one
            p_odd = project(e, k)
            p_odd = p_odd - p_even * (p_odd[2 * k] / p_even[2 * k])
            p_odd[2 * k] = zero
            c[2 * k, :] = p_even
            mc[:, 2 * k] = m.dot(p_even)
            gk = p_even.dot(m.dot(p_odd))
            if gk < 0:
                p_odd = -p_odd
                gk = -gk
            if gk == 0:
                raise PrecisionLossError(2 * k + 1, math.inf)
            c[2 * k + 1, :] = p_odd
            mc[:, 2 * k + 1] = m.dot(p_odd)
            ghat.append(gk)

        if normalization == "paper-gaussian":
            lam = [paper_gaussian_leading(beta, n, precision) / c[n, n] for n in range(size)]
            for n in range(size):
                c[n, :] = c[n, :] * lam[n]
            ghat = [ghat[k] * lam[2 * k] * lam[2 * k + 1] for k in range(size // 2)]

        if check:
            order, resid = _pairing_residual(c, m, ghat, precision)
            if order >= 0:
                raise PrecisionLossError(order, resid)

        pi = tuple(Polynomial(tuple(c[n, : n + 1]), precision) for n in range(size))
        g = tuple(ghat[n // 2] for n in range(size))
    gauge = tuple(real(0, precision) for _ in range(size // 2))
    return SopFamily(beta, V, pi, g, normalization, gauge, precision, table)


def apply_gauge(family: SopFamily, gammas: Sequence) -> SopFamily:
    """``Pi_{2n+1} <- Pi_{2n+1} + gamma_n Pi_{2n}``; g is unchanged."""
    npairs = (family.n_max + 1) // 2
    if len(gammas) != npairs:
        raise ValueError(f"expected {npairs} gauge parameters, got {len(gammas)}")
    prec = family.precision
    gam = [real(v, prec) if not isinstance(v, mpfr) else v for v in gammas]
    pi = list(family.pi)
    with working_precision(prec):
        for k, gk in enumerate(gam):
            if gk != 0:
                pi[2 * k + 1] = pi[2 * k + 1] + pi[2 * k].scale(gk)
        old = family.gauge or tuple(mpfr(0) for _ in range(npairs))
        gauge = tuple(a + b for a, b in zip(old, gam))
    return SopFamily(
        family.beta, family.potential, tuple(pi), family.g, family.normalization, gauge, prec, family.table
    )


def normalization_constants(family: SopFamily) -> list[mpfr]:
    """``ghat_0 .. ghat_{(n_max-1)/2}``."""
    return list(family.ghat)


def partition_function(family: SopFamily, N: int) -> mpfr:
    """``N! * prod_{j<2N} g_j`` as an extended-exponent real.

    mpfr carries a very wide exponent range, so the product itself does not
    overflow; use :func:`log_partition_function` for a float-friendly value.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    if 2 * N > family.n_max + 1:
        raise ValueError(f"2N = {2 * N} exceeds family size {family.n_max + 1}")
    with working_precision(family.precision):
        acc = mpfr(math.factorial(N))
        for j in range(2 * N):
            acc *= family.g[j]
        return acc


def log_partition_function(family: SopFamily, N: int) -> float:
    with working_precision(family.precision):
        return float(gmpy2.log(partition_function(family, N)))
