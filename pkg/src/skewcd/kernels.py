"""Finite-N correlation kernels for beta = 1 and beta = 4.

With ``Z`` the block-diagonal symplectic unit and ``Pr`` the projector on
the first ``2N`` states,

    S(x, y) =  Phi(x)^T Z Pr Psi(y)
    D(x, y) = -Phi(x)^T Z Pr Phi(y)
    I(x, y) =  Psi(x)^T Z Pr Psi(y)  [ - sgn(x - y) / 2   for beta = 1 ]

and the two-level correlation is
``R2 = S(x,x) S(y,y) - S(x,y) S(y,x) + D(x,y) I(x,y)``.

The GCD path rewrites S through commutators of P and R with ``Pr``, which
are supported on a few rows and columns around the cut at ``2N``.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .operators import bw_margin, operator_rows, paper_cancel_gauge
from .polybasis import DEFAULT_PRECISION, real, working_precision
from .skewproduct import Potential, build_quadrature
from .sopfamily import SopFamily

METHODS = ("direct", "gcd", "gaussian-reduced")


class DiagonalError(ValueError):
    """GCD quotient requested too close to the diagonal."""


def _z_contract(u: np.ndarray, v: np.ndarray) -> mpfr:
    """``u^T Z v`` for even-length vectors."""
    return (u[0::2] * v[1::2]).sum() - (u[1::2] * v[0::2]).sum()


@dataclass(frozen=True, eq=False)
class KernelSet:
    """Kernel evaluators for a family at fixed projector rank ``2N``."""

    family: SopFamily
    N: int
    method: str = "direct"
    diagonal_threshold: float = 1e-7

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.N < 0:
            raise ValueError("N must be >= 0")
        need = 2 * self.N + bw_margin(self.family.potential.d)
        if self.N > 0 and need > self.family.n_max:
            raise ValueError(f"2N + bw_margin = {need} exceeds n_max = {self.family.n_max}")
        if self.method == "gaussian-reduced" and not self.family.potential.is_quadratic:
            raise ValueError("gaussian-reduced kernel requires a quadratic potential")

    @property
    def beta(self) -> int:
        return self.family.beta

    @property
    def precision(self) -> int:
        return self.family.precision

    def _x(self, x) -> mpfr:
        return x if isinstance(x, mpfr) else real(x, self.precision)

    # cut-window operator blocks --------------------------------------------
    @cached_property
    def cut_window(self) -> tuple[int, int]:
        d = self.family.potential.d
        c = 2 * self.N
        lo = max(0, c - d - 4)
        lo -= lo % 2
        hi = c + d + 4
        return lo, hi + hi % 2

    @cached_property
    def _commutators(self) -> tuple[np.ndarray, np.ndarray]:
        """``[P, Pr]`` and ``[R, Pr]`` restricted to the cut window."""
        lo, hi = self.cut_window
        rows = list(range(lo, hi))
        c = 2 * self.N
        with working_precision(self.precision):
            out = []
            for name in ("P", "R"):
                full = operator_rows(self.family, name, rows, hi)[:, lo:hi]
                comm = np.empty_like(full)
                for i, n in enumerate(rows):
                    for j, m in enumerate(rows):
                        pm = 1 if m < c else 0
                        pn = 1 if n < c else 0
                        comm[i, j] = full[i, j] * (pm - pn)
                out.append(comm)
        return out[0], out[1]

    @cached_property
    def reduced_entries(self) -> dict:
        """Gauge-fixed P/R entries relative to ``b = 2N - 2`` used by the reduced formula."""
        fam = paper_cancel_gauge(self.family, self.N)
        b = 2 * self.N - 2
        p = operator_rows(fam, "P", [b + 1], b + 4)
        r = operator_rows(fam, "R", [b, b + 1], b + 4)
        return {
            "family": fam,
            "P12": p[0, b + 2],
            "R12": r[1, b + 2],
            "R02": r[0, b + 2],
            "R13": r[1, b + 3],
        }

    # basis vectors ---------------------------------------------------------
    def phi(self, x, upto: int | None = None) -> np.ndarray:
        return self.family.phi_values_mp(self._x(x), 2 * self.N if upto is None else upto)

    def psi(self, x, upto: int | None = None) -> np.ndarray:
        return self.family.psi_values_mp(self._x(x), 2 * self.N if upto is None else upto)

    # convenience dispatch --------------------------------------------------
    def S(self, x, y) -> float:
        if self.method == "direct":
            return kernel_S_direct(self, x, y)
        if self.method == "gcd":
            return kernel_S_gcd(self, x, y)
        return kernel_S_gaussian_reduced(self, x, y)


# ---------------------------------------------------------------------------
# direct spectral sums


def _S_direct_mp(ks: KernelSet, x, y) -> mpfr:
    if ks.N == 0:
        return real(0, ks.precision)
    with working_precision(ks.precision):
        return _z_contract(ks.phi(x), ks.psi(y))


def kernel_S_direct(ks: KernelSet, x, y) -> float:
    """``sum_{k<N} phi_2k(x) psi_2k+1(y) - phi_2k+1(x) psi_2k(y)``."""
    return float(_S_direct_mp(ks, x, y))


def kernel_D(ks: KernelSet, x, y) -> float:
    if ks.N == 0:
        return 0.0
    with working_precision(ks.precision):
        return float(-_z_contract(ks.phi(x), ks.phi(y)))


def kernel_I_smooth(ks: KernelSet, x, y) -> float:
    if ks.N == 0:
        return 0.0
    with working_precision(ks.precision):
        return float(_z_contract(ks.psi(x), ks.psi(y)))


def kernel_I(ks: KernelSet, x, y) -> float:
    """I kernel; for beta = 1 includes ``-sgn(x - y)/2`` (zero at ``x == y``)."""
    smooth = kernel_I_smooth(ks, x, y)
    if ks.beta == 1:
        xf, yf = float(x), float(y)
        if xf != yf:
            smooth -= 0.5 * math.copysign(1.0, xf - yf)
    return smooth


def level_density(ks: KernelSet, x) -> float:
    """``rho(x) = S(x, x)`` from the direct sum."""
    return kernel_S_direct(ks, x, x)


# ---------------------------------------------------------------------------
# generalized Christoffel-Darboux


def gcd_terms(ks: KernelSet, x, y) -> tuple[mpfr, mpfr]:
    """Commutator contractions ``(A, B)`` entering the GCD numerator.

    beta = 4: ``A = -Phi(x)^T Z [P,Pr] Phi(y)``, ``B`` likewise with R;
    beta = 1: the same with Psi vectors.
    """
    lo, hi = ks.cut_window
    cp, cr = ks._commutators
    vec = ks.family.phi_values_mp if ks.beta == 4 else ks.family.psi_values_mp
    with working_precision(ks.precision):
        u = vec(ks._x(x), hi)[lo:hi]
        v = vec(ks._x(y), hi)[lo:hi]
        zu = np.empty_like(u)
        # (u^T Z)_m: Z_{2k,2k+1} = 1, Z_{2k+1,2k} = -1
        zu[1::2] = u[0::2]
        zu[0::2] = -u[1::2]
        a = -zu.dot(cp.dot(v))
        b = -zu.dot(cr.dot(v))
    return a, b


def gcd_numerator(ks: KernelSet, x, y) -> mpfr:
    """``x A - B`` (beta = 4, over ``x - y``) or ``y A - B`` (beta = 1, over ``y - x``)."""
    a, b = gcd_terms(ks, x, y)
    with working_precision(ks.precision):
        lead = ks._x(x) if ks.beta == 4 else ks._x(y)
        return lead * a - b


def kernel_S_gcd(ks: KernelSet, x, y, diagonal: bool = True) -> float:
    """GCD quotient; near the diagonal the numerator is differentiated in y."""
    if ks.N == 0:
        return 0.0
    xf, yf = float(x), float(y)
    sign = 1 if ks.beta == 4 else -1
    if abs(xf - yf) > ks.diagonal_threshold * (1 + abs(xf)):
        with working_precision(ks.precision):
            return float(gcd_numerator(ks, x, y) / (sign * (ks._x(x) - ks._x(y))))
    if not diagonal:
        raise DiagonalError("|x - y| below diagonal threshold; use level_density or diagonal=True")
    h = np.finfo(float).eps ** (1 / 3) * (1 + abs(xf))
    with working_precision(ks.precision):
        xv = ks._x(x)
        deriv = (gcd_numerator(ks, xv, xv + h) - gcd_numerator(ks, xv, xv - h)) / (2 * h)
        return float(-sign * deriv)


def kernel_S_gaussian_reduced(ks: KernelSet, x, y) -> float:
    """Three-term reduced numerator for the Gaussian ensembles.

    Indices are relative to ``b = 2N - 2`` (last occupied pair) after the
    gauge that removes ``R_{b+1,b+2}``.
    """
    if not ks.family.potential.is_quadratic:
        raise ValueError("gaussian-reduced kernel requires a quadratic potential")
    if ks.N == 0:
        return 0.0
    xf = float(x)
    if abs(xf - float(y)) <= ks.diagonal_threshold * (1 + abs(xf)):
        # symmetric limit onto the diagonal
        h = np.finfo(float).eps ** (1 / 3) * (1 + abs(xf))
        return 0.5 * (kernel_S_gaussian_reduced(ks, xf, xf + h) + kernel_S_gaussian_reduced(ks, xf, xf - h))
    ent = ks.reduced_entries
    fam = ent["family"]
    b = 2 * ks.N - 2
    vec = fam.phi_values_mp if ks.beta == 4 else fam.psi_values_mp
    with working_precision(ks.precision):
        xv, yv = ks._x(x), ks._x(y)
        fx, fy = vec(xv, b + 4), vec(yv, b + 4)

        def pair(j, k):
            return fx[b + j] * fy[b + k] - fy[b + j] * fx[b + k]

        lead = xv if ks.beta == 4 else yv
        num = (lead * ent["P12"] - ent["R12"]) * pair(0, 2) + ent["R02"] * pair(1, 2) - ent["R13"] * pair(0, 3)
        den = (xv - yv) if ks.beta == 4 else (yv - xv)
        return float(num / den)


# ---------------------------------------------------------------------------
# sigma2 and R2


@dataclass(frozen=True)
class Sigma2:
    s_xy: float
    s_yx: float
    d_xy: float
    i_xy: float
    epsilon_at_zero: bool = False

    def matrix(self, s_xx: float, s_yy: float) -> np.ndarray:
        return np.array([[s_xx, self.s_xy], [self.s_yx, s_yy]])


def sigma2(ks: KernelSet, x, y) -> Sigma2:
    return Sigma2(
        kernel_S_direct(ks, x, y),
        kernel_S_direct(ks, y, x),
        kernel_D(ks, x, y),
        kernel_I(ks, x, y),
        ks.beta == 1 and float(x) == float(y),
    )


def r2(ks: KernelSet, x, y) -> float:
    """Two-level correlation ``S(x,x)S(y,y) - S(x,y)S(y,x) + D(x,y)I(x,y)``."""
    sg = sigma2(ks, x, y)
    return level_density(ks, x) * level_density(ks, y) - sg.s_xy * sg.s_yx + sg.d_xy * sg.i_xy


# ---------------------------------------------------------------------------
# beta = 2 reference (orthonormal polynomials, classic Christoffel-Darboux)


@dataclass(frozen=True, eq=False)
class OrthonormalFamily:
    """Orthonormal polynomials for ``exp(-2V)`` via three-term recurrence.

    ``p_{n+1} b_{n+1} = (x - a_n) p_n - b_n p_{n-1}``; ``phi_n = p_n exp(-V)``.
    """

    potential: Potential
    a: tuple
    b: tuple
    mu0: mpfr
    precision: int

    @property
    def size(self) -> int:
        return len(self.a)

    def values_mp(self, x, count: int | None = None) -> np.ndarray:
        count = self.size if count is None else count
        with working_precision(self.precision):
            xv = real(x, self.precision)
            w = gmpy2.exp(-self.potential.value(xv, self.precision))
            out = np.empty(count, dtype=object)
            prev, cur = mpfr(0), 1 / gmpy2.sqrt(self.mu0)
            for n in range(count):
                out[n] = cur * w
                if n + 1 < count:
                    nxt = ((xv - self.a[n]) * cur - (self.b[n] * prev if n else 0)) / self.b[n + 1]
                    prev, cur = cur, nxt
            return out

    def values(self, x, count: int | None = None) -> np.ndarray:
        return np.array([float(v) for v in self.values_mp(x, count)])


def build_orthonormal(V: Potential, size: int, precision: int = DEFAULT_PRECISION) -> OrthonormalFamily:
    """Discretized Stieltjes procedure on a converged trapezoid rule for ``exp(-2V)``."""
    rule = build_quadrature(V, 2, 2 * size + 2, precision)
    x, w = rule.nodes, rule.weights
    with working_precision(precision):
        mu0 = w.sum()
        a, b = [], [mpfr(0)]
        prev = np.array([mpfr(0)] * len(x), dtype=object)
        cur = np.array([1 / gmpy2.sqrt(mu0)] * len(x), dtype=object)
        for n in range(size):
            an = (w * x * cur * cur).sum()
            a.append(an)
            nxt = (x - an) * cur - prev * b[n]
            bn1 = gmpy2.sqrt((w * nxt * nxt).sum())
            b.append(bn1)
            prev, cur = cur, nxt / bn1
    return OrthonormalFamily(V, tuple(a), tuple(b), mu0, precision)


def kernel_S_beta2_reference(fam: OrthonormalFamily, N: int, x, y) -> float:
    """Classic CD kernel ``b_N [phi_N(x) phi_{N-1}(y) - phi_{N-1}(x) phi_N(y)] / (x - y)``."""
    if N == 0:
        return 0.0
    if N + 1 > fam.size:
        raise ValueError("orthonormal family too small")
    fx, fy = fam.values_mp(x, N + 1), fam.values_mp(y, N + 1)
    with working_precision(fam.precision):
        if float(x) == float(y):
            return float((fx[:N] * fx[:N]).sum())
        num = fam.b[N] * (fx[N] * fy[N - 1] - fx[N - 1] * fy[N])
        return float(num / (real(x, fam.precision) - real(y, fam.precision)))


def kernel_S_beta2_direct(fam: OrthonormalFamily, N: int, x, y) -> float:
    fx, fy = fam.values_mp(x, N), fam.values_mp(y, N)
    with working_precision(fam.precision):
        return float((fx * fy).sum()) if N else 0.0


# ---------------------------------------------------------------------------
# grid export


def kernel_grid(ks: KernelSet, xs: Sequence[float], ys: Sequence[float] | None = None) -> list[dict]:
    """Rows ``{x, y, S, D, I, R2}``; with ``ys=None`` evaluates the diagonal only."""
    rows = []
    if ys is None:
        for x in xs:
            s = level_density(ks, x) if ks.method == "direct" else ks.S(x, x)
            rows.append({"x": float(x), "S": s})
        return rows
    for x in xs:
        for y in ys:
            rows.append(
                {
                    "x": float(x),
                    "y": float(y),
                    "S": ks.S(x, y),
                    "D": kernel_D(ks, x, y),
                    "I": kernel_I(ks, x, y),
                    "R2": r2(ks, x, y),
                }
            )
    return rows


def write_grid_csv(rows: Iterable[dict], path: Path | str | None) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("empty grid")
    fields = list(rows[0].keys())
    fh = open(path, "w", newline="", encoding="utf-8") if path is not None else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if path is not None:
            fh.close()
