"""Operator matrices Q, P, R on a skew-orthogonal family.

Rows are obtained by skew projection: a polynomial ``p`` of degree at most
``n_max`` expands as ``p = sum_m a_m Pi_m`` with

    a_2k = s(p, Pi_2k+1) / ghat_k,     a_2k+1 = -s(p, Pi_2k) / ghat_k.

Row definitions (``phi``/``psi`` as in :mod:`skewcd.sopfamily`):

=====  =======================  ==============================
name   beta = 4                 beta = 1
=====  =======================  ==============================
Q      x phi_n = Q phi          x phi_n = Q phi
P      psi_n = P phi            phi_n = P psi   (phi_n' = P phi)
R      x psi_n = R phi          x phi_n = R psi ((x phi_n)' = R phi)
=====  =======================  ==============================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .polybasis import Polynomial, real, working_precision
from .sopfamily import SopFamily, apply_gauge
from .skewproduct import Potential

OPERATOR_SCHEMA = "skewcd.operator/1"


class ProjectionError(ArithmeticError):
    """Skew projection failed to reconstruct a row polynomial."""


def bw_margin(d: int) -> int:
    return 2 * (d + 2)


@dataclass(frozen=True, eq=False)
class BandedOperator:
    name: str
    beta: int
    entries: np.ndarray = field(repr=False)
    upper_bandwidth: int
    lower_bandwidth: int | None
    valid_window: tuple[int, int]
    potential: Potential
    precision: int

    @property
    def M(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.potential.d

    def as_float(self) -> np.ndarray:
        return np.vectorize(float, otypes=[float])(self.entries)

    def window_slice(self) -> slice:
        lo, hi = self.valid_window
        return slice(lo, hi + 1)

    def scale(self) -> float:
        w = self.window_slice()
        return float(np.abs(self.as_float()[w, w]).max())

    def measured_upper_bandwidth(self, rel_tol: float = 1e-10) -> int:
        """Largest ``m - n`` with a non-negligible entry among window rows."""
        a = np.abs(self.as_float())
        lo, hi = self.valid_window
        thresh = rel_tol * self.scale()
        best = -self.M
        for n in range(lo, hi + 1):
            nz = np.nonzero(a[n] > thresh)[0]
            if len(nz):
                best = max(best, int(nz[-1]) - n)
        return best

    def measured_lower_bandwidth(self, rel_tol: float = 1e-10) -> int:
        a = np.abs(self.as_float())
        lo, hi = self.valid_window
        thresh = rel_tol * self.scale()
        best = -self.M
        for n in range(lo, hi + 1):
            nz = np.nonzero(a[n] > thresh)[0]
            if len(nz):
                best = max(best, n - int(nz[0]))
        return best

    def to_json(self) -> dict:
        return {
            "schema": OPERATOR_SCHEMA,
            "name": self.name,
            "beta": self.beta,
            "M": self.M,
            "upper_bandwidth": self.upper_bandwidth,
            "lower_bandwidth": self.lower_bandwidth,
            "measured_upper_bandwidth": self.measured_upper_bandwidth(),
            "valid_window": list(self.valid_window),
            "potential": self.potential.to_json()["u"],
            "precision": self.precision,
            "entries": [[str(v) for v in row] for row in self.entries],
        }


# ---------------------------------------------------------------------------
# row polynomials


def _row_polynomial(family: SopFamily, name: str, n: int) -> Polynomial:
    pi = family.pi[n]
    if name == "Q":
        return pi.shift_mul_x()
    vp = family.potential.derivative_poly(family.precision)
    dphi = pi.derivative() - vp * pi
    if name == "P":
        return dphi
    if name == "R":
        return dphi.shift_mul_x() if family.beta == 4 else pi + dphi.shift_mul_x()
    raise ValueError(f"unknown operator {name!r}")


def skew_expand(family: SopFamily, p: Polynomial) -> np.ndarray:
    """Coefficients ``a`` with ``p = sum_m a_m Pi_m`` (object array, length n_max+1)."""
    size = family.n_max + 1
    if p.degree > family.n_max:
        raise ProjectionError(f"degree {p.degree} exceeds family order {family.n_max}")
    with working_precision(family.precision):
        vec = np.array([p[k] for k in range(size)], dtype=object)
        b = vec.dot(family.pairing_columns)
        a = np.empty(size, dtype=object)
        for k in range(size // 2):
            gk = family.g[2 * k]
            a[2 * k] = b[2 * k + 1] / gk
            a[2 * k + 1] = -b[2 * k] / gk
    return a


def _reconstruction_residual(family: SopFamily, p: Polynomial, a: np.ndarray) -> float:
    size = family.n_max + 1
    with working_precision(family.precision):
        rec = a.dot(family.coeff_matrix)
        vec = np.array([p[k] for k in range(size)], dtype=object)
        diff = max(abs(r - v) for r, v in zip(rec, vec))
        ref = max(abs(v) for v in vec)
        return float(diff / ref) if ref else float(diff)


def _projection_tolerance(precision: int) -> float:
    return 10.0 ** (-precision / 12)


def operator_rows(family: SopFamily, name: str, rows, ncols: int, check: bool = True) -> np.ndarray:
    """Rows ``rows`` of operator ``name`` truncated to ``ncols`` columns."""
    tol = _projection_tolerance(family.precision)
    out = np.empty((len(rows), ncols), dtype=object)
    with working_precision(family.precision):
        sq = [gmpy2.sqrt(v) for v in family.g]
        for i, n in enumerate(rows):
            p = _row_polynomial(family, name, n)
            a = skew_expand(family, p)
            if check:
                res = _reconstruction_residual(family, p, a)
                if res > tol:
                    raise ProjectionError(f"{name} row {n}: reconstruction residual {res:.3e} > {tol:.1e}")
            out[i, :] = [a[m] * sq[m] / sq[n] for m in range(ncols)]
    return out


def _build(family: SopFamily, name: str, M: int) -> BandedOperator:
    d = family.potential.d
    margin = bw_margin(d)
    if M < 2 or M % 2:
        raise ValueError(f"truncation size M must be even and >= 2, got {M}")
    if M + margin > family.n_max:
        raise ValueError(
            f"M + bw_margin = {M + margin} exceeds n_max = {family.n_max}; build a larger family"
        )
    entries = operator_rows(family, name, list(range(M)), M)
    upper, lower = {"Q": (1, None), "P": (d, d + 2), "R": (d + 1, d + 3)}[name]
    window = (margin, M - 1 - margin)
    return BandedOperator(name, family.beta, entries, upper, lower, window, family.potential, family.precision)


def build_Q(family: SopFamily, M: int) -> BandedOperator:
    """Multiplication by x in the phi basis."""
    return _build(family, "Q", M)


def build_P(family: SopFamily, M: int) -> BandedOperator:
    return _build(family, "P", M)


def build_R(family: SopFamily, M: int) -> BandedOperator:
    return _build(family, "R", M)


def build_operators(family: SopFamily, M: int) -> tuple[BandedOperator, BandedOperator, BandedOperator]:
    return build_Q(family, M), build_P(family, M), build_R(family, M)


def q_superdiagonal(family: SopFamily, j: int) -> mpfr:
    """``Q_{j,j+1}`` from leading coefficients and normalizations."""
    with working_precision(family.precision):
        return family.pi[j].leading / family.pi[j + 1].leading * gmpy2.sqrt(family.g[j + 1] / family.g[j])


# ---------------------------------------------------------------------------
# duality and identities


def _z_left(b: np.ndarray) -> np.ndarray:
    out = np.empty_like(b)
    out[0::2, :] = b[1::2, :]
    out[1::2, :] = -b[0::2, :]
    return out


def _z_right(b: np.ndarray) -> np.ndarray:
    out = np.empty_like(b)
    out[:, 1::2] = b[:, 0::2]
    out[:, 0::2] = -b[:, 1::2]
    return out


def symplectic_unit(M: int, dtype=float) -> np.ndarray:
    """Block-diagonal ``Z`` with blocks ``[[0, 1], [-1, 0]]``."""
    if M % 2:
        raise ValueError("Z is defined only for even dimension")
    z = np.zeros((M, M), dtype=dtype)
    for k in range(M // 2):
        z[2 * k, 2 * k + 1] = 1
        z[2 * k + 1, 2 * k] = -1
    return z


def dual(A: np.ndarray, M: int | None = None) -> np.ndarray:
    """``A^D = -Z A^T Z``."""
    A = np.asarray(A)
    M = A.shape[0] if M is None else M
    if A.shape != (M, M):
        raise ValueError(f"expected a {M}x{M} matrix, got {A.shape}")
    if M % 2:
        raise ValueError("dual requires even dimension")
    return -_z_right(_z_left(A.T.copy()))


def _solve_inverse(a: np.ndarray, precision: int) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting (object arrays)."""
    n = a.shape[0]
    with working_precision(precision):
        work = np.concatenate([a.copy(), np.array([[mpfr(int(i == j)) for j in range(n)] for i in range(n)], dtype=object)], axis=1)
        for col in range(n):
            piv = max(range(col, n), key=lambda r: abs(work[r, col]))
            if work[piv, col] == 0:
                raise ZeroDivisionError("singular matrix")
            if piv != col:
                work[[col, piv], :] = work[[piv, col], :]
            work[col, :] = work[col, :] / work[col, col]
            for r in range(n):
                if r != col and work[r, col] != 0:
                    work[r, :] = work[r, :] - work[col, :] * work[r, col]
        return work[:, n:]


def _matpoly(coeffs, Q: np.ndarray, precision: int) -> np.ndarray:
    """``sum_k coeffs[k] Q^k`` via Horner."""
    n = Q.shape[0]
    with working_precision(precision):
        eye = np.array([[mpfr(int(i == j)) for j in range(n)] for i in range(n)], dtype=object)
        acc = eye * coeffs[-1]
        for c in reversed(coeffs[:-1]):
            acc = acc.dot(Q) + eye * c
        return acc


@dataclass(frozen=True)
class IdentityResult:
    identity: str
    residual: float
    tolerance: float
    passed: bool

    def to_json(self) -> dict:
        return {"identity": self.identity, "residual": self.residual, "tolerance": self.tolerance, "pass": self.passed}


@dataclass(frozen=True)
class IdentityReport:
    results: tuple
    upper_bandwidths: dict
    valid_window: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> IdentityResult:
        for r in self.results:
            if r.identity == name:
                return r
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "pass": self.passed,
            "valid_window": list(self.valid_window),
            "upper_bandwidths": self.upper_bandwidths,
            "identities": [r.to_json() for r in self.results],
            "diagnostics": self.diagnostics,
        }


def check_identities(Q: BandedOperator, P: BandedOperator, R: BandedOperator, d: int | None = None) -> IdentityReport:
    """Window-restricted, scale-relative residuals of the operator identities.

    Checks ``[Q,P] = 1``, ``[R,P] = P``, ``P = -P^D``, ``R = -R^D``, the
    strictly-upper parts of ``P + V'(Q)`` and ``R + Q V'(Q)``, the declared
    upper bandwidths of P and R, and ``Q = Q^D + P^{-1}`` (looser tolerance).
    """
    V = Q.potential
    d = V.d if d is None else d
    prec = Q.precision
    M = Q.M
    lo, hi = Q.valid_window
    win = slice(lo, hi + 1)
    results = []

    def rel(resid: np.ndarray, *scales: np.ndarray) -> float:
        num = max(float(abs(v)) for v in resid[win, win].ravel())
        den = max(max(float(abs(v)) for v in s[win, win].ravel()) for s in scales)
        return num / den if den else num

    def add(name: str, value: float, tol: float) -> None:
        results.append(IdentityResult(name, value, tol, bool(value < tol)))

    with working_precision(prec):
        q, p, r = Q.entries, P.entries, R.entries
        eye = np.array([[mpfr(int(i == j)) for j in range(M)] for i in range(M)], dtype=object)
        qp, pq = q.dot(p), p.dot(q)
        add("[Q,P]=1", rel(qp - pq - eye, qp, pq, eye), 1e-8)
        rp, pr = r.dot(p), p.dot(r)
        add("[R,P]=P", rel(rp - pr - p, rp, pr, p), 1e-8)
        add("P=-P^D", rel(p + dual(p), p), 1e-8)
        add("R=-R^D", rel(r + dual(r), r), 1e-8)

        vprime_q = _matpoly(list(V.derivative_poly(prec).coeffs), q, prec)
        qvq = q.dot(vprime_q)
        upper = np.triu(np.ones((M, M), dtype=bool), k=1)
        mask = np.where(upper, 1, 0)
        add("upper(P+V'(Q))=0", rel((p + vprime_q) * mask, p, vprime_q), 1e-8)
        add("upper(R+QV'(Q))=0", rel((r + qvq) * mask, r, qvq), 1e-8)

        band_p = np.triu(np.ones((M, M), dtype=int), k=d + 1)
        band_r = np.triu(np.ones((M, M), dtype=int), k=d + 2)
        add(f"band(P)<= {d}", rel(p * band_p, p), 1e-10)
        add(f"band(R)<= {d + 1}", rel(r * band_r, r), 1e-10)

        try:
            pinv = _solve_inverse(p, prec)
            qdual = q - dual(q) - pinv
            add("Q=Q^D+P^-1", rel(qdual, q, pinv), 1e-6)
        except ZeroDivisionError:
            add("Q=Q^D+P^-1", float("inf"), 1e-6)

        # inverse-free form; only finitely many terms enter each window entry
        qdp = (q - dual(q)).dot(p)
        diagnostics = {
            "(Q-Q^D)P=+1": rel(qdp - eye, qdp, eye),
            "(Q-Q^D)P=-1": rel(qdp + eye, qdp, eye),
        }

    bands = {"P": P.measured_upper_bandwidth(), "R": R.measured_upper_bandwidth()}
    return IdentityReport(tuple(results), bands, (lo, hi), diagnostics)


# ---------------------------------------------------------------------------
# gauge used by the reduced Gaussian kernel


def paper_cancel_gammas(family: SopFamily, N: int) -> list[mpfr]:
    """Gauge parameters that zero ``R_{2N-1, 2N}`` (pair ``N-1``), all others zero.

    In this gauge the ``(1,2)`` entry of R relative to the last occupied
    pair vanishes, so the reduced kernel drops that term.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    b = 2 * N - 2
    if b + 2 + family.potential.d + 2 > family.n_max:
        raise ValueError("family too small for the requested N")
    rows = operator_rows(family, "R", [b, b + 1], b + 3)
    npairs = (family.n_max + 1) // 2
    with working_precision(family.precision):
        gam = [mpfr(0)] * npairs
        gam[N - 1] = -rows[1, b + 2] / rows[0, b + 2]
    return gam


def paper_cancel_gauge(family: SopFamily, N: int) -> SopFamily:
    return apply_gauge(family, paper_cancel_gammas(family, N))


def report_to_json(report: IdentityReport) -> dict:
    return report.to_json()


def operator_from_json(data: dict) -> BandedOperator:
    prec = int(data.get("precision", 256))
    entries = np.array([[real(str(v), prec) for v in row] for row in data["entries"]], dtype=object)
    lo, hi = data["valid_window"]
    return BandedOperator(
        data["name"], int(data["beta"]), entries, int(data["upper_bandwidth"]),
        data.get("lower_bandwidth"), (int(lo), int(hi)), Potential(tuple(data["potential"])), prec,
    )
