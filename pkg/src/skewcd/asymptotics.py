"""Large-N closed forms for the Gaussian ensembles.

Conventions: beta = 4 uses ``V = x**2`` with ``x = sqrt(2n + 3/2) cos(theta)``;
beta = 1 uses ``V = x**2 / 2`` with ``x = sqrt(4n + 1) cos(theta)``.  All
quantities are plain floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class AsymptoticDomainError(ValueError):
    """Point outside the bulk region where the asymptotic forms apply."""


def _check_beta(beta: int) -> None:
    if beta not in (1, 4):
        raise ValueError(f"beta must be 1 or 4, got {beta!r}")


def support_edge(beta: int, N: int) -> float:
    """Semicircle edge: ``sqrt(4N)`` (beta = 1) or ``sqrt(2N)`` (beta = 4)."""
    _check_beta(beta)
    return math.sqrt(4 * N) if beta == 1 else math.sqrt(2 * N)


def phase_radius(beta: int, n: int) -> float:
    """Radius ``sqrt(2n + 3/2)`` or ``sqrt(4n + 1)`` defining theta."""
    _check_beta(beta)
    return math.sqrt(2 * n + 1.5) if beta == 4 else math.sqrt(4 * n + 1)


@dataclass(frozen=True)
class BulkPoint:
    beta: int
    n: int
    x: float
    theta: float
    delta_x: float = 0.0

    @classmethod
    def at(cls, beta: int, n: int, x: float, delta_x: float = 0.0) -> "BulkPoint":
        return cls(beta, n, x, theta_of(beta, n, x), delta_x)


def theta_of(beta: int, n: int, x: float) -> float:
    """``theta in (0, pi)`` with ``x = radius * cos(theta)``."""
    rad = phase_radius(beta, n)
    c = x / rad
    if not -1.0 < c < 1.0:
        raise AsymptoticDomainError(f"x = {x} outside (-{rad:.6g}, {rad:.6g})")
    return math.acos(c)


def f_phase(beta: int, n: int, theta: float) -> float:
    """``(n + a)(sin 2theta - 2theta) + 3pi/4`` with ``a = 3/4`` (beta=4) or ``1/4`` (beta=1)."""
    _check_beta(beta)
    if not 0.0 < theta < math.pi:
        raise AsymptoticDomainError("theta must lie in (0, pi)")
    a = 0.75 if beta == 4 else 0.25
    return (n + a) * (math.sin(2 * theta) - 2 * theta) + 3 * math.pi / 4


def f_phase_integral(beta: int, n: int, theta: float) -> float:
    """Integral form of the phase.

    With ``R`` the phase radius and ``rho_R(t) = sqrt(R**2 - t**2)/pi``,
    ``f = -k pi int_x^R rho_R(t) dt + 3pi/4`` where ``k = 2`` (beta=4) or
    ``k = 1`` (beta=1).  Evaluated by adaptive quadrature.
    """
    _check_beta(beta)
    rad = phase_radius(beta, n)
    x = rad * math.cos(theta)
    k = 2 if beta == 4 else 1
    val, _ = integrate.quad(lambda t: math.sqrt(max(rad * rad - t * t, 0.0)) / math.pi, x, rad,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
    return -k * math.pi * val + 3 * math.pi / 4


def f_phase_dtheta(beta: int, n: int, theta: float) -> float:
    a = 0.75 if beta == 4 else 0.25
    return (n + a) * (2 * math.cos(2 * theta) - 2)


def _bulk(beta: int, n: int, x: float) -> tuple[float, float]:
    if n < 20:
        raise AsymptoticDomainError(f"asymptotic forms need n >= 20, got {n}")
    rad = phase_radius(beta, n)
    if abs(x) >= 0.95 * rad:
        raise AsymptoticDomainError(f"|x| = {abs(x)} not inside the bulk (0.95 x {rad:.6g})")
    theta = theta_of(beta, n, x)
    return theta, f_phase(beta, n, theta)


def phi4_asymptotic(n: int, x: float) -> tuple[float, float]:
    """Leading large-n values of ``(phi_2n(x), phi_2n+1(x))`` for beta = 4."""
    theta, f = _bulk(4, n, x)
    s = math.sin(theta)
    odd = math.sin(f) / (n**0.25 * math.sqrt(math.pi * s))
    even = (math.cos(f) / (2 * math.sqrt(2 * n * math.pi * s**3)) + 0.5) / (4 * n) ** 0.25
    return even, odd


def psi1_asymptotic(n: int, x: float) -> tuple[float, float]:
    """Leading large-n values of ``(psi_2n(x), psi_2n+1(x))`` for beta = 1."""
    theta, f = _bulk(1, n, x)
    s = math.sin(theta)
    odd = math.sin(f) / (n**0.25 * math.sqrt(math.pi * s))
    even = -math.cos(f) / (2 * n**0.25 * math.sqrt(n * math.pi * s**3))
    return even, odd


def bulk_kernel(beta: int, N: int, x: float, delta_x: float) -> float:
    """Closed-form bulk kernel; ``delta_x = 0`` gives the semicircle."""
    edge = support_edge(beta, N)
    if abs(x) >= edge:
        raise AsymptoticDomainError(f"|x| = {abs(x)} outside the support edge {edge:.6g}")
    k = math.sqrt(edge * edge - x * x)
    if beta == 4:
        return k / math.pi if delta_x == 0 else math.sin(2 * k * delta_x) / (2 * math.pi * delta_x)
    return k / math.pi if delta_x == 0 else math.sin(k * delta_x) / (math.pi * delta_x)


def sine_kernel_ratio(beta: int, r: float) -> float:
    """``sin(pi r)/(pi r)`` (beta = 1) or ``sin(2 pi r)/(2 pi r)`` (beta = 4)."""
    _check_beta(beta)
    z = math.pi * r if beta == 1 else 2 * math.pi * r
    return 1.0 if z == 0 else math.sin(z) / z


def semicircle_density(beta: int, N: int, x: float) -> float:
    edge = support_edge(beta, N)
    return math.sqrt(edge * edge - x * x) / math.pi if abs(x) < edge else 0.0


def averaging_window(beta: int, N: int, x: float) -> float:
    """One oscillation wavelength ``pi / sqrt(edge**2 - x**2)``."""
    edge = support_edge(beta, N)
    return math.pi / math.sqrt(edge * edge - x * x)


def local_average(func, beta: int, N: int, x: float, order: int = 32) -> float:
    """Mean of ``func`` over one wavelength centred at ``x`` (Gauss-Legendre)."""
    w = averaging_window(beta, N, x)
    t, wt = np.polynomial.legendre.leggauss(order)
    pts = x + 0.5 * w * t
    return float(sum(wi * func(p) for wi, p in zip(wt, pts)) / 2)


# ---------------------------------------------------------------------------
# reduced kernel with asymptotic quasi-functions


def gaussian_q_superdiagonal(beta: int, j: int) -> float:
    """``Q_{j,j+1}`` for the Gaussian families in the reference normalization."""
    k = j // 2
    if beta == 4:
        return 1 / (2 * math.sqrt(2)) if j % 2 == 0 else math.sqrt((2 * k + 2) * (2 * k + 3) / 2)
    return -1.0 if j % 2 == 0 else -0.5 * math.sqrt((2 * k + 1) * (2 * k + 2))


def gaussian_reduced_entries(beta: int, N: int, mode: str = "exact") -> dict:
    """``P_(1,2)``, ``R_(1,2)``, ``R_(0,2)``, ``R_(1,3)`` relative to ``b = 2N - 2``.

    ``mode='exact'`` uses the closed-form superdiagonal of Q with
    ``P_{n,n+1} = -u2 Q_{n,n+1}`` and ``R_{n,n+2} = -u2 Q_{n,n+1} Q_{n+1,n+2}``;
    ``mode='leading'`` uses the large-N values.
    """
    _check_beta(beta)
    if mode == "leading":
        p12 = -4 * N / math.sqrt(2) if beta == 4 else float(N)
        return {"P12": p12, "R12": 0.0, "R02": -float(N), "R13": -float(N)}
    if mode != "exact":
        raise ValueError("mode must be 'exact' or 'leading'")
    u2 = 2.0 if beta == 4 else 1.0
    b = 2 * N - 2
    q = gaussian_q_superdiagonal
    return {
        "P12": -u2 * q(beta, b + 1),
        "R12": 0.0,
        "R02": -u2 * q(beta, b) * q(beta, b + 1),
        "R13": -u2 * q(beta, b + 1) * q(beta, b + 2),
    }


def asymptotic_kernel(beta: int, N: int, x: float, y: float, mode: str = "exact") -> float:
    """Reduced three-term kernel built from the asymptotic quasi-functions."""
    ent = gaussian_reduced_entries(beta, N, mode)
    basis = phi4_asymptotic if beta == 4 else psi1_asymptotic
    fx = basis(N - 1, x) + basis(N, x)
    fy = basis(N - 1, y) + basis(N, y)

    def pair(j, k):
        return fx[j] * fy[k] - fy[j] * fx[k]

    lead = x if beta == 4 else y
    num = (lead * ent["P12"] - ent["R12"]) * pair(0, 2) + ent["R02"] * pair(1, 2) - ent["R13"] * pair(0, 3)
    den = (x - y) if beta == 4 else (y - x)
    if den == 0:
        raise AsymptoticDomainError("asymptotic kernel needs x != y")
    return num / den


def asymptotic_density(beta: int, N: int, x: float, mode: str = "exact") -> float:
    """Diagonal of :func:`asymptotic_kernel` by a symmetric difference limit."""
    h = 1e-6 * (1 + abs(x))
    return 0.5 * (asymptotic_kernel(beta, N, x, x + h, mode) + asymptotic_kernel(beta, N, x, x - h, mode))


def sine_kernel_deviation(beta: int, N: int, x: float = 0.0, r_values=None, mode: str = "exact") -> float:
    """``max_r |S(x, x + dx)/S(x, x) - sine ratio(r)|`` with ``r = dx S(x, x)``."""
    r_values = np.linspace(0.1, 3.0, 291) if r_values is None else r_values
    s0 = asymptotic_density(beta, N, x, mode)
    worst = 0.0
    for r in r_values:
        dx = r / s0
        ratio = asymptotic_kernel(beta, N, x, x + dx, mode) / s0
        worst = max(worst, abs(ratio - sine_kernel_ratio(beta, r)))
    return worst
