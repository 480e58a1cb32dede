from __future__ import annotations

import math

import numpy as np
import pytest

from skewcd.asymptotics import (
    AsymptoticDomainError,
    asymptotic_density,
    bulk_kernel,
    f_phase,
    f_phase_dtheta,
    f_phase_integral,
    gaussian_reduced_entries,
    local_average,
    phi4_asymptotic,
    psi1_asymptotic,
    semicircle_density,
    sine_kernel_deviation,
    sine_kernel_ratio,
    theta_of,
)
from skewcd.kernels import KernelSet

from conftest import family


def test_sine_ratio_examples():
    assert sine_kernel_ratio(1, 0.0) == 1.0
    assert sine_kernel_ratio(4, 0.0) == 1.0
    assert sine_kernel_ratio(1, 0.5) == pytest.approx(2 / math.pi, rel=1e-15)
    assert sine_kernel_ratio(4, 0.5) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("beta,N", [(1, 10), (4, 10), (1, 500)])
def test_bulk_kernel_limit(beta, N):
    edge2 = 4 * N if beta == 1 else 2 * N
    for x in (0.0, 1.3):
        assert bulk_kernel(beta, N, x, 0.0) == pytest.approx(math.sqrt(edge2 - x * x) / math.pi, rel=1e-15)
        assert bulk_kernel(beta, N, x, 1e-7) == pytest.approx(bulk_kernel(beta, N, x, 0.0), rel=1e-10)
    with pytest.raises(AsymptoticDomainError):
        bulk_kernel(beta, N, math.sqrt(edge2) + 0.1, 0.2)


def test_semicircle_example():
    assert semicircle_density(1, 9, 0.0) == pytest.approx(2 * 3 / math.pi, rel=1e-15)


@pytest.mark.parametrize("beta", [1, 4])
def test_phase_integral_form(beta):
    n = 40
    for theta in (0.3, 1.1, 2.0, 2.9):
        assert f_phase_integral(beta, n, theta) == pytest.approx(f_phase(beta, n, theta), abs=1e-10)


@pytest.mark.parametrize("beta", [1, 4])
def test_phase_derivative(beta):
    n, t, h = 30, 1.2, 1e-6
    fd = (f_phase(beta, n, t + h) - f_phase(beta, n, t - h)) / (2 * h)
    assert fd == pytest.approx(f_phase_dtheta(beta, n, t), rel=1e-7)


def test_domain_errors():
    with pytest.raises(AsymptoticDomainError):
        phi4_asymptotic(10, 0.0)
    with pytest.raises(AsymptoticDomainError):
        psi1_asymptotic(40, 0.99 * math.sqrt(161))
    with pytest.raises(AsymptoticDomainError):
        theta_of(1, 40, 100.0)


def _quasi_asym_error(beta, n_pair, xs):
    fam = family(beta, "gauss", 2 * n_pair + 3)
    worst = 0.0
    for x in xs:
        exact = fam.phi_values(x) if beta == 4 else fam.psi_values(x)
        even, odd = (phi4_asymptotic if beta == 4 else psi1_asymptotic)(n_pair, x)
        worst = max(worst, abs(exact[2 * n_pair] - even), abs(exact[2 * n_pair + 1] - odd))
    # relative to the oscillation envelope n**-1/4 / sqrt(pi)
    return worst * n_pair**0.25 * math.sqrt(math.pi)


@pytest.mark.parametrize("beta", [1, 4])
def test_quasi_functions_approach_asymptotic_forms(beta):
    xs = [0.0, 0.7, 2.1]
    e20, e40 = _quasi_asym_error(beta, 20, xs), _quasi_asym_error(beta, 40, xs)
    assert e40 < 0.02
    assert e40 < e20


@pytest.mark.parametrize("beta", [1, 4])
def test_reduced_entries_modes(beta):
    for N in (10, 40, 160):
        ex, ld = gaussian_reduced_entries(beta, N, "exact"), gaussian_reduced_entries(beta, N, "leading")
        for key in ("P12", "R02", "R13"):
            assert abs(ex[key] / ld[key] - 1) < 1.0 / N
    with pytest.raises(ValueError):
        gaussian_reduced_entries(beta, 10, "bogus")


def test_asymptotic_density_near_semicircle():
    N = 200
    assert asymptotic_density(1, N, 0.0) == pytest.approx(semicircle_density(1, N, 0.0), rel=0.002)


@pytest.mark.parametrize("beta", [1, 4])
def test_asymptotic_density_tracks_finite_n(beta):
    # the beta = 4 density keeps a slowly decaying oscillation; compare with the exact kernel
    from skewcd.kernels import level_density

    N = 40
    k = KernelSet(family(beta, "gauss", 2 * N + 7), N)
    for x in (0.0, 0.3, 1.0):
        assert asymptotic_density(beta, N, x) == pytest.approx(level_density(k, x), rel=0.05)


@pytest.mark.parametrize("beta", [1, 4])
def test_sine_kernel_at_moderate_n(beta):
    assert sine_kernel_deviation(beta, 200, r_values=np.linspace(0.1, 3, 30)) < 0.05


def test_local_average_of_constant():
    assert local_average(lambda x: 2.5, 1, 10, 0.3) == pytest.approx(2.5, rel=1e-14)


def test_finite_n_density_averages_to_semicircle():
    k = KernelSet(family(1, "gauss", 41), 10)
    from skewcd.kernels import level_density

    x = 1.0
    avg = local_average(lambda t: level_density(k, t), 1, 10, x)
    peak = semicircle_density(1, 10, 0.0)
    assert abs(avg - semicircle_density(1, 10, x)) / peak < 0.05


def test_phase_at_half_pi():
    for n in (20, 37):
        assert f_phase(4, n, math.pi / 2) == pytest.approx(-n * math.pi, abs=1e-12)
        assert f_phase(1, n, math.pi / 2) == pytest.approx(-n * math.pi + math.pi / 2, abs=1e-12)


def test_odd_phi4_vanishes_at_origin():
    for n in (20, 33, 50):
        assert phi4_asymptotic(n, 0.0)[1] == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("beta,x", [(4, 1.0), (1, 0.5)])
def test_n50_against_exact(beta, x):
    n = 50
    fam = family(beta, "gauss", 2 * n + 3)
    exact = fam.phi_values(x) if beta == 4 else fam.psi_values(x)
    even, odd = (phi4_asymptotic if beta == 4 else psi1_asymptotic)(n, x)
    assert even == pytest.approx(exact[2 * n], rel=0.05)
    assert odd == pytest.approx(exact[2 * n + 1], rel=0.05)


def test_bulk_kernel_first_zero():
    N, x = 30, 0.7
    s0 = bulk_kernel(1, N, x, 0.0)
    assert bulk_kernel(1, N, x, 1.0 / s0) / s0 == pytest.approx(0.0, abs=1e-12)


def test_semicircle_edge_and_mass():
    from scipy import integrate

    N = 12
    edge = math.sqrt(4 * N)
    assert semicircle_density(1, N, edge) == 0.0
    total, _ = integrate.quad(lambda t: semicircle_density(1, N, t), -edge, edge)
    assert total == pytest.approx(2 * N, rel=1e-10)
