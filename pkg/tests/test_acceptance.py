"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines are echoed in the
terminal summary) or ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import subprocess
import sys
import time
from pathlib import Path

import gmpy2
import numpy as np
import pytest

from skewcd.asymptotics import local_average, semicircle_density, sine_kernel_deviation, support_edge
from skewcd.kernels import KernelSet, kernel_S_direct, kernel_S_gaussian_reduced, kernel_S_gcd, level_density, r2
from skewcd.operators import build_operators, bw_margin, check_identities, operator_rows
from skewcd.polybasis import real
from skewcd.rmtmc import analytic_density_grid, analytic_pair_grid, compare, density_histogram, pair_histogram, sample_spectra
from skewcd.skewproduct import Potential
from skewcd.sopfamily import build_sop

PREC = 256
GAUSS = {1: Potential((0, 1)), 4: Potential((0, 2))}
QUARTIC = Potential((0, 0, 0, 1))
LINES: list[str] = []


def report(tag: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  {tag}: {detail}"
    LINES.append(line)
    print(line, flush=True)


def _family(V: Potential, beta: int, n_max: int, norm: str = "monic"):
    return build_sop(V, beta, n_max, norm, PREC)


# ---------------------------------------------------------------------------
# 1. paper constants


def criterion_1() -> bool:
    start = time.time()
    ok = True
    sp = gmpy2.sqrt(gmpy2.const_pi())
    fams = {beta: _family(GAUSS[beta], beta, 95, "paper-gaussian") for beta in (1, 4)}
    worst_g = 0.0
    for beta, fam in fams.items():
        for n in range(16):
            ref = math.factorial(2 * n + (1 if beta == 4 else 0)) * sp * real(4) ** n
            worst_g = max(worst_g, float(abs(fam.ghat[n] / ref - 1)))
    ok_g = worst_g < 1e-10
    report("C1a ghat_n, n<=15, both beta", ok_g, f"max rel err {worst_g:.2e} (tol 1e-10)")

    worst_q = 0.0
    for beta, ref in ((1, -1.0), (4, 1 / (2 * math.sqrt(2)))):
        q = operator_rows(fams[beta], "Q", list(range(0, 60, 2)), 62)
        for i, n in enumerate(range(0, 60, 2)):
            worst_q = max(worst_q, abs(float(q[i, n + 1]) / ref - 1))
    ok_q = worst_q < 1e-10
    report("C1b Q_{2k,2k+1} = -1 (beta=1), 1/(2 sqrt2) (beta=4)", ok_q, f"max rel err {worst_q:.2e} (tol 1e-10)")

    def entry_ratios(offset: int) -> dict:
        out = {}
        for beta, fam in fams.items():
            for N in (10, 20, 40):
                b = 2 * N + offset
                p = operator_rows(fam, "P", [b + 1], b + 4)
                r = operator_rows(fam, "R", [b, b + 1], b + 4)
                pref = -4 * N / math.sqrt(2) if beta == 4 else float(N)
                out[(beta, N)] = (float(p[0, b + 2]) / pref, float(r[0, b + 2]) / -N, float(r[1, b + 3]) / -N)
        return out

    literal = entry_ratios(0)
    failing = [] if ok_g and ok_q else ["C1a/C1b"]
    for beta in (1, 4):
        devs = [max(abs(v - 1) * N for v in literal[(beta, N)]) for N in (10, 20, 40)]
        passed = all(d <= 1 for d in devs)
        ok &= passed
        if not passed:
            failing.append(f"C1c beta={beta}")
        report(f"C1c beta={beta} P_(1,2), R_(0,2), R_(1,3) at A_(2N+j,2N+k)", passed,
               "N*|ratio-1| = " + ", ".join(f"{d:.3f}" for d in devs) + " for N=10,20,40 (need <= 1)")
    shifted = entry_ratios(-2)
    devs = [max(abs(v - 1) * N for v in shifted[(beta, N)]) for beta in (1, 4) for N in (10, 20, 40)]
    print(f"INFO  C1c with blocks relative to 2N-2 (last occupied pair): max N*|ratio-1| = {max(devs):.3f}")

    elapsed = time.time() - start
    ok_t = elapsed < 120
    ok = ok and ok_g and ok_q and ok_t
    report("C1 paper constants", ok, f"failing parts: {', '.join(failing) or 'none'}; runtime {elapsed:.1f}s (limit 120s)")
    return ok


# ---------------------------------------------------------------------------
# 2. operator identities


def criterion_2() -> bool:
    start = time.time()
    M = 64
    ok = True
    failing: set[str] = set()
    for beta in (1, 4):
        for name, V in (("gaussian", GAUSS[beta]), ("quartic", QUARTIC)):
            n_max = M + bw_margin(V.d)
            n_max += 1 - n_max % 2
            Q, P, R = build_operators(_family(V, beta, n_max), M)
            rep = check_identities(Q, P, R)
            bad = [f"{r.identity} {r.residual:.2e}>{r.tolerance:.0e}" for r in rep.results if not r.passed]
            worst = max((r.residual for r in rep.results if r.identity != "Q=Q^D+P^-1"), default=0.0)
            ok &= rep.passed
            failing.update(r.identity for r in rep.results if not r.passed)
            report(f"C2 beta={beta} {name} M={M}", rep.passed,
                   f"max exact-identity residual {worst:.1e}; bands P={rep.upper_bandwidths['P']} "
                   f"R={rep.upper_bandwidths['R']}; Q=Q^D+P^-1 residual {rep['Q=Q^D+P^-1'].residual:.2e}"
                   + (f"; failing: {', '.join(bad)}" if bad else ""))
            diag = ", ".join(f"{k}: {v:.1e}" for k, v in rep.diagnostics.items())
            print(f"INFO  C2 beta={beta} {name} inverse-free duality residuals {diag}")
    elapsed = time.time() - start
    ok_t = elapsed < 300
    report("C2 operator identity suite", ok and ok_t,
           f"failing identities: {', '.join(sorted(failing)) or 'none'}; runtime {elapsed:.1f}s (limit 300s)")
    return ok and ok_t


# ---------------------------------------------------------------------------
# 3. GCD against direct sum


def _bulk_edge(ks: KernelSet) -> float:
    grid = np.linspace(0.0, 12.0, 241)
    rho = np.array([level_density(ks, x) for x in grid])
    return float(grid[np.nonzero(rho > 0.01 * rho.max())[0][-1]])


def criterion_3() -> bool:
    rng = np.random.default_rng(2024)
    ok = True
    for beta in (1, 4):
        for name, V in (("gaussian", GAUSS[beta]), ("quartic", QUARTIC)):
            fam = _family(V, beta, 41)
            for N in (2, 6, 12):
                ks = KernelSet(fam, N)
                edge = 0.8 * _bulk_edge(ks)
                worst = 0.0
                pts = rng.uniform(-edge, edge, (100, 2))
                for x, y in pts:
                    if abs(x - y) < 1e-3:
                        y = x + 0.05
                    d, g = kernel_S_direct(ks, x, y), kernel_S_gcd(ks, x, y)
                    worst = max(worst, abs(g - d) / max(abs(d), 1e-300))
                passed = worst < 1e-6
                ok &= passed
                report(f"C3 beta={beta} {name} N={N}", passed, f"max rel diff {worst:.1e} over 100 pairs (tol 1e-6)")
    return ok


# ---------------------------------------------------------------------------
# 4. reduced Gaussian kernel


def criterion_4() -> bool:
    rng = np.random.default_rng(7)
    ok = True
    N = 6
    for beta in (1, 4):
        fam = _family(GAUSS[beta], beta, 41, "paper-gaussian")
        gcd_set = KernelSet(fam, N, "gcd")
        reduced = KernelSet(fam, N, "gaussian-reduced")
        edge = 0.8 * support_edge(beta, N)
        worst = 0.0
        for x, y in rng.uniform(-edge, edge, (50, 2)):
            if abs(x - y) < 1e-3:
                continue
            g = kernel_S_gcd(gcd_set, x, y)
            worst = max(worst, abs(kernel_S_gaussian_reduced(reduced, x, y) - g) / max(abs(g), 1e-300))
        passed = worst < 1e-8
        ok &= passed
        report(f"C4 beta={beta} N={N} reduced vs GCD", passed, f"max rel diff {worst:.1e} (tol 1e-8)")
    return ok


# ---------------------------------------------------------------------------
# 5. semicircle


def criterion_5() -> bool:
    ok = True
    for beta in (1, 4):
        fam = _family(GAUSS[beta], beta, 2 * 40 + 7, "paper-gaussian")
        devs = []
        for N in (10, 20, 40):
            ks = KernelSet(fam, N)
            edge = support_edge(beta, N)
            peak = semicircle_density(beta, N, 0.0)
            xs = np.linspace(-0.8 * edge, 0.8 * edge, 41)
            dev = max(abs(local_average(lambda t: level_density(ks, t) - semicircle_density(beta, N, t), beta, N, x))
                      for x in xs) / peak
            devs.append(dev)
        passed = devs[-1] <= 0.05 and devs[0] > devs[1] > devs[2]
        ok &= passed
        report(f"C5 beta={beta} semicircle", passed,
               "window-averaged max dev/peak = " + ", ".join(f"{d:.4f}" for d in devs) + " at 2N=20,40,80 (need <=0.05, decreasing)")
    return ok


# ---------------------------------------------------------------------------
# 6. sine kernel


def criterion_6() -> bool:
    ok = True
    for beta in (1, 4):
        dev = sine_kernel_deviation(beta, 500)
        lead = sine_kernel_deviation(beta, 500, mode="leading")
        passed = dev <= 0.02
        ok &= passed
        report(f"C6 beta={beta} sine kernel N=500", passed, f"max deviation {dev:.2e} (tol 0.02); leading-order entries {lead:.2e}")
    return ok


# ---------------------------------------------------------------------------
# 7. Monte Carlo


def criterion_7() -> bool:
    ok = True
    cases = [(1, 4, True), (4, 8, False)]
    for beta, N, with_pair in cases:
        t0 = time.time()
        spectra = sample_spectra(beta, N, 100_000, seed=7)
        t_sample = time.time() - t0
        fam = _family(GAUSS[beta], beta, 2 * N + 7, "paper-gaussian")
        ks = KernelSet(fam, N)
        edge = support_edge(beta, N)
        est = density_histogram(spectra, 20, (-edge - 1.5, edge + 1.5))
        rep = compare(est, analytic_density_grid(lambda x: level_density(ks, x), est.edges))
        passed = rep.passed and t_sample < 60
        ok &= passed
        report(f"C7 beta={beta} {spectra.shape[1]} levels density", passed,
               f"{rep.n_outside}/20 bins beyond 3 sigma (allowed {rep.max_allowed}); chi2 {rep.chi2:.1f}; sampling {t_sample:.1f}s")
        if with_pair:
            window = (-2.0, 2.0)
            pe = pair_histogram(spectra, 20, window, 4.0)
            prep = compare(pe, analytic_pair_grid(lambda x, y: r2(ks, x, y), pe.edges, window))
            ok &= prep.passed
            report(f"C7 beta={beta} {spectra.shape[1]} levels pair (R2)", prep.passed,
                   f"{prep.n_outside}/20 bins beyond 3 sigma (allowed {prep.max_allowed}); chi2 {prep.chi2:.1f}")
    return ok


# ---------------------------------------------------------------------------
# 8. property suites


def criterion_8() -> bool:
    tests_dir = Path(__file__).resolve().parent
    cmd = [sys.executable, "-m", "pytest", "-q", "-m", "property", "-p", "no:cacheprovider", str(tests_dir)]
    proc = subprocess.run(cmd, capture_output=True, text=True, cwd=tests_dir.parent)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    passed = proc.returncode == 0
    report("C8 property suites (pytest -m property)", passed, tail)
    return passed


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 9)])
def test_criterion(criterion):
    assert criterion()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print()
    for line in LINES:
        print(line)
    sys.exit(0 if all(results) else 1)
