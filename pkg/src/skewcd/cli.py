"""Command-line pipeline: build -> check-operators -> kernel/density -> sample -> compare.

Exit codes: 0 success, 2 input or validation error, 3 check failed,
4 numerical failure.  Every output file gets a sibling
``<name>.manifest.json`` recording the command, parameters and seeds.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .polybasis import DEFAULT_PRECISION
from .skewproduct import Potential, PotentialError, QuadratureError

EXIT_OK, EXIT_INPUT, EXIT_CHECK, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST_SCHEMA = "skewcd.manifest/1"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers


def _load_json_arg(text: str) -> object:
    path = Path(text)
    if not text.lstrip().startswith(("{", "[")) and path.exists():
        text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid JSON: {exc}") from exc


def _potential(args) -> Potential:
    if getattr(args, "potential", None):
        return Potential.from_json(_load_json_arg(args.potential))
    return Potential((0, 1)) if args.beta == 1 else Potential((0, 2))


def _write_manifest(args, outputs: list[Path], started: float, extra: dict | None = None) -> None:
    params = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "tool": "skewcd",
        "version": __version__,
        "command": args.command,
        "parameters": params,
        "seeds": {"seed": params.get("seed"), "stream": params.get("stream")},
        "precision": params.get("precision") or DEFAULT_PRECISION,
        "outputs": [str(p) for p in outputs],
        "started_utc": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    for out in outputs:
        Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def _load_family(path: str):
    from .sopfamily import SopFamily

    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return SopFamily.from_json(data)
    except FileNotFoundError as exc:
        raise CliError(f"family file not found: {path}") from exc
    except (json.JSONDecodeError, ValueError, TypeError, KeyError) as exc:
        raise CliError(f"corrupted family file {path}: {exc}") from exc


def _family_for(args, N: int):
    """Load ``--family`` or build a family large enough for rank 2N."""
    from .operators import bw_margin
    from .sopfamily import build_sop

    if getattr(args, "family", None):
        fam = _load_family(args.family)
        if fam.beta != args.beta and args.beta is not None and args.beta_given:
            raise CliError("--beta does not match the family file")
        return fam
    V = _potential(args)
    n_max = 2 * N + bw_margin(V.d)
    n_max += 1 - n_max % 2
    gaussian = V == (Potential((0, 1)) if args.beta == 1 else Potential((0, 2)))
    norm = "paper-gaussian" if gaussian else "monic"
    return build_sop(V, args.beta, n_max, norm, args.precision or DEFAULT_PRECISION)


def _grid(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 1:
        raise CliError("grid size must be >= 1")
    return np.linspace(lo, hi, n)


def _write_rows(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(float(v)) for k, v in row.items()})


# ---------------------------------------------------------------------------
# commands


def cmd_build(args) -> int:
    from .sopfamily import PrecisionLossError, build_sop

    started = time.time()
    V = _potential(args)
    try:
        fam = build_sop(V, args.beta, args.nmax, args.normalization, args.precision or DEFAULT_PRECISION)
    except PrecisionLossError as exc:
        raise CliError(f"precision failure: {exc}", EXIT_INPUT) from exc
    out = Path(args.out)
    _write_json(out, fam.to_json())
    _write_manifest(args, [out], started)
    print(f"wrote {out} (beta={fam.beta}, n_max={fam.n_max}, ghat_0={float(fam.ghat[0]):.15g})")
    return EXIT_OK


def cmd_check_operators(args) -> int:
    from .operators import build_operators, check_identities

    started = time.time()
    fam = _load_family(args.family)
    try:
        Q, P, R = build_operators(fam, args.M)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    report = check_identities(Q, P, R)
    out = Path(args.out)
    data = report.to_json()
    data.update({"beta": fam.beta, "potential": fam.potential.to_json()["u"], "M": args.M})
    _write_json(out, data)
    _write_manifest(args, [out], started)
    for r in report.results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.identity:<22s} residual={r.residual:.3e} tol={r.tolerance:.0e}")
    print(f"bandwidths P={report.upper_bandwidths['P']} R={report.upper_bandwidths['R']}")
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_kernel(args) -> int:
    from .asymptotics import asymptotic_kernel, asymptotic_density
    from .kernels import KernelSet, kernel_D, kernel_I, r2

    started = time.time()
    xs = _grid(args.xmin, args.xmax, args.nx)
    ys = _grid(args.ymin, args.ymax, args.ny)
    rows = []
    if args.method == "asymptotic":
        V = _potential(args)
        if not V.is_quadratic:
            raise CliError("asymptotic kernel requires a Gaussian potential")
        for x in xs:
            for y in ys:
                s = asymptotic_density(args.beta, args.N, x) if x == y else asymptotic_kernel(args.beta, args.N, x, y)
                rows.append({"x": x, "y": y, "S": s})
    else:
        fam = _family_for(args, args.N)
        if args.method == "gaussian-reduced" and not fam.potential.is_quadratic:
            raise CliError("gaussian-reduced method requires a quadratic (Gaussian) potential")
        try:
            ks = KernelSet(fam, args.N, args.method)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        for x in xs:
            for y in ys:
                rows.append({"x": x, "y": y, "S": ks.S(x, y), "D": kernel_D(ks, x, y),
                             "I": kernel_I(ks, x, y), "R2": r2(ks, x, y)})
    out = Path(args.out)
    _write_rows(rows, out)
    _write_manifest(args, [out], started, {"N": args.N, "beta": args.beta, "method": args.method})
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def cmd_density(args) -> int:
    from .asymptotics import semicircle_density, support_edge
    from .kernels import KernelSet, level_density

    started = time.time()
    edge = support_edge(args.beta, args.N)
    lo = -1.2 * edge if args.xmin is None else args.xmin
    hi = 1.2 * edge if args.xmax is None else args.xmax
    xs = _grid(lo, hi, args.nx)
    rows = []
    if args.method == "asymptotic":
        for x in xs:
            rows.append({"x": x, "rho": semicircle_density(args.beta, args.N, x)})
    else:
        fam = _family_for(args, args.N)
        try:
            ks = KernelSet(fam, args.N, args.method)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        for x in xs:
            rho = level_density(ks, x) if args.method == "direct" else ks.S(x, x)
            rows.append({"x": x, "rho": rho, "semicircle": semicircle_density(args.beta, args.N, x)})
    out = Path(args.out)
    _write_rows(rows, out)
    _write_manifest(args, [out], started, {"N": args.N, "beta": args.beta, "method": args.method})
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .rmtmc import sample_spectra

    started = time.time()
    if args.dim < 2 or args.dim % 2:
        raise CliError("--dim must be an even integer >= 2 (dimension 2N)")
    N = args.dim // 2
    spectra = sample_spectra(args.beta, N, args.samples, args.seed, args.method, args.stream)
    out = Path(args.out)
    header = ",".join(["sample"] + [f"x{i}" for i in range(spectra.shape[1])])
    # repr() gives the shortest round-trip decimal, so the file is bit-exact
    lines = [f"{k}," + ",".join(map(repr, row)) for k, row in enumerate(spectra.tolist())]
    out.write_text(header + "\n" + "\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(args, [out], started, {"N": N, "n_levels": spectra.shape[1]})
    print(f"wrote {spectra.shape[0]} spectra ({spectra.shape[1]} levels) to {out}")
    return EXIT_OK


def _read_spectra(path: str) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise CliError(f"spectra file not found: {path}") from exc
    if len(rows) < 2:
        raise CliError("spectra file is empty")
    try:
        return np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise CliError(f"malformed spectra file: {exc}") from exc


def cmd_compare(args) -> int:
    from .asymptotics import support_edge
    from .kernels import KernelSet, level_density, r2
    from .rmtmc import analytic_density_grid, analytic_pair_grid, compare, density_histogram, pair_histogram

    started = time.time()
    spectra = _read_spectra(args.spectra)
    N = args.dim // 2
    levels = 2 * N if args.beta == 1 else N
    if spectra.shape[1] != levels:
        raise CliError(f"spectra have {spectra.shape[1]} levels, expected {levels} for beta={args.beta}, dim={args.dim}")
    fam = _family_for(args, N)
    ks = KernelSet(fam, N)
    edge = support_edge(args.beta, N)
    if args.kind == "density":
        lo, hi = (-edge - 1.0, edge + 1.0) if args.range is None else args.range
        est = density_histogram(spectra, args.bins, (lo, hi))
        grid = analytic_density_grid(lambda x: level_density(ks, x), est.edges)
    else:
        window = tuple(args.window) if args.window else (-edge / 2, edge / 2)
        s_max = args.s_max if args.s_max else edge
        est = pair_histogram(spectra, args.bins, window, s_max)
        grid = analytic_pair_grid(lambda x, y: r2(ks, x, y), est.edges, window)
    report = compare(est, grid)
    out = Path(args.out)
    data = report.to_json()
    data.update({"kind": args.kind, "beta": args.beta, "dim": args.dim, "n_samples": int(spectra.shape[0])})
    _write_json(out, data)
    if args.hist_out:
        est.write_csv(args.hist_out)
    outputs = [out] + ([Path(args.hist_out)] if args.hist_out else [])
    _write_manifest(args, outputs, started)
    print(f"{'PASS' if report.passed else 'FAIL'}: {report.n_outside} of {len(report.z)} bins beyond 3 sigma "
          f"(allowed {report.max_allowed}), chi2={report.chi2:.2f}")
    return EXIT_OK if report.passed else EXIT_CHECK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--precision", type=int, default=None, help="working precision in bits (default $SKEWCD_PRECISION or 256)")
    p.add_argument("--threads", type=int, default=1, help="worker cap (computations are single-threaded)")


def _add_family_source(p: argparse.ArgumentParser, beta_required: bool = False) -> None:
    p.add_argument("--family", help="family JSON from 'build'")
    p.add_argument("--beta", type=int, choices=(1, 4), default=None if beta_required else 1)
    p.add_argument("--potential", help='potential JSON, e.g. \'{"u":[0,1]}\' (default: Gaussian for beta)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewcd", description="Skew-orthogonal polynomials and beta=1,4 kernels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="construct a skew-orthogonal family")
    p.add_argument("--beta", type=int, choices=(1, 4), required=True)
    p.add_argument("--potential", required=True)
    p.add_argument("--nmax", type=int, required=True)
    p.add_argument("--normalization", choices=("monic", "paper-gaussian"), default="monic")
    p.add_argument("--out", default="family.json")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("check-operators", help="build Q, P, R and check identities")
    p.add_argument("--family", required=True)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--out", default="operators_report.json")
    _add_common(p)
    p.set_defaults(func=cmd_check_operators)

    p = sub.add_parser("kernel", help="evaluate S, D, I, R2 on an (x, y) grid")
    _add_family_source(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--method", choices=("direct", "gcd", "gaussian-reduced", "asymptotic"), default="direct")
    p.add_argument("--xmin", type=float, default=-1.0)
    p.add_argument("--xmax", type=float, default=1.0)
    p.add_argument("--nx", type=int, default=11)
    p.add_argument("--ymin", type=float, default=-0.95)
    p.add_argument("--ymax", type=float, default=1.05)
    p.add_argument("--ny", type=int, default=11)
    p.add_argument("--out", default="kernel.csv")
    _add_common(p)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("density", help="level density on a grid")
    _add_family_source(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--method", choices=("direct", "gcd", "asymptotic"), default="direct")
    p.add_argument("--xmin", type=float, default=None)
    p.add_argument("--xmax", type=float, default=None)
    p.add_argument("--nx", type=int, default=201)
    p.add_argument("--out", default="density.csv")
    _add_common(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("sample", help="Monte Carlo spectra")
    p.add_argument("--beta", type=int, choices=(1, 4), required=True)
    p.add_argument("--dim", type=int, required=True, help="matrix dimension 2N")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--method", choices=("tridiagonal", "dense"), default="tridiagonal")
    p.add_argument("--out", default="spectra.csv")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("compare", help="compare sampled spectra with the finite-N kernel")
    _add_family_source(p)
    p.add_argument("--spectra", required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--kind", choices=("density", "pair"), default="density")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--range", type=float, nargs=2, default=None)
    p.add_argument("--window", type=float, nargs=2, default=None)
    p.add_argument("--s-max", dest="s_max", type=float, default=None)
    p.add_argument("--hist-out", dest="hist_out", default=None)
    p.add_argument("--out", default="compare_report.json")
    _add_common(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    args.beta_given = "--beta" in argv
    if getattr(args, "family", None) and not args.beta_given and args.command != "check-operators":
        args.beta = _load_family(args.family).beta
    if args.precision is not None and args.precision < 53:
        print("error: --precision must be >= 53", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (PotentialError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, QuadratureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
