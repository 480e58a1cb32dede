"""Dense real polynomials with configurable-precision coefficients.

Coefficients are :class:`gmpy2.mpfr` values; index ``k`` holds the
coefficient of ``x**k``.  All arithmetic for a polynomial runs at its own
precision, so results are deterministic for a given input and bit width.
"""

from __future__ import annotations

import contextlib
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import gmpy2
from gmpy2 import mpfr

PrecisionReal = mpfr

DEFAULT_PRECISION = int(os.environ.get("SKEWCD_PRECISION", "256"))
EXPORT_PRECISION = 53
MIN_PRECISION = 53


@contextlib.contextmanager
def working_precision(bits: int) -> Iterator[None]:
    """Run the enclosed block with ``bits`` of mantissa for new mpfr results."""
    if bits < MIN_PRECISION:
        raise ValueError(f"precision must be >= {MIN_PRECISION} bits, got {bits}")
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        yield


def real(value, precision: int = DEFAULT_PRECISION) -> mpfr:
    """Convert ``value`` (int, float, str, mpq, mpfr) to an mpfr at ``precision``."""
    if isinstance(value, str):
        return mpfr(value.strip(), precision)
    return mpfr(value, precision)


def _trim(coeffs: Sequence[mpfr]) -> tuple[mpfr, ...]:
    n = len(coeffs)
    while n > 1 and coeffs[n - 1] == 0:
        n -= 1
    return tuple(coeffs[:n]) if n else ()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Immutable dense polynomial ``sum(coeffs[k] * x**k)``."""

    coeffs: tuple[mpfr, ...]
    precision: int = DEFAULT_PRECISION

    def __post_init__(self) -> None:
        if self.precision < MIN_PRECISION:
            raise ValueError(f"precision must be >= {MIN_PRECISION} bits")
        converted = [real(c, self.precision) for c in self.coeffs] or [real(0, self.precision)]
        object.__setattr__(self, "coeffs", _trim(converted))

    @classmethod
    def from_values(cls, values: Iterable, precision: int = DEFAULT_PRECISION) -> "Polynomial":
        return cls(tuple(values), precision)

    @classmethod
    def monomial(cls, k: int, precision: int = DEFAULT_PRECISION) -> "Polynomial":
        return cls((0,) * k + (1,), precision)

    @classmethod
    def zero(cls, precision: int = DEFAULT_PRECISION) -> "Polynomial":
        return cls((0,), precision)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> mpfr:
        return self.coeffs[-1]

    def is_zero(self) -> bool:
        return self.degree == 0 and self.coeffs[0] == 0

    def __call__(self, x) -> mpfr:
        return poly_eval(self, x)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, k: int) -> mpfr:
        if k < 0:
            raise IndexError(k)
        return self.coeffs[k] if k < len(self.coeffs) else real(0, self.precision)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __repr__(self) -> str:
        terms = ", ".join(f"{float(c):.6g}" for c in self.coeffs)
        return f"Polynomial([{terms}], precision={self.precision})"

    def _binary(self, other: "Polynomial", sign: int) -> "Polynomial":
        prec = max(self.precision, other.precision)
        n = max(len(self.coeffs), len(other.coeffs))
        with working_precision(prec):
            out = [self[k] + sign * other[k] for k in range(n)]
        return Polynomial(tuple(out), prec)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return self._binary(other, 1)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self._binary(other, -1)

    def __neg__(self) -> "Polynomial":
        return Polynomial(tuple(-c for c in self.coeffs), self.precision)

    def scale(self, factor) -> "Polynomial":
        with working_precision(self.precision):
            f = real(factor, self.precision) if not isinstance(factor, mpfr) else factor
            return Polynomial(tuple(c * f for c in self.coeffs), self.precision)

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            return self.scale(other)
        prec = max(self.precision, other.precision)
        with working_precision(prec):
            out = [real(0, prec)] * (self.degree + other.degree + 1)
            for i, a in enumerate(self.coeffs):
                if a == 0:
                    continue
                for j, b in enumerate(other.coeffs):
                    out[i + j] = out[i + j] + a * b
        return Polynomial(tuple(out), prec)

    __rmul__ = scale

    def derivative(self) -> "Polynomial":
        return poly_derivative(self)

    def shift_mul_x(self) -> "Polynomial":
        return poly_shift_mul_x(self)

    def to_floats(self) -> list[float]:
        return [float(c) for c in self.coeffs]

    def to_json(self) -> dict:
        return {"coeffs": [str(c) for c in self.coeffs]}

    @classmethod
    def from_json(cls, data: dict, precision: int = DEFAULT_PRECISION) -> "Polynomial":
        coeffs = data["coeffs"]
        if not isinstance(coeffs, list) or not coeffs:
            raise ValueError("'coeffs' must be a non-empty list of decimal strings")
        return cls(tuple(real(str(c), precision) for c in coeffs), precision)


def poly_eval(p: Polynomial, x) -> mpfr:
    """Horner evaluation of ``p`` at ``x`` using the polynomial's precision."""
    with working_precision(p.precision):
        xv = x if isinstance(x, mpfr) and x.precision >= p.precision else real(x, p.precision)
        acc = real(0, p.precision)
        for c in reversed(p.coeffs):
            acc = acc * xv + c
        return acc


def poly_derivative(p: Polynomial) -> Polynomial:
    with working_precision(p.precision):
        out = [k * p.coeffs[k] for k in range(1, len(p.coeffs))]
    return Polynomial(tuple(out), p.precision)


def poly_shift_mul_x(p: Polynomial) -> Polynomial:
    if p.is_zero():
        return p
    return Polynomial((real(0, p.precision),) + p.coeffs, p.precision)
