"""Angle representation and extended-precision helpers.

Angles enter either as decimal radians (floats) or as exact rational
multiples of pi (pairs p/q meaning p*pi/q).  In the latter case sines and
their ratios can be evaluated in extended precision (>= 50 decimal digits)
and snapped back to exact rationals by continued fractions; a candidate
rational is accepted only after re-verification at roughly double the
working precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import mpmath as mp

#: working precision (decimal digits) for extended mode
EXT_DPS = 60
#: default continued-fraction denominator bound for rational detection
DENOM_BOUND = 10**6

AngleLike = Union[float, Fraction, tuple]


@dataclass(frozen=True)
class Angle:
    """One turning angle, either float radians or an exact multiple of pi."""

    value: float                      # radians, double precision
    pi_frac: Optional[Fraction] = None  # exact theta/pi if known

    @property
    def exact(self) -> bool:
        return self.pi_frac is not None

    def mp(self) -> mp.mpf:
        """Extended-precision value of the angle in radians."""
        if self.pi_frac is not None:
            return mp.mpf(self.pi_frac.numerator) * mp.pi / self.pi_frac.denominator
        return mp.mpf(self.value)

    def __float__(self) -> float:
        return self.value


def as_angle(x: AngleLike) -> Angle:
    if isinstance(x, Angle):
        return x
    if isinstance(x, Fraction):
        return Angle(float(x) * mp.pi.__float__(), x)
    if isinstance(x, tuple):
        p, q = x
        frac = Fraction(p, q)
        return Angle(float(mp.pi) * p / q, frac)
    return Angle(float(x), None)


def angles_from(seq: Sequence[AngleLike]) -> list[Angle]:
    return [as_angle(x) for x in seq]


def all_exact(angles: Sequence[Angle]) -> bool:
    return all(a.exact for a in angles)


def mp_sin(x: mp.mpf) -> mp.mpf:
    return mp.sin(x)


def snap_rational(x, bound: int = DENOM_BOUND, tol_digits: Optional[int] = None) -> Optional[Fraction]:
    """Rational p/q (q <= bound) approximating x, or None.

    x may be a float or an mpmath value.  Acceptance requires
    |x - p/q| < 10**-tol_digits; by default tol_digits is chosen from the
    working precision with a 10-digit safety margin, so plain doubles only
    snap values that are rational to ~1e-13.
    """
    xm = mp.mpf(x)
    if not mp.isfinite(xm):
        return None
    if tol_digits is None:
        tol_digits = 13 if isinstance(x, float) else max(20, mp.mp.dps - 10)
    # Fraction accepts decimal strings; route through mpmath's printer
    cand = Fraction(mp.nstr(xm, mp.mp.dps, strip_zeros=False)).limit_denominator(bound)
    if abs(xm - mp.mpf(cand.numerator) / cand.denominator) < mp.mpf(10) ** (-tol_digits):
        return cand
    return None


def is_integer_value(x, tol_digits: Optional[int] = None) -> Optional[int]:
    """Integer nearest to x if x is within tolerance of it, else None."""
    xm = mp.mpf(x)
    if tol_digits is None:
        tol_digits = 13 if isinstance(x, float) else max(20, mp.mp.dps - 10)
    n = int(mp.nint(xm))
    if abs(xm - n) < mp.mpf(10) ** (-tol_digits):
        return n
    return None


class extended_precision:
    """Context manager setting mpmath precision for extended mode."""

    def __init__(self, dps: int = EXT_DPS):
        self.dps = dps
        self._saved = None

    def __enter__(self):
        self._saved = mp.mp.dps
        mp.mp.dps = max(mp.mp.dps, self.dps)
        return mp

    def __exit__(self, *exc):
        mp.mp.dps = self._saved
        return False
