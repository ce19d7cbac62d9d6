"""Concrete planar polygon geometry.

An N-gon with clockwise labelling is described by turning angles theta_k and
signed side lengths lambda_k: the k-th side vector is lambda_k * e^{-i phi_k}
with phi_k = theta_1 + ... + theta_k.  Closure reads

    sum_k lambda_k e^{-i phi_k} = 0,

which determines lambda_{N-1}, lambda_N linearly from the first N-2 lengths.
The signed area is the quadratic form handled in ngontheta.quadform; this
module owns the direct cross-product area, the simple/complex/degenerate
classification, and the single-parameter deformation of the area when one
side length is varied with all angles fixed.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import errors
from .precision import Angle, AngleLike, angles_from

#: absolute closure tolerance, scaled by max|lambda|
CLOSURE_TOL = 1e-9

#: tolerance below which an angle sum differing from 2*pi is still flagged
ANGLE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class AngleVector:
    """Turning angles of an N-gon plus their cumulative sums.

    The angle sum being 2*pi is checked but treated as a warning only
    (`sum_is_two_pi`); every formula downstream is well defined without it.
    """

    angles: tuple[Angle, ...]
    positivity: bool = False  # require theta_k in (0, pi)

    def __post_init__(self):
        n = len(self.angles)
        if n < 3:
            raise errors.DegenerateInput(f"need N >= 3 angles, got {n}")
        for k, a in enumerate(self.angles):
            v = float(a)
            if v == 0.0:
                raise errors.ZeroAngle(f"theta_{k + 1} = 0")
            if abs(v) >= math.pi:
                raise errors.AngleOutOfRange(f"|theta_{k + 1}| >= pi")
            if self.positivity and v <= 0.0:
                raise errors.AngleOutOfRange(f"theta_{k + 1} <= 0 in positivity mode")

    @classmethod
    def make(cls, thetas: Sequence[AngleLike], positivity: bool = False) -> "AngleVector":
        return cls(tuple(angles_from(thetas)), positivity)

    @property
    def N(self) -> int:
        return len(self.angles)

    @property
    def theta(self) -> list[float]:
        return [float(a) for a in self.angles]

    @property
    def phi(self) -> list[float]:
        return cumulative_angles(self.theta)

    @property
    def sum_is_two_pi(self) -> bool:
        return abs(sum(self.theta) - 2.0 * math.pi) < ANGLE_SUM_TOL

    @property
    def exact(self) -> bool:
        return all(a.exact for a in self.angles)

    def rotated(self, shift: int) -> "AngleVector":
        """Cyclic relabelling: new theta_j = old theta_{j+shift}."""
        n = self.N
        s = shift % n
        return AngleVector(self.angles[s:] + self.angles[:s], self.positivity)


@dataclass(frozen=True)
class SideVector:
    """Full list of N signed side lengths (independent part first)."""

    lam: tuple[float, ...]

    @property
    def N(self) -> int:
        return len(self.lam)

    def independent(self) -> tuple[float, ...]:
        return self.lam[: self.N - 2]


@dataclass(frozen=True)
class PolygonClass:
    """Classification tag: SimpleConvex / SimpleNonConvex / Complex / DegenerateLowerGon(n)."""

    tag: str
    lower_n: Optional[int] = None

    def __str__(self) -> str:
        if self.tag == "DegenerateLowerGon":
            return f"DegenerateLowerGon({self.lower_n})"
        return self.tag


def cumulative_angles(theta: Sequence[float]) -> list[float]:
    """phi_k = theta_1 + ... + theta_k, validating the angle constraints."""
    if len(theta) < 3:
        raise errors.DegenerateInput("need at least 3 angles")
    out, acc = [], 0.0
    for k, t in enumerate(theta):
        t = float(t)
        if t == 0.0:
            raise errors.ZeroAngle(f"theta_{k + 1} = 0")
        if abs(t) >= math.pi:
            raise errors.AngleOutOfRange(f"|theta_{k + 1}| >= pi")
        acc += t
        out.append(acc)
    return out


def _vw(angles: AngleVector) -> tuple[list[float], list[float]]:
    """Coefficient vectors expressing lambda_{N-1}, lambda_N via the closure relation.

    v_j = -sin(phi_N - phi_j)/sin(theta_N), w_j = sin(phi_{N-1} - phi_j)/sin(theta_N).
    """
    n = angles.N
    phi = angles.phi
    s_n = math.sin(float(angles.angles[-1]))
    if abs(s_n) < 1e-15:
        raise errors.DegenerateAngle("sin(theta_N) = 0")
    v = [-math.sin(phi[n - 1] - phi[j]) / s_n for j in range(n - 2)]
    w = [math.sin(phi[n - 2] - phi[j]) / s_n for j in range(n - 2)]
    return v, w


def dependent_lengths(angles: AngleVector, lam_ind: Sequence[float]) -> tuple[float, float]:
    """(lambda_{N-1}, lambda_N) = (v^T lambda, w^T lambda) from the closure relation."""
    if len(lam_ind) != angles.N - 2:
        raise errors.DegenerateInput(f"expected {angles.N - 2} independent lengths")
    v, w = _vw(angles)
    return (
        sum(vj * lj for vj, lj in zip(v, lam_ind)),
        sum(wj * lj for wj, lj in zip(w, lam_ind)),
    )


def full_sides(angles: AngleVector, lam_ind: Sequence[float]) -> SideVector:
    """Extend independent lengths to all N sides via dependent_lengths."""
    l1, l2 = dependent_lengths(angles, lam_ind)
    return SideVector(tuple(float(x) for x in lam_ind) + (l1, l2))


def vertices(angles: AngleVector, lam_full: Sequence[float]) -> list[complex]:
    """Vertices as partial sums of lambda_k e^{-i phi_k} starting at the origin.

    Returns N points; the closure residual (distance of the final partial sum
    from the origin) is reported separately by closure_residual().
    """
    if len(lam_full) != angles.N:
        raise errors.DegenerateInput("need all N side lengths")
    phi = angles.phi
    pts, z = [], 0j
    for k in range(angles.N):
        pts.append(z)
        z += lam_full[k] * cmath.exp(-1j * phi[k])
    return pts


def closure_residual(angles: AngleVector, lam_full: Sequence[float]) -> float:
    phi = angles.phi
    z = sum(lam_full[k] * cmath.exp(-1j * phi[k]) for k in range(angles.N))
    return abs(z)


def _require_closed(angles: AngleVector, lam_full: Sequence[float]) -> None:
    scale = max((abs(x) for x in lam_full), default=1.0) or 1.0
    res = closure_residual(angles, lam_full)
    if res > CLOSURE_TOL * max(1.0, scale):
        raise errors.NotClosed(f"closure residual {res:.3e}")


def signed_area_direct(angles: AngleVector, lam_full: Sequence[float]) -> float:
    """Signed area via the cross-product triangle fan from vertex 1.

    Equals (1/2) sum_{j<k<=N-1} sin(phi_k - phi_j) lambda_j lambda_k for a
    closed polygon.
    """
    _require_closed(angles, lam_full)
    phi = angles.phi
    n = angles.N
    total = 0.0
    for j in range(n - 1):
        for k in range(j + 1, n - 1):
            total += math.sin(phi[k] - phi[j]) * lam_full[j] * lam_full[k]
    return 0.5 * total


def _segments(angles: AngleVector, lam_full: Sequence[float]) -> list[tuple[complex, complex]]:
    pts = vertices(angles, lam_full)
    n = len(pts)
    return [(pts[k], pts[(k + 1) % n]) for k in range(n)]


def _seg_intersect(a: complex, b: complex, c: complex, d: complex, eps: float = 1e-12) -> bool:
    """Proper intersection test for open segments (shared endpoints excluded)."""

    def cross(u: complex, v: complex) -> float:
        return u.real * v.imag - u.imag * v.real

    r, s = b - a, d - c
    denom = cross(r, s)
    qp = c - a
    if abs(denom) < eps * (abs(r) * abs(s) + 1e-300):
        return False  # parallel; overlap handled as non-simple elsewhere
    t = cross(qp, s) / denom
    u = cross(qp, r) / denom
    return eps < t < 1 - eps and eps < u < 1 - eps


def _brute_force_complex(angles: AngleVector, lam_full: Sequence[float]) -> bool:
    segs = _segments(angles, lam_full)
    n = len(segs)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # consecutive cyclically
            if _seg_intersect(*segs[i], *segs[j]):
                return True
    return False


def _appendix_complex(angles: AngleVector, lam_full: Sequence[float]) -> bool:
    """Non-simplicity test: exists k, t in (0,1] with
    t*lambda_{k-1} sin(theta_k + theta_{k+1}) + lambda_k sin(theta_{k+1}) = 0."""
    th = angles.theta
    n = angles.N
    for k in range(n):
        km1, kp1 = (k - 1) % n, (k + 1) % n
        a = lam_full[km1] * math.sin(th[k] + th[kp1])
        b = lam_full[k] * math.sin(th[kp1])
        if abs(a) < 1e-14:
            if abs(b) < 1e-14:
                return True
            continue
        t = -b / a
        if 1e-12 < t <= 1.0 + 1e-12:
            return True
    return False


def _convexity_sign(angles: AngleVector, lam_full: Sequence[float]) -> Optional[int]:
    """+1/-1 if all edge-frame partial-sum cross products share that sign, else None."""
    th = angles.theta
    n = angles.N
    sign = 0
    for k in range(n):
        acc = 0j
        ang = 0.0
        for m in range(n - 2):
            ang += th[(k + m) % n]
            acc += lam_full[(k + m) % n] * cmath.exp(-1j * ang)
            c = -acc.imag  # cross(acc, e^{0}) = Im(conj(acc) * 1) sign convention
            if abs(c) < 1e-12:
                return None
            s = 1 if c > 0 else -1
            if sign == 0:
                sign = s
            elif s != sign:
                return None
    return sign


def classify(angles: AngleVector, lam_full: Sequence[float]) -> PolygonClass:
    """Classify a closed polygon with the given side data.

    Order of precedence: degenerate (some lambda_k = 0) -> complex (Appendix
    condition, cross-checked by brute-force segment intersection) -> simple
    convex / simple non-convex.
    """
    _require_closed(angles, lam_full)
    zeros = sum(1 for x in lam_full if abs(x) < 1e-13)
    if zeros > 0:
        return PolygonClass("DegenerateLowerGon", angles.N - zeros)
    if _appendix_complex(angles, lam_full):
        return PolygonClass("Complex")
    if _convexity_sign(angles, lam_full) is not None:
        return PolygonClass("SimpleConvex")
    # the Appendix condition is authoritative for complexity; remaining
    # polygons are simple but not convex
    return PolygonClass("SimpleNonConvex")


def deformed_area(angles: AngleVector, k: int, lam_k: float, q0: float) -> float:
    """Signed area after pushing side k to length lam_k with fixed angles.

        -sin(theta_k) sin(theta_{k+1}) / (2 sin(theta_k + theta_{k+1})) * lam_k^2 + Q0

    (1-based k; requires theta_k + theta_{k+1} not a multiple of pi).
    """
    th = angles.theta
    n = angles.N
    if not 1 <= k <= n:
        raise errors.DegenerateInput("k out of range")
    tk = th[k - 1]
    tk1 = th[k % n]
    s = math.sin(tk + tk1)
    if abs(s) < 1e-14:
        raise errors.DegenerateAngleSum("sin(theta_k + theta_{k+1}) = 0")
    return -math.sin(tk) * math.sin(tk1) / (2.0 * s) * lam_k * lam_k + q0
