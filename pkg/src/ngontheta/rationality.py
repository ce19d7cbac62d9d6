"""Integrality and rationality certificates for the angle data.

Two conditions are decided here.  The strict one asks for scalings
epsilon_k of all N side lengths such that integrality of any N-2 consecutive
scaled lengths forces integrality of the remaining two; it is equivalent to
the consistency constraint on the products

    b_{2k} = prod_{j<=k} sin(theta_{2j-1}) / sin(theta_{2j})

together with integrality of the entries of U = P^{-1} M S.  The relaxed one
only fixes the first N-2 lengths as independent parameters and is equivalent
to rationality of the ratios

    (v_k w_j) / (v_j w_k)  for 1 <= j,k <= N-2,

in which case column scalings make U = P^{-1} M S a primitive 2x(N-2) integer
matrix with S^T A S integral: the certificate produced by solve_primitive.

All detection runs in extended precision; a continued-fraction candidate is
accepted only after re-verification at roughly doubled precision (for angles
given as rational multiples of pi this is a >100-digit confirmation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Optional, Sequence

import mpmath as mp
import numpy as np

from . import errors
from .polygon import AngleVector
from .precision import DENOM_BOUND, EXT_DPS, extended_precision, is_integer_value, snap_rational

_VERIFY_DPS = 2 * EXT_DPS + 40


@dataclass(frozen=True)
class RationalityReport:
    strict_ok: bool
    relaxed_ok: bool
    witnesses: list = field(default_factory=list)   # (j, k, Fraction or "inf")
    failures: list = field(default_factory=list)    # (label, j, k) index pairs


@dataclass(frozen=True)
class ScalingSolution:
    """Certificate: epsilon scalings, ratio t, integral U and S^T A S."""

    epsilons: list          # N floats, all nonzero
    t: Fraction             # epsilon_{N-1} / epsilon_N, > 0
    xs: list                # x_k = epsilon_k / epsilon_{N-1}, floats
    bs: list                # b_{2k} values
    U: list                 # 2 x (N-2) integer matrix (rows)
    SAS: list               # (N-2) x (N-2) integer matrix (rows)
    denominator_bound: int = DENOM_BOUND

    @property
    def N(self) -> int:
        return len(self.epsilons)

    @property
    def dim(self) -> int:
        return self.N - 2

    def lattice_functionals(self) -> list[tuple[int, ...]]:
        """Integer row vectors u_k with lambda_k proportional to u_k . n
        in scaled coordinates: e_k for k <= N-2, then the two rows of U."""
        d = self.dim
        rows = [tuple(1 if i == j else 0 for i in range(d)) for j in range(d)]
        rows.append(tuple(self.U[0]))
        rows.append(tuple(self.U[1]))
        return rows

    def relabel_lattice_factor(self, shift: int) -> Fraction:
        """Index factor of the sub-lattice describing the same polygons in the
        parameters shifted by `shift` (1 for a full lattice)."""
        from . import ratlin

        rows = self.lattice_functionals()
        d = self.dim
        T = ratlin.mat([rows[(j + shift) % self.N] for j in range(d)])
        dt = ratlin.det(T)
        if dt == 0:
            raise errors.ParallelSidesDependence(f"shift {shift} degenerate")
        return abs(dt)

    def to_dict(self) -> dict:
        return {
            "epsilons": self.epsilons,
            "t": [self.t.numerator, self.t.denominator],
            "U": self.U,
            "SAS": self.SAS,
            "denominator_bound": self.denominator_bound,
        }


def _mp_angle_data(angles: AngleVector, dps: int):
    th = [a.mp() for a in angles.angles]
    phi = []
    acc = mp.mpf(0)
    for t in th:
        acc += t
        phi.append(acc)
    return th, phi


def b_even(angles: AngleVector, k: int) -> float:
    """b_{2k} = prod_{j<=k} sin(theta_{2j-1})/sin(theta_{2j}); needs 2k <= N."""
    if not 1 <= 2 * k <= angles.N:
        raise errors.DegenerateInput(f"need 2 <= 2k <= N, got k={k}")
    th = angles.theta
    out = 1.0
    for j in range(1, k + 1):
        s = math.sin(th[2 * j - 1])
        if abs(s) < 1e-15:
            raise errors.DegenerateAngle(f"sin(theta_{2 * j}) = 0")
        out *= math.sin(th[2 * j - 2]) / s
    return out


def _mp_b_even(th, k) -> mp.mpf:
    out = mp.mpf(1)
    for j in range(1, k + 1):
        s = mp.sin(th[2 * j - 1])
        if s == 0:
            raise errors.DegenerateAngle(f"sin(theta_{2 * j}) = 0")
        out *= mp.sin(th[2 * j - 2]) / s
    return out


def _snap_verified(value_fn, bound: int) -> Optional[Fraction]:
    """Snap value_fn(dps) to a rational at EXT_DPS, confirm at _VERIFY_DPS."""
    with extended_precision(EXT_DPS):
        cand = snap_rational(value_fn(), bound)
    if cand is None:
        return None
    with extended_precision(_VERIFY_DPS):
        hi = value_fn()
        if abs(hi - mp.mpf(cand.numerator) / cand.denominator) < mp.mpf(10) ** (-(_VERIFY_DPS - 20)):
            return cand
    return None


def _vw_extended(angles: AngleVector):
    n = angles.N
    th, phi = _mp_angle_data(angles, mp.mp.dps)
    s_n = mp.sin(th[-1])
    if s_n == 0:
        raise errors.DegenerateAngle("sin(theta_N) = 0")
    v = [-mp.sin(phi[n - 1] - phi[j]) / s_n for j in range(n - 2)]
    w = [mp.sin(phi[n - 2] - phi[j]) / s_n for j in range(n - 2)]
    return th, phi, v, w, s_n


def check_relaxed(angles: AngleVector, bound: int = DENOM_BOUND) -> RationalityReport:
    """Decide rationality of (v_k w_j)/(v_j w_k) for all 1 <= j,k <= N-2."""
    n = angles.N
    witnesses, failures = [], []
    ok = True
    zero_tol = lambda: mp.mpf(10) ** (-(mp.mp.dps - 10))
    for j in range(n - 2):
        for k in range(n - 2):
            if j == k:
                continue

            def ratio(j=j, k=k):
                _, _, v, w, _ = _vw_extended(angles)
                den = v[j] * w[k]
                num = v[k] * w[j]
                if abs(den) < zero_tol():
                    return mp.inf if abs(num) > zero_tol() else mp.mpf(0)
                return num / den

            with extended_precision(EXT_DPS):
                r = ratio()
            if r == mp.inf:
                witnesses.append((j + 1, k + 1, "inf"))
                continue
            cand = _snap_verified(lambda j=j, k=k: ratio(j, k), bound)
            if cand is None:
                ok = False
                failures.append(("ratio", j + 1, k + 1))
            else:
                witnesses.append((j + 1, k + 1, cand))
    strict = check_strict(angles, bound, _relaxed_precomputed=ok) if ok else None
    strict_ok = bool(strict and strict[0].strict_ok) if ok else False
    return RationalityReport(strict_ok=strict_ok, relaxed_ok=ok,
                             witnesses=witnesses, failures=failures)


def _strict_entries(angles: AngleVector, t: mp.mpf):
    """All 2N entries of the matrix U_script = P^{-1} M S for the strict
    normalization x_1 = sin(theta_N)/sin(theta_1) and the given t."""
    n = angles.N
    th, phi, v, w, s_n = _vw_extended(angles)
    # extended v, w at indices N-1, N
    v_ext = list(v) + [mp.mpf(-1), mp.mpf(0)]
    w_ext = list(w) + [mp.mpf(0), mp.mpf(-1)]
    x = [mp.mpf(0)] * (n + 1)  # 1-based
    x[1] = s_n / mp.sin(th[0])
    for idx in range(2, n - 1):
        if idx % 2 == 0:
            b = _mp_b_even(th, idx // 2)
            x[idx] = b / (t * x[1]) * s_n / mp.sin(th[0])
        else:
            b = _mp_b_even(th, (idx - 1) // 2)
            x[idx] = x[1] / b * mp.sin(th[0]) / mp.sin(th[idx - 1])
    x[n - 1] = mp.mpf(1)
    x[n] = 1 / t
    row1 = [v_ext[k - 1] * x[k] for k in range(1, n + 1)]
    row2 = [t * w_ext[k - 1] * x[k] for k in range(1, n + 1)]
    return x, row1, row2


def check_strict(angles: AngleVector, bound: int = DENOM_BOUND,
                 _relaxed_precomputed: Optional[bool] = None
                 ) -> tuple[RationalityReport, Optional[ScalingSolution]]:
    """Decide the strict condition and produce epsilon scalings on success.

    For N odd, t = b_{N-1} is forced; for N even the consistency constraint is
    b_N = 1 and t is a free positive parameter searched over snapped rational
    candidates derived from the t-carrying entries.
    """
    n = angles.N
    failures: list = []
    with extended_precision(EXT_DPS):
        th, phi, v, w, s_n = _vw_extended(angles)
        if n % 2 == 1:
            t_candidates = [_mp_b_even(th, (n - 1) // 2)]
        else:
            b_n = _mp_b_even(th, n // 2)
            if is_integer_value(b_n - 1, EXT_DPS - 15) != 0:
                failures.append(("consistency", n, 0))
                rep = RationalityReport(False, _check_relaxed_flag(angles, _relaxed_precomputed, bound),
                                        [], failures)
                return rep, None
            t_candidates = _even_t_candidates(angles, bound)
        sol = None
        for t in t_candidates:
            if t == 0:
                continue
            x, row1, row2 = _strict_entries(angles, t)
            ints1 = [is_integer_value(e, EXT_DPS - 15) for e in row1]
            ints2 = [is_integer_value(e, EXT_DPS - 15) for e in row2]
            if all(i is not None for i in ints1 + ints2):
                sol = (t, x, ints1, ints2)
                break
        if sol is None:
            _, row1, row2 = _strict_entries(angles, t_candidates[0] or mp.mpf(1))
            for k, e in enumerate(row1):
                if is_integer_value(e, EXT_DPS - 15) is None:
                    failures.append(("U1", 1, k + 1))
            for k, e in enumerate(row2):
                if is_integer_value(e, EXT_DPS - 15) is None:
                    failures.append(("U2", 2, k + 1))
            rep = RationalityReport(False, _check_relaxed_flag(angles, _relaxed_precomputed, bound),
                                    [], failures)
            return rep, None
        t, x, ints1, ints2 = sol
        t_frac = snap_rational(t, bound * bound)
        if t_frac is None or t_frac <= 0:
            # irrational but consistent t (N odd): keep a float certificate
            t_frac = Fraction(float(t)).limit_denominator(bound * bound)
        eps_n1 = mp.sqrt(abs(t) / s_n)
        eps = [float(x[k] * eps_n1) for k in range(1, n - 1)]
        eps += [float(eps_n1), float(eps_n1 / t)]
        U = [[int(i) for i in ints1[: n - 2]], [int(i) for i in ints2[: n - 2]]]
        SAS = _sas_from_U(U)
        scaling = ScalingSolution(
            epsilons=eps, t=t_frac, xs=[float(x[k]) for k in range(1, n + 1)],
            bs=[b_even(angles, k) for k in range(1, n // 2 + 1)],
            U=U, SAS=SAS, denominator_bound=bound)
    _validate_scaling(angles, scaling)
    rep = RationalityReport(True, True, [], [])
    return rep, scaling


def _check_relaxed_flag(angles, precomputed, bound) -> bool:
    if precomputed is not None:
        return precomputed
    return check_relaxed(angles, bound).relaxed_ok


def _even_t_candidates(angles: AngleVector, bound: int) -> list:
    """Positive t candidates for even N: ratios that clear the t-carrying
    entries of U_script, plus 1."""
    n = angles.N
    cands = [mp.mpf(1)]
    x, row1, row2 = _strict_entries(angles, mp.mpf(1))
    # row1 even columns scale like 1/t, row2 odd columns like t
    for k in range(1, n + 1):
        e = row1[k - 1] if k % 2 == 0 else row2[k - 1]
        if abs(e) > mp.mpf(10) ** (-(mp.mp.dps - 10)):
            for m in range(1, 9):
                cands.append(abs(e) / m)
                cands.append(m / abs(e))
    return cands


def _sas_from_U(U: list) -> list:
    d = len(U[0])
    return [[U[0][min(j, k)] * U[1][max(j, k)] for k in range(d)] for j in range(d)]


def solve_primitive(angles: AngleVector, bound: int = DENOM_BOUND) -> ScalingSolution:
    """Scaling certificate for the relaxed condition with primitive U.

    Columns are built from the reduced fractions w_j/v_j (so they are
    automatically primitive); rows are made primitive by integer rescalings of
    epsilon_{N-1}, epsilon_N, keeping t > 0 and epsilon_{N-1} = sqrt(t/sin(theta_N)).
    """
    n = angles.N
    rep = check_relaxed(angles, bound)
    if not rep.relaxed_ok:
        raise errors.NotRational(f"relaxed rationality fails: {rep.failures}")
    with extended_precision(EXT_DPS):
        th, phi, v, w, s_n = _vw_extended(angles)
        zero = mp.mpf(10) ** (-(mp.mp.dps - 10))
        t = Fraction(1)
        cols: list[tuple[int, int]] = []
        xs: list[mp.mpf] = []
        for j in range(n - 2):
            if abs(v[j]) < zero and abs(w[j]) < zero:
                raise errors.DegenerateAngle(f"v_{j + 1} = w_{j + 1} = 0")
            if abs(v[j]) < zero:
                xj = 1 / (t.numerator / mp.mpf(t.denominator) * w[j])
                if xj < 0:
                    xj = -xj
                    cols.append((0, -1))
                else:
                    cols.append((0, 1))
                xs.append(xj)
                continue
            def _ratio(j=j):
                _, _, vv, ww, _ = _vw_extended(angles)
                return ww[j] / vv[j]

            rj = _snap_verified(_ratio, bound)
            if rj is None:
                raise errors.NotRational(f"ratio w_{j + 1}/v_{j + 1} not rational")
            q, s = rj.denominator, rj.numerator      # w_j/v_j = s/q reduced
            xj = q / v[j]
            u1, u2 = q, int(t * rj * q)
            if xj < 0:
                xj, u1, u2 = -xj, -u1, -u2
            cols.append((u1, u2))
            xs.append(xj)
        g1 = 0
        g2 = 0
        for (a, b) in cols:
            g1, g2 = gcd(g1, abs(a)), gcd(g2, abs(b))
        g1, g2 = max(g1, 1), max(g2, 1)
        cols = [(a // g1, b // g2) for (a, b) in cols]
        xs = [xj / g1 for xj in xs]
        t = t * g1 / g2
        U = [[c[0] for c in cols], [c[1] for c in cols]]
        SAS = _sas_from_U(U)
        t_mp = mp.mpf(t.numerator) / t.denominator
        eps_n1 = mp.sqrt(t_mp / s_n)
        eps = [float(xj * eps_n1) for xj in xs] + [float(eps_n1), float(eps_n1 / t_mp)]
        xs_f = [float(xj) for xj in xs] + [1.0, float(1 / t_mp)]
        bs = [b_even(angles, k) for k in range(1, n // 2 + 1)]
    sol = ScalingSolution(epsilons=eps, t=t, xs=xs_f, bs=bs, U=U, SAS=SAS,
                          denominator_bound=bound)
    _validate_scaling(angles, sol)
    return sol


def _validate_scaling(angles: AngleVector, sol: ScalingSolution) -> None:
    """Sanity: diag(eps) A diag(eps) must reproduce SAS numerically."""
    from .quadform import build_form

    form = build_form(angles)
    e = np.array(sol.epsilons[: sol.dim])
    sas = np.outer(e, e) * form.A
    err = np.max(np.abs(sas - np.array(sol.SAS, dtype=float)))
    if err > 1e-8 * max(1.0, np.max(np.abs(sas))):
        raise errors.NotRational(f"scaling certificate inconsistent (err {err:.2e})")
