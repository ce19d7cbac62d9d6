"""Generalized error functions E_{Q,C} and complementary functions M_{Q,C}.

E_{Q,C}(x) is the Gaussian average of the sign product over the negative
definite span of the columns of C:

    E_{Q,C}(x) = int_{<C>} sgn(prod B(C, y + x)) e^{2 pi Q(y)} dy,

normalized so the weight integrates to 1.  Writing G = C^T A C = -L L^T
(Cholesky) and b = B(C, x), this becomes

    E(b; L) = int_{R^s} prod_j sgn(b_j - (L u)_j) e^{-pi ||u||^2} du,

which is evaluated by peeling one coordinate at a time (L is lower
triangular, so the first sign factor depends on u_1 only); each level is a
one-dimensional adaptive quadrature with the kink location passed as a break
point, and the base case is E(u) = erf(sqrt(pi) u).  M_{Q,C} is obtained by
triangular subset inversion of

    E_{Q,C}(x) = sum_S M_{Q,C_S}(x) sgn(B(C_{S^c perp S}, x)),

which avoids the oscillatory contour integral entirely; the s = 1 anchor is
M = E - sgn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from . import errors

#: integration cutoff: e^{-pi R^2} ~ 4e-28 at R = 4.5
_CUTOFF = 4.5
_QUAD_OPTS = dict(epsabs=1e-12, epsrel=1e-12, limit=200)

#: treat |b| below this as a wall hit in M-definedness checks
_WALL_TOL = 1e-12


def erf_weighted(u: float) -> float:
    """E(u) = 2 int_0^u e^{-pi w^2} dw = erf(sqrt(pi) u)."""
    return math.erf(math.sqrt(math.pi) * u)


@dataclass(frozen=True)
class ErrorKernel:
    """Negative definite span data: Gram of C under the ambient form and the
    Cholesky factor L of its negation, plus the map x -> b = B(C, x)."""

    gram_np: np.ndarray          # ambient Gram matrix (n x n)
    C: np.ndarray                # n x s, columns span a negative definite space

    def __post_init__(self):
        s = self.C.shape[1]
        G = self.C.T @ self.gram_np @ self.C
        object.__setattr__(self, "_gramC", G)
        if s:
            try:
                L = np.linalg.cholesky(-G)
            except np.linalg.LinAlgError:
                raise errors.NotNegDef("span(C) is not negative definite")
            object.__setattr__(self, "_L", L)
        else:
            object.__setattr__(self, "_L", np.zeros((0, 0)))

    @property
    def s(self) -> int:
        return self.C.shape[1]

    def b_of(self, x: Sequence[float]) -> np.ndarray:
        return self.C.T @ self.gram_np @ np.asarray(x, dtype=float)

    def gramC(self) -> np.ndarray:
        return self._gramC


def _E2_closed(b: np.ndarray, L: np.ndarray) -> Optional[float]:
    """Rank-2 E via the bivariate normal CDF in Owen's T form:
    E = 4 Phi2(h, k; rho) - 2 Phi(h) - 2 Phi(k) + 1 for the wall coordinates
    normalized to standard deviations.  Returns None near the degenerate
    configurations handled by the quadrature fallback."""
    from scipy.special import owens_t

    S = L @ L.T
    s1 = math.sqrt(S[0, 0])
    s2 = math.sqrt(S[1, 1])
    rho = S[0, 1] / (s1 * s2)
    root = 1.0 - rho * rho
    h = math.sqrt(2 * math.pi) * b[0] / s1
    k = math.sqrt(2 * math.pi) * b[1] / s2
    if abs(h) < 1e-12 or abs(k) < 1e-12 or root < 1e-12:
        return None
    sr = math.sqrt(root)
    phi = lambda x: 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))
    t1 = float(owens_t(h, (k - rho * h) / (h * sr)))
    t2 = float(owens_t(k, (h - rho * k) / (k * sr)))
    beta = 0.5 if h * k < 0 else 0.0
    phi2 = 0.5 * (phi(h) + phi(k)) - t1 - t2 - beta
    return 4.0 * phi2 - 2.0 * phi(h) - 2.0 * phi(k) + 1.0


def _E_rec(b: np.ndarray, L: np.ndarray) -> float:
    s = len(b)
    if s == 0:
        return 1.0
    if s == 1:
        return erf_weighted(b[0] / L[0, 0])
    if s == 2:
        closed = _E2_closed(b, L)
        if closed is not None:
            return closed
    kink = b[0] / L[0, 0]

    def integrand(u: float) -> float:
        sign = 1.0 if b[0] - L[0, 0] * u > 0 else (-1.0 if b[0] - L[0, 0] * u < 0 else 0.0)
        if sign == 0.0:
            return 0.0
        inner = _E_rec(b[1:] - L[1:, 0] * u, L[1:, 1:])
        return sign * inner * math.exp(-math.pi * u * u)

    pts = [kink] if -_CUTOFF < kink < _CUTOFF else None
    val, _ = quad(integrand, -_CUTOFF, _CUTOFF, points=pts, **_QUAD_OPTS)
    return val


def eval_E(kernel: ErrorKernel, x: Sequence[float]) -> float:
    """E_{Q,C}(x); depends only on the projection of x onto span(C).

    Far from every wall (all normalized coordinates beyond 7 Gaussian widths)
    the sign-product limit is exact to ~1e-67 and is returned directly.
    """
    if kernel.s == 0:
        return 1.0
    b = kernel.b_of(x)
    L = kernel._L
    # distance of each sign wall {(Lu)_j = b_j} from the Gaussian center
    dists = np.abs(b) / np.maximum(np.linalg.norm(L, axis=1), 1e-300)
    if np.min(dists) > 7.0:
        prod = 1.0
        for t in b:
            prod *= 1.0 if t > 0 else -1.0
        return prod
    return _E_rec(b, L)


def eval_E_subset(gram_np: np.ndarray, C: np.ndarray, subset: Sequence[int],
                  x: Sequence[float]) -> float:
    """E for the column subset (convenience used by the completions)."""
    sub = C[:, list(subset)]
    return eval_E(ErrorKernel(gram_np, sub), x)


def _perp_columns(gram_np: np.ndarray, C: np.ndarray, keep: Sequence[int],
                  against: Sequence[int]) -> np.ndarray:
    """Columns `keep` of C projected B-orthogonally to span of columns `against`."""
    if not against:
        return C[:, list(keep)]
    CA = C[:, list(against)]
    GA = CA.T @ gram_np @ CA
    out = []
    for j in keep:
        rhs = CA.T @ gram_np @ C[:, j]
        gamma = np.linalg.solve(GA, rhs)
        out.append(C[:, j] - CA @ gamma)
    return np.array(out).T


def eval_M(kernel: ErrorKernel, x: Sequence[float]) -> float:
    """M_{Q,C}(x) by subset inversion of the E-expansion.

    Defined when x_C = sum b_j c_j has all coordinates b_j nonzero; raises
    OnWall otherwise.
    """
    s = kernel.s
    if s == 0:
        return 1.0
    bcoords = np.linalg.solve(kernel.gramC(), kernel.b_of(x))
    if np.any(np.abs(bcoords) < _WALL_TOL):
        raise errors.OnWall("x_C has a vanishing coordinate")
    return _M_rec(kernel.gram_np, kernel.C, tuple(range(s)), np.asarray(x, dtype=float))


def _M_rec(gram_np: np.ndarray, C: np.ndarray, cols: tuple, x: np.ndarray) -> float:
    if not cols:
        return 1.0
    total = eval_E(ErrorKernel(gram_np, C[:, list(cols)]), x)
    for r in range(len(cols)):
        for S in _subsets(cols, r):
            comp = tuple(j for j in cols if j not in S)
            perp = _perp_columns(gram_np, C, comp, S)
            sgns = perp.T @ gram_np @ x
            prod = 1.0
            for v in sgns:
                prod *= math.copysign(1.0, v) if abs(v) > 0 else 0.0
            if prod == 0.0:
                continue
            total -= _M_rec(gram_np, C, S, x) * prod
    return total


def _subsets(cols: tuple, r: int):
    import itertools

    return itertools.combinations(cols, r)


def p_hat(gram_np: np.ndarray, C: np.ndarray, x: Sequence[float]) -> float:
    """Completion kernel p_hat_C(x) = 2^{-k} sum_S (1 - (-1)^{k+|S|}) E_{Q,C_S}(x)."""
    k = C.shape[1]
    total = 0.0
    import itertools

    for r in range(k + 1):
        coef = 1 - (-1) ** (k + r)
        if coef == 0:
            continue
        for S in itertools.combinations(range(k), r):
            total += coef * eval_E_subset(gram_np, C, S, x)
    return total / 2 ** k


def p_plain(gram_np: np.ndarray, C: np.ndarray, x: Sequence[float]) -> float:
    """p_C(x) = 2^{-k} sum_S (1 - (-1)^{k+|S|}) sgn(B(C_S, x))."""
    k = C.shape[1]
    b = C.T @ gram_np @ np.asarray(x, dtype=float)
    total = 0.0
    import itertools

    for r in range(k + 1):
        coef = 1 - (-1) ** (k + r)
        if coef == 0:
            continue
        for S in itertools.combinations(range(k), r):
            prod = 1.0
            for j in S:
                prod *= math.copysign(1.0, b[j]) if abs(b[j]) > 1e-13 else 0.0
            total += coef * prod
    return total / 2 ** k


def vigneras_residual(p: Callable[[np.ndarray], float], A: np.ndarray,
                      x: Sequence[float], lam: int = 0, h: float = 1e-3) -> float:
    """|(E - Delta_{A^{-1}} / 2 pi) p(x) - lam p(x)| by central differences
    with one step of Richardson extrapolation (h, h/2)."""
    x = np.asarray(x, dtype=float)
    Ainv = np.linalg.inv(A)

    def op(hh: float) -> float:
        n = len(x)
        p0 = p(x)
        euler = 0.0
        lap = 0.0
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = hh
            pp, pm = p(x + ei), p(x - ei)
            di = (pp - pm) / (2 * hh)
            euler += x[i] * di
            lap += Ainv[i, i] * (pp - 2 * p0 + pm) / hh ** 2
        for i in range(n):
            for j in range(i + 1, n):
                if Ainv[i, j] == 0:
                    continue
                ei = np.zeros(n)
                ej = np.zeros(n)
                ei[i] = hh
                ej[j] = hh
                dij = (p(x + ei + ej) - p(x + ei - ej) - p(x - ei + ej)
                       + p(x - ei - ej)) / (4 * hh ** 2)
                lap += 2 * Ainv[i, j] * dij
        return euler - lap / (2 * math.pi) - lam * p0

    d1 = op(h)
    d2 = op(h / 2)
    return abs((4 * d2 - d1) / 3)
