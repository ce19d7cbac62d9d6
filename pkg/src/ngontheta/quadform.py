"""The signed-area quadratic form of an N-gon with fixed angles.

With phi_k the cumulative angles and s_N = sin(theta_N), the closure relation
determines the two dependent side lengths via

    v_j = -sin(phi_N - phi_j)/s_N,   w_j = sin(phi_{N-1} - phi_j)/s_N,
    lambda_{N-1} = v^T lambda,       lambda_N = w^T lambda,

and the signed area extends to the quadratic form Q(x) = x^T A x / 2 on
R^{N-2} with Gram matrix

    A_jk = s_N * v_min(j,k) * w_max(j,k).

The bilinear form is B(x, y) = x^T A y, so B(x, x) = 2 Q(x).  Under the
positivity condition theta_k in (0, pi) and angle sum 2*pi the signature is
(1, N-3).  Cutting a triangle at position k (merging theta_k, theta_{k+1})
reduces N by one:

    Q(lambda) = -sin(theta_k) sin(theta_{k+1}) / (2 sin(theta_k+theta_{k+1}))
                * lambda_k^2  +  Q_reduced(mu).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import mpmath as mp
import numpy as np

from . import errors
from .polygon import AngleVector
from .precision import EXT_DPS, extended_precision

#: relative threshold below which an eigenvalue of A counts as null
NULL_THRESHOLD = 1e-10


@dataclass(frozen=True)
class SignatureTriple:
    pos: int
    neg: int
    null: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.pos, self.neg, self.null)


@dataclass(frozen=True)
class AreaQuadraticForm:
    """Signed-area form: angle data, the vectors v/w and the Gram matrix A."""

    angles: AngleVector
    v: np.ndarray
    w: np.ndarray
    A: np.ndarray

    @property
    def N(self) -> int:
        return self.angles.N

    @property
    def dim(self) -> int:
        return self.N - 2

    def eval_Q(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.A @ x)

    def eval_B(self, x: Sequence[float], y: Sequence[float]) -> float:
        return float(np.asarray(x, dtype=float) @ self.A @ np.asarray(y, dtype=float))

    def dependent_pair(self, x: Sequence[float]) -> tuple[float, float]:
        x = np.asarray(x, dtype=float)
        return float(self.v @ x), float(self.w @ x)

    # -- extended precision -------------------------------------------------

    def mp_vwA(self, dps: int = EXT_DPS):
        """(v, w, A) recomputed at dps decimal digits (lists / list of lists)."""
        with extended_precision(dps):
            n = self.N
            th = [a.mp() for a in self.angles.angles]
            phi = []
            acc = mp.mpf(0)
            for t in th:
                acc += t
                phi.append(acc)
            s_n = mp.sin(th[-1])
            if s_n == 0:
                raise errors.DegenerateAngle("sin(theta_N) = 0")
            v = [-mp.sin(phi[n - 1] - phi[j]) / s_n for j in range(n - 2)]
            w = [mp.sin(phi[n - 2] - phi[j]) / s_n for j in range(n - 2)]
            A = [[s_n * v[min(j, k)] * w[max(j, k)] for k in range(n - 2)]
                 for j in range(n - 2)]
            return v, w, A

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "theta": self.angles.theta,
            "v": self.v.tolist(),
            "w": self.w.tolist(),
            "A": self.A.flatten().tolist(),
            "mode": "extended" if self.angles.exact else "float",
        }


def build_form(angles: AngleVector) -> AreaQuadraticForm:
    """Construct the signed-area form from the angle data."""
    n = angles.N
    phi = angles.phi
    s_n = math.sin(float(angles.angles[-1]))
    if abs(s_n) < 1e-15:
        raise errors.DegenerateAngle("sin(theta_N) = 0")
    v = np.array([-math.sin(phi[n - 1] - phi[j]) / s_n for j in range(n - 2)])
    w = np.array([math.sin(phi[n - 2] - phi[j]) / s_n for j in range(n - 2)])
    A = np.empty((n - 2, n - 2))
    for j in range(n - 2):
        for k in range(n - 2):
            A[j, k] = s_n * v[min(j, k)] * w[max(j, k)]
    return AreaQuadraticForm(angles, v, w, A)


def area_double_sum(angles: AngleVector, lam_ind: Sequence[float]) -> float:
    """Independent oracle: the explicit double sum for the signed area.

    -1/2 sum_j sin(phi_N-phi_j) sin(phi_{N-1}-phi_j)/sin(theta_N) * lambda_j^2
    - sum_{j<k} sin(phi_N-phi_j) sin(phi_{N-1}-phi_k)/sin(theta_N) * lambda_j lambda_k
    """
    n = angles.N
    phi = angles.phi
    s_n = math.sin(float(angles.angles[-1]))
    total = 0.0
    for j in range(n - 2):
        total -= 0.5 * math.sin(phi[n - 1] - phi[j]) * math.sin(phi[n - 2] - phi[j]) \
            / s_n * lam_ind[j] ** 2
    for j in range(n - 2):
        for k in range(j + 1, n - 2):
            total -= math.sin(phi[n - 1] - phi[j]) * math.sin(phi[n - 2] - phi[k]) \
                / s_n * lam_ind[j] * lam_ind[k]
    return total


def signature(form: AreaQuadraticForm) -> SignatureTriple:
    """Sylvester inertia of A with a relative null threshold."""
    eig = np.linalg.eigvalsh(form.A)
    scale = max(np.max(np.abs(eig)), 1e-300)
    tol = NULL_THRESHOLD * scale
    pos = int(np.sum(eig > tol))
    neg = int(np.sum(eig < -tol))
    return SignatureTriple(pos, neg, form.dim - pos - neg)


def relabel_transport(form: AreaQuadraticForm, shift: int) -> np.ndarray:
    """Matrix T sending old independent lengths to the shifted independent set.

    Row j of T expresses new lambda'_j = lambda_{j+shift} in terms of the old
    independent lambda_1..lambda_{N-2} (dependent entries via v, w).
    """
    n = form.N
    d = n - 2
    rows = []
    for j in range(d):
        old = (j + shift) % n  # 0-based index of lambda_{j+shift+1}
        if old < d:
            e = np.zeros(d)
            e[old] = 1.0
            rows.append(e)
        elif old == d:
            rows.append(form.v.copy())
        else:
            rows.append(form.w.copy())
    return np.array(rows)


def cyclic_relabel(form: AreaQuadraticForm, shift: int) -> tuple[AreaQuadraticForm, np.ndarray]:
    """Form over the cyclically shifted parameter set plus the transport matrix.

    Raises ParallelSidesDependence when the shifted consecutive set fails to
    determine the remaining lengths (transport matrix singular), which can
    happen when some sin(phi_k - phi_j) vanishes and the angle sum is not 2*pi.
    """
    new_angles = form.angles.rotated(shift)
    new_form = build_form(new_angles)
    T = relabel_transport(form, shift)
    if abs(np.linalg.det(T)) < 1e-12:
        raise errors.ParallelSidesDependence(
            f"shift {shift} gives a degenerate parameter set")
    return new_form, T


def cut_triangle(form: AreaQuadraticForm, k: int) -> tuple[float, AreaQuadraticForm, np.ndarray]:
    """Cut the triangle at side k (1-based), merging theta_k and theta_{k+1}.

    Returns (coef, reduced_form, T) with

        Q(lambda) = coef * lambda_k^2 + Q_reduced(T lambda),
        coef = -sin(theta_k) sin(theta_{k+1}) / (2 sin(theta_k + theta_{k+1})).

    Valid for independent cut variables 1 <= k <= N-2.  The k = 1 case glues
    across side N and therefore additionally needs angle sum 2*pi (mod 2*pi);
    interior cuts work for arbitrary angle sums.
    """
    n = form.N
    d = n - 2
    if not 1 <= k <= d:
        raise errors.DegenerateInput("cut index must be an independent side, 1 <= k <= N-2")
    th = form.angles.theta
    tsum = th[k - 1] + th[k % n]
    if tsum >= math.pi - 1e-14 or tsum <= 1e-14:
        raise errors.AngleSumNotReducible(
            f"theta_{k} + theta_{k + 1} = {tsum:.6f} not in (0, pi)")
    if k == 1:
        two_pi_defect = abs((sum(th) % (2.0 * math.pi)))
        if min(two_pi_defect, 2.0 * math.pi - two_pi_defect) > 1e-12:
            raise errors.AngleSumNotReducible(
                "k = 1 cut glues across side N and needs angle sum 2*pi")
    c_prev = math.sin(th[k % n]) / math.sin(tsum)      # goes to side k-1
    c_next = math.sin(th[k - 1]) / math.sin(tsum)      # goes to side k+1
    coef = -math.sin(th[k - 1]) * math.sin(th[k % n]) / (2.0 * math.sin(tsum))

    merged = list(form.angles.angles)
    from .precision import Angle
    merged[k - 1:k + 1] = [Angle(th[k - 1] + th[k % n])]
    red_angles = AngleVector(tuple(merged), form.angles.positivity)

    # transport from the old independent lambda to the reduced independent set
    T = np.zeros((d - 1, d))

    def unit(i: int) -> np.ndarray:
        e = np.zeros(d)
        e[i] = 1.0
        return e

    if k == 1:
        # reduced sides: (mu_2, lambda_3, ..., lambda_{N-1}, mu_N)
        T[0] = unit(1) + c_next * unit(0)
        for j in range(1, d - 1):
            T[j] = unit(j + 1)
    else:
        r = 0
        for j in range(k - 2):
            T[r] = unit(j)
            r += 1
        T[r] = unit(k - 2) + c_prev * unit(k - 1)
        r += 1
        if k <= d - 1:
            T[r] = unit(k) + c_next * unit(k - 1)
            r += 1
        for j in range(k + 1, d):
            T[r] = unit(j)
            r += 1
    reduced = build_form(red_angles)
    return coef, reduced, T
