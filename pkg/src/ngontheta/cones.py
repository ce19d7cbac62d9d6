"""Cone and slicing machinery for the summation region of the counting series.

Everything here works in scaled lattice coordinates: a symmetric rational
Gram matrix G (integral when a scaling certificate exists), the N linear
functionals lambda_k(x) = u_k . x cutting out the region, and the normal
vectors c_k = G^{-1} u_k, so that B(c_k, x) = lambda_k(x).

The closed region is R(C) = {x : all lambda_k(x) >= 0} u {x : all <= 0};
its positive half is a pointed polyhedral cone.  Isotropic rays are the
extreme rays r with Q(r) = 0; near such a ray the lattice is sliced as
x = rho + mu with rho in R f and mu in eta-perp for eta = a*c_f - f, which
yields the quantized lower bound B(rho, mu) >= delta used both for the
convergence tail bounds and for complete lattice enumeration.

For a simplicial cell with one isotropic ray, the span of the adapted subset
S of normals is negative semidefinite; the deformation

    Q_t(x) = Q(x) - (t/2) ||f||^2 B(xi, x)^2,

with xi the second isotropic direction of the (1,1) space W_S-perp normalized
by B(xi, f) = 1, restores strict negative definiteness on every proper
subset span.  All of this data is exact (rational) whenever the inputs are.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import errors, ratlin
from .ratlin import Mat, Vec, fr, mat, vec

_EXACT_DENOM = 10**9


# ---------------------------------------------------------------------------
# quadratic space and cone system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadSpace:
    """Quadratic space with exact rational Gram matrix (Q(x) = x^T G x / 2)."""

    gram: Mat

    @property
    def n(self) -> int:
        return len(self.gram)

    @property
    def gram_np(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.gram])

    def Q(self, x):
        if _is_exact(x):
            x = vec(x)
            return ratlin.dot(x, ratlin.matvec(self.gram, x)) / 2
        xa = np.asarray(x, dtype=float)
        return 0.5 * float(xa @ self.gram_np @ xa)

    def B(self, x, y):
        if _is_exact(x) and _is_exact(y):
            return ratlin.dot(vec(x), ratlin.matvec(self.gram, vec(y)))
        xa = np.asarray(x, dtype=float)
        ya = np.asarray(y, dtype=float)
        return float(xa @ self.gram_np @ ya)

    def inertia(self) -> tuple[int, int, int]:
        return ratlin.inertia(self.gram)

    def inv_gram(self) -> Mat:
        return ratlin.inverse(self.gram)


def _is_exact(x) -> bool:
    return all(isinstance(t, (Fraction, int)) for t in x)


@dataclass(frozen=True)
class ConeSystem:
    """Region functionals and normal vectors over a quadratic space."""

    space: QuadSpace
    functionals: Mat                 # rows u_k, lambda_k(x) = u_k . x
    normals: Mat = None              # rows c_k = G^{-1} u_k
    scaling: object = None           # optional ScalingSolution
    form: object = None              # optional AreaQuadraticForm (diagnostics)

    def __post_init__(self):
        if self.normals is None:
            inv = self.space.inv_gram()
            object.__setattr__(self, "normals",
                               mat([ratlin.matvec(inv, u) for u in self.functionals]))

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def k(self) -> int:
        return len(self.functionals)

    def lam(self, x) -> list:
        """All functional values lambda_k(x)."""
        if _is_exact(x):
            xv = vec(x)
            return [ratlin.dot(u, xv) for u in self.functionals]
        xa = np.asarray(x, dtype=float)
        ua = np.array([[float(t) for t in u] for u in self.functionals])
        return list(ua @ xa)

    def in_nonneg(self, x, tol: float = 0.0) -> bool:
        return all(v >= -tol for v in self.lam(x))

    def in_region(self, x, tol: float = 0.0) -> bool:
        vals = self.lam(x)
        return all(v >= -tol for v in vals) or all(v <= tol for v in vals)

    def subsystem(self, idx: Sequence[int]) -> "ConeSystem":
        return ConeSystem(self.space, mat([self.functionals[i] for i in idx]))

    def normal_gram(self, idx: Sequence[int]) -> Mat:
        """Gram matrix [B(c_i, c_j)] of the selected normals, exact."""
        cs = [self.normals[i] for i in idx]
        return mat([[self.space.B(a, b) for b in cs] for a in cs])


def system_from_scaling(scaling) -> ConeSystem:
    """Cone system in scaled coordinates from a rationality certificate."""
    G = mat(scaling.SAS)
    funcs = mat(scaling.lattice_functionals())
    return ConeSystem(QuadSpace(G), funcs, scaling=scaling)


def normal_vectors(form, scaling=None) -> ConeSystem:
    """Normal vectors c_j = A^{-1} e_j, c_{N-1} = A^{-1} v, c_N = A^{-1} w.

    With a scaling certificate, works on the integral Gram S^T A S so that
    all data is exact; otherwise falls back to float-backed rational
    approximations of the angle form (adequate for diagnostics only).
    """
    if scaling is not None:
        sys = system_from_scaling(scaling)
        return ConeSystem(sys.space, sys.functionals, scaling=scaling, form=form)
    A = mat([[Fraction(x).limit_denominator(_EXACT_DENOM) for x in row] for row in form.A])
    d = form.dim
    if ratlin.det(A) == 0:
        raise errors.SingularGram("Gram matrix of the area form is singular")
    rows = [tuple(Fraction(1 if i == j else 0) for i in range(d)) for j in range(d)]
    rows.append(tuple(Fraction(x).limit_denominator(_EXACT_DENOM) for x in form.v))
    rows.append(tuple(Fraction(x).limit_denominator(_EXACT_DENOM) for x in form.w))
    return ConeSystem(QuadSpace(A), mat(rows), form=form)


# ---------------------------------------------------------------------------
# faces, extreme rays, isotropic rays
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Face:
    I: tuple[int, ...]        # defining index set (1-based)
    Jstar: tuple[int, ...]    # maximal closure (1-based)
    dim: int
    rays: tuple = ()          # extreme rays of the cone contained in the face


@dataclass(frozen=True)
class IsotropicRay:
    f: Vec                    # primitive integer generator, in the nonneg half
    ell: int                  # 1-based index with f_ell > 0 (adapted label)
    pair: tuple[int, int]     # (a, b), the two functionals not vanishing on the ray
    axis: bool                # True when f is a coordinate direction
    lattice: Optional[tuple] = None   # (a1, a2) for R+ f cap (Z^n + alpha)

    def unit(self) -> np.ndarray:
        fa = np.array([float(t) for t in self.f])
        return fa / np.linalg.norm(fa)


def extreme_rays(system: ConeSystem) -> list[Vec]:
    """Extreme rays of the nonnegative half of R(C), exact and primitive."""
    n, k = system.n, system.k
    if n == 1:
        one = vec([1])
        return [one] if system.in_nonneg(one) else [vec([-1])]
    found: dict[tuple, Vec] = {}
    for idx in itertools.combinations(range(k), n - 1):
        sub = mat([system.functionals[i] for i in idx])
        if ratlin.rank(sub) != n - 1:
            continue
        for d in ratlin.nullspace(sub):
            dd = ratlin.primitive_integer(d)
            for sgn in (1, -1):
                cand = vec([sgn * t for t in dd])
                if system.in_nonneg(cand) and any(t != 0 for t in cand):
                    tight = sum(1 for u in system.functionals if ratlin.dot(u, cand) == 0)
                    if tight >= n - 1:
                        found[tuple(cand)] = cand
    return list(found.values())


def find_isotropic_rays(system: ConeSystem) -> list[IsotropicRay]:
    """Isotropic extreme rays of the nonnegative half (exact Q(r) = 0 test)."""
    out = []
    for r in extreme_rays(system):
        if system.space.Q(r) != 0:
            continue
        vals = system.lam(r)
        nonzero = [i + 1 for i, v in enumerate(vals) if v != 0]
        if len(nonzero) == 1:
            nonzero = (nonzero[0], nonzero[0])
        pair = (nonzero[0], nonzero[-1])
        support = [i for i, t in enumerate(r) if t != 0]
        axis = len(support) == 1
        ell = support[0] + 1
        out.append(IsotropicRay(f=r, ell=ell, pair=pair, axis=axis))
    out.sort(key=lambda ray: ray.ell)
    return out


def face_closure(system: ConeSystem, I: Sequence[int]) -> Face:
    """Face F_I = V_I cap cone with its maximal defining set J_*.

    I is 1-based.  J_* collects every functional vanishing on all extreme
    rays of the cone that lie inside V_I; the face dimension is the rank of
    that ray set.
    """
    I = tuple(sorted(set(I)))
    rays = extreme_rays(system)
    in_face = [r for r in rays
               if all(ratlin.dot(system.functionals[i - 1], r) == 0 for i in I)]
    if not in_face:
        jstar = tuple(range(1, system.k + 1))
        return Face(I=I, Jstar=jstar, dim=0, rays=())
    jstar = tuple(i + 1 for i, u in enumerate(system.functionals)
                  if all(ratlin.dot(u, r) == 0 for r in in_face))
    dim = ratlin.rank(mat(in_face))
    return Face(I=I, Jstar=jstar, dim=dim, rays=tuple(in_face))


# ---------------------------------------------------------------------------
# ray lattices and slicing
# ---------------------------------------------------------------------------

def _progression_intersect(p1, p2):
    """Intersect arithmetic progressions offset + step*Z over Q; None if empty."""
    o1, s1 = p1
    o2, s2 = p2
    if s1 == 0 and s2 == 0:
        return p1 if o1 == o2 else None
    if s1 == 0:
        t = (o1 - o2) / s2
        return p1 if t.denominator == 1 else None
    if s2 == 0:
        return _progression_intersect(p2, p1)
    # solve o1 + s1 a = o2 + s2 b: scale to integers
    from math import gcd, lcm

    den = lcm(o1.denominator, s1.denominator, o2.denominator, s2.denominator)
    O1, S1, O2, S2 = (int(o1 * den), int(s1 * den), int(o2 * den), int(s2 * den))
    g = gcd(S1, S2)
    if (O2 - O1) % g != 0:
        return None
    # extended gcd: S1 u + S2 v = g
    u, v = _egcd(S1, S2)
    a0 = (O2 - O1) // g * u
    step = S2 // g
    # offsets: O1 + S1*(a0 + step k) over den
    new_step = Fraction(S1 * step, den)
    new_off = Fraction(O1 + S1 * a0, den)
    if new_step < 0:
        new_step = -new_step
    new_off = new_off - (new_off / new_step).__floor__() * new_step if new_step else new_off
    return (new_off, new_step)


def _egcd(a, b):
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    return old_s, old_t


def ray_lattice(system: ConeSystem, ray: IsotropicRay, alpha: Sequence) -> Optional[tuple]:
    """Parametrize R_0^+ f cap (Z^n + alpha) as {(a2 k + a1) f : k in N_0}.

    Returns (a1, a2) as Fractions with a2 > 0 and a1 in [0, a2), or None when
    the intersection is empty (alpha not on the ray modulo Z^n).
    """
    alpha = vec([fr(a) if isinstance(a, (int, Fraction)) else
                 Fraction(a).limit_denominator(_EXACT_DENOM) for a in alpha])
    f = ray.f
    prog = None  # progression of c with c*f - alpha in Z^n
    for fk, ak in zip(f, alpha):
        if fk == 0:
            if ak.denominator != 1:
                return None
            continue
        p = (ak / fk, abs(Fraction(1, 1) / fk))
        prog = p if prog is None else _progression_intersect(prog, p)
        if prog is None:
            return None
    if prog is None:
        return None
    off, step = prog
    # smallest nonnegative representative
    if step != 0:
        off = off - (off / step).__floor__() * step
    return (off, step)


@dataclass(frozen=True)
class Slicing:
    """Slicing data for one isotropic ray: x = rho + mu, rho in R f, mu in eta-perp."""

    ray: IsotropicRay
    a: Fraction
    eta: Vec
    kappa: Fraction          # positive quantization floor of B(f, .) off the ray
    delta: float             # lower bound for B(rho, mu) on admissible points
    L1: tuple                # (offset, step) of the rho-coefficient progression
    L2_shape: str            # description of the transverse affine lattice
    system: ConeSystem = field(repr=False, default=None)

    def rho_coefficient(self, x):
        return self.system.space.B(x, self.eta) / self.system.space.B(self.ray.f, self.eta)

    def split(self, x):
        """(rho, mu) with rho in R f and mu in eta-perp."""
        c = self.rho_coefficient(x)
        if _is_exact(x) and isinstance(c, Fraction):
            rho = ratlin.scale(c, self.ray.f)
            return rho, ratlin.sub(vec(x), rho)
        fa = np.array([float(t) for t in self.ray.f])
        xa = np.asarray(x, dtype=float)
        rho = float(c) * fa
        return rho, xa - rho


def build_slicing(system: ConeSystem, ray: IsotropicRay, alpha: Sequence,
                  max_scan: int = 16) -> Slicing:
    """Choose eta = a c_f - f with rational a = 1/m (m = 2, 4, 8, ...) so that
    Q(eta) != 0 and B(., eta) > 0 near the ray, and compute the quantized
    floors used in the tail bounds."""
    f = ray.f
    sp = system.space
    fnorm2 = ratlin.dot(f, f)
    fhat = ratlin.scale(Fraction(1, 1) / fnorm2, f)
    c_f = ratlin.matvec(sp.inv_gram(), fhat)

    alpha_v = vec([fr(a) if isinstance(a, (int, Fraction)) else
                   Fraction(a).limit_denominator(_EXACT_DENOM) for a in alpha])
    gf = ratlin.matvec(sp.gram, f)       # integer vector when G, f integral
    offset = ratlin.dot(gf, alpha_v)
    # B(f, x) lies in offset + step Z with step from the content of gf
    step = _content(gf)
    if step == 0:
        raise errors.SingularGram("B(f, .) identically zero on the lattice")
    frac_off = offset % step
    kappa = frac_off if frac_off > 0 else step

    a = Fraction(1, 2)
    chosen = None
    for _ in range(max_scan):
        eta = ratlin.sub(ratlin.scale(a, c_f), f)
        if sp.Q(eta) != 0 and _eta_positive_near_ray(system, ray, eta):
            chosen = (a, eta)
            break
        a = a / 2
    if chosen is None:
        raise errors.NoRationalA("no admissible rational slicing parameter found")
    a, eta = chosen

    # rho-coefficient progression over the shifted lattice:
    # rho_coef(x) = B(x, eta)/a with B(x, eta) in (u_eta . alpha) + content Z
    geta = ratlin.matvec(sp.gram, eta)
    c_eta = _content(geta)
    step1 = c_eta / a if c_eta else Fraction(0)
    off1 = (ratlin.dot(geta, alpha_v) / a) % step1 if step1 else Fraction(0)
    L1 = (off1, step1)

    # B(rho, mu) = rho_coef * B(f, x): both factors have positive quantized floors
    floor1 = off1 if off1 > 0 else step1
    delta = float(floor1 * kappa) if floor1 else float(kappa)
    return Slicing(ray=ray, a=a, eta=eta, kappa=kappa, delta=delta,
                   L1=L1, L2_shape=f"affine Z^{system.n - 1} transverse to ray",
                   system=system)


def _content(v: Vec) -> Fraction:
    """Positive generator of the fractional ideal generated by the entries."""
    from math import gcd, lcm

    den = 1
    for t in v:
        den = lcm(den, fr(t).denominator)
    nums = [int(fr(t) * den) for t in v]
    g = 0
    for t in nums:
        g = gcd(g, abs(t))
    return Fraction(g, den) if g else Fraction(0)


def _eta_positive_near_ray(system: ConeSystem, ray: IsotropicRay, eta: Vec,
                           samples: int = 200) -> bool:
    """Sampler-validated check that B(x, eta) > 0 on the cone near the ray."""
    rng = np.random.default_rng(7)
    sp = system.space
    fa = ray.unit()
    eta_np = np.array([float(t) for t in eta])
    G = sp.gram_np
    rays_np = [np.array([float(t) for t in r]) for r in extreme_rays(system)]
    if not rays_np:
        return True
    for _ in range(samples):
        wts = rng.dirichlet(np.ones(len(rays_np)))
        x = sum(w * r / max(np.linalg.norm(r), 1e-300) for w, r in zip(wts, rays_np))
        x = 0.2 * x + fa  # biased towards the ray
        if float(x @ G @ eta_np) <= 0:
            return False
    return True


# ---------------------------------------------------------------------------
# subspace classification and the Q_t deformation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubspaceClass:
    kind: str                      # "FullSpace" | "NegDef" | "NegSemiDefWithRay"
    ray: Optional[Vec] = None      # generator for the semidefinite case


def classify_subspace(system: ConeSystem, T: Sequence[int]) -> SubspaceClass:
    """Signature trichotomy of span(c_j : j in T) (1-based indices)."""
    idx = [t - 1 for t in T]
    if not idx:
        return SubspaceClass("NegDef", None)
    # work with a basis of the span so Gram nullity measures isotropy
    basis: list[Vec] = []
    for i in idx:
        cand = basis + [system.normals[i]]
        if ratlin.rank(mat(cand)) == len(cand):
            basis.append(system.normals[i])
    gramT = mat([[system.space.B(a, b) for b in basis] for a in basis])
    pos, neg, null = ratlin.inertia(gramT)
    dim_span = len(basis)
    if dim_span == system.n and pos >= 1:
        return SubspaceClass("FullSpace")
    if pos == 0 and null == 0:
        return SubspaceClass("NegDef")
    if pos == 0 and null == 1:
        beta = ratlin.nullspace(gramT)[0]
        fT = zerovec(system.n)
        for b, w in zip(beta, basis):
            fT = ratlin.add(fT, ratlin.scale(b, w))
        fT = vec(ratlin.primitive_integer(fT))
        if not system.in_nonneg(fT):
            fT = ratlin.scale(Fraction(-1), fT)
        return SubspaceClass("NegSemiDefWithRay", ray=fT)
    raise errors.DegenerateInput(
        f"span(C_T) has unexpected signature ({pos},{neg},{null})")


def zerovec(n: int) -> Vec:
    return tuple(Fraction(0) for _ in range(n))


@dataclass(frozen=True)
class DeformedForm:
    """Deformation data Q_t for one simplicial cell with an isotropic ray."""

    system: ConeSystem           # cell system (normals c_1..c_s, c_0 ordering free)
    Sset: tuple[int, ...]        # 1-based indices spanning the semidefinite space
    t: Fraction
    f: Vec                       # rational ray generator (primitive integer)
    f_norm2: Fraction            # ||f||^2 (Euclidean)
    xi: Vec                      # second isotropic direction, B(xi, f) = 1
    W_basis: Mat                 # lift of span(C_S)/Rf, negative definite
    gram_t: Mat                  # deformed Gram matrix
    duals: Mat = None            # dual basis d_j of the cell normals under B_t

    def __post_init__(self):
        if self.duals is None:
            # d_j solve B_t(c_i, d_j) = delta_ij: D = (C^T A_t)^{-1}, d_j = D[:, j]
            C = ratlin.transpose(mat([self.system.normals[i] for i in range(self.system.k)]))
            CtAt = ratlin.matmul(ratlin.transpose(C), self.gram_t)
            D = ratlin.inverse(CtAt)
            object.__setattr__(self, "duals", ratlin.transpose(D))

    @property
    def space_t(self) -> QuadSpace:
        return QuadSpace(self.gram_t)

    def Q_t(self, x):
        return self.space_t.Q(x)

    def B_t(self, x, y):
        return self.space_t.B(x, y)

    def coords(self, x) -> tuple:
        """(a, wvec, b) with x = a f + w + b xi, w in W_S."""
        sp = self.system.space
        a = sp.B(self.xi, x)
        b = sp.B(self.f, x)
        rest = ratlin.sub(ratlin.sub(vec(x), ratlin.scale(a, self.f)),
                          ratlin.scale(b, self.xi)) if _is_exact(x) else None
        if rest is None:
            xa = np.asarray(x, dtype=float)
            fa = np.array([float(t) for t in self.f])
            xia = np.array([float(t) for t in self.xi])
            rest = xa - float(a) * fa - float(b) * xia
        return a, rest, b

    def project_perp(self, T: Sequence[int], x) -> Vec:
        """x_{perp C_T}^{[t]}: B_t(u, c_j) = 0 (j in T), B_t(u, d_k) = B_t(x, d_k)."""
        idx = [t - 1 for t in T]
        comp = [i for i in range(self.system.k) if i not in idx]
        rows, rhs = [], []
        for i in idx:
            rows.append(ratlin.matvec(self.gram_t, self.system.normals[i]))
            rhs.append(Fraction(0))
        for i in comp:
            rows.append(ratlin.matvec(self.gram_t, self.duals[i]))
            rhs.append(self.B_t(vec(x), self.duals[i]) if _is_exact(x) else None)
        if _is_exact(x):
            return ratlin.solve(mat(rows), vec(rhs))
        A = np.array([[float(t) for t in r] for r in rows])
        b = np.zeros(len(rows))
        xa = np.asarray(x, dtype=float)
        Gt = np.array([[float(t) for t in row] for row in self.gram_t])
        for j, i in enumerate(comp):
            da = np.array([float(t) for t in self.duals[i]])
            b[len(idx) + j] = float(xa @ Gt @ da)
        try:
            return np.linalg.solve(A, b)
        except np.linalg.LinAlgError as e:
            raise errors.SingularSystem(str(e))

    def project(self, T: Sequence[int], x):
        """(x_CT, x_perp) under Q_t; x = x_CT + x_perp."""
        perp = self.project_perp(T, x)
        if _is_exact(x):
            return ratlin.sub(vec(x), perp), perp
        return np.asarray(x, dtype=float) - perp, perp


def deform(system: ConeSystem, Sset: Sequence[int], t: Fraction) -> DeformedForm:
    """Build Q_t for a simplicial cell whose S-subset spans a negative
    semidefinite space with isotropic ray; raises BadT when some proper
    subset span fails to become negative definite."""
    t = fr(t)
    if t <= 0:
        raise errors.BadT("t must be positive")
    cls = classify_subspace(system, Sset)
    if cls.kind != "NegSemiDefWithRay":
        raise errors.DegenerateInput("S-set must span a negative semidefinite space with ray")
    f = cls.ray
    sp = system.space

    # W_S: lift of span(C_S)/Rf spanned by a subset of the S-normals
    idxS = [s - 1 for s in Sset]
    W: Optional[Mat] = None
    if len(idxS) == 1:
        W = tuple()    # s = 1: the semidefinite span is the ray itself
    else:
        for sub in itertools.combinations(idxS, len(idxS) - 1):
            cand = mat([system.normals[i] for i in sub])
            if ratlin.rank(mat(list(cand) + [f])) == len(sub) + 1:
                g = mat([[sp.B(a, b) for b in cand] for a in cand])
                pos, neg, null = ratlin.inertia(g)
                if pos == 0 and null == 0:
                    W = cand
                    break
    if W is None:
        raise errors.DegenerateInput("no negative definite lift W_S found")

    # xi in W-perp, isotropic, B(xi, f) = 1
    if W:
        rowsW = mat([ratlin.matvec(sp.gram, w) for w in W])
        perp_basis = ratlin.nullspace(rowsW)  # 2-dimensional, contains f
    else:
        perp_basis = [vec([1 if i == j else 0 for i in range(sp.n)])
                      for j in range(sp.n)]
    g_vec = next((vec(b) for b in perp_basis
                  if ratlin.rank(mat([b, f])) == 2), None)
    if g_vec is None:
        raise errors.DegenerateInput("W-perp degenerate")
    Bgf = sp.B(g_vec, f)
    if Bgf == 0:
        raise errors.DegenerateInput("B(g, f) = 0 in W-perp")
    # xi = beta g + gamma f with Q(xi) = beta^2 Q(g) + beta gamma B(g,f) = 0
    beta = Fraction(1, 1) / Bgf
    gamma = -beta * sp.Q(g_vec) / Bgf
    xi = ratlin.add(ratlin.scale(beta, g_vec), ratlin.scale(gamma, f))
    if sp.Q(xi) != 0 or sp.B(xi, f) != 1:
        raise errors.DegenerateInput("xi construction failed")

    fn2 = ratlin.dot(f, f)
    gxi = ratlin.matvec(sp.gram, xi)
    gram_t = tuple(tuple(sp.gram[i][j] - t * fn2 * gxi[i] * gxi[j]
                         for j in range(sp.n)) for i in range(sp.n))

    dfm = DeformedForm(system=system, Sset=tuple(Sset), t=t, f=f, f_norm2=fn2,
                       xi=xi, W_basis=W, gram_t=mat(gram_t))

    # Lemma-4.6-style check: Q_t negative definite on every proper subset span
    for r in range(1, system.k):
        for T in itertools.combinations(range(1, system.k + 1), r):
            idx = [i - 1 for i in T]
            cs = [system.normals[i] for i in idx]
            g = mat([[dfm.B_t(a, b) for b in cs] for a in cs])
            pos, neg, null = ratlin.inertia(g)
            if pos != 0 or null != 0:
                raise errors.BadT(f"Q_t not negative definite on span(C_{T})")
    return dfm


def choose_t(system: ConeSystem, Sset: Sequence[int], t0: Fraction = Fraction(1, 16),
             samples: int = 10**4, seed: int = 3) -> tuple[Fraction, DeformedForm]:
    """Start at t0 and halve until the negative-definiteness check passes and
    a cross-section sampler finds no positivity violation of Q_T^+ (the
    interior-positivity statement used by the convergence estimates)."""
    t = fr(t0)
    last_err = None
    for _ in range(24):
        try:
            dfm = deform(system, Sset, t)
        except errors.BadT as e:
            last_err = e
            t = t / 2
            continue
        if _qtplus_sampler_ok(dfm, samples=samples, seed=seed):
            return t, dfm
        t = t / 2
    raise errors.BadT(f"no admissible t found: {last_err}")


def _qtplus_sampler_ok(dfm: DeformedForm, samples: int, seed: int) -> bool:
    """Sample cross sections of R_t(C_{T^c perp C_T}) and check
    Q_T^+ = Q - 2 Q_t((.)_{C_T}^{[t]}) > 0 off the ray."""
    rng = np.random.default_rng(seed)
    sys_ = dfm.system
    n = sys_.n
    G = sys_.space.gram_np
    Gt = np.array([[float(x) for x in row] for row in dfm.gram_t])
    fa = np.array([float(x) for x in dfm.f])
    fa /= np.linalg.norm(fa)
    subsets = [T for r in range(0, sys_.k) for T in
               itertools.combinations(range(1, sys_.k + 1), r)]
    per = max(20, samples // max(len(subsets), 1))
    for T in subsets:
        for _ in range(per):
            x = rng.normal(size=n)
            xperp = dfm.project_perp(T, x)
            vals = []
            ok_region = True
            for k in range(sys_.k):
                if (k + 1) in T:
                    continue
                ca = np.array([float(t) for t in sys_.normals[k]])
                vals.append(float(ca @ Gt @ np.asarray(xperp)))
            if not (all(v >= -1e-9 for v in vals) or all(v <= 1e-9 for v in vals)):
                continue
            # off-ray test
            xa = np.asarray(x, dtype=float)
            t_len = xa @ fa
            if np.linalg.norm(xa - t_len * fa) < 1e-6:
                continue
            xct = xa - np.asarray(xperp, dtype=float)
            qtp = 0.5 * float(xa @ G @ xa) - float(xct @ Gt @ xct)
            if qtp <= 1e-10 and np.linalg.norm(xct - (xct @ fa) * fa) > 1e-8:
                return False
    return True
