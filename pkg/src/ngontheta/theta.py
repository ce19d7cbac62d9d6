"""Counting theta functions, their q-expansions, and real-analytic completions.

A task sums over the shifted lattice Z^n + alpha in scaled coordinates, with
integral Gram matrix M (so Q(n) = n^T M n / 2 is exact rational on exact
shifts), a weight kernel chi / p_C / delta-closure, and elliptic variable
z = alpha*tau + beta.  Two sum normalizations are used:

    shifted:  sum_{n in Z^n + alpha} kernel(n) q^{Q(n)} e^{2 pi i B(beta, n)}
    plain:    sum_{n in Z^n} kernel(n + y/v) q^{Q(n)} e^{2 pi i B(n, z)}

(the two agree up to the prefactor q^{-Q(alpha)} e^{-2 pi i B(alpha, beta)}).
Since |q^{Q(n)} e^{2 pi i B(n,z)}| = e^{-2 pi v (Q(x) - Q(y/v))} with
x = n + y/v, truncation at decay exponent Qmax enumerates the cone points
with Q(x) <= Qmax + Q(y/v).

Lattice enumeration splits the cone into a compact part (coercivity radius
from the numeric minimum of Q on the cross section away from ray caps, with
a safety margin) and, per isotropic ray, families of lattice lines parallel
to the ray: along such a line Q is linear with constant slope B(f, line), so
each line meets {Q <= bound} in an explicit rational interval.  Line indices
are bounded through the slicing decomposition x = rho + mu.

Completions replace each cell kernel p_C by p_hat_{C,t} evaluated at
(n + y/v) sqrt(2v) (with the deformed form Q_t on cells containing an
isotropic ray) and keep the wall corrections as lower-dimensional theta
functions.  The S-transformation is checked against a dual-lattice Poisson
oracle: for a weight-w piece on Z^n with Gram M,

    Theta_hat(z/tau; -1/tau) = (-i tau)^w |det M|^{-1/2} e^{2 pi i Q(z)/tau}
                               * [same sum over the dual lattice M^{-1} Z^n].
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import errors, ratlin
from .cones import ConeSystem, IsotropicRay, QuadSpace, build_slicing, choose_t, \
    extreme_rays, find_isotropic_rays, ray_lattice
from .decomp import Cell, CellDecomposition, PartitionIdentity, SignKernel, \
    eval_chi, p_kernel
from .errfun import ErrorKernel, eval_E, p_plain
from .ratlin import Mat, Vec, fr, mat, vec

TWO_PI = 2.0 * math.pi

#: safety margin applied to sampled cross-section minima
_MARGIN = 0.6
#: ray-cap cosine threshold for the region split
_CAP_COS = 0.93


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

class KernelChi:
    """chi_C: open-cone indicator (vanishes on every wall, hence on rays)."""

    def __init__(self, system: ConeSystem):
        self.system = system

    def __call__(self, x):
        return eval_chi(self.system, x)

    def vanishes_on_rays(self) -> bool:
        return True


class KernelClosure:
    """delta_{R(C)}: indicator of the closed region (both halves)."""

    def __init__(self, system: ConeSystem):
        self.system = system

    def __call__(self, x):
        return Fraction(1) if self.system.in_region(x) else Fraction(0)

    def vanishes_on_rays(self) -> bool:
        return False


class KernelSign:
    """Wrapper for an exact SignKernel."""

    def __init__(self, kernel: SignKernel):
        self.kernel = kernel

    def __call__(self, x):
        return self.kernel.eval(x)

    def vanishes_on_rays(self) -> bool:
        return False


@dataclass
class ThetaTask:
    system: ConeSystem
    kernel: Callable
    alpha: tuple
    beta: tuple
    prefactor: bool = False

    def __post_init__(self):
        self.alpha = _ratvec(self.alpha)
        self.beta = _ratvec(self.beta)

    @property
    def n(self) -> int:
        return self.system.n

    def z_of(self, tau: complex) -> np.ndarray:
        a = np.array([float(t) for t in self.alpha])
        b = np.array([float(t) for t in self.beta])
        return a * tau + b


def _ratvec(x) -> tuple:
    out = []
    for t in x:
        if isinstance(t, (int, Fraction)):
            out.append(Fraction(t))
        else:
            out.append(Fraction(float(t)).limit_denominator(10**9))
    return tuple(out)


@dataclass(frozen=True)
class QExpansion:
    entries: tuple          # sorted (exponent, coefficient); exact when beta = 0
    Qmax: Fraction
    tail_estimate: float
    prefactor_shift: Fraction = Fraction(0)

    def coefficient(self, q_exp) -> complex:
        for e, c in self.entries:
            if e == q_exp:
                return c
        return 0

    def as_rows(self) -> list[tuple[float, float, float]]:
        rows = []
        for e, c in self.entries:
            cc = complex(c)
            rows.append((float(e), cc.real, cc.imag))
        return rows


@dataclass(frozen=True)
class EvalReport:
    value: complex
    truncation_bound: float
    lattice_points_used: int


# ---------------------------------------------------------------------------
# lattice enumeration
# ---------------------------------------------------------------------------

def _unit(v) -> np.ndarray:
    a = np.array([float(t) for t in v])
    return a / np.linalg.norm(a)


_MIN_CACHE: dict = {}


def _cross_section_min(system: ConeSystem, rays_iso, cap_cos: float,
                       samples: int = 4000, seed: int = 12) -> float:
    """Numeric min of Q over unit vectors of the cone off all ray caps."""
    key = ("A", system.space.gram, system.functionals, cap_cos)
    if key in _MIN_CACHE:
        return _MIN_CACHE[key]
    rng = np.random.default_rng(seed)
    gens = [_unit(r) for r in extreme_rays(system)]
    if not gens:
        raise errors.NotConvergent("cone has no extreme rays")
    G = system.space.gram_np
    caps = [_unit(r.f) for r in rays_iso]
    best = math.inf
    for _ in range(samples):
        w = rng.dirichlet(np.ones(len(gens)))
        x = sum(wi * g for wi, g in zip(w, gens))
        nx = np.linalg.norm(x)
        if nx < 1e-12:
            continue
        x /= nx
        if any(float(x @ c) > cap_cos for c in caps):
            continue
        best = min(best, 0.5 * float(x @ G @ x))
    if not math.isfinite(best) or best <= 0:
        raise errors.NotConvergent(
            "cross-section minimum of Q is not positive; enumeration would diverge")
    _MIN_CACHE[key] = best
    return best


def _mu_min(system: ConeSystem, sl, cap_cos: float, samples: int = 4000,
            seed: int = 23) -> float:
    """Numeric min of Q(mu)/||mu||^2 over the slicing image of the ray cap."""
    key = ("B", system.space.gram, system.functionals, sl.ray.f, sl.a, cap_cos)
    if key in _MIN_CACHE:
        return _MIN_CACHE[key]
    rng = np.random.default_rng(seed)
    gens = [_unit(r) for r in extreme_rays(system)]
    G = system.space.gram_np
    fa = _unit(sl.ray.f)
    best = math.inf
    for _ in range(samples):
        w = rng.dirichlet(np.ones(len(gens)))
        x = sum(wi * g for wi, g in zip(w, gens))
        x = x / max(np.linalg.norm(x), 1e-300)
        x = 0.3 * x + 0.7 * fa   # bias into the cap
        x /= np.linalg.norm(x)
        if float(x @ fa) < cap_cos * 0.98:
            continue
        _, mu = sl.split(x)
        nm = np.linalg.norm(mu)
        if nm < 1e-9:
            continue
        q = 0.5 * float(np.asarray(mu) @ G @ np.asarray(mu))
        best = min(best, q / nm ** 2)
    if not math.isfinite(best) or best <= 0:
        raise errors.NotConvergent("transverse slicing form is not coercive")
    _MIN_CACHE[key] = best
    return best


def _unimodular_extension(f: Vec) -> Mat:
    """Integer matrix with first column f (primitive) and |det| = 1."""
    n = len(f)
    cols = [[int(t) for t in f]]
    for j in range(n):
        e = [1 if i == j else 0 for i in range(n)]
        if ratlin.rank(mat(cols + [e])) == len(cols) + 1:
            cols.append(e)
        if len(cols) == n:
            break
    F = ratlin.transpose(mat(cols))
    if abs(ratlin.det(F)) == 1:
        return F
    # adjust the added columns by integer combinations until unimodular
    for attempt in itertools.product(range(-3, 4), repeat=n - 1):
        cols2 = [list(c) for c in cols]
        for i, t in enumerate(attempt):
            for r in range(n):
                cols2[-1][r] += t * cols2[i][r]
        F2 = ratlin.transpose(mat(cols2))
        if abs(ratlin.det(F2)) == 1:
            return F2
    raise errors.NotConvergent("failed to complete ray to a unimodular basis")


def _enumerate_half(system: ConeSystem, alpha: tuple, Qmax: Fraction,
                    on_ray: str = "skip") -> list[Vec]:
    """All x in (Z^n + alpha), x in the nonnegative half, Q(x) <= Qmax,
    excluding points on isotropic rays (on_ray='skip') or raising when a ray
    carries lattice points (on_ray='error')."""
    sp = system.space
    n = system.n
    alpha = vec(alpha)
    rays_iso = find_isotropic_rays(system)
    pts: dict = {}

    if on_ray == "error":
        for r in rays_iso:
            if ray_lattice(system, r, alpha) is not None:
                raise errors.NotConvergent(
                    f"isotropic ray through e_{r.ell} carries lattice points")

    # region A: compact part
    m_a = _cross_section_min(system, rays_iso, _CAP_COS) * _MARGIN
    R_a = math.sqrt(float(Qmax) / m_a) if Qmax > 0 else 0.0
    af = np.array([float(t) for t in alpha])
    ranges = [range(math.floor(-R_a - float(a)), math.ceil(R_a - float(a)) + 1)
              for a in af]
    for mtuple in itertools.product(*ranges):
        x = tuple(Fraction(mi) + ai for mi, ai in zip(mtuple, alpha))
        if system.in_nonneg(x) and sp.Q(x) <= Qmax:
            pts[x] = True

    # region B: lattice lines parallel to each isotropic ray
    for r in rays_iso:
        sl = build_slicing(system, r, alpha)
        m_b = _mu_min(system, sl, _CAP_COS) * _MARGIN
        R_b = math.sqrt(float(Qmax) / m_b) if Qmax > 0 else 0.0
        F = _unimodular_extension(r.f)
        Finv = ratlin.inverse(F)
        Finv_np = np.array([[float(t) for t in row] for row in Finv])
        kbound = int(math.ceil(np.linalg.norm(Finv_np, 2) * R_b * 1.2)) + 1
        beta_full = ratlin.matvec(Finv, alpha)
        b1, brest = beta_full[0], beta_full[1:]
        gf = ratlin.matvec(sp.gram, r.f)
        for ktuple in itertools.product(range(-kbound, kbound + 1), repeat=n - 1):
            kk = [Fraction(kt) + bt for kt, bt in zip(ktuple, brest)]
            x0 = ratlin.matvec(F, vec([Fraction(0)] + list(kk)))
            sigma = ratlin.dot(gf, x0)    # B(f, .) is constant on the line
            if sigma == 0:
                continue  # only the ray line has cone points; handled above
            lo_c, hi_c = None, None
            feasible = True
            for u in system.functionals:
                s = ratlin.dot(u, r.f)
                v0 = ratlin.dot(u, x0)
                if s == 0:
                    if v0 < 0:
                        feasible = False
                        break
                    continue
                bound = -v0 / s
                if s > 0:
                    lo_c = bound if lo_c is None else max(lo_c, bound)
                else:
                    hi_c = bound if hi_c is None else min(hi_c, bound)
            if not feasible:
                continue
            q0 = sp.Q(x0)
            qb = (Qmax - q0) / sigma
            if sigma > 0:
                hi_c = qb if hi_c is None else min(hi_c, qb)
            else:
                lo_c = qb if lo_c is None else max(lo_c, qb)
            if lo_c is None or hi_c is None or lo_c > hi_c:
                continue
            for ci in range(math.ceil(lo_c - b1), math.floor(hi_c - b1) + 1):
                x = ratlin.add(x0, ratlin.scale(Fraction(ci) + b1, r.f))
                if system.in_nonneg(x) and sp.Q(x) <= Qmax:
                    pts[tuple(x)] = True

    out = []
    for x in pts:
        if any(_on_ray(x, r.f) for r in rays_iso):
            continue
        out.append(vec(x))
    return out


def _on_ray(x, f: Vec) -> bool:
    ratio = None
    for xi, fi in zip(x, f):
        if fi == 0:
            if xi != 0:
                return False
        else:
            rr = fr(xi) / fi
            if ratio is None:
                ratio = rr
            elif rr != ratio:
                return False
    return True


_ENUM_CACHE: dict = {}


def cone_lattice_points(system: ConeSystem, alpha, Qmax, on_ray: str = "skip") -> list[Vec]:
    """Both components of R(C): points x in Z^n + alpha with Q(x) <= Qmax."""
    Qmax = fr(Qmax) if isinstance(Qmax, (int, Fraction)) \
        else Fraction(float(Qmax)).limit_denominator(10**6)
    alpha = _ratvec(alpha)
    key = (system.space.gram, system.functionals, alpha, Qmax, on_ray)
    if key in _ENUM_CACHE:
        return _ENUM_CACHE[key]
    plus = _enumerate_half(system, alpha, Qmax, on_ray=on_ray)
    minus = _enumerate_half(system, tuple(-a for a in alpha), Qmax, on_ray=on_ray)
    seen = {tuple(x): x for x in plus}
    for xm in minus:
        x = vec([-t for t in xm])
        seen.setdefault(tuple(x), x)
    out = sorted(seen.values())
    _ENUM_CACHE[key] = out
    return out


def enumerate_support(task: ThetaTask, Qmax, on_ray: str = "error") -> list[Vec]:
    """Lattice points n in Z^n + alpha with kernel(n) != 0 and Q(n) <= Qmax.

    Raises NotConvergent when the kernel is supported on an isotropic ray
    that carries lattice points (infinite family: use extract_pole)."""
    guard = "skip" if getattr(task.kernel, "vanishes_on_rays", lambda: False)() \
        else on_ray
    if guard == "error":
        _ray_support_guard(task)
        guard = "skip"
    pts = cone_lattice_points(task.system, task.alpha, Qmax, on_ray=guard)
    return [x for x in pts if task.kernel(x) != 0]


def _ray_support_guard(task: ThetaTask) -> None:
    sys_ = task.system
    for r in find_isotropic_rays(sys_):
        lat = ray_lattice(sys_, r, task.alpha)
        if lat is None:
            continue
        off, step = lat
        probe = ratlin.scale(off + step, r.f)
        if task.kernel(probe) != 0:
            raise errors.NotConvergent(
                f"kernel supported on the lattice ray through e_{r.ell}; "
                "use extract_pole for the ray part")


def brute_force_box(task: ThetaTask, Qmax, radius: int) -> list[Vec]:
    """Oracle: scan the full box ||m||_inf <= radius of Z^n + alpha."""
    Qmax = fr(Qmax)
    out = []
    for mtuple in itertools.product(range(-radius, radius + 1), repeat=task.n):
        x = vec([Fraction(m) + a for m, a in zip(mtuple, task.alpha)])
        if task.system.space.Q(x) <= Qmax and task.kernel(x) != 0:
            out.append(x)
    return sorted(out)


# ---------------------------------------------------------------------------
# q-expansions and evaluation
# ---------------------------------------------------------------------------

def _pole_guard(task: ThetaTask, tol: float = 1e-8) -> None:
    """OnPole when alpha sits on a populated ray with B(f, beta) on the locus."""
    sys_ = task.system
    for r in find_isotropic_rays(sys_):
        lat = ray_lattice(sys_, r, task.alpha)
        if lat is None:
            continue
        off, step = lat
        probe = ratlin.scale(off + step, r.f)
        if task.kernel(probe) == 0:
            continue
        bfb = float(sys_.space.B(r.f, vec(task.beta)))
        if abs(1 - cmath.exp(2j * math.pi * float(step) * bfb)) < tol:
            raise errors.OnPole(
                f"alpha on ray e_{r.ell} with B(f, beta) on the pole locus")


def q_expand(task: ThetaTask, Qmax) -> QExpansion:
    """Group the shifted series by exponent Q(n); exact coefficients for beta = 0."""
    Qmax = fr(Qmax)
    _pole_guard(task)
    pts = enumerate_support(task, Qmax, on_ray="error")
    exact_beta = all(b == 0 for b in task.beta)
    G = task.system.space.gram_np
    bnp = np.array([float(t) for t in task.beta])
    groups: dict = {}
    for x in pts:
        e = task.system.space.Q(x)
        w = task.kernel(x)
        if exact_beta:
            coef = w
        else:
            xn = np.array([float(t) for t in x])
            coef = complex(w) * cmath.exp(2j * math.pi * float(bnp @ G @ xn))
        groups[e] = groups.get(e, 0) + coef
    shift = task.system.space.Q(vec(task.alpha)) if task.prefactor else Fraction(0)
    entries = []
    for e in sorted(groups, key=float):
        c = groups[e]
        if isinstance(c, complex):
            if abs(c) < 1e-14:
                continue
        elif c == 0:
            continue
        entries.append((e - shift, c))
    return QExpansion(entries=tuple(entries), Qmax=Qmax,
                      tail_estimate=math.exp(-TWO_PI * float(Qmax)),
                      prefactor_shift=shift)


def eval_theta(task: ThetaTask, z: np.ndarray, tau: complex, Qmax) -> EvalReport:
    """Plain-sum value sum_{n in Z^n} kernel(n + y/v) q^{Q(n)} e^{2 pi i B(n, z)}.

    Decay truncation at exponent Qmax: enumerates cone points x = n + y/v
    with Q(x) <= Qmax + Q(y/v) and recovers the integer n exactly.
    """
    v = tau.imag
    if v <= 0:
        raise errors.NotConvergent("tau must lie in the upper half plane")
    z = np.asarray(z, dtype=complex)
    y = z.imag
    shift = _ratvec(y / v)
    sys_ = task.system
    G = sys_.space.gram_np
    q_shift = sys_.space.Q(vec(shift))
    qbound = fr(Qmax) + (q_shift if q_shift > 0 else Fraction(0))

    work = ThetaTask(sys_, task.kernel, shift, tuple(Fraction(0) for _ in shift))
    _pole_guard(work)
    xs = enumerate_support(work, qbound, on_ray="error")
    yv = np.array([float(t) for t in shift])
    total = 0j
    used = 0
    for x in xs:
        mvec = [xi - si for xi, si in zip(x, shift)]     # exact integers
        nvec = np.array([float(t) for t in mvec])
        qn = 0.5 * float(nvec @ G @ nvec)
        if qn - float(q_shift) > float(Qmax):
            continue
        w = task.kernel(np.array([float(t) for t in x]))
        if w == 0:
            continue
        used += 1
        bnz = complex(nvec @ G @ z)
        total += complex(w) * cmath.exp(2j * math.pi * (tau * qn + bnz))
    if task.prefactor:
        anp = np.array([float(t) for t in task.alpha])
        bnp = np.array([float(t) for t in task.beta])
        qa = 0.5 * float(anp @ G @ anp)
        bab = float(anp @ G @ bnp)
        total *= cmath.exp(-2j * math.pi * (tau * qa + bab))
    bound = (used + 8) * math.exp(-TWO_PI * v * float(Qmax))
    return EvalReport(value=total, truncation_bound=bound, lattice_points_used=used)


def check_elliptic(task: ThetaTask, a: Sequence[int], b: Sequence[int],
                   z: np.ndarray, tau: complex, Qmax) -> float:
    """|Theta(z + a tau + b) - q^{-Q(a)} e^{-2 pi i B(a,z)} Theta(z)|."""
    z = np.asarray(z, dtype=complex)
    av = np.array([float(t) for t in a])
    bv = np.array([float(t) for t in b])
    G = task.system.space.gram_np
    lhs = eval_theta(task, z + av * tau + bv, tau, Qmax).value
    qa = 0.5 * float(av @ G @ av)
    baz = complex(av @ G @ z)
    rhs = cmath.exp(-2j * math.pi * (tau * qa + baz)) * eval_theta(task, z, tau, Qmax).value
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# ray poles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RayPole:
    ray: IsotropicRay
    a1: Fraction
    a2: Fraction

    def closed_form(self, bfb: float) -> complex:
        num = cmath.exp(2j * math.pi * float(self.a1) * bfb)
        den = 1 - cmath.exp(2j * math.pi * float(self.a2) * bfb)
        if abs(den) < 1e-12:
            raise errors.OnPole("B(f, beta) on the pole locus")
        return num / den

    def partial_sum(self, bfb: float, r: float, terms: int) -> complex:
        """Abel sum: sum_{k=0}^{terms} r^k e^{2 pi i B(f,beta)(a2 k + a1)}."""
        q = r * cmath.exp(2j * math.pi * float(self.a2) * bfb)
        total = 0j
        pw = 1.0 + 0j
        for _ in range(terms):
            total += pw
            pw *= q
        return cmath.exp(2j * math.pi * float(self.a1) * bfb) * total


def extract_pole(task: ThetaTask, ray: IsotropicRay) -> RayPole:
    """Closed form e^{2 pi i a1 B(f,beta)} / (1 - e^{2 pi i a2 B(f,beta)}) of
    the nonnegative ray half-sum; raises NoRayLattice when alpha misses it."""
    lat = ray_lattice(task.system, ray, task.alpha)
    if lat is None:
        raise errors.NoRayLattice("alpha does not meet the ray lattice")
    a1, a2 = lat
    return RayPole(ray=ray, a1=a1, a2=a2)


# ---------------------------------------------------------------------------
# classical oracles
# ---------------------------------------------------------------------------

def oracle_jacobi_theta(z: complex, tau: complex, a_coef: float = 0.5,
                        alpha: float = 0.0, nmax: int = 60) -> complex:
    """Direct sum sum_{n in Z + alpha} q^{a n^2} e^{2 pi i n z}."""
    total = 0j
    for k in range(-nmax, nmax + 1):
        n = k + alpha
        total += cmath.exp(2j * math.pi * (tau * a_coef * n * n + n * z))
    return total


def oracle_appell_lerch(z1: complex, z2: complex, tau: complex, nmax: int = 80) -> complex:
    """Trapezoid double sum sum chi(n + y/v) q^{(n1^2-n2^2)/2} e^{2 pi i (n1 z1 - n2 z2)}
    with chi(w) = (sgn(w1 - w2) + sgn(w2))/2."""
    v = tau.imag
    y1, y2 = z1.imag, z2.imag
    total = 0j
    for n1 in range(-nmax, nmax + 1):
        for n2 in range(-nmax, nmax + 1):
            w1 = n1 + y1 / v
            w2 = n2 + y2 / v
            chi = 0.5 * (_sgn_f(w1 - w2) + _sgn_f(w2))
            if chi == 0:
                continue
            qexp = 0.5 * (n1 * n1 - n2 * n2)
            total += chi * cmath.exp(2j * math.pi * (tau * qexp + n1 * z1 - n2 * z2))
    return total


def _sgn_f(x: float) -> float:
    if abs(x) < 1e-13:
        return 0.0
    return 1.0 if x > 0 else -1.0


# ---------------------------------------------------------------------------
# completions
# ---------------------------------------------------------------------------

class CellPiece:
    """One simplicial cell: holomorphic kernel p_C and completion p_hat_{C,t}.

    For a cell containing an isotropic ray, the generalized error function of
    a column subset S needs the deformed form Q_t exactly when span(C_S) is
    negative semidefinite (variant="mixed", the default); the subsets whose
    span is honestly negative definite keep the ambient Q, which preserves
    the Vigneras property of those terms exactly.  variant="all_t" deforms
    every subset instead.
    """

    def __init__(self, cell: Cell, gram: Mat, t: Optional[Fraction] = None,
                 variant: str = "mixed"):
        self.cell = cell
        self.gram = gram
        self.variant = variant
        sys_ = cell.system
        self.gram_np = sys_.space.gram_np
        self.C_np = np.array([[float(x) for x in c] for c in sys_.normals]).T
        self.t = t
        self.deformed = None
        if cell.iso_ray is not None:
            if t is None:
                self.t, self.deformed = choose_t(sys_, cell.Sset)
            else:
                from .cones import deform
                self.deformed = deform(sys_, cell.Sset, t)
        if self.deformed is not None:
            self.gram_t_np = np.array([[float(x) for x in row]
                                       for row in self.deformed.gram_t])
        else:
            self.gram_t_np = self.gram_np
        k = self.C_np.shape[1]
        self._subsets = []
        for r in range(k + 1):
            coefficient = 1 - (-1) ** (k + r)
            if coefficient == 0:
                continue
            for S in itertools.combinations(range(k), r):
                ker = self._make_kernel(S) if S else None
                self._subsets.append((Fraction(coefficient, 2 ** k), S, ker))

    def _make_kernel(self, S) -> ErrorKernel:
        cols = self.C_np[:, list(S)]
        if self.deformed is None:
            return ErrorKernel(self.gram_np, cols)
        if self.variant == "all_t":
            return ErrorKernel(self.gram_t_np, cols)
        # mixed: deform only when span(C_S) fails to be negative definite
        gram_s = cols.T @ self.gram_np @ cols
        eig = np.linalg.eigvalsh(gram_s)
        if np.all(eig < -1e-12):
            return ErrorKernel(self.gram_np, cols)
        return ErrorKernel(self.gram_t_np, cols)

    def _projection_data(self):
        """Per proper subset T of cell normals: the Q_t-orthogonal projection
        matrix onto span(C_T)-perp, the region rows B_t(c_k, .) after
        projection (k in T^c), and log of the M-bound constant.

        Used for the rigorous summand bound from the expansion
        p_hat = sum_T 2^{-|T|} M_{Q_t,C_T} p_{C_{T^c perp T}}: the sign part
        vanishes exactly off the projected region and |M| <= |T|! e^{2 pi
        Q_t(x_{C_T})}, so each surviving term is <= K e^{-2 pi v Q_T^+(x)}.
        """
        if getattr(self, "_proj_data", None) is not None:
            return self._proj_data
        Gt = self.gram_t_np
        n = Gt.shape[0]
        k = self.C_np.shape[1]
        # dual basis so that B_t(c_i, d_j) = delta_ij
        D = np.linalg.inv(self.C_np.T @ Gt)
        data = []
        for r in range(k):
            for T in itertools.combinations(range(k), r):
                comp = [j for j in range(k) if j not in T]
                rows = np.zeros((n, n))
                rhs = np.zeros((n, n))
                for i, j in enumerate(T):
                    rows[i] = Gt @ self.C_np[:, j]
                for i, j in enumerate(comp):
                    rows[len(T) + i] = Gt @ D[:, j]
                    rhs[len(T) + i] = Gt @ D[:, j]
                P = np.linalg.solve(rows, rhs)          # x -> x_perp^{[t]}
                region = np.array([Gt @ self.C_np[:, j] for j in comp]) @ P
                lnK = math.lgamma(len(T) + 1) + (k - len(T)) * math.log(2.0)
                data.append((P, region, lnK))
        self._proj_data = data
        return data

    def summand_logbound(self, x: np.ndarray, v: float) -> float:
        """Rigorous upper bound for log |p_hat(x sqrt(2v)) e^{-2 pi v Q(x)}|,
        or -inf when the kernel vanishes identically at x."""
        return float(self.summand_logbound_batch(np.asarray(x, float)[None, :], v)[0])

    def summand_logbound_batch(self, X: np.ndarray, v: float) -> np.ndarray:
        """Vectorized summand_logbound over rows of X."""
        G = self.gram_np
        Gt = self.gram_t_np
        qx = 0.5 * np.einsum("ij,jk,ik->i", X, G, X)
        best = np.full(len(X), -math.inf)
        for P, region, lnK in self._projection_data():
            vals = X @ region.T
            if vals.shape[1]:
                ok = np.all(vals >= -1e-9, axis=1) | np.all(vals <= 1e-9, axis=1)
            else:
                ok = np.ones(len(X), dtype=bool)
            if not np.any(ok):
                continue
            xct = X - X @ P.T
            qtp = qx - np.einsum("ij,jk,ik->i", xct, Gt, xct)
            cand = lnK - TWO_PI * v * qtp
            best = np.where(ok, np.maximum(best, cand), best)
        return best

    def p_holo(self, x: np.ndarray) -> float:
        return p_plain(self.gram_np, self.C_np, x)

    def p_hat(self, x: np.ndarray) -> float:
        """p_hat_{C,t}(x); the caller supplies the sqrt(2v)-scaled argument."""
        total = 0.0
        for coef, S, ker in self._subsets:
            e = 1.0 if ker is None else eval_E(ker, x)
            total += float(coef) * e
        return total

    def weight(self) -> float:
        return self.cell.system.n / 2.0


class MixedPiece:
    """Kernel built from terms coef * prod sgn(B(c, x)) * prod E_{Q,C}(x'),
    where x' is the sqrt(2v)-scaled argument (supplied by the caller).

    Covers Zwegers-style completions that keep sign factors for isotropic
    normal vectors, e.g. the trapezoid f_hat = (sgn(B(c1, .)) - E_{c2}) / 2.
    """

    def __init__(self, gram_np: np.ndarray, terms):
        # terms: list of (coef, [sgn vectors], ErrorKernel or None)
        self.gram_np = gram_np
        self.terms = terms

    def p_hat(self, x: np.ndarray) -> float:
        total = 0.0
        for coef, sgn_vecs, ker in self.terms:
            val = float(coef)
            for c in sgn_vecs:
                b = float(np.asarray(c) @ self.gram_np @ x)
                val *= _sgn_f(b)
            if ker is not None and val != 0.0:
                val *= eval_E(ker, x)
            total += val
        return total


@dataclass
class Completion:
    """Assembled completion of Theta_{Q, p_{C_reg}} for one cone system."""

    system: ConeSystem
    decomposition: CellDecomposition
    identity: PartitionIdentity
    cell_pieces: list
    correction_lines: list            # (direction Vec, constant Fraction)

    def holo_kernel(self) -> KernelSign:
        return KernelSign(self.identity.lhs)


def build_completion(system: ConeSystem, seed: int = 0,
                     t: Optional[Fraction] = None, variant: str = "mixed") -> Completion:
    from .decomp import decompose_cone, expand_identity

    dec = decompose_cone(system, seed=seed)
    ident = expand_identity(system, dec)
    pieces = [CellPiece(cell=c, gram=system.space.gram, t=t, variant=variant)
              for c in dec.cells]
    lines = _correction_lines(system, ident)
    return Completion(system=system, decomposition=dec, identity=ident,
                      cell_pieces=pieces, correction_lines=lines)


def _correction_lines(system: ConeSystem, ident: PartitionIdentity) -> list:
    """Support lines of the wall-correction kernel with their constant values.

    The corrections produced by decompose_cone are supported on
    one-dimensional wall intersections with constant kernel value; anything
    richer fails the sampling validation and raises.
    """
    funcs = list(ident.correction.functionals)
    n = system.n
    lines: dict = {}
    for sub in itertools.combinations(range(len(funcs)), n - 1):
        rows = mat([funcs[i] for i in sub])
        if ratlin.rank(rows) != n - 1:
            continue
        for d in ratlin.nullspace(rows):
            dd = vec(ratlin.primitive_integer(d))
            if dd in lines:
                continue
            vals = {ident.correction.eval(ratlin.scale(Fraction(c), dd))
                    for c in (1, 2, 3, -1, -2, 5)}
            v0 = ident.correction.eval(dd)
            if v0 != 0 and vals == {v0}:
                lines[dd] = v0
    rng = np.random.default_rng(5)
    for _ in range(300):
        x = vec([Fraction(int(t), 4) for t in rng.integers(-16, 17, size=n)])
        expect = ident.correction.eval(x)
        got = sum((v0 for dd, v0 in lines.items() if _on_ray(x, dd)), Fraction(0))
        if expect != got:
            raise errors.DecompositionFailed(
                "correction kernel not supported on constant lines")
    return [(dd, v0) for dd, v0 in lines.items()]


def eval_completion(comp: Completion, z: np.ndarray, tau: complex,
                    tol: float = 1e-13, radius: Optional[int] = None) -> EvalReport:
    """Theta_hat(z; tau): cell completions plus wall-line thetas."""
    total = 0j
    used = 0
    bound = 0.0
    for piece in comp.cell_pieces:
        rep = eval_piece_hat(piece, comp.system.space.gram, z, tau,
                             tol=tol, radius=radius)
        total += rep.value
        used += rep.lattice_points_used
        bound += rep.truncation_bound
    rep = _eval_correction_lines(comp, z, tau)
    total += rep.value
    used += rep.lattice_points_used
    bound += rep.truncation_bound
    return EvalReport(value=total, truncation_bound=bound, lattice_points_used=used)


class _PieceSummer:
    """Shared summation state for one piece evaluation."""

    def __init__(self, piece, G: np.ndarray, z: np.ndarray, tau: complex,
                 tol: float, latmap: Optional[np.ndarray]):
        self.piece = piece
        self.G = G
        self.z = z
        self.tau = tau
        self.tol = tol
        self.latmap = latmap            # integer index -> lattice point (None = identity)
        self.v = tau.imag
        self.yv = z.imag / self.v
        self.s2v = math.sqrt(2 * self.v)
        self.total = 0j
        self.used = 0
        self.seen: set = set()
        self.bound_batch = getattr(piece, "summand_logbound_batch", None)

    def pts_of(self, idx: np.ndarray) -> np.ndarray:
        return idx @ self.latmap.T if self.latmap is not None else idx

    def process(self, idx: np.ndarray) -> float:
        """Add the terms for the integer index rows; returns their mass."""
        fresh = [tuple(int(t) for t in row) for row in idx]
        keep_new = [i for i, key in enumerate(fresh) if key not in self.seen]
        if not keep_new:
            return 0.0
        for i in keep_new:
            self.seen.add(fresh[i])
        idx = idx[keep_new]
        pts = self.pts_of(idx.astype(float))
        G, v, tau, z = self.G, self.v, self.tau, self.z
        qns = 0.5 * np.einsum("ij,jk,ik->i", pts, G, pts)
        X = pts + self.yv
        bnzs = pts @ G @ z
        if self.bound_batch is not None:
            qxs = 0.5 * np.einsum("ij,jk,ik->i", X, G, X)
            lbs = self.bound_batch(X, v) + TWO_PI * (v * (qxs - qns) - bnzs.imag)
            survivors = np.nonzero(lbs >= -45.0)[0]
        else:
            lbs = None
            survivors = np.arange(len(pts))
        mass = 0.0
        for i in survivors:
            qn, x, bnz = qns[i], X[i], bnzs[i]
            w = self.piece.p_hat(x * self.s2v)
            if w == 0.0:
                continue
            log_mag = math.log(abs(w)) - TWO_PI * (v * qn + bnz.imag)
            if lbs is not None:
                # the rigorous bound caps the term: any excess of the computed
                # kernel over it is roundoff noise amplified by |q^{Q(n)}|
                log_mag = min(log_mag, float(lbs[i]))
            if log_mag < -45.0:
                continue
            if log_mag > 640.0:
                raise errors.NotConvergent("completion summand overflow")
            angle = TWO_PI * (tau.real * qn + bnz.real)
            term = math.copysign(1.0, w) * math.exp(log_mag) \
                * complex(math.cos(angle), math.sin(angle))
            self.total += term
            mass += abs(term)
            self.used += 1
        return mass


def eval_piece_hat(piece: CellPiece, gram: Mat, z: np.ndarray, tau: complex,
                   tol: float = 1e-12, radius: Optional[int] = None,
                   dual: bool = False) -> EvalReport:
    """sum_n p_hat((n + y/v) sqrt(2v)) q^{Q(n)} e^{2 pi i B(n,z)} over Z^n
    (or over the dual lattice M^{-1} Z^n when dual=True).

    Enumeration: adaptive infinity-norm shells catch the bulk; for a cell
    with an isotropic ray f the slowly decaying family of lattice lines
    parallel to f (decay is linear, not Gaussian, along the ray tube) is
    walked explicitly until the rigorous summand bound stays below tol.
    """
    G = np.array([[float(x) for x in row] for row in gram])
    n = G.shape[0]
    if tau.imag <= 0:
        raise errors.NotConvergent("tau must lie in the upper half plane")
    z = np.asarray(z, dtype=complex)
    latmap = np.linalg.inv(G) if dual else None
    summer = _PieceSummer(piece, G, z, tau, tol, latmap)

    # bulk: adaptive shells
    last_mass = 0.0
    rmax = radius if radius is not None else 40
    small = 0
    r = 0
    while r <= rmax:
        shell = np.array(list(_shell(n, r)), dtype=int)
        mass = summer.process(shell)
        last_mass = mass
        if r > 2 and mass < tol:
            small += 1
            if small >= 2 and radius is None:
                break
        else:
            small = 0
        r += 1

    # ray tubes
    ray = getattr(piece, "cell", None)
    ray = ray.iso_ray if ray is not None else None
    if ray is not None:
        if dual:
            kdir = ratlin.primitive_integer(ratlin.matvec(gram, ray.f))
        else:
            kdir = tuple(int(t) for t in ray.f)
        F = _unimodular_extension(vec(kdir))
        Fnp = np.array([[int(t) for t in row] for row in F])
        jmax = 1
        while jmax <= 14:
            grew = False
            for jtuple in itertools.product(range(-jmax, jmax + 1), repeat=n - 1):
                if max((abs(t) for t in jtuple), default=0) != jmax and jmax > 1:
                    continue
                base = Fnp @ np.array([0, *jtuple])
                if _walk_line(summer, base, Fnp[:, 0], tol) > tol:
                    grew = True
            if not grew and jmax >= 2:
                break
            jmax += 1

    return EvalReport(value=summer.total, truncation_bound=max(last_mass, tol),
                      lattice_points_used=summer.used)


def _walk_line(summer: _PieceSummer, base: np.ndarray, step: np.ndarray,
               tol: float) -> float:
    """Walk integer points base + c*step in both directions until the mass
    stays below tol for 25 consecutive points; returns the total line mass."""
    mass = 0.0
    for sgn in (1, -1):
        quiet = 0
        c = sgn
        while quiet < 25 and abs(c) < 4000:
            m = summer.process(np.array([base + c * step]))
            mass += m
            quiet = quiet + 1 if m < tol else 0
            c += sgn
    m0 = summer.process(np.array([base]))
    return mass + m0


def _shell(n: int, r: int):
    if r == 0:
        yield (0,) * n
        return
    for mtuple in itertools.product(range(-r, r + 1), repeat=n):
        if max(abs(t) for t in mtuple) == r:
            yield mtuple


def _eval_correction_lines(comp: Completion, z: np.ndarray, tau: complex) -> EvalReport:
    """Wall-line thetas: one-dimensional positive definite sums, active only
    when y/v meets the line lattice (their completions are themselves)."""
    G = comp.system.space.gram_np
    v = tau.imag
    z = np.asarray(z, dtype=complex)
    yv = _ratvec(z.imag / v)
    total = 0j
    used = 0
    for dd, v0 in comp.correction_lines:
        prog = _line_progression(dd, yv)
        if prog is None:
            continue
        off, step = prog
        dnp = np.array([float(t) for t in dd])
        qd = 0.5 * float(dnp @ G @ dnp)
        if qd <= 0:
            raise errors.NotConvergent("correction line is not positive definite")
        kmax = int(math.ceil(math.sqrt(40.0 / (qd * v)) / float(step))) + 2
        yv_np = np.array([float(t) for t in yv])
        for k in range(-kmax, kmax + 1):
            c = float(off) + float(step) * k
            nvec = c * dnp - yv_np          # integer lattice point on the line
            qn = 0.5 * float(nvec @ G @ nvec)
            total += float(v0) * cmath.exp(2j * math.pi * (tau * qn + complex(nvec @ G @ z)))
            used += 1
    return EvalReport(value=total, truncation_bound=1e-14 if used else 0.0,
                      lattice_points_used=used)


def _line_progression(dd: Vec, alpha) -> Optional[tuple]:
    from .cones import _progression_intersect

    prog = None
    for fk, ak in zip(dd, alpha):
        if fk == 0:
            if fr(ak).denominator != 1:
                return None
            continue
        p = (fr(ak) / fk, abs(Fraction(1, 1) / fk))
        prog = p if prog is None else _progression_intersect(prog, p)
        if prog is None:
            return None
    return prog


def eval_holomorphic(comp: Completion, z: np.ndarray, tau: complex, Qmax) -> EvalReport:
    """Theta_{Q, p_{C_reg}}(z; tau) from the exact kernel (comparison value)."""
    task = ThetaTask(comp.system, KernelSign(comp.identity.lhs),
                     tuple(0 for _ in range(comp.system.n)),
                     tuple(0 for _ in range(comp.system.n)))
    return eval_theta(task, z, tau, Qmax)


# ---------------------------------------------------------------------------
# modularity checks
# ---------------------------------------------------------------------------

def exponent_period(system: ConeSystem) -> int:
    """Smallest M with M * Q(m) integral for all m in Z^n."""
    from math import lcm

    den = 1
    n = system.n
    for i in range(n):
        eent = system.space.gram[i][i]
        den = lcm(den, (fr(eent) / 2).denominator)
        for j in range(i + 1, n):
            den = lcm(den, fr(system.space.gram[i][j]).denominator)
    return den


def t_shift_residual(comp: Completion, z: np.ndarray, tau: complex,
                     M: Optional[int] = None) -> float:
    """|Theta_hat(z; tau + M) - Theta_hat(z; tau)| with M clearing the
    exponent denominators of the integer lattice (phase is then 1)."""
    if M is None:
        M = exponent_period(comp.system)
    base = eval_completion(comp, z, tau)
    shifted = eval_completion(comp, z, tau + M)
    return abs(shifted.value - base.value)


def s_oracle_residual(comp: Completion, z: np.ndarray, tau: complex,
                      tol: float = 1e-13) -> dict:
    """Residuals of Theta_hat(z/tau; -1/tau) = (-i tau)^{n/2} |det M|^{-1/2}
    e^{2 pi i Q(z)/tau} [dual-lattice sum](z; tau), per cell piece and assembled."""
    G = comp.system.space.gram_np
    n = comp.system.n
    z = np.asarray(z, dtype=complex)
    tau_s = -1 / tau
    z_s = z / tau
    detM = abs(float(np.linalg.det(G)))
    mult = (-1j * tau) ** (n / 2.0) * detM ** -0.5 \
        * cmath.exp(2j * math.pi * 0.5 * complex(z @ G @ z) / tau)
    out = {}
    lhs_total = 0j
    rhs_total = 0j
    for i, piece in enumerate(comp.cell_pieces):
        lhs = eval_piece_hat(piece, comp.system.space.gram, z_s, tau_s, tol=tol).value
        rhs = mult * eval_piece_hat(piece, comp.system.space.gram, z, tau,
                                    tol=tol, dual=True).value
        out[f"cell_{i}"] = abs(lhs - rhs)
        lhs_total += lhs
        rhs_total += rhs
    line_s = _eval_correction_lines(comp, z_s, tau_s)
    line_p = _eval_correction_lines(comp, z, tau)
    if line_s.lattice_points_used or line_p.lattice_points_used:
        # one-dimensional pieces transform with weight 1/2 and their own
        # multiplier; report them separately instead of folding into the sum
        out["lines_active"] = True
    else:
        out["assembled"] = abs(lhs_total - rhs_total)
    return out


# ---------------------------------------------------------------------------
# holomorphic recovery and face restriction
# ---------------------------------------------------------------------------

def recovery_residual(comp: Completion, z: np.ndarray, tau: complex,
                      w_im: float = 1000.0, count: int = 50, seed: int = 9) -> float:
    """Max over sampled non-wall lattice points n of
    |p_hat_{C,t}((n + 2y/(tau-w)) sqrt(tau-w)) - p_C(n + y/v)| at w = tau - i w_im,
    reading sqrt(tau - w) through the real parameter T = Im(tau - w)/2."""
    rng = np.random.default_rng(seed)
    v = tau.imag
    z = np.asarray(z, dtype=complex)
    y = z.imag
    T = w_im / 2.0
    worst = 0.0
    tested = 0
    n = comp.system.n
    guard = 0
    while tested < count and guard < 50 * count:
        guard += 1
        m = rng.integers(-6, 7, size=n).astype(float)
        x = m + y / v
        xT = (m + y / T) * math.sqrt(2 * T)
        ok = True
        for piece in comp.cell_pieces:
            # the lattice point itself must be off every wall (the limit
            # kernel sees the chamber of m); the shift must not cross over
            vals_m = piece.cell.system.lam(m)
            vals_x = piece.cell.system.lam(x)
            if any(abs(float(t)) < 1e-8 for t in vals_m) or \
                    any(float(a) * float(b) < 0 for a, b in zip(vals_m, vals_x)):
                ok = False
                break
        if not ok:
            continue
        tested += 1
        for piece in comp.cell_pieces:
            worst = max(worst, abs(piece.p_hat(xT) - piece.p_holo(x)))
    return worst


def restrict_to_face(task: ThetaTask, Kstar: Sequence[int]) -> ThetaTask:
    """Task on V_{K*} = {x_k = 0 : k in K*} (coordinate indices, 1-based).

    Requires the face not an isotropic ray, alpha_k integral, beta_k = 0 for
    k in K*.  The restricted task inherits the Gram minor, surviving
    functionals, and the closed-cone kernel."""
    from .cones import face_closure

    K = sorted(set(Kstar))
    if not K:
        return task
    sys_ = task.system
    face = face_closure(sys_, K)
    if face.dim == 1 and face.rays and all(sys_.space.Q(r) == 0 for r in face.rays):
        raise errors.IsotropicFace("restriction to an isotropic ray diverges")
    for k in K:
        if fr(task.alpha[k - 1]).denominator != 1:
            raise errors.LatticeMismatch(f"alpha_{k} must be integral")
        if task.beta[k - 1] != 0:
            raise errors.LatticeMismatch(f"beta_{k} must vanish")
    keep = [i for i in range(sys_.n) if (i + 1) not in K]
    gram = mat([[sys_.space.gram[i][j] for j in keep] for i in keep])
    funcs = []
    for u in sys_.functionals:
        row = vec([u[j] for j in keep])
        if any(t != 0 for t in row) and row not in funcs:
            funcs.append(row)
    sub = ConeSystem(QuadSpace(gram), mat(funcs))
    alpha = tuple(task.alpha[i] for i in keep)
    beta = tuple(task.beta[i] for i in keep)
    return ThetaTask(sub, KernelClosure(sub), alpha, beta)
