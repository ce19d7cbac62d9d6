"""Sign/indicator kernel algebra and simplicial cone decomposition.

Kernels are finite rational combinations of terms

    coef * prod_{d in deltas} delta(u_d . x) * prod_{s in sgns} sgn(u_s . x)

over a table of rational linear functionals, with sgn(0) = 0 and delta the
exact zero test.  Evaluation at rational points is exact, which is what makes
the partition identities checkable without tolerances.

The decomposition step splits the summation cone into simplicial cells each
containing at most one isotropic ray.  Two paths are implemented:

* simplicial cone with exactly two isotropic extreme rays: one rational
  hyperplane through the remaining vertices separates them (two cells);
* general: cut a corner around each isotropic vertex of the cross section,
  triangulate the corner from the ray's vertex and the complement from the
  centroid of its vertices.

The identity p_{C_reg} = sum of cell kernels + correction is produced as an
exact kernel; the correction's support lies on the inserted walls.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import errors, ratlin
from .cones import ConeSystem, IsotropicRay, QuadSpace, classify_subspace, \
    extreme_rays, face_closure, find_isotropic_rays
from .ratlin import Mat, Vec, fr, mat, vec


# ---------------------------------------------------------------------------
# sign kernels
# ---------------------------------------------------------------------------

def _sgn(v) -> int:
    if isinstance(v, float):
        if abs(v) < 1e-13:
            return 0
        return 1 if v > 0 else -1
    return 0 if v == 0 else (1 if v > 0 else -1)


def _is_zero(v) -> bool:
    if isinstance(v, float):
        return abs(v) < 1e-13
    return v == 0


@dataclass(frozen=True)
class SignKernel:
    """Formal rational combination of delta/sign monomials in functionals."""

    functionals: Mat                      # row vectors u_i
    terms: tuple                          # (coef: Fraction, deltas: tuple, sgns: tuple)

    def eval(self, x):
        vals = [_dot_any(u, x) for u in self.functionals]
        total = Fraction(0)
        for coef, deltas, sgns in self.terms:
            acc = coef
            dead = False
            for d in deltas:
                if not _is_zero(vals[d]):
                    dead = True
                    break
            if dead:
                continue
            for s in sgns:
                sg = _sgn(vals[s])
                if sg == 0:
                    dead = True
                    break
                if sg < 0:
                    acc = -acc
            if not dead:
                total += acc
        return total

    # ---- algebra ----------------------------------------------------------

    def _key(self, u: Vec) -> int:
        for i, v in enumerate(self.functionals):
            if v == u:
                return i
        return -1

    def combine(self, other: "SignKernel", c1=1, c2=1) -> "SignKernel":
        """c1 * self + c2 * other over a merged functional table."""
        table = list(self.functionals)
        index = {tuple(u): i for i, u in enumerate(table)}

        def reindex(kern, cmul):
            remap = []
            for u in kern.functionals:
                key = tuple(u)
                if key not in index:
                    index[key] = len(table)
                    table.append(u)
                remap.append(index[key])
            return [(fr(cmul) * coef, tuple(remap[d] for d in deltas),
                     tuple(remap[s] for s in sgns))
                    for coef, deltas, sgns in kern.terms]

        terms = reindex(self, c1) + reindex(other, c2)
        return SignKernel(mat(table), _collect(terms))

    def scaled(self, c) -> "SignKernel":
        return SignKernel(self.functionals,
                          tuple((fr(c) * coef, d, s) for coef, d, s in self.terms))

    def times_delta(self, us: Sequence[Vec]) -> "SignKernel":
        """Multiply by prod delta(u . x) for the given functionals."""
        table = list(self.functionals)
        index = {tuple(u): i for i, u in enumerate(table)}
        ids = []
        for u in us:
            key = tuple(vec(u))
            if key not in index:
                index[key] = len(table)
                table.append(vec(u))
            ids.append(index[key])
        out = []
        for coef, deltas, sgns in self.terms:
            nd = tuple(sorted(set(deltas) | set(ids)))
            if set(nd) & set(sgns):
                continue  # delta * sgn of the same functional vanishes
            out.append((coef, nd, sgns))
        return SignKernel(mat(table), _collect(out))

    def support_hint(self) -> str:
        return f"{len(self.terms)} terms over {len(self.functionals)} functionals"


def _dot_any(u: Vec, x):
    if all(isinstance(t, (int, Fraction)) for t in x):
        return ratlin.dot(u, vec(x))
    return float(np.array([float(t) for t in u]) @ np.asarray(x, dtype=float))


def _collect(terms) -> tuple:
    acc: dict = {}
    for coef, deltas, sgns in terms:
        key = (tuple(sorted(deltas)), tuple(sorted(sgns)))
        acc[key] = acc.get(key, Fraction(0)) + coef
    return tuple((c, d, s) for (d, s), c in sorted(acc.items()) if c != 0)


def p_kernel(functionals: Mat) -> SignKernel:
    """p_C as a kernel: 2^{-k} sum_S (1 - (-1)^{k+|S|}) prod_S sgn."""
    k = len(functionals)
    terms = []
    for r in range(k + 1):
        coef = 1 - (-1) ** (k + r)
        if coef == 0:
            continue
        for S in itertools.combinations(range(k), r):
            terms.append((Fraction(coef, 2 ** k), (), S))
    return SignKernel(mat(functionals), _collect(terms))


def chi_kernel(functionals: Mat) -> SignKernel:
    """chi_C expanded into delta/sign monomials:
    prod (1 + sgn - delta)/2 - (-1)^N prod (1 - sgn - delta)/2."""
    N = len(functionals)
    terms = []
    for signs in ((1, 1), (-1, -(-1) ** N)):
        sgn_side, global_coef = signs
        # each factor contributes one of: 1, sgn_side * sgn, -delta
        for choice in itertools.product((0, 1, 2), repeat=N):
            coef = Fraction(global_coef, 2 ** N)
            deltas, sgns = [], []
            for i, ch in enumerate(choice):
                if ch == 1:
                    sgns.append(i)
                    if sgn_side < 0:
                        coef = -coef
                elif ch == 2:
                    coef = -coef
                    deltas.append(i)
            terms.append((coef, tuple(deltas), tuple(sgns)))
    return SignKernel(mat(functionals), _collect(terms))


def eval_chi(system: ConeSystem, x):
    """chi_C(x) = prod H(lambda_k) - (-1)^N prod H(-lambda_k), H strict."""
    vals = system.lam(x)
    N = len(vals)
    plus = all(_sgn(v) > 0 for v in vals)
    minus = all(_sgn(v) < 0 for v in vals)
    return Fraction(int(plus) - (-1) ** N * int(minus))


def eval_p(system: ConeSystem, subset: Sequence[int], x):
    """p over the 1-based subset of the system's functionals, exactly."""
    funcs = mat([system.functionals[i - 1] for i in subset])
    return p_kernel(funcs).eval(x)


def c_reg(system: ConeSystem) -> list[int]:
    """1-based indices of the normals kept in C_reg (those with Q(c_k) < 0)."""
    keep = []
    for i in range(system.k):
        if system.space.Q(system.normals[i]) != 0:
            keep.append(i + 1)
    return keep


# ---------------------------------------------------------------------------
# polytope triangulation (cross-section work is exact rational)
# ---------------------------------------------------------------------------

def _affine_basis(points: list[Vec]) -> tuple[Vec, Mat]:
    """(origin, basis rows) of the affine hull."""
    p0 = points[0]
    diffs = [ratlin.sub(p, p0) for p in points[1:]]
    basis: list[Vec] = []
    for d in diffs:
        cand = basis + [d]
        if ratlin.rank(mat(cand)) == len(cand):
            basis.append(d)
    return p0, mat(basis) if basis else tuple()


def _coords_in(points: list[Vec], origin: Vec, basis: Mat) -> list[Vec]:
    if not basis:
        return [tuple() for _ in points]
    bt = ratlin.transpose(basis)
    gram = ratlin.matmul(basis, bt)
    inv = ratlin.inverse(gram)
    out = []
    for p in points:
        rhs = ratlin.matvec(basis, ratlin.sub(p, p0 := origin))
        out.append(ratlin.matvec(inv, rhs))
    return out


def triangulate_polytope(vertices: Sequence[Sequence], apex: Optional[Sequence] = None
                         ) -> list[tuple]:
    """Decompose a convex polytope (given by its vertices) into simplices that
    overlap only on boundaries, by recursive coning over facets from a chosen
    apex (the first vertex by default)."""
    pts = [vec(p) for p in vertices]
    uniq: list[Vec] = []
    for p in pts:
        if p not in uniq:
            uniq.append(p)
    pts = uniq
    if not pts:
        raise errors.DegenerateInput("no vertices")
    origin, basis = _affine_basis(pts)
    r = len(basis)
    coords = _coords_in(pts, origin, basis)
    apex_c = None
    if apex is not None:
        apex_v = vec(apex)
        ac = _coords_in([apex_v], origin, basis)[0]
        # apex must lie in the affine hull
        recon = origin
        for t, b in zip(ac, basis):
            recon = ratlin.add(recon, ratlin.scale(t, b))
        if recon != apex_v:
            raise errors.DegenerateInput("apex outside the affine hull")
        apex_c = ac
    simp_coords = _triangulate_rec(coords, r, apex_c)
    back = {tuple(c): p for c, p in zip(coords, pts)}
    out = []
    for s in simp_coords:
        out.append(tuple(back[tuple(c)] if tuple(c) in back else
                         _lift(c, origin, basis) for c in s))
    return out


def _lift(c: Vec, origin: Vec, basis: Mat) -> Vec:
    p = origin
    for t, b in zip(c, basis):
        p = ratlin.add(p, ratlin.scale(t, b))
    return p


def _triangulate_rec(coords: list[Vec], r: int, apex: Optional[Vec]) -> list[tuple]:
    """Triangulate full-dimensional polytope conv(coords) in R^r."""
    if r == 0:
        return [(coords[0],)]
    if len(coords) == r + 1:
        return [tuple(coords)]
    w0 = apex if apex is not None else coords[0]
    if w0 not in coords:
        coords = coords + [w0]
    simplices = []
    for facet_pts, _ in _facets(coords, r):
        if w0 in facet_pts:
            continue
        sub = _triangulate_facet(facet_pts, r - 1)
        for s in sub:
            simplices.append(tuple(list(s) + [w0]))
    return simplices


def _triangulate_facet(points: list[Vec], rdim: int) -> list[tuple]:
    origin, basis = _affine_basis(points)
    coords = _coords_in(points, origin, basis)
    sub = _triangulate_rec(coords, len(basis), None)
    back = {tuple(c): p for c, p in zip(coords, points)}
    return [tuple(back[tuple(c)] for c in s) for s in sub]


def _facets(coords: list[Vec], r: int) -> list[tuple[list[Vec], Vec]]:
    """Facets of a full-dimensional polytope in R^r as (vertex list, outward normal)."""
    found = {}
    for sub in itertools.combinations(range(len(coords)), r):
        pts = [coords[i] for i in sub]
        origin, basis = _affine_basis(pts)
        if len(basis) != r - 1:
            continue
        normal_space = ratlin.nullspace(basis) if basis else \
            [tuple(Fraction(1 if i == 0 else 0) for i in range(r))]
        if len(normal_space) != 1:
            continue
        nvec = vec(ratlin.primitive_integer(normal_space[0]))
        c0 = ratlin.dot(nvec, pts[0])
        sides = [ratlin.dot(nvec, p) - c0 for p in coords]
        if all(s <= 0 for s in sides) or all(s >= 0 for s in sides):
            if all(s <= 0 for s in sides):
                nvec = ratlin.scale(Fraction(-1), nvec)
                c0 = -c0
            members = tuple(sorted(i for i, p in enumerate(coords)
                                   if ratlin.dot(nvec, p) == c0))
            found[members] = ([coords[i] for i in members], nvec)
    return list(found.values())


# ---------------------------------------------------------------------------
# cone decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    """Simplicial sub-cone: functional rows (sign-oriented) and generators."""

    system: ConeSystem
    rays: tuple                      # generating extreme rays
    iso_ray: Optional[IsotropicRay]  # the at most one isotropic ray
    Sset: Optional[tuple] = None     # 1-based normal indices spanning the semidefinite space

    @property
    def functionals(self) -> Mat:
        return self.system.functionals

    def kernel(self) -> SignKernel:
        return p_kernel(self.system.functionals)


@dataclass(frozen=True)
class CellDecomposition:
    base: ConeSystem                 # the C_reg system the cells partition
    cells: tuple
    inserted: tuple                  # inserted functionals (rational rows)
    reg_indices: tuple               # 1-based indices of C_reg in the parent system
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "cells": [[[str(t) for t in row] for row in c.system.functionals]
                      for c in self.cells],
            "inserted": [[str(t) for t in row] for row in self.inserted],
            "reg_indices": list(self.reg_indices),
            "seed": self.seed,
        }


def _dual_ray_functional(rays: list[Vec], i: int) -> Vec:
    """Functional vanishing on all rays except ray i (value 1 there)."""
    R = ratlin.transpose(mat(rays))
    inv = ratlin.inverse(R)
    return inv[i]


def _cell_from_rays(space: QuadSpace, cell_rays: list[Vec]) -> ConeSystem:
    """Simplicial cone system from n independent generating rays."""
    R = ratlin.transpose(mat(cell_rays))
    inv = ratlin.inverse(R)      # row i = functional dual to ray i
    funcs = mat([vec(ratlin.primitive_integer(row)) for row in inv])
    return ConeSystem(space, funcs)


def _r_choice(seed: int) -> Fraction:
    choices = [Fraction(1, 2), Fraction(1, 1), Fraction(2, 1), Fraction(1, 3),
               Fraction(3, 1), Fraction(2, 3), Fraction(3, 2), Fraction(1, 4)]
    return choices[seed % len(choices)]


def decompose_cone(system: ConeSystem, seed: int = 0) -> CellDecomposition:
    """Split R(C) (with the Q(c)=0 normals removed) into simplicial cells each
    holding at most one isotropic ray, with rational inserted hyperplanes."""
    reg_idx = c_reg(system)
    reg = system.subsystem([i - 1 for i in reg_idx])
    reg = ConeSystem(system.space, reg.functionals, scaling=system.scaling)
    rays = extreme_rays(reg)
    if not rays:
        raise errors.DegenerateInput("cone has no extreme rays")
    iso = [r for r in rays if system.space.Q(r) == 0]
    n = system.n

    if len(rays) == n and len(iso) <= 1:
        cells = (_make_cell(reg, list(rays)),)
        return CellDecomposition(base=reg, cells=cells, inserted=(),
                                 reg_indices=tuple(reg_idx), seed=seed)

    if len(rays) == n and len(iso) == 2:
        # single rational hyperplane through the non-isotropic vertices
        r = _r_choice(seed)
        i0 = rays.index(iso[0])
        i1 = rays.index(iso[1])
        g0 = _dual_ray_functional(list(rays), i0)
        g1 = _dual_ray_functional(list(rays), i1)
        h = ratlin.sub(g0, ratlin.scale(r, g1))   # >0 at iso[0], <0 at iso[1]
        cell_a_rays = [rays[j] for j in range(n) if j != i1]
        cell_b_rays = [rays[j] for j in range(n) if j != i0]
        mid = _hyperplane_edge_point(h, iso[0], iso[1])
        cell_a = _make_cell(reg, cell_a_rays + [mid], forced_funcs=_select_funcs(
            reg, h, keep_positive_on=iso[0], vanish_on=iso[1]))
        cell_b = _make_cell(reg, cell_b_rays + [mid], forced_funcs=_select_funcs(
            reg, ratlin.scale(Fraction(-1), h), keep_positive_on=iso[1], vanish_on=iso[0]))
        cells = (cell_a, cell_b)
        _validate_cells(reg, cells, samples=2000, seed=seed)
        return CellDecomposition(base=reg, cells=cells, inserted=(vec(h),),
                                 reg_indices=tuple(reg_idx), seed=seed)

    return _decompose_general(reg, tuple(reg_idx), rays, iso, seed)


def _hyperplane_edge_point(h: Vec, r0: Vec, r1: Vec) -> Vec:
    """Rational point on the segment cone(r0, r1) where h vanishes."""
    a = ratlin.dot(h, r0)
    b = ratlin.dot(h, r1)
    if a == b:
        raise errors.DecompositionFailed("hyperplane parallel to the edge")
    # h(t r0 + (1-t) r1) = 0 -> t = -b/(a-b)
    t = -b / (a - b)
    pt = ratlin.add(ratlin.scale(t, r0), ratlin.scale(1 - t, r1))
    return vec(ratlin.primitive_integer(pt))


def _select_funcs(reg: ConeSystem, h: Vec, keep_positive_on: Vec, vanish_on: Vec) -> Mat:
    """Functionals of the half-cell: h plus the parent functionals vanishing
    on the kept isotropic ray's opposite vertex pattern."""
    rows = [vec(ratlin.primitive_scaled(h))]
    for u in reg.functionals:
        if ratlin.dot(u, keep_positive_on) == 0:
            rows.append(u)
    return mat(rows)


def _make_cell(reg: ConeSystem, cell_rays: list[Vec],
               forced_funcs: Optional[Mat] = None) -> Cell:
    space = reg.space
    if forced_funcs is not None and ratlin.rank(forced_funcs) == space.n \
            and len(forced_funcs) == space.n:
        cs = ConeSystem(space, forced_funcs)
    else:
        basis_rays: list[Vec] = []
        for r in cell_rays:
            cand = basis_rays + [r]
            if ratlin.rank(mat(cand)) == len(cand):
                basis_rays.append(r)
        if len(basis_rays) != space.n:
            raise errors.DecompositionFailed("cell rays do not span the space")
        cs = _cell_from_rays(space, basis_rays)
        # orient functionals nonnegative on all cell rays
        rows = []
        for u in cs.functionals:
            if any(ratlin.dot(u, r) < 0 for r in cell_rays):
                u = ratlin.scale(Fraction(-1), u)
            rows.append(vec(u))
        cs = ConeSystem(space, mat(rows))
    cell_iso = [r for r in extreme_rays(cs) if space.Q(r) == 0]
    if len(cell_iso) > 1:
        raise errors.DecompositionFailed("cell contains more than one isotropic ray")
    iso_ray = None
    Sset = None
    if cell_iso:
        iso_rays = find_isotropic_rays(cs)
        iso_ray = iso_rays[0] if iso_rays else None
        for T in itertools.combinations(range(1, cs.k + 1), cs.n - 1):
            cls = classify_subspace(cs, T)
            if cls.kind == "NegSemiDefWithRay":
                Sset = T
                break
    return Cell(system=cs, rays=tuple(extreme_rays(cs)), iso_ray=iso_ray, Sset=Sset)


def _decompose_general(reg: ConeSystem, reg_idx: tuple, rays: list[Vec],
                       iso: list[Vec], seed: int) -> CellDecomposition:
    """Three-step corner-cut decomposition for the general case."""
    space = reg.space
    n = space.n
    # cross section hyperplane through d = sum of normalized rays
    d = vec([sum(fr(r[i]) for r in rays) for i in range(n)])
    gd = ratlin.matvec(space.gram, d)
    if space.Q(d) <= 0:
        raise errors.DecompositionFailed("cross-section direction not positive")

    def to_section(r: Vec) -> Vec:
        s = ratlin.dot(gd, r)
        if s <= 0:
            raise errors.DecompositionFailed("ray behind the cross section")
        return ratlin.scale(Fraction(1, 1) / s, r)

    P = [to_section(r) for r in rays]
    iso_pts = [to_section(r) for r in iso]
    corner_simplices: list[tuple] = []
    cut_points_all: list[Vec] = []
    inserted: list[Vec] = []
    adj = _polytope_edges(reg, rays)

    remaining = [p for p in P if p not in iso_pts]
    for w0_ray, w0 in zip(iso, iso_pts):
        nb = [to_section(rays[j]) for j in adj[rays.index(w0_ray)]]
        # separating level: h(x) = -(sum of functionals vanishing at w0)
        hil = [u for u in reg.functionals if ratlin.dot(u, w0) == 0]
        h = vec([-sum(u[i] for u in hil) for i in range(n)])
        vals = [ratlin.dot(h, p) for p in P if p != w0]
        top = max(vals)
        c = (ratlin.dot(h, w0) + top) / 2
        cuts = []
        for q in nb:
            a = ratlin.dot(h, w0) - c
            b = ratlin.dot(h, q) - c
            if a == b:
                raise errors.DecompositionFailed("cut parallel to an edge")
            t = -b / (a - b)
            if not 0 < t < 1:
                raise errors.DecompositionFailed("cut misses the edge")
            cuts.append(ratlin.add(ratlin.scale(t, w0), ratlin.scale(1 - t, q)))
        inserted.append(h)
        cut_points_all.extend(cuts)
        if len(cuts) >= 2:
            for s in triangulate_polytope(cuts):
                corner_simplices.append(tuple(list(s) + [w0]))
        else:
            corner_simplices.append(tuple(cuts + [w0]))
        remaining.extend(cuts)

    comp_simplices = []
    if remaining:
        centroid = vec([sum(fr(p[i]) for p in remaining) / len(remaining)
                        for i in range(n)])
        comp_simplices = triangulate_polytope(remaining, apex=centroid)
    cells = []
    for s in corner_simplices + comp_simplices:
        cells.append(_make_cell(reg, [vec(ratlin.primitive_integer(p)) for p in s]))
    cells = tuple(cells)
    _validate_cells(reg, cells, samples=2000, seed=seed)
    return CellDecomposition(base=reg, cells=cells, inserted=tuple(inserted),
                             reg_indices=reg_idx, seed=seed)


def _polytope_edges(reg: ConeSystem, rays: list[Vec]) -> dict:
    """Adjacency of extreme rays (2-faces of the cone)."""
    n = reg.n
    adj: dict = {i: [] for i in range(len(rays))}
    for i, j in itertools.combinations(range(len(rays)), 2):
        tight = [u for u in reg.functionals
                 if ratlin.dot(u, rays[i]) == 0 and ratlin.dot(u, rays[j]) == 0]
        if not tight:
            continue
        if ratlin.rank(mat(tight)) != n - 2:
            continue
        others = [k for k in range(len(rays)) if k not in (i, j)
                  and all(ratlin.dot(u, rays[k]) == 0 for u in tight)]
        if not others:
            adj[i].append(j)
            adj[j].append(i)
    return adj


def _validate_cells(reg: ConeSystem, cells: tuple, samples: int, seed: int) -> None:
    """Membership partition check: interior points claimed by exactly one cell."""
    rng = np.random.default_rng(seed + 11)
    rays = extreme_rays(reg)
    rays_np = [np.array([float(t) for t in r]) for r in rays]
    double = gaps = 0
    for _ in range(samples):
        w = rng.dirichlet(np.ones(len(rays_np)))
        x = sum(wi * r for wi, r in zip(w, rays_np))
        interior = exact = 0
        for c in cells:
            vals = c.system.lam(x)
            if all(v > 1e-9 for v in vals):
                interior += 1
            if all(v > -1e-9 for v in vals):
                exact += 1
        if interior > 1:
            double += 1
        if exact == 0:
            gaps += 1
    if double or gaps:
        raise errors.DecompositionFailed(
            f"partition check failed: {double} double claims, {gaps} gaps")


# ---------------------------------------------------------------------------
# expansion identities and regularized chi
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionIdentity:
    lhs: SignKernel                 # p over C_reg
    cells: tuple                    # cell kernels
    correction: SignKernel          # lhs - sum(cells); supported on inserted walls

    def residual_at(self, x):
        total = self.lhs.eval(x)
        for c in self.cells:
            total -= c.eval(x)
        total -= self.correction.eval(x)
        return total


def expand_identity(system: ConeSystem, decomposition: CellDecomposition) -> PartitionIdentity:
    lhs = p_kernel(decomposition.base.functionals)
    cell_kernels = tuple(c.kernel() for c in decomposition.cells)
    corr = lhs
    for ck in cell_kernels:
        corr = corr.combine(ck, 1, -1)
    return PartitionIdentity(lhs=lhs, cells=cell_kernels, correction=corr)


def chi_reg(system: ConeSystem, decomposition: Optional[CellDecomposition] = None
            ) -> SignKernel:
    """Regularized chi: sum over J whose face F_J is not an isotropic ray of
    (-1)^{|J|} delta_{V_J} p_{C_reg}."""
    reg_idx = c_reg(system)
    preg = p_kernel(mat([system.functionals[i - 1] for i in reg_idx]))
    total: Optional[SignKernel] = None
    for rsize in range(system.k + 1):
        for J in itertools.combinations(range(1, system.k + 1), rsize):
            if J and _face_is_isotropic_ray(system, J):
                continue
            term = preg.times_delta([system.functionals[j - 1] for j in J]) \
                if J else preg
            term = term.scaled(Fraction((-1) ** len(J)))
            total = term if total is None else total.combine(term)
    return total


def _face_is_isotropic_ray(system: ConeSystem, J: Sequence[int]) -> bool:
    face = face_closure(system, J)
    if face.dim != 1 or not face.rays:
        return False
    return all(system.space.Q(r) == 0 for r in face.rays)


def chi_alt_kernel(system: ConeSystem) -> SignKernel:
    """The alternative convention sum_J 2^{-|J|} delta_{V_J} p_{C_{J^c}}."""
    total: Optional[SignKernel] = None
    for rsize in range(system.k + 1):
        for J in itertools.combinations(range(1, system.k + 1), rsize):
            comp = [i for i in range(1, system.k + 1) if i not in J]
            pk = p_kernel(mat([system.functionals[i - 1] for i in comp])) if comp \
                else SignKernel(mat([system.functionals[0]]), ((Fraction(0), (), ()),))
            term = pk.times_delta([system.functionals[j - 1] for j in J]) if J else pk
            term = term.scaled(Fraction(1, 2 ** len(J)))
            total = term if total is None else total.combine(term)
    return total
