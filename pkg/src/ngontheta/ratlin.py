"""Small exact linear algebra kernel over fractions.

Matrices are tuples of tuples of Fraction; vectors are tuples of Fraction.
Dimensions here are tiny (<= 8), so plain Gaussian elimination is fine.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd
from typing import Iterable, Sequence

Vec = tuple[Fraction, ...]
Mat = tuple[Vec, ...]


def fr(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def vec(xs: Iterable) -> Vec:
    return tuple(fr(x) for x in xs)


def mat(rows: Iterable[Iterable]) -> Mat:
    return tuple(vec(r) for r in rows)


def mat_from_numpy(a) -> Mat:
    return mat([[Fraction(x).limit_denominator(10**12) for x in row] for row in a])


def zeros(n: int) -> Vec:
    return tuple(Fraction(0) for _ in range(n))


def dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def matvec(m: Mat, v: Sequence[Fraction]) -> Vec:
    return tuple(dot(row, v) for row in m)


def matmul(a: Mat, b: Mat) -> Mat:
    bt = transpose(b)
    return tuple(tuple(dot(ra, cb) for cb in bt) for ra in a)


def transpose(m: Mat) -> Mat:
    return tuple(zip(*m))


def identity(n: int) -> Mat:
    return tuple(tuple(Fraction(1 if i == j else 0) for j in range(n)) for i in range(n))


def add(a: Vec, b: Vec) -> Vec:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Vec, b: Vec) -> Vec:
    return tuple(x - y for x, y in zip(a, b))


def scale(c, a: Vec) -> Vec:
    c = fr(c)
    return tuple(c * x for x in a)


def rref(m: Mat) -> tuple[Mat, list[int]]:
    """Reduced row echelon form; returns (rref, pivot column indices)."""
    rows = [list(r) for r in m]
    nr, nc = len(rows), len(rows[0]) if rows else 0
    pivots: list[int] = []
    r = 0
    for c in range(nc):
        if r >= nr:
            break
        p = next((i for i in range(r, nr) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        pv = rows[r][c]
        rows[r] = [x / pv for x in rows[r]]
        for i in range(nr):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    return tuple(tuple(row) for row in rows), pivots


def rank(m: Mat) -> int:
    return len(rref(m)[1])


def nullspace(m: Mat) -> list[Vec]:
    """Basis of the right null space."""
    if not m:
        return []
    red, pivots = rref(m)
    nc = len(m[0])
    free = [c for c in range(nc) if c not in pivots]
    basis = []
    for fcol in free:
        v = [Fraction(0)] * nc
        v[fcol] = Fraction(1)
        for r, pc in enumerate(pivots):
            v[pc] = -red[r][fcol]
        basis.append(tuple(v))
    return basis


def solve(m: Mat, b: Vec) -> Vec:
    """Solve m x = b for square invertible m."""
    n = len(m)
    aug = mat([list(m[i]) + [b[i]] for i in range(n)])
    red, pivots = rref(aug)
    if pivots != list(range(n)):
        raise ZeroDivisionError("singular system")
    return tuple(red[i][n] for i in range(n))


def inverse(m: Mat) -> Mat:
    n = len(m)
    aug = mat([list(m[i]) + [1 if i == j else 0 for j in range(n)] for i in range(n)])
    red, pivots = rref(aug)
    if pivots != list(range(n)):
        raise ZeroDivisionError("singular matrix")
    return tuple(tuple(red[i][n:]) for i in range(n))


def det(m: Mat) -> Fraction:
    rows = [list(r) for r in m]
    n = len(rows)
    d = Fraction(1)
    for c in range(n):
        p = next((i for i in range(c, n) if rows[i][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            rows[c], rows[p] = rows[p], rows[c]
            d = -d
        d *= rows[c][c]
        inv = 1 / rows[c][c]
        for i in range(c + 1, n):
            if rows[i][c] != 0:
                f = rows[i][c] * inv
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[c])]
    return d


def inertia(m: Mat) -> tuple[int, int, int]:
    """Sylvester inertia (n_pos, n_neg, n_null) of a symmetric matrix, exactly.

    Congruence diagonalization by symmetric pivoting: handles zero diagonals
    with the standard rank-two trick (add a row/col to create a pivot).
    """
    a = [list(r) for r in m]
    n = len(a)
    pos = neg = 0

    def swap(i, j):
        a[i], a[j] = a[j], a[i]
        for row in a:
            row[i], row[j] = row[j], row[i]

    k = 0
    while k < n:
        p = next((i for i in range(k, n) if a[i][i] != 0), None)
        if p is None:
            # all diagonal entries zero; find off-diagonal nonzero
            off = next(((i, j) for i in range(k, n) for j in range(i + 1, n)
                        if a[i][j] != 0), None)
            if off is None:
                break  # remaining block is zero
            i, j = off
            # add row/col j to i: creates 2*a[i][j] on the diagonal
            for c in range(n):
                a[i][c] += a[j][c]
            for r in range(n):
                a[r][i] += a[r][j]
            p = i
        if p != k:
            swap(k, p)
        piv = a[k][k]
        if piv > 0:
            pos += 1
        else:
            neg += 1
        # congruence step: E A E^T with E = I - sum_i (a_ik/piv) e_i e_k^T;
        # the trailing block needs only the row update because (EA)[i][k] = 0.
        for i in range(k + 1, n):
            if a[i][k] != 0:
                f = a[i][k] / piv
                for c in range(k, n):
                    a[i][c] -= f * a[k][c]
        for j in range(k + 1, n):
            a[k][j] = Fraction(0)
            a[j][k] = Fraction(0)
        k += 1
    return pos, neg, n - pos - neg


def primitive_scaled(v: Sequence[Fraction]) -> tuple[int, ...]:
    """Scale a rational vector by a positive rational to a primitive integer
    vector (orientation preserved)."""
    from math import lcm

    den = 1
    for x in v:
        den = lcm(den, fr(x).denominator)
    ints = [int(fr(x) * den) for x in v]
    g = 0
    for x in ints:
        g = gcd(g, abs(x))
    if g > 1:
        ints = [x // g for x in ints]
    return tuple(ints)


def primitive_integer(v: Sequence[Fraction]) -> tuple[int, ...]:
    """Scale a rational vector to a primitive integer vector (first nonzero > 0)."""
    ints = list(primitive_scaled(v))
    lead = next((x for x in ints if x != 0), 0)
    if lead < 0:
        ints = [-x for x in ints]
    return tuple(ints)
