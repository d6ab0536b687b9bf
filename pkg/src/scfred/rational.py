"""Exact linear algebra over the rationals.

Matrices are lists of rows, vectors are lists; all entries are
``fractions.Fraction``.  Everything here is exact: no tolerances, no
floating point.  Inputs may be ints, Fraction-parseable strings like
``"3/7"``, or floats (floats are converted via ``Fraction(x).limit_denominator``
with a declared snap denominator, see :func:`frac`).

>>> rank([[1, 2], [2, 4]])
1
>>> kernel_basis([[1, 2], [2, 4]])
[[Fraction(-2, 1), Fraction(1, 1)]]
>>> det([[0, 1], [-1, 0]])
Fraction(1, 1)
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd, isqrt

SNAP_DENOMINATOR = 10**9


def frac(x, snap=SNAP_DENOMINATOR):
    """Coerce x to a Fraction. Floats are snapped to denominator <= snap.

    >>> frac("3/7")
    Fraction(3, 7)
    >>> frac(0.5)
    Fraction(1, 2)
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(snap)
    return Fraction(x)


def vec_frac(v, snap=SNAP_DENOMINATOR):
    return [frac(x, snap) for x in v]


def mat_frac(rows, snap=SNAP_DENOMINATOR):
    return [[frac(x, snap) for x in row] for row in rows]


def mat_vec(A, v):
    return [sum((a * b for a, b in zip(row, v)), Fraction(0)) for row in A]


def mat_mul(A, B):
    cols = list(zip(*B))
    return [[sum((a * b for a, b in zip(row, col)), Fraction(0)) for col in cols] for row in A]


def transpose(A):
    return [list(row) for row in zip(*A)]


def rref(rows):
    """Reduced row echelon form.  Returns (R, pivot_columns).

    >>> R, piv = rref([[2, 4, 0], [1, 2, 1]])
    >>> R
    [[Fraction(1, 1), Fraction(2, 1), Fraction(0, 1)], [Fraction(0, 1), Fraction(0, 1), Fraction(1, 1)]]
    >>> piv
    [0, 2]
    """
    R = [[Fraction(x) for x in row] for row in rows]
    m = len(R)
    n = len(R[0]) if m else 0
    pivots = []
    r = 0
    for c in range(n):
        pivot_row = next((i for i in range(r, m) if R[i][c] != 0), None)
        if pivot_row is None:
            continue
        R[r], R[pivot_row] = R[pivot_row], R[r]
        pv = R[r][c]
        R[r] = [x / pv for x in R[r]]
        for i in range(m):
            if i != r and R[i][c] != 0:
                f = R[i][c]
                R[i] = [x - f * y for x, y in zip(R[i], R[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    return R, pivots


def rank(rows):
    if not rows:
        return 0
    return len(rref(rows)[1])


def kernel_basis(rows):
    """Basis of the null space {x : rows @ x = 0}.

    Free variables are set to 1 one at a time, in increasing column order.
    """
    if not rows:
        return []
    n = len(rows[0])
    R, pivots = rref(rows)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * n
        v[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            v[pc] = -R[r][fc]
        basis.append(v)
    return basis


def solve(A, b):
    """One exact solution of A x = b, or None if inconsistent.

    >>> solve([[1, 1], [0, 1]], [3, 2])
    [Fraction(1, 1), Fraction(2, 1)]
    """
    m = len(A)
    n = len(A[0]) if m else 0
    aug = [list(A[i]) + [Fraction(b[i])] for i in range(m)]
    R, pivots = rref(aug)
    if n in pivots:  # pivot in the rhs column: inconsistent
        return None
    x = [Fraction(0)] * n
    for r, pc in enumerate(pivots):
        x[pc] = R[r][n]
    return x


def det(A):
    """Determinant by fraction-free-ish Gaussian elimination (exact).

    >>> det([[1, 2], [3, 4]])
    Fraction(-2, 1)
    """
    n = len(A)
    M = [[Fraction(x) for x in row] for row in A]
    sign = 1
    d = Fraction(1)
    for c in range(n):
        p = next((i for i in range(c, n) if M[i][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            M[c], M[p] = M[p], M[c]
            sign = -sign
        d *= M[c][c]
        inv_p = 1 / M[c][c]
        for i in range(c + 1, n):
            if M[i][c] != 0:
                f = M[i][c] * inv_p
                M[i] = [x - f * y for x, y in zip(M[i], M[c])]
    return sign * d


def inv(A):
    n = len(A)
    aug = [list(A[i]) + [Fraction(1 if i == j else 0) for j in range(n)] for i in range(n)]
    R, pivots = rref(aug)
    if pivots != list(range(n)):
        raise ZeroDivisionError("matrix not invertible")
    return [row[n:] for row in R]


def column_space_basis(rows):
    """The pivot columns of the matrix, as vectors (a basis of its column space)."""
    _, piv = rref(rows)
    return [list(col) for j, col in enumerate(zip(*rows)) if j in piv]


def independent_rows(rows):
    """Indices of a maximal independent subset of rows, greedily from the top."""
    out = []
    cur = []
    r = 0
    for i, row in enumerate(rows):
        if rank(cur + [row]) > r:
            cur.append(list(row))
            r += 1
            out.append(i)
    return out


def primitive(v):
    """Scale a rational vector by a positive rational to primitive integers.

    Direction is preserved (the scalar is positive), so rays keep their
    orientation and two rays are equal iff their primitive forms are equal.

    >>> primitive([Fraction(1, 2), Fraction(-3, 4)])
    [Fraction(2, 1), Fraction(-3, 1)]
    """
    denoms = [x.denominator for x in v]
    L = 1
    for d in denoms:
        L = L * d // gcd(L, d)
    ints = [int(x * L) for x in v]
    g = 0
    for z in ints:
        g = gcd(g, abs(z))
    if g == 0:
        return [Fraction(0)] * len(v)
    return [Fraction(z // g) for z in ints]


def sqrt_upper(n):
    """Rational upper bound for sqrt(n), n a nonnegative int or Fraction.

    Exact when n is a perfect square; otherwise isqrt(n)+1 would be wasteful,
    so refine by a few Newton steps from above (still a rigorous upper bound:
    Newton from above stays above the root for convex f(x)=x^2-n).  Fractions
    a/b reduce to the integer case via sqrt(a/b) = sqrt(a*b)/b.

    >>> sqrt_upper(4)
    Fraction(2, 1)
    >>> float(sqrt_upper(2))  # ~1.4142; always >= sqrt(2)
    1.4142135624272734
    >>> float(sqrt_upper(Fraction(1, 4)))
    0.5
    """
    n = Fraction(n)
    if n < 0:
        raise ValueError("sqrt_upper needs a nonnegative argument")
    if n.denominator != 1:
        return sqrt_upper(n.numerator * n.denominator) / n.denominator
    n = n.numerator
    r = isqrt(n)
    if r * r == n:
        return Fraction(r)
    x = Fraction(r + 1)
    for _ in range(6):
        x = (x + n / x) / 2
    return x


# ----------------------------------------------------------------------------
# Exact linear programming: two-phase simplex with Bland's rule.
# Small and boring on purpose — the cones module needs exact feasibility and
# exact minima over polytopes in dimension <= 12, nothing more.
# ----------------------------------------------------------------------------

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


def _simplex(T, basis, n_cols):
    """Run simplex on tableau T (last row = objective, last entry = rhs).

    Tableau convention: minimize; reduced costs in the last row; basic columns
    have reduced cost 0; entering candidates are the first n_cols columns (so
    phase 2 can fence off the artificial block).  Pivoting is Dantzig (most
    negative reduced cost) for speed, falling back to Bland's rule after a
    run of degenerate pivots so termination stays guaranteed.  Returns
    OPTIMAL or UNBOUNDED, mutating T and basis.
    """
    m = len(T) - 1
    stalled = 0
    bland = False
    while True:
        row = T[m]
        if bland:
            enter = next((j for j in range(n_cols) if row[j] < 0), None)
        else:
            enter = None
            most = Fraction(0)
            for j in range(n_cols):
                if row[j] < most:
                    most = row[j]
                    enter = j
        if enter is None:
            return OPTIMAL
        lead = None
        lead_ratio = None
        for i in range(m):
            if T[i][enter] > 0:
                ratio = T[i][-1] / T[i][enter]
                if lead is None or ratio < lead_ratio or (
                    ratio == lead_ratio and basis[i] < basis[lead]
                ):
                    lead = i
                    lead_ratio = ratio
        if lead is None:
            return UNBOUNDED
        if lead_ratio == 0:
            stalled += 1
            if stalled >= 64:
                bland = True
        else:
            stalled = 0
        piv = T[lead][enter]
        T[lead] = [x / piv for x in T[lead]]
        for i in range(m + 1):
            if i != lead and T[i][enter] != 0:
                f = T[i][enter]
                T[i] = [x - f * y for x, y in zip(T[i], T[lead])]
        basis[lead] = enter


def _lp_prepare(n, A_ub, b_ub, A_eq, b_eq):
    """Standardize and run phase 1; None if infeasible.

    Returns (rows, basis, n_struct) where rows is the feasible constraint
    tableau (no objective row) over columns x+ | x- | slacks | artificials,
    with redundant rows dropped and artificials driven out of the basis.
    Upper-bound rows with nonnegative rhs start basic on their own slack, so
    artificials exist only for equalities and sign-flipped rows — usually a
    handful, which keeps phase 1 short.
    """
    A_ub = mat_frac(A_ub) if A_ub else []
    b_ub = vec_frac(b_ub) if b_ub else []
    A_eq = mat_frac(A_eq) if A_eq else []
    b_eq = vec_frac(b_eq) if b_eq else []
    m_ub, m_eq = len(A_ub), len(A_eq)
    m = m_ub + m_eq
    n_struct = 2 * n + m_ub

    rows, rhs, needs_art = [], [], []
    for i in range(m_ub):
        row = A_ub[i] + [-a for a in A_ub[i]] + [Fraction(0)] * m_ub
        row[2 * n + i] = Fraction(1)
        if b_ub[i] < 0:
            rows.append([-x for x in row])
            rhs.append(-b_ub[i])
            needs_art.append(True)
        else:
            rows.append(row)
            rhs.append(b_ub[i])
            needs_art.append(False)
    for i in range(m_eq):
        row = A_eq[i] + [-a for a in A_eq[i]] + [Fraction(0)] * m_ub
        if b_eq[i] < 0:
            row = [-x for x in row]
            rows.append(row)
            rhs.append(-b_eq[i])
        else:
            rows.append(row)
            rhs.append(b_eq[i])
        needs_art.append(True)

    art_rows = [i for i in range(m) if needs_art[i]]
    n_art = len(art_rows)
    n_cols = n_struct + n_art
    T, basis = [], []
    for i in range(m):
        art = [Fraction(0)] * n_art
        if needs_art[i]:
            art[art_rows.index(i)] = Fraction(1)
        T.append(rows[i] + art + [rhs[i]])
        basis.append(n_struct + art_rows.index(i) if needs_art[i] else 2 * n + i)

    if n_art:
        obj = [Fraction(0)] * (n_cols + 1)
        for i in art_rows:
            obj = [o - t for o, t in zip(obj, T[i])]
        for j in range(n_struct, n_cols):
            obj[j] = Fraction(0)
        T.append(obj)
        m_rows = len(T) - 1
        _simplex(T, basis, n_cols)
        if -T[m_rows][-1] != 0:  # phase-1 optimum > 0
            return None
        T.pop()

        # drive surviving artificial basics out where possible, else drop the row
        keep = []
        for i in range(m):
            if basis[i] >= n_struct:
                piv_col = next((j for j in range(n_struct) if T[i][j] != 0), None)
                if piv_col is None:
                    continue  # redundant constraint
                piv = T[i][piv_col]
                T[i] = [x / piv for x in T[i]]
                for r in range(m):
                    if r != i and T[r][piv_col] != 0:
                        f = T[r][piv_col]
                        T[r] = [x - f * y for x, y in zip(T[r], T[i])]
                basis[i] = piv_col
            keep.append(i)
        T = [T[i] for i in keep]
        basis = [basis[i] for i in keep]
    return T, basis, n_struct


def _lp_phase2(T, basis, c, n, n_struct):
    """Phase 2 on a feasible tableau; returns (status, value, x)."""
    obj = c + [-x for x in c] + [Fraction(0)] * (n_struct - 2 * n)
    obj += [Fraction(0)] * (len(T[0]) - len(obj) - 1) + [Fraction(0)]
    for i, bj in enumerate(basis):
        if obj[bj] != 0:
            f = obj[bj]
            obj = [x - f * y for x, y in zip(obj, T[i])]
    T.append(obj)
    status = _simplex(T, basis, n_struct)
    if status == UNBOUNDED:
        return UNBOUNDED, None, None
    xs = [Fraction(0)] * n_struct
    for i, bj in enumerate(basis):
        if bj < n_struct:
            xs[bj] = T[i][-1]
    x = [xs[j] - xs[n + j] for j in range(n)]
    value = sum((ci * xi for ci, xi in zip(c, x)), Fraction(0))
    return OPTIMAL, value, x


def lp_min_multi(objectives, A_ub=None, b_ub=None, A_eq=None, b_eq=None):
    """Minimize several objectives over one feasible region.

    Phase 1 runs once; each objective gets its own phase 2 on a copy of the
    feasible tableau.  Returns a list of (status, value, x) triples in the
    order given.
    """
    if not objectives:
        return []
    n = len(objectives[0])
    m = (len(A_ub) if A_ub else 0) + (len(A_eq) if A_eq else 0)
    if m == 0:
        return [
            (OPTIMAL, Fraction(0), [Fraction(0)] * n)
            if all(x == 0 for x in vec_frac(c))
            else (UNBOUNDED, None, None)
            for c in objectives
        ]
    prep = _lp_prepare(n, A_ub, b_ub, A_eq, b_eq)
    if prep is None:
        return [(INFEASIBLE, None, None)] * len(objectives)
    T0, basis0, n_struct = prep
    out = []
    for c in objectives:
        T = [row[:] for row in T0]
        out.append(_lp_phase2(T, list(basis0), vec_frac(c), n, n_struct))
    return out


def lp_min(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None):
    """Exact LP: minimize c·x subject to A_ub x <= b_ub and A_eq x = b_eq.

    Variables are free (no sign constraints); they are split internally.
    Returns (status, value, x) with exact Fractions; value and x are None
    unless status == "optimal".

    >>> lp_min([1], A_ub=[[-1]], b_ub=[-2])        # min x s.t. x >= 2
    ('optimal', Fraction(2, 1), [Fraction(2, 1)])
    >>> lp_min([1], A_ub=[[1]], b_ub=[0])[0]       # min x s.t. x <= 0
    'unbounded'
    >>> lp_min([0], A_eq=[[1]], b_eq=[1], A_ub=[[1]], b_ub=[0])[0]
    'infeasible'
    """
    return lp_min_multi([c], A_ub, b_ub, A_eq, b_eq)[0]


def lp_feasible(A_ub=None, b_ub=None, A_eq=None, b_eq=None, n=None):
    """Exact feasibility of {A_ub x <= b_ub, A_eq x = b_eq}; returns x or None."""
    if n is None:
        if A_ub:
            n = len(A_ub[0])
        elif A_eq:
            n = len(A_eq[0])
        else:
            return []
    status, _, x = lp_min([Fraction(0)] * n, A_ub, b_ub, A_eq, b_eq)
    return x if status == OPTIMAL else None
