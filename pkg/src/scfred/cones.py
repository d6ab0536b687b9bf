"""Exact corner geometry of partial quadrants.

Everything here is rational arithmetic: cones are intersected by double
description, complements are checked by rank, and the good-position
condition is decided by exact simplex over the polyhedral pieces of a
max-norm cross-section.  Floating inputs are snapped to rationals up front
(see `rational.frac`), after which no rounding happens anywhere.

Conventions.  The ambient space is R^dim with the *first k coordinates*
sign-constrained; everything from index k on (free finite directions and
tail coordinates alike) is unconstrained and plays the role of the
complement factor "W" below.  For a subspace N:

* N∩W  = N ∩ {first k coords = 0},
* Ntilde = a complement of N∩W inside N (so N = Ntilde ⊕ N∩W),
* Sigma = union of the corner-zero sets sigma_a = {i < k : a_i = 0} over
  all nonzero a in C∩N.  Since C∩N = (C∩Ntilde) ⊕ (N∩W) and corner zero
  sets intersect along conic combinations, Sigma is the union over the
  extreme rays of C∩Ntilde, together with the full corner set whenever
  N∩W is nonzero.

The exact-enumeration dimension cap is 12; larger inputs raise DimTooLarge
rather than silently degrading.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    DimTooLarge,
    DomainError,
    InternalContradiction,
    NotAComplement,
    NotInQuadrant,
    PreconditionFailed,
    ValidationError,
)
from .rational import (
    frac,
    inv,
    kernel_basis,
    lp_feasible,
    lp_min_multi,
    mat_frac,
    primitive,
    rank,
    rref,
    sqrt_upper,
    transpose,
    vec_frac,
)

DIM_CAP = 12
Vec = tuple[Fraction, ...]


@dataclass(frozen=True)
class QuadrantSpec:
    """Ambient R^dim with the first k coordinates constrained to be >= 0."""

    dim: int
    k: int

    def __post_init__(self):
        if not 0 <= self.k <= self.dim:
            raise ValidationError(f"need 0 <= k <= dim, got k={self.k}, dim={self.dim}")

    def contains(self, x) -> bool:
        return all(xi >= 0 for xi in x[: self.k])

    def corner_zeros(self, x, tol=Fraction(0)) -> int:
        return sum(1 for xi in x[: self.k] if abs(xi) <= tol)


@dataclass(frozen=True)
class ConeRep:
    ambient_dim: int
    generators: tuple[Vec, ...]
    is_pointed: bool
    lineality: tuple[Vec, ...] = ()


@dataclass(frozen=True)
class SubspaceInQuadrant:
    N_basis: tuple[Vec, ...]
    Sigma: frozenset[int]
    Ntilde_basis: tuple[Vec, ...]
    NW_basis: tuple[Vec, ...]

    @property
    def dim(self) -> int:
        return len(self.N_basis)


@dataclass(frozen=True)
class GoodPositionCertificate:
    Y_basis: tuple[Vec, ...]
    epsilon: Fraction
    verdict: str  # "certified" | "refuted" | "inconclusive"
    witness: tuple[Vec, Vec] | None = None
    margins: dict | None = None


@dataclass(frozen=True)
class QuadrantNormalForm:
    """Linear iso of N sending C∩N onto [0,∞)^corner_count × R^rest.

    `to_coords` is a (dim N × ambient) matrix: z = to_coords @ x for x ∈ N.
    `from_coords` inverts it on the image.  `sigma_order` records which
    ambient corner index each normal-form corner coordinate came from
    (empty in the single-ray case, where the one corner is Sigma-less).
    """

    corner_count: int
    case: str  # "projection" | "single_ray"
    to_coords: tuple[Vec, ...]
    from_coords: tuple[Vec, ...]
    sigma_order: tuple[int, ...]


# --- basic vector helpers -----------------------------------------------------


def _dot(a, b) -> Fraction:
    return sum(x * y for x, y in zip(a, b))


def _combo(coeffs, rows, dim) -> Vec:
    out = [Fraction(0)] * dim
    for c, row in zip(coeffs, rows):
        for j, v in enumerate(row):
            out[j] += c * v
    return tuple(out)


def _check_dim(dim: int) -> None:
    if dim > DIM_CAP:
        raise DimTooLarge(f"exact enumeration capped at ambient dim {DIM_CAP}, got {dim}")


def _prim(v) -> Vec:
    return tuple(primitive(v))


# --- double description -------------------------------------------------------


def dual_description(dim: int, normals: list) -> tuple[list[Vec], list[Vec]]:
    """Rays and lineality of {x : a·x >= 0 for every a in normals}.

    Incremental double description with explicit lineality handling: while a
    constraint is nonzero on the lineality space, one lineality generator is
    pivoted out into a ray; once all remaining constraints vanish on the
    lineality, the classical ray-pair step applies, with the combinatorial
    adjacency test (no third ray's active set contains the common active
    set).  Rays are kept primitive and deduplicated, so the description
    stays minimal at every step — which is what makes the adjacency test
    sound.
    """
    _check_dim(dim)
    lineality: list[Vec] = [
        tuple(Fraction(1 if i == j else 0) for j in range(dim)) for i in range(dim)
    ]
    rays: list[Vec] = []
    processed: list[Vec] = []

    for a in normals:
        a = tuple(Fraction(x) for x in a)
        if all(x == 0 for x in a):
            continue
        piv = next((i for i, l in enumerate(lineality) if _dot(a, l) != 0), None)
        if piv is not None:
            lstar = lineality.pop(piv)
            s = _dot(a, lstar)
            lstar = tuple(x / s for x in lstar)
            lineality = [
                tuple(li - _dot(a, l) * ls for li, ls in zip(l, lstar)) for l in lineality
            ]
            rays = [
                _prim([ri - _dot(a, r) * ls for ri, ls in zip(r, lstar)]) for r in rays
            ]
            rays.append(_prim(lstar))
        else:
            pos = [(r, _dot(a, r)) for r in rays if _dot(a, r) > 0]
            zero = [r for r in rays if _dot(a, r) == 0]
            negs = [(r, _dot(a, r)) for r in rays if _dot(a, r) < 0]
            if negs:
                active = {
                    r: frozenset(i for i, c in enumerate(processed) if _dot(c, r) == 0)
                    for r in rays
                }
                new = [r for r, _ in pos] + zero
                for rp, dp in pos:
                    for rn, dn in negs:
                        common = active[rp] & active[rn]
                        adjacent = not any(
                            common <= active[rr]
                            for rr in rays
                            if rr is not rp and rr is not rn
                        )
                        if adjacent:
                            new.append(
                                _prim([dp * ni - dn * pi for pi, ni in zip(rp, rn)])
                            )
                rays = new
        seen: dict[Vec, None] = {}
        for r in rays:
            seen.setdefault(r, None)
        rays = list(seen)
        processed.append(a)

    red, _ = rref(lineality)
    return sorted(rays), [tuple(row) for row in red]


def cone_contains(cone: ConeRep, x) -> bool:
    """Exact membership x ∈ cone(generators) + span(lineality)."""
    x = vec_frac(x)
    n_r, n_l = len(cone.generators), len(cone.lineality)
    if n_r + n_l == 0:
        return all(v == 0 for v in x)
    cols = list(cone.generators) + list(cone.lineality)
    A_eq = [[cols[j][i] for j in range(n_r + n_l)] for i in range(cone.ambient_dim)]
    A_ub = [[-Fraction(int(i == j)) for j in range(n_r + n_l)] for i in range(n_r)]
    return lp_feasible(A_ub, [Fraction(0)] * n_r, A_eq, list(x), n_r + n_l) is not None


# --- subspace meets quadrant --------------------------------------------------


def _corner_normals(B: list, k: int) -> list:
    """Functionals (on intrinsic coefficients c) of the corner coordinates."""
    return [[B[r][i] for r in range(len(B))] for i in range(k)]


def _intrinsic_rays(B: list, k: int) -> tuple[list[Vec], list[Vec]]:
    """DD of {c : (c^T B)_i >= 0 for i < k} in coefficient space."""
    return dual_description(len(B), _corner_normals(B, k))


def subspace_in_quadrant(quad: QuadrantSpec, N_basis, snap: float | None = None) -> SubspaceInQuadrant:
    """Build the Sigma / Ntilde / N∩W decomposition of a subspace.

    N_basis: rows spanning N (rationals, rational strings, or floats to be
    snapped).  The returned basis is row-reduced, so equal subspaces yield
    equal objects.
    """
    _check_dim(quad.dim)
    rows = mat_frac(N_basis) if snap is None else [
        [frac(x, snap) for x in row] for row in N_basis
    ]
    if not rows or len(rows[0]) != quad.dim:
        raise ValidationError("N_basis must be nonempty rows of length quad.dim")
    red, _ = rref(rows)
    B = [row for row in red if any(v != 0 for v in row)]
    if not B:
        raise ValidationError("N_basis spans the zero subspace")
    d = len(B)

    corner_block = [[B[r][i] for i in range(quad.k)] for r in range(d)]
    nw_coeffs = kernel_basis(transpose(corner_block)) if quad.k else [
        tuple(Fraction(int(i == j)) for j in range(d)) for i in range(d)
    ]
    NW = [_combo(c, B, quad.dim) for c in nw_coeffs]

    # extend the N∩W coefficient vectors to a basis of coefficient space by
    # standard vectors; the added ones span the complement Ntilde
    chosen = [list(c) for c in nw_coeffs]
    tilde_coeffs = []
    for i in range(d):
        e = [Fraction(int(i == j)) for j in range(d)]
        if rank(chosen + [e]) > len(chosen):
            chosen.append(e)
            tilde_coeffs.append(e)
    Ntilde = [_combo(c, B, quad.dim) for c in tilde_coeffs]

    sigma: set[int] = set()
    if NW:
        sigma.update(range(quad.k))
    if Ntilde:
        t_rays, t_lin = _intrinsic_rays(Ntilde, quad.k)
        if t_lin:
            raise InternalContradiction("Ntilde meets the unconstrained factor")
        for c in t_rays:
            r = _combo(c, Ntilde, quad.dim)
            sigma.update(i for i in range(quad.k) if r[i] == 0)

    return SubspaceInQuadrant(
        N_basis=tuple(tuple(row) for row in B),
        Sigma=frozenset(sigma),
        Ntilde_basis=tuple(Ntilde),
        NW_basis=tuple(NW),
    )


def degeneracy_index(x, C, tol: float = 1e-9) -> int:
    """Number of vanishing corner coordinates of a quadrant point.

    Accepts a ScaleVector with a scales.PartialQuadrant, or a plain vector
    with a QuadrantSpec.  Raises NotInQuadrant when x is outside C (beyond
    tol).

    Numeric vectors are compared against tol directly in floating point —
    the same rule the ScaleVector route uses — so bulk point queries stay
    cheap.  Rational or string entries take the exact route.
    """
    import numpy as np

    if isinstance(C, QuadrantSpec):
        arr = np.asarray(x)
        if arr.ndim == 1 and arr.dtype.kind in "fiu":
            # plain numeric data: |x_i| <= tol directly, no rational detour
            xc = arr[: C.k].astype(float, copy=False)
            if xc.size and float(xc.min()) < -tol:
                raise NotInQuadrant(f"corner coordinates {xc.tolist()}")
            return int(np.count_nonzero(np.abs(xc) <= tol))
        xs = vec_frac(x)
        t = frac(tol)
        if any(v < -t for v in xs[: C.k]):
            raise NotInQuadrant(f"corner coordinates {[float(v) for v in xs[:C.k]]}")
        return C.corner_zeros(xs, t)
    # ScaleVector route
    from .scales import PartialQuadrant, quadrant_membership

    member, _ = quadrant_membership(x, C, tol)
    if not member:
        raise NotInQuadrant("x has a corner coordinate below -tol")
    model = C.model if isinstance(C, PartialQuadrant) else C
    return sum(1 for v in x.finite[: model.k] if abs(v) <= tol)


def extreme_rays(quad: QuadrantSpec, N: SubspaceInQuadrant) -> tuple[ConeRep, bool]:
    """Exact extreme rays of C∩N, plus the quadrant-recognition verdict.

    The verdict is True iff C∩N has nonempty interior in N and the ray
    count equals dim N minus the lineality dimension — the finite test for
    "this cone is a partial quadrant in N".
    """
    _check_dim(quad.dim)
    B = [list(row) for row in N.N_basis]
    d = len(B)
    if d < 1:
        raise ValidationError("dim N must be >= 1")
    rays_c, lin_c = _intrinsic_rays(B, quad.k)
    gens = sorted(_prim(_combo(c, B, quad.dim)) for c in rays_c)
    lin = [_combo(c, B, quad.dim) for c in lin_c]
    lin_red, _ = rref(lin)
    lin = [tuple(r) for r in lin_red if any(v != 0 for v in r)]
    cone = ConeRep(
        ambient_dim=quad.dim,
        generators=tuple(gens),
        is_pointed=not lin,
        lineality=tuple(lin),
    )
    interior_ok = rank([list(g) for g in gens] + [list(l) for l in lin]) == d
    verdict = interior_ok and len(gens) == d - len(lin)
    return cone, verdict


# --- good position ------------------------------------------------------------


def _norm2_sq(v) -> Fraction:
    return sum(x * x for x in v)


def _gp_lps(quad: QuadrantSpec, B: list, Y: list, eps_inf: Fraction):
    """Minimum margins of both inclusion directions at max-norm radius eps_inf.

    Decomposes the cross-section {|n|_inf = 1} into pieces n_J = ±1 and runs
    exact LPs over each piece — all corner objectives at once, since they
    share the piece's feasible region.  Corner coordinates on which Y
    vanishes identically are skipped: there the perturbation cannot move the
    coordinate, so the margin is nonnegative by construction.  Returns
    (margin_A, margin_B, witness) where the witness is an exact (n, p) pair
    attaining a negative margin, if any.
    """
    dim, k = quad.dim, quad.k
    dN, dY = len(B), len(Y)

    def n_expr(i):  # row of coefficients for n_i in the (c, d) variables
        return [B[r][i] for r in range(dN)] + [Fraction(0)] * dY

    def p_expr(i):
        return [Fraction(0)] * dN + [Y[r][i] for r in range(dY)]

    def np_expr(i):
        return [B[r][i] for r in range(dN)] + [Y[r][i] for r in range(dY)]

    live = [i for i in range(k) if any(Y[r][i] != 0 for r in range(dY))]

    box_rows, box_rhs = [], []
    for l in range(dim):
        for sgn in (1, -1):
            box_rows.append([sgn * v for v in p_expr(l)])
            box_rhs.append(eps_inf)
    nbox_rows, nbox_rhs = [], []
    for l in range(dim):
        for sgn in (1, -1):
            nbox_rows.append([sgn * v for v in n_expr(l)])
            nbox_rhs.append(Fraction(1))

    best = {"A": None, "B": None}
    witness = None

    def run_piece(direction, objectives, extra_ub, extra_rhs, eq_row, eq_rhs):
        nonlocal witness
        results = lp_min_multi(
            objectives, box_rows + nbox_rows + extra_ub,
            box_rhs + nbox_rhs + extra_rhs, [eq_row], [eq_rhs],
        )
        for status, value, x in results:
            if status == "unbounded":  # impossible when N, Y have full row rank
                raise InternalContradiction("good-position LP unbounded")
            if status != "optimal":
                continue
            if best[direction] is None or value < best[direction]:
                best[direction] = value
            if value < 0 and witness is None:
                n = _combo(x[:dN], B, dim)
                p = _combo(x[dN:], Y, dim) if dY else tuple([Fraction(0)] * dim)
                witness = (n, p)

    corner_rows_n = [[-v for v in n_expr(j)] for j in range(k)]
    corner_rows_np = [[-v for v in np_expr(j)] for j in range(k)]
    zeros = [Fraction(0)] * k

    if live:
        # direction A: n ∈ C∩N, does n+p stay in C?
        objs_A = [np_expr(i) for i in live]
        for J in range(dim):
            signs = (1,) if J < k else (1, -1)
            for s in signs:
                run_piece("A", objs_A, corner_rows_n, zeros, n_expr(J), Fraction(s))
        # direction B: n+p ∈ C with n ∈ N, does n stay in C?
        objs_B = [n_expr(i) for i in live]
        for J in range(dim):
            for s in (1, -1):
                run_piece("B", objs_B, corner_rows_np, zeros, n_expr(J), Fraction(s))

    return best["A"], best["B"], witness


def verify_good_position(
    quad: QuadrantSpec, N: SubspaceInQuadrant, Y_basis, epsilon
) -> GoodPositionCertificate:
    """Decide whether (N, Y) is in good position at radius epsilon.

    The defining condition lives on Euclidean balls; the decision runs on
    max-norm pieces, so there is a sqrt(dim) conversion gap: certification
    is attempted at eps*sqrt(dim) (stronger), refutation at eps/sqrt(dim)
    (weaker, but any witness found there is an exact Euclidean witness and
    is double-checked as such).  Margins landing between the two bounds
    yield "inconclusive" — never a guess.
    """
    _check_dim(quad.dim)
    eps = Fraction(epsilon) if not isinstance(epsilon, float) else frac(epsilon)
    if eps <= 0:
        raise ValidationError("epsilon must be positive")
    Y = [vec_frac(row) for row in Y_basis] if len(Y_basis) else []
    B = [list(row) for row in N.N_basis]
    if any(len(row) != quad.dim for row in Y):
        raise ValidationError("Y_basis rows must have length quad.dim")

    if rank(Y) != len(Y) or len(B) + len(Y) != quad.dim or rank(B + Y) != quad.dim:
        raise NotAComplement(
            f"dim N + dim Y = {len(B)} + {len(Y)} must equal {quad.dim} with trivial overlap"
        )

    cone, _ = extreme_rays(quad, N)
    if rank([list(g) for g in cone.generators] + [list(l) for l in cone.lineality]) != len(B):
        raise PreconditionFailed("C∩N has empty interior in N")

    if not Y:
        return GoodPositionCertificate((), eps, "certified", None, {"vacuous": True})

    # necessary condition: corner functionals indexed by Sigma vanish on Y
    for i in sorted(N.Sigma):
        bad = next((y for y in Y if y[i] != 0), None)
        if bad is None:
            continue
        a = _sigma_witness_point(quad, N, cone, i)
        t = -eps * _sqrt_lower(_norm2_sq(a)) / sqrt_upper(_norm2_sq(bad))
        if bad[i] < 0:
            t = -t
        p = tuple(t * v for v in bad)
        assert _norm2_sq(p) <= eps * eps * _norm2_sq(a)
        assert quad.contains(a) and not quad.contains([ai + pi for ai, pi in zip(a, p)])
        return GoodPositionCertificate(
            tuple(tuple(y) for y in Y), eps, "refuted", (a, p),
            {"corner_functional": i},
        )

    root = sqrt_upper(quad.dim)
    margin_hi_A, margin_hi_B, _ = _gp_lps(quad, B, Y, eps * root)
    margins = {
        "certify_radius": eps * root,
        "margin_A": margin_hi_A,
        "margin_B": margin_hi_B,
    }
    ok_A = margin_hi_A is None or margin_hi_A >= 0
    ok_B = margin_hi_B is None or margin_hi_B >= 0
    if ok_A and ok_B:
        return GoodPositionCertificate(tuple(tuple(y) for y in Y), eps, "certified", None, margins)

    margin_lo_A, margin_lo_B, witness = _gp_lps(quad, B, Y, eps / root)
    margins.update(
        refute_radius=eps / root, margin_A_low=margin_lo_A, margin_B_low=margin_lo_B
    )
    if witness is not None:
        n, p = witness
        assert _norm2_sq(p) <= eps * eps * _norm2_sq(n)
        in_before = quad.contains(n)
        in_after = quad.contains([a + b for a, b in zip(n, p)])
        if in_before != in_after:
            return GoodPositionCertificate(
                tuple(tuple(y) for y in Y), eps, "refuted", (n, p), margins
            )
    return GoodPositionCertificate(tuple(tuple(y) for y in Y), eps, "inconclusive", None, margins)


def _sqrt_lower(q: Fraction) -> Fraction:
    return q / sqrt_upper(q) if q > 0 else Fraction(0)


def _sigma_witness_point(quad, N, cone, i) -> Vec:
    """Some nonzero a ∈ C∩N with a_i = 0 (exists whenever i ∈ Sigma)."""
    for g in cone.generators:
        if g[i] == 0:
            return g
    for w in N.NW_basis:
        if any(v != 0 for v in w):
            return w
    for l in cone.lineality:
        if any(v != 0 for v in l):
            return l
    raise InternalContradiction(f"Sigma contains {i} but no vanishing point found")


# --- normal form ----------------------------------------------------------------


def subspace_quadrant_normal_form(
    quad: QuadrantSpec, N: SubspaceInQuadrant, certificate: GoodPositionCertificate
) -> QuadrantNormalForm:
    """Linear iso (N, C∩N) ≅ (R^dim N, [0,∞)^c × R^(dim N − c)).

    Built from the corner projection Ntilde → R^Sigma; requires a certified
    good-position certificate, under which that projection is provably a
    bijection taking C∩Ntilde onto the nonnegative orthant.  Both facts are
    re-checked exactly; failures mean the certification is buggy, hence
    InternalContradiction rather than a soft error.
    """
    if certificate.verdict != "certified":
        raise PreconditionFailed("normal form requires a certified good-position certificate")
    B_t = [list(r) for r in N.Ntilde_basis]
    B_w = [list(r) for r in N.NW_basis]
    d = len(B_t) + len(B_w)
    sigma = sorted(N.Sigma)

    if len(B_t) == len(sigma):
        case = "projection"
        G = B_t + B_w
        M = [[B_t[i][s] for i in range(len(B_t))] for s in sigma]
    elif not sigma and len(B_t) == 1:
        case = "single_ray"
        rays_c, _ = _intrinsic_rays(B_t, quad.k)
        if len(rays_c) != 1:
            raise InternalContradiction("degenerate branch expects exactly one extreme ray")
        if B_w:
            raise InternalContradiction("degenerate branch expects N∩W = 0")
        a = _combo(rays_c[0], B_t, quad.dim)
        G = [list(a)]
        M = [[Fraction(1)]]
    else:
        raise InternalContradiction(
            f"normal-form case analysis failed: dim Ntilde = {len(B_t)}, #Sigma = {len(sigma)}"
        )

    try:
        M_inv = inv(M) if M else []
    except ZeroDivisionError:
        raise InternalContradiction("corner projection is not bijective") from None

    # coefficient extraction on N: c = inv(G_P^T) x_P over the pivot columns
    red, pivots = rref(G)
    GP = [[G[r][c] for c in pivots] for r in range(d)]
    GP_T_inv = inv(transpose(GP))
    coeff_map = [
        [GP_T_inv[r][pivots.index(c)] if c in pivots else Fraction(0) for c in range(quad.dim)]
        for r in range(d)
    ]

    # z = A @ coeff with A = blockdiag(M, I)
    cc = len(M)
    A = [
        [
            (M[r][c] if r < cc and c < cc else Fraction(int(r == c)))
            for c in range(d)
        ]
        for r in range(d)
    ]
    A_inv = [
        [
            (M_inv[r][c] if r < cc and c < cc else Fraction(int(r == c)))
            for c in range(d)
        ]
        for r in range(d)
    ]
    from .rational import mat_mul

    to_coords = mat_mul(A, coeff_map)
    from_coords = mat_mul(transpose(G), A_inv)

    # self-check: standard rays land in C∩N, free directions in its lineality
    for j in range(d):
        col = [from_coords[i][j] for i in range(quad.dim)]
        corners = col[: quad.k]
        if j < cc:
            if any(v < 0 for v in corners):
                raise InternalContradiction("normal-form ray leaves the quadrant")
        elif any(v != 0 for v in corners):
            raise InternalContradiction("normal-form free direction touches a corner")
    if case == "projection" and B_t:
        rays_c, _ = _intrinsic_rays(B_t, quad.k)
        hit = set()
        for c in rays_c:
            img = [sum(M[r][i] * c[i] for i in range(len(B_t))) for r in range(cc)]
            support = [r for r in range(cc) if img[r] != 0]
            if len(support) != 1 or img[support[0]] <= 0:
                raise InternalContradiction("extreme ray does not map to a standard ray")
            hit.add(support[0])
        if hit != set(range(cc)):
            raise InternalContradiction("extreme rays do not cover the standard rays")

    return QuadrantNormalForm(
        corner_count=cc,
        case=case,
        to_coords=tuple(tuple(r) for r in to_coords),
        from_coords=tuple(tuple(r) for r in from_coords),
        sigma_order=tuple(sigma),
    )


def relative_index_formula(
    quad: QuadrantSpec,
    N: SubspaceInQuadrant,
    x,
    certificate: GoodPositionCertificate,
    tol: float = 1e-12,
) -> tuple[int, int]:
    """Degeneracy of x inside C∩N versus inside C; asserts the case formula.

    For x off N∩W the two agree; for x ∈ N∩W the relative index is
    dim N − dim(N∩W).  A violation would mean the normal form and the
    ambient count disagree — an internal bug, not a user error.
    """
    xs = vec_frac(x)
    t = frac(tol)
    if any(v < -t for v in xs[: quad.k]):
        raise NotInQuadrant("x is outside the quadrant")
    from .rational import solve

    B = [list(r) for r in N.N_basis]
    if solve(transpose(B), list(xs)) is None:
        raise DomainError("x does not lie in N")

    nf = subspace_quadrant_normal_form(quad, N, certificate)
    z = [_dot(row, xs) for row in nf.to_coords]
    d_rel = sum(1 for i in range(nf.corner_count) if abs(z[i]) <= t)
    d_amb = quad.corner_zeros(xs, t)

    in_nw = all(abs(v) <= t for v in xs[: quad.k])
    expected = (len(N.N_basis) - len(N.NW_basis)) if in_nw else d_amb
    if d_rel != expected:
        raise InternalContradiction(
            f"relative index {d_rel} disagrees with case formula {expected}"
        )
    return d_rel, d_amb


# --- JSON interfaces ------------------------------------------------------------


def _vec_to_json(v) -> list[str]:
    return [str(Fraction(x)) for x in v]


def quadrant_from_json(obj: dict) -> QuadrantSpec:
    try:
        return QuadrantSpec(int(obj["dim"]), int(obj["k"]))
    except KeyError as e:
        raise ValidationError(f"quadrant descriptor missing field {e}") from None


def subspace_from_json(quad: QuadrantSpec, obj: dict) -> SubspaceInQuadrant:
    try:
        basis = [[Fraction(s) for s in row] for row in obj["N_basis"]]
    except KeyError:
        raise ValidationError("subspace descriptor needs N_basis") from None
    return subspace_in_quadrant(quad, basis)


def cone_to_json(cone: ConeRep) -> dict:
    return {
        "ambient_dim": cone.ambient_dim,
        "generators": [_vec_to_json(g) for g in cone.generators],
        "is_pointed": cone.is_pointed,
        "lineality": [_vec_to_json(l) for l in cone.lineality],
    }


def certificate_to_json(cert: GoodPositionCertificate) -> dict:
    out = {
        "Y_basis": [_vec_to_json(y) for y in cert.Y_basis],
        "epsilon": str(cert.epsilon),
        "verdict": cert.verdict,
        "witness": None,
        "margins": {},
    }
    if cert.witness is not None:
        n, p = cert.witness
        out["witness"] = {"n": _vec_to_json(n), "p": _vec_to_json(p)}
    if cert.margins:
        out["margins"] = {
            k: (str(v) if isinstance(v, Fraction) else v) for k, v in cert.margins.items()
        }
    return out
