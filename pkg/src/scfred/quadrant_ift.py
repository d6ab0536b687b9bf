"""Quadrant-respecting inverse and implicit function solvers.

Two certified constructions on partial quadrants C = [0,inf)^k x R^(n-k):

* inversion of a map whose preconditioned derivative stays within 1/2 of the
  identity — solved by the damped fixed point x <- x - g(x) + y, with the
  bi-Lipschitz sandwich (1/2)|x-x'| <= |g(x)-g(x')| <= (3/2)|x-x'| re-checked
  on the actual iterates;
* the implicit graph tau over the kernel of a surjective linearization whose
  kernel sits in certified good position, with the constants (a, b, eps)
  computed constructively from sampled derivative bounds.

Everything here is sampled, never symbolic: each certificate records how many
points backed it and at what radius.  Corner bookkeeping goes through the
quadrant-geometry module so degeneracy counts mean the same thing everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .cones import (
    QuadrantSpec,
    degeneracy_index,
    subspace_in_quadrant,
    subspace_quadrant_normal_form,
)
from .errors import (
    HypothesisFailed,
    IndexMismatch,
    InternalContradiction,
    NoConvergence,
    NotInQuadrant,
    NotTransversal,
    OutOfRadius,
    PreconditionFailed,
    ValidationError,
)
from .germs import halton

DEFAULT_TOL = 1e-12
DERIVATIVE_CAP = 0.5
FD_IMPLICIT_STEP = 1e-3


@dataclass(frozen=True)
class QuadrantMap:
    """Expression-tree map on a box inside a partial quadrant.

    `components` are expression trees over the parameter bank (one slot per
    ambient coordinate, no unknown bank), so evaluation and the Jacobian are
    exact.  `lo`/`hi` bound the domain box; entries may be infinite.  The
    first `corners` coordinates carry the one-sided constraint.
    """

    dim: int
    corners: int
    components: tuple
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if not 0 <= self.corners <= self.dim:
            raise ValidationError(f"corner count {self.corners} outside [0, {self.dim}]")
        if len(self.lo) != self.dim or len(self.hi) != self.dim:
            raise ValidationError("box bounds must match the ambient dimension")
        for i in range(self.corners):
            if self.lo[i] < 0:
                raise ValidationError("corner coordinates cannot extend below zero")
        for c in self.components:
            ex.validate_expr(c, self.dim, 0)

    @property
    def codomain_dim(self) -> int:
        return len(self.components)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    def eval(self, x) -> np.ndarray:
        return ex.eval_vector(list(self.components), np.asarray(x, dtype=float), np.zeros(0))

    def jac(self, x) -> np.ndarray:
        _, Ja, _ = ex.jacobians(list(self.components), np.asarray(x, dtype=float), np.zeros(0))
        return Ja


def qmap_from_json(obj: dict) -> QuadrantMap:
    try:
        dim = int(obj["dim"])
        corners = int(obj["corners"])
        comps = tuple(obj["components"])
    except KeyError as e:
        raise ValidationError(f"quadrant map is missing field {e}") from e
    lo = tuple(float("-inf") if v is None else float(v) for v in obj.get("lo", [None] * dim))
    hi = tuple(float("inf") if v is None else float(v) for v in obj.get("hi", [None] * dim))
    lo = tuple(max(0.0, v) if i < corners else v for i, v in enumerate(lo))
    return QuadrantMap(dim=dim, corners=corners, components=comps, lo=lo, hi=hi)


def _sample_box(qm: QuadrantMap, count: int, cap: float, phase: int = 0) -> list:
    """Halton points in U ∩ C, with per-coordinate bounds clipped to ±cap."""
    lo = np.maximum(np.asarray(qm.lo, dtype=float), -cap)
    hi = np.minimum(np.asarray(qm.hi, dtype=float), cap)
    lo[: qm.corners] = np.maximum(lo[: qm.corners], 0.0)
    pts = halton(qm.dim, count, skip=20 + phase)
    return [lo + row * (hi - lo) for row in pts]


def _face_samples(qm: QuadrantMap, count: int, cap: float) -> list:
    """Interior samples plus, per corner coordinate, a batch pinned to its face."""
    out = _sample_box(qm, count, cap)
    per_face = max(4, count // max(qm.corners, 1) // 2)
    for i in range(qm.corners):
        for p in _sample_box(qm, per_face, cap, phase=31 + 5 * i):
            q = p.copy()
            q[i] = 0.0
            out.append(q)
    out.append(np.zeros(qm.dim))
    return out


# --- inversion -------------------------------------------------------------------


@dataclass(frozen=True)
class QiftCertificate:
    """Sampled evidence for the inversion hypotheses.

    `derivative_defect` is the largest observed |Dg(x) - 1| after
    preconditioning; the theorem machinery needs it <= 1/2.  `n_samples` and
    `sample_cap` record the density and reach of the evidence.
    """

    preconditioner: np.ndarray
    derivative_defect: float
    n_samples: int
    sample_cap: float
    degeneracy_points: int


def certify_qift(qm: QuadrantMap, n_samples: int = 160, cap: float = 1.0,
                 rank_tol: float = 1e-9) -> QiftCertificate:
    """Check the inversion hypotheses on a sampled grid.

    Order matters: the corner-degeneracy comparison runs before anything is
    inverted, so a map that collapses a corner fails with IndexMismatch even
    when its linearization is singular.
    """
    if qm.codomain_dim != qm.dim:
        raise ValidationError("inversion needs a square map")
    f0 = qm.eval(np.zeros(qm.dim))
    if np.linalg.norm(f0) > 1e-10:
        raise PreconditionFailed(f"map must be anchored at zero; |f(0)| = {np.linalg.norm(f0):.3g}")

    quad = QuadrantSpec(qm.dim, qm.corners)
    pts = _face_samples(qm, n_samples, cap)
    for x in pts:
        fx = qm.eval(x)
        try:
            d_image = degeneracy_index(fx, quad)
        except NotInQuadrant as e:
            raise IndexMismatch(
                f"image of a sample leaves the quadrant at x = {tuple(round(float(v), 6) for v in x)}"
            ) from e
        d_source = degeneracy_index(x, quad)
        if d_source != d_image:
            raise IndexMismatch(
                f"corner degeneracy changes from {d_source} to {d_image} "
                f"at x = {tuple(round(float(v), 6) for v in x)}"
            )

    A = qm.jac(np.zeros(qm.dim))
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= rank_tol:
        raise HypothesisFailed("linearization at zero is singular; cannot precondition")
    A_inv = np.linalg.inv(A)
    defect = 0.0
    eye = np.eye(qm.dim)
    for x in pts:
        defect = max(defect, float(np.linalg.norm(A_inv @ qm.jac(x) - eye, 2)))
    if defect > DERIVATIVE_CAP:
        raise HypothesisFailed(
            f"sampled preconditioned derivative defect {defect:.4g} exceeds 1/2"
        )
    return QiftCertificate(
        preconditioner=A,
        derivative_defect=defect,
        n_samples=len(pts),
        sample_cap=cap,
        degeneracy_points=len(pts),
    )


@dataclass(frozen=True)
class InversionResult:
    x: tuple
    residual: float
    iterations: int
    bilipschitz: tuple  # (smallest, largest) observed ratio on iterate pairs
    certificate: QiftCertificate


def qift_invert(qm: QuadrantMap, y, certificate: QiftCertificate | None = None,
                tol: float = 1e-12, max_iters: int = 400,
                n_samples: int = 160, cap: float = 1.0) -> InversionResult:
    """Solve f(x) = y by the preconditioned damped iteration.

    The certificate (computed here if not supplied) guarantees the iteration
    map is a 1/2-contraction; on top of that the bi-Lipschitz sandwich for the
    preconditioned map is re-measured on every pair of iterates actually
    visited — a violation means the sampled certificate missed something, and
    that is reported as a contradiction rather than patched over.
    """
    cert = certificate if certificate is not None else certify_qift(qm, n_samples, cap)
    y = np.asarray(y, dtype=float)
    if y.shape != (qm.dim,):
        raise ValidationError(f"target has shape {y.shape}, expected ({qm.dim},)")
    A = cert.preconditioner
    y_tilde = np.linalg.solve(A, y)

    def g(x):
        return np.linalg.solve(A, qm.eval(x))

    x = np.zeros(qm.dim)
    trail = [x]
    converged = False
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        x_next = x - g(x) + y_tilde
        trail.append(x_next)
        if float(np.linalg.norm(x_next - x)) <= tol:
            x = x_next
            converged = True
            break
        x = x_next
    if not converged:
        raise NoConvergence(f"inversion did not converge within {max_iters} iterations")
    if qm.corners and x[: qm.corners].min() < -1e-9:
        raise OutOfRadius("solution left the quadrant; target is outside the certified image")
    if not qm.contains(x):
        raise OutOfRadius("solution left the domain box")

    g_vals = [g(p) for p in trail]
    lo_ratio, hi_ratio = math.inf, 0.0
    for i in range(len(trail)):
        for j in range(i + 1, len(trail)):
            gap = float(np.linalg.norm(trail[i] - trail[j]))
            if gap <= 1e-14:
                continue
            ratio = float(np.linalg.norm(g_vals[i] - g_vals[j])) / gap
            lo_ratio = min(lo_ratio, ratio)
            hi_ratio = max(hi_ratio, ratio)
    if lo_ratio is math.inf:
        lo_ratio = hi_ratio = 1.0
    if lo_ratio < 0.5 - 1e-9 or hi_ratio > 1.5 + 1e-9:
        raise InternalContradiction(
            f"iterate pair ratio outside [1/2, 3/2]: observed [{lo_ratio:.4g}, {hi_ratio:.4g}]"
        )
    residual = float(np.linalg.norm(qm.eval(x) - y))
    if residual > max(tol * 10, 1e-12) * (1 + float(np.linalg.norm(y))):
        raise NoConvergence(f"round-trip residual {residual:.3g} did not reach tolerance")
    return InversionResult(
        x=tuple(float(v) for v in x),
        residual=residual,
        iterations=iterations,
        bilipschitz=(lo_ratio, hi_ratio),
        certificate=cert,
    )


@dataclass(frozen=True)
class OpennessReport:
    center: tuple
    image_center: tuple
    radius: float
    targets_tried: int
    targets_hit: int
    max_residual: float
    all_contained: bool


def openness_check(qm: QuadrantMap, center, r: float,
                   certificate: QiftCertificate | None = None,
                   n_targets: int = 48, tol: float = 1e-10) -> OpennessReport:
    """Constructive relative openness: solve back every quadrant point on the
    r/2 sphere around f(center).  Directions whose endpoint leaves the
    quadrant are skipped — they are outside the quadrant ball being tested."""
    cert = certificate if certificate is not None else certify_qift(qm)
    center = np.asarray(center, dtype=float)
    y0 = qm.eval(center)
    dirs = 2.0 * halton(qm.dim, n_targets, skip=60) - 1.0
    tried = hit = 0
    worst = 0.0
    for d in dirs:
        nrm = float(np.linalg.norm(d))
        if nrm < 1e-9:
            continue
        y = y0 + (r / 2.0) * d / nrm
        if qm.corners and y[: qm.corners].min() < 0:
            continue  # outside the quadrant ball
        tried += 1
        res = qift_invert(qm, y, certificate=cert, tol=tol / 10)
        worst = max(worst, res.residual)
        hit += 1
        if qm.corners and min(res.x[: qm.corners]) < -1e-9:
            raise InternalContradiction("preimage of a quadrant target left the quadrant")
    return OpennessReport(
        center=tuple(float(v) for v in center),
        image_center=tuple(float(v) for v in y0),
        radius=r,
        targets_tried=tried,
        targets_hit=hit,
        max_residual=worst,
        all_contained=hit == tried,
    )


# --- the implicit graph -------------------------------------------------------------


@dataclass(frozen=True)
class ImplicitRow:
    k: tuple        # normal-form coordinates on K ∩ C
    tau: tuple      # complement coordinates of the graph
    residual: float
    lipschitz_margin: float
    derivative_gap: float


@dataclass(frozen=True)
class ImplicitReport:
    rows: tuple
    radius_a: float
    radius_b: float
    epsilon: float
    contraction_bound: float
    cone_bound: float
    tau0_norm: float
    dtau0_norm: float
    n_samples: int
    kernel_dim: int
    corner_axes: int

    def csv_rows(self) -> list:
        out = []
        for r in self.rows:
            row = {f"k{i}": v for i, v in enumerate(r.k)}
            row.update({f"tau{i}": v for i, v in enumerate(r.tau)})
            row["residual"] = r.residual
            row["lipschitz_margin"] = r.lipschitz_margin
            row["derivative_gap"] = r.derivative_gap
            out.append(row)
        return out


def _ball_points(dim: int, count: int, radius: float, corner_axes: int, phase: int) -> list:
    if dim == 0:
        return [np.zeros(0) for _ in range(count)]
    pts = halton(dim + 1, count, skip=40 + phase)
    out = []
    for row in pts:
        raw = np.where(np.arange(dim) < corner_axes, row[:dim], 2.0 * row[:dim] - 1.0)
        nrm = float(np.linalg.norm(raw))
        if nrm < 1e-12:
            out.append(raw * 0.0)
            continue
        out.append(raw * (radius * row[dim] ** (1.0 / dim) / nrm))
    return out


def quadrant_implicit(qm: QuadrantMap, kernel_basis, complement_basis, certificate,
                      per_axis: int = 5, n_samples: int = 120, tol: float = DEFAULT_TOL,
                      max_iters: int = 400, shrink_cap: int = 24,
                      rank_tol: float = 1e-9) -> ImplicitReport:
    """Solve the kernel graph of a surjective map with corner-aware radii.

    Preconditions by the inverse of the linearization on the complement, so
    the map reads y - B(k, y) with B quadratically small at 0 (FD-verified).
    The radii follow the constructive recipe: shrink until the sampled
    contraction of B in y is at most 1/2, then shrink further until
    (1+eps) * sup|DB| <= eps/2 on the inflated ball, which pins the graph
    inside the cone |tau(k)| <= eps|k| that good position protects.  The grid
    is axis-aligned in the normal-form coordinates of K ∩ C; every row
    carries its residual, cone-Lipschitz margin, and the gap between the
    analytic derivative formula and a finite-difference probe.
    """
    if certificate is None or getattr(certificate, "verdict", None) != "certified":
        raise PreconditionFailed("good-position certificate is missing or not certified")
    N = qm.codomain_dim
    f0 = qm.eval(np.zeros(qm.dim))
    if np.linalg.norm(f0) > 1e-10:
        raise PreconditionFailed("map must vanish at zero")
    J0 = qm.jac(np.zeros(qm.dim))
    sv = np.linalg.svd(J0, compute_uv=False) if N else np.zeros(0)
    if N and (sv.size < N or sv[min(N, sv.size) - 1] <= rank_tol):
        raise NotTransversal("linearization at zero is not surjective")

    K = np.atleast_2d(np.asarray(kernel_basis, dtype=float))
    Y = np.atleast_2d(np.asarray(complement_basis, dtype=float))
    if K.shape[0] != qm.dim - N:
        raise PreconditionFailed(
            f"kernel basis has {K.shape[0]} vectors; expected {qm.dim - N}"
        )
    if float(np.abs(J0 @ K.T).max(initial=0.0)) > 1e-7:
        raise PreconditionFailed("kernel basis is not annihilated by the linearization")
    LY = J0 @ Y.T
    if LY.shape[0] != LY.shape[1] or (LY.size and np.linalg.svd(LY, compute_uv=False)[-1] <= rank_tol):
        raise PreconditionFailed("complement basis does not invert the linearization")
    L = np.linalg.inv(LY)

    quad = QuadrantSpec(qm.dim, qm.corners)
    sub = subspace_in_quadrant(quad, K)
    nf = subspace_quadrant_normal_form(quad, sub, certificate)
    from_z = np.asarray(nf.from_coords, dtype=float)
    dim_k = K.shape[0]
    corner_axes = nf.corner_count
    eps = float(certificate.epsilon)

    def B(z, yc):
        x = from_z @ z + Y.T @ yc
        return yc - L @ qm.eval(x)

    def DB(z, yc):
        x = from_z @ z + Y.T @ yc
        Jx = qm.jac(x)
        D1 = -L @ Jx @ from_z
        D2 = np.eye(N) - L @ Jx @ Y.T
        return D1, D2

    z0 = np.zeros(dim_k)
    y0 = np.zeros(N)
    if float(np.linalg.norm(B(z0, y0))) > 1e-10:
        raise InternalContradiction("preconditioned nonlinearity does not vanish at zero")
    D1_0, D2_0 = DB(z0, y0)
    if max(float(np.abs(D1_0).max(initial=0.0)), float(np.abs(D2_0).max(initial=0.0))) > 1e-6:
        raise InternalContradiction("preconditioned linearization at zero is not flat")

    # radii: first the plain 1/2-contraction in y, then the cone bound
    a = b = 1.0
    contraction = math.inf
    for _ in range(shrink_cap):
        zs = _ball_points(dim_k, n_samples, a, corner_axes, phase=1)
        ys = _ball_points(N, n_samples, b, 0, phase=2)
        contraction = max(
            (float(np.linalg.norm(DB(z, y)[1], 2)) for z, y in zip(zs, ys)), default=0.0
        )
        if contraction <= 0.5:
            break
        a *= 0.5
        b *= 0.5
    else:
        raise PreconditionFailed("could not certify a contraction radius for the fiber")

    cone = math.inf
    for _ in range(shrink_cap):
        zs = _ball_points(dim_k, n_samples, (1 + eps) * a, corner_axes, phase=3)
        ys = _ball_points(N, n_samples, (1 + eps) * a, 0, phase=4)
        sup_db = max(
            (float(np.linalg.norm(np.hstack(DB(z, y)), 2)) for z, y in zip(zs, ys)),
            default=0.0,
        )
        cone = (1 + eps) * sup_db
        if cone <= eps / 2:
            break
        a *= 0.5
    else:
        raise PreconditionFailed("could not certify the cone radius")
    b = min(b, eps * a)

    # axis-aligned grid in normal-form coordinates, kept inside |k| <= a
    col_scale = float(np.linalg.svd(from_z, compute_uv=False)[0]) if from_z.size else 1.0
    rho = a / (max(col_scale, 1e-12) * math.sqrt(max(dim_k, 1)))
    axes = []
    for i in range(dim_k):
        if i < corner_axes:
            axes.append(np.linspace(0.0, rho, per_axis))
        else:
            axes.append(np.linspace(-rho, rho, per_axis if per_axis % 2 else per_axis + 1))
    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    grid = [np.array(t) for t in
            (np.stack([m.ravel() for m in mesh], axis=1) if axes else np.zeros((1, 0)))]

    def solve_tau(z, start=None, solve_tol=tol):
        k_norm = float(np.linalg.norm(from_z @ z))
        cap_r = eps * k_norm
        y = np.zeros(N) if start is None else np.asarray(start, dtype=float)
        for _ in range(max_iters):
            y_next = B(z, y)
            if float(np.linalg.norm(y_next)) > cap_r * (1 + 1e-9) + 1e-15:
                raise InternalContradiction(
                    "fiber iterate escaped the good-position cone; radii are unsound"
                )
            if float(np.linalg.norm(y_next - y)) <= solve_tol:
                return y_next
            y = y_next
        raise NoConvergence("implicit graph solve did not converge")

    fd_tol = min(tol, 1e-13)

    def tau_of(z):
        return solve_tau(np.asarray(z, dtype=float), solve_tol=fd_tol)

    tau0 = tau_of(z0)
    tau0_norm = float(np.linalg.norm(tau0))
    if tau0_norm > 10 * fd_tol + 1e-13:
        raise InternalContradiction("graph does not pass through the origin")
    h = FD_IMPLICIT_STEP
    cols = []
    for i in range(dim_k):
        e = np.zeros(dim_k)
        e[i] = 1.0
        if i < corner_axes:
            s1, s2 = tau_of(h * e), tau_of(2 * h * e)
            cols.append((-3 * tau0 + 4 * s1 - s2) / (2 * h))
        else:
            cols.append((tau_of(h * e) - tau_of(-h * e)) / (2 * h))
    dtau0 = float(np.linalg.norm(np.stack(cols, axis=1), 2)) if cols else 0.0
    if dtau0 > 1e-6:
        raise InternalContradiction(
            f"graph derivative at zero measures {dtau0:.3g}; it should be flat"
        )

    rows = []
    solved = {}
    for z in grid:
        tau = solve_tau(z)
        solved[tuple(z)] = tau
        residual = float(np.linalg.norm(qm.eval(from_z @ z + Y.T @ tau)))
        # uniqueness: a second solve from a different admissible start
        k_norm = float(np.linalg.norm(from_z @ z))
        if k_norm > 0:
            alt = solve_tau(z, start=0.9 * eps * k_norm * _unit(N, hash(tuple(np.round(z, 12)))))
            if float(np.linalg.norm(alt - tau)) > 10 * tol:
                raise InternalContradiction("two admissible starts reached different graphs")
        # derivative: formula vs finite differences
        D1, D2 = DB(z, tau)
        dtau_formula = np.linalg.solve(np.eye(N) - D2, D1)
        gap = 0.0
        for i in range(dim_k):
            e = np.zeros(dim_k)
            e[i] = 1.0
            if i < corner_axes and z[i] < h:
                s1, s2 = tau_of(z + h * e), tau_of(z + 2 * h * e)
                fd_col = (-3 * tau_of(z) + 4 * s1 - s2) / (2 * h)
            else:
                fd_col = (tau_of(z + h * e) - tau_of(z - h * e)) / (2 * h)
            gap = max(gap, float(np.abs(dtau_formula[:, i] - fd_col).max(initial=0.0)))
        rows.append((z, tau, residual, gap))

    report_rows = []
    for z, tau, residual, gap in rows:
        margin = math.inf
        for z2, tau2 in solved.items():
            dz = float(np.linalg.norm(from_z @ (np.asarray(z2) - z)))
            if dz <= 1e-14:
                continue
            dtau = float(np.linalg.norm(np.asarray(tau2) - tau))
            margin = min(margin, eps * dz - dtau)
        if margin is math.inf:
            margin = eps * float(np.linalg.norm(from_z @ z))  # single-point grid
        if margin < -1e-9:
            raise InternalContradiction(
                f"graph violates the cone-Lipschitz bound by {-margin:.3g}"
            )
        report_rows.append(ImplicitRow(
            k=tuple(float(v) for v in z),
            tau=tuple(float(v) for v in tau),
            residual=residual,
            lipschitz_margin=margin,
            derivative_gap=gap,
        ))
    return ImplicitReport(
        rows=tuple(report_rows),
        radius_a=a,
        radius_b=b,
        epsilon=eps,
        contraction_bound=contraction,
        cone_bound=cone,
        tau0_norm=tau0_norm,
        dtau0_norm=dtau0,
        n_samples=n_samples,
        kernel_dim=dim_k,
        corner_axes=corner_axes,
    )


def _unit(dim: int, seed: int) -> np.ndarray:
    if dim == 0:
        return np.zeros(0)
    rng = np.random.default_rng(abs(seed) % (2**32))
    v = rng.standard_normal(dim)
    n = float(np.linalg.norm(v))
    return v / n if n > 0 else np.eye(dim)[0]
