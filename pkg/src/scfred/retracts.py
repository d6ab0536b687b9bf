"""Retraction models over scale ladders.

A retraction here is an idempotent map r on a box U inside the partial
quadrant; its image O = r(U) is the local model for a space whose dimension
may genuinely vary from point to point.  This module provides named builders
(including a dimension-jumping family), numerical tangent-space extraction,
tameness verification against the corner structure, face enumeration, and the
bundle version that pairs r with a fiberwise projection family.

The jumping family r(t, w) = (t, 0) for t <= 0 and (t, <w, g(t)> g(t)) for
t > 0, with g(t)_j proportional to e^(-j/t), is an invented concrete instance
of the rank-1 smoothing families such models are built from; it is not lifted
from anywhere and is labeled as a demo.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DomainError,
    InternalContradiction,
    PreconditionFailed,
    RankAmbiguous,
    ValidationError,
)
from .scales import PartialQuadrant, ScaleModel, make_model

DEFAULT_STEP = 1e-5
DEFAULT_RANK_TOL = 1e-6
FIXED_POINT_TOL = 1e-9


def numeric_jacobian(f: Callable, x: np.ndarray, h: float = DEFAULT_STEP, order: int = 2) -> np.ndarray:
    """Central-difference Jacobian, one Richardson step by default.

    order=1 is the plain central difference; order=2 combines steps h and h/2
    as (4 D(h/2) - D(h)) / 3, killing the leading h^2 truncation term.
    """
    x = np.asarray(x, dtype=float)

    def central(hh: float) -> np.ndarray:
        cols = []
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = hh
            cols.append((f(x + e) - f(x - e)) / (2.0 * hh))
        return np.stack(cols, axis=1)

    if order <= 1:
        return central(h)
    return (4.0 * central(h / 2.0) - central(h)) / 3.0


# --- named builders -------------------------------------------------------------


def _build_identity(model: ScaleModel, params: dict) -> Callable:
    return lambda x: np.asarray(x, dtype=float).copy()


def _build_constant(model: ScaleModel, params: dict) -> Callable:
    point = np.asarray(params["point"], dtype=float)
    if point.size != model.dim:
        raise ValidationError("constant retraction point has the wrong dimension")
    return lambda x: point.copy()


def _build_coordinate_projection(model: ScaleModel, params: dict) -> Callable:
    keep = sorted(int(i) for i in params["keep"])
    if any(not 0 <= i < model.dim for i in keep):
        raise ValidationError(f"keep indices out of range for dim {model.dim}")
    mask = np.zeros(model.dim)
    mask[keep] = 1.0

    def r(x):
        return np.asarray(x, dtype=float) * mask

    return r


def _build_skew_projection(model: ScaleModel, params: dict) -> Callable:
    """Non-orthogonal projection onto a coordinate axis: the axis coordinate
    absorbs a shear from the other coordinates before they are zeroed.  Same
    image as the straight projection onto that axis."""
    axis = int(params["axis"])
    shear = {int(j): float(c) for j, c in params.get("shear", {}).items()}
    if not 0 <= axis < model.dim or axis in shear:
        raise ValidationError("skew projection needs a free axis")

    def r(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[axis] = x[axis] + sum(c * x[j] for j, c in shear.items())
        return out

    return r


def _build_corner_collapse(model: ScaleModel, params: dict) -> Callable:
    corner = int(params["corner"])
    if not 0 <= corner < model.k:
        raise ValidationError("corner index must name a constrained coordinate")

    def r(x):
        out = np.asarray(x, dtype=float).copy()
        out[corner] = 0.0
        return out

    return r


def jump_profile(t: float, D: int) -> np.ndarray:
    """Unit vector g(t) with entries proportional to e^(-j/t), j = 1..D."""
    g = np.exp(-np.arange(1, D + 1) / t)
    return g / np.linalg.norm(g)


def _build_jumping(model: ScaleModel, params: dict) -> Callable:
    if model.n != 1 or model.k != 0:
        raise ValidationError("jumping family needs one unconstrained base coordinate")
    D = model.D

    def r(x):
        x = np.asarray(x, dtype=float)
        t, w = x[0], x[1:]
        if t <= 0:
            return np.concatenate([[t], np.zeros(D)])
        g = jump_profile(t, D)
        return np.concatenate([[t], (w @ g) * g])

    return r


RETRACTION_BUILDERS = {
    "identity": _build_identity,
    "constant": _build_constant,
    "coordinate_projection": _build_coordinate_projection,
    "skew_projection": _build_skew_projection,
    "corner_collapse": _build_corner_collapse,
    "jumping": _build_jumping,
}


@dataclass(frozen=True)
class RetractionModel:
    """One local retraction: the scale model, the map, and its box domain."""

    model: ScaleModel
    builder: str
    params: dict = field(default_factory=dict)
    lo: tuple = ()
    hi: tuple = ()
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if self.builder not in RETRACTION_BUILDERS:
            raise ValidationError(
                f"unknown retraction builder {self.builder!r}; "
                f"available: {sorted(RETRACTION_BUILDERS)}"
            )
        lo = np.full(self.model.dim, -math.inf) if not self.lo else np.asarray(self.lo, float)
        hi = np.full(self.model.dim, math.inf) if not self.hi else np.asarray(self.hi, float)
        if lo.size != self.model.dim or hi.size != self.model.dim:
            raise ValidationError("box bounds must match the model dimension")
        if np.any(lo > hi):
            raise ValidationError("empty box: lo > hi somewhere")
        # the domain sits inside the partial quadrant: corner floors clamp to 0
        corner_floor = np.concatenate([np.zeros(self.model.k), np.full(self.model.dim - self.model.k, -math.inf)])
        object.__setattr__(self, "_lo_arr", np.maximum(lo, corner_floor))
        object.__setattr__(self, "_hi_arr", hi)
        object.__setattr__(self, "_map", RETRACTION_BUILDERS[self.builder](self.model, self.params))

    @property
    def quadrant(self) -> PartialQuadrant:
        return PartialQuadrant(self.model)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            x.size == self.model.dim
            and np.all(x >= self._lo_arr - tol)
            and np.all(x <= self._hi_arr + tol)
        )

    def __call__(self, x) -> np.ndarray:
        return self._map(x)

    def jacobian(self, x) -> np.ndarray:
        return numeric_jacobian(self._map, np.asarray(x, float), self.step)


def retraction_from_json(obj: dict) -> RetractionModel:
    from .scales import model_from_json

    try:
        model = model_from_json(obj["model"])
        return RetractionModel(
            model,
            obj["builder"],
            obj.get("params", {}),
            tuple(obj.get("lo", ())),
            tuple(obj.get("hi", ())),
            float(obj.get("step", DEFAULT_STEP)),
        )
    except KeyError as e:
        raise ValidationError(f"retraction descriptor missing field {e}") from None


# --- verification ---------------------------------------------------------------


def verify_retraction(rm: RetractionModel, samples) -> dict:
    """Measure the idempotency defect of r and the projection defect of Dr.

    Every sample must lie in the declared box.  Fixed points among the
    samples (|r(x) - x| below the fixed-point tolerance) additionally get the
    Jacobian check |Dr(o)^2 - Dr(o)|.
    """
    samples = [np.asarray(x, dtype=float) for x in samples]
    worst_idem = 0.0
    worst_proj = 0.0
    n_fixed = 0
    for x in samples:
        if not rm.contains(x):
            raise DomainError(f"sample {x.tolist()} is outside the declared box")
        rx = rm(x)
        worst_idem = max(worst_idem, float(np.max(np.abs(rm(rx) - rx))))
        if np.max(np.abs(rx - x)) <= FIXED_POINT_TOL:
            n_fixed += 1
            J = rm.jacobian(x)
            worst_proj = max(worst_proj, float(np.linalg.norm(J @ J - J, 2)))
    return {
        "max_idempotency_defect": worst_idem,
        "max_projection_defect": worst_proj,
        "n_samples": len(samples),
        "n_fixed_points": n_fixed,
        "step": rm.step,
    }


@dataclass(frozen=True)
class TangentSpace:
    basis: np.ndarray  # columns, orthonormal
    rank: int
    spectrum: np.ndarray


def tangent_space(rm: RetractionModel, o, tol: float = DEFAULT_RANK_TOL) -> TangentSpace:
    """Image of Dr(o) at a fixed point o, as an orthonormal column basis.

    The rank must be stable when the tolerance doubles; otherwise the
    singular spectrum sits too close to the cut and the call refuses to
    guess (RankAmbiguous, spectrum attached).
    """
    o = np.asarray(o, dtype=float)
    if np.max(np.abs(rm(o) - o)) > FIXED_POINT_TOL:
        raise PreconditionFailed("tangent space is only defined at fixed points of r")
    J = rm.jacobian(o)
    U, s, _ = np.linalg.svd(J)
    r1 = int(np.sum(s > tol))
    r2 = int(np.sum(s > 2.0 * tol))
    if r1 != r2:
        raise RankAmbiguous(
            f"rank {r2} at tol={2 * tol:g} but {r1} at tol={tol:g}", spectrum=s
        )
    return TangentSpace(basis=U[:, :r1], rank=r1, spectrum=s)


def classify_retraction(rm: RetractionModel, o, sc_plus_bound: float | None = None) -> dict:
    """Level-gain classification of the tangent projection Dr(o).

    The certification is threshold-relative: the flag says every level-gain
    norm stays under sc_plus_bound, nothing more.
    """
    from .operators import DEFAULT_SC_PLUS_BOUND, ScOperator, classify_operator

    J = rm.jacobian(np.asarray(o, dtype=float))
    bound = DEFAULT_SC_PLUS_BOUND if sc_plus_bound is None else sc_plus_bound
    return classify_operator(ScOperator(rm.model, rm.model, J), bound)


def verify_tame(rm: RetractionModel, samples, tol: float = DEFAULT_RANK_TOL) -> dict:
    """Two-part tameness check against the corner structure.

    (1) r preserves the number of vanishing corner coordinates, sample by
        sample (an exact integer comparison).
    (2) at each fixed point o among the samples, the complement
        (1 - Dr(o)) E lies inside the subspace of vectors vanishing on o's
        zero corners — i.e. those corner rows of (1 - Dr(o)) vanish.
    """
    from .cones import QuadrantSpec, degeneracy_index
    from .errors import NotInQuadrant

    quad = QuadrantSpec(rm.model.dim, rm.model.k)
    index_ok = True
    corner_leak = 0.0
    checked = 0
    fixed = 0
    for x in samples:
        x = np.asarray(x, dtype=float)
        if not rm.contains(x):
            raise DomainError(f"sample {x.tolist()} is outside the declared box")
        rx = rm(x)
        d_before = degeneracy_index(x.tolist(), quad, tol=FIXED_POINT_TOL)
        try:
            d_after = degeneracy_index(rx.tolist(), quad, tol=FIXED_POINT_TOL)
        except NotInQuadrant:
            index_ok = False  # r left the quadrant entirely
            continue
        if d_before != d_after:
            index_ok = False
        checked += 1
        if np.max(np.abs(rx - x)) <= FIXED_POINT_TOL:
            fixed += 1
            Q = np.eye(rm.model.dim) - rm.jacobian(x)
            zero_rows = [i for i in range(rm.model.k) if abs(x[i]) <= FIXED_POINT_TOL]
            if zero_rows:
                corner_leak = max(corner_leak, float(np.max(np.abs(Q[zero_rows, :]))))
    return {
        "index_preserved": index_ok,
        "complement_in_Ex": corner_leak <= tol,
        "max_corner_leak": corner_leak,
        "checked_points": checked,
        "fixed_points": fixed,
    }


def local_faces(rm: RetractionModel, o, tame_report: dict, tol: float = DEFAULT_RANK_TOL) -> list[dict]:
    """Face germs through a fixed point o: one per vanishing corner coordinate.

    Requires a passing tameness report for this model — without tameness the
    face count along O can genuinely differ from the corner count and the
    enumeration below would be wrong, so the precondition is hard.
    """
    if not (tame_report and tame_report.get("index_preserved") and tame_report.get("complement_in_Ex")):
        raise PreconditionFailed("local_faces needs a passing verify_tame report")
    from .cones import QuadrantSpec, degeneracy_index

    o = np.asarray(o, dtype=float)
    ts = tangent_space(rm, o, tol)
    zeros = [i for i in range(rm.model.k) if abs(o[i]) <= FIXED_POINT_TOL]
    d = degeneracy_index(o.tolist(), QuadrantSpec(rm.model.dim, rm.model.k), tol=FIXED_POINT_TOL)
    if d != len(zeros):
        raise InternalContradiction(f"degeneracy {d} but {len(zeros)} vanishing corners")
    faces = []
    for i in zeros:
        row = ts.basis[i, :]
        if np.max(np.abs(row)) <= tol:
            face_basis = ts.basis  # the whole tangent space lies in the wall
        else:
            _, _, Vt = np.linalg.svd(row[None, :])
            face_basis = ts.basis @ Vt[1:, :].T
        faces.append({"corner": i, "basis": face_basis, "point": o.copy()})
    return faces


# --- tangent utilities used by the invariants -----------------------------------


def subspace_angle(A: np.ndarray, B: np.ndarray) -> float:
    """Largest principal angle (radians) between the column spans of A and B."""
    if A.shape[1] != B.shape[1]:
        return math.pi / 2.0
    if A.shape[1] == 0:
        return 0.0
    Qa, _ = np.linalg.qr(A)
    Qb, _ = np.linalg.qr(B)
    s = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    return float(np.arccos(np.clip(np.min(s), -1.0, 1.0)))


def reduced_tangent(rm: RetractionModel, o, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """T_oO intersected with the zero-corner subspace at o (column basis)."""
    o = np.asarray(o, dtype=float)
    ts = tangent_space(rm, o, tol)
    zeros = [i for i in range(rm.model.k) if abs(o[i]) <= FIXED_POINT_TOL]
    if not zeros:
        return ts.basis
    rows = ts.basis[zeros, :]
    _, s, Vt = np.linalg.svd(rows, full_matrices=True)
    null_dim = ts.rank - int(np.sum(s > tol))
    return ts.basis @ Vt[ts.rank - null_dim :, :].T if null_dim else ts.basis[:, :0]


def tangent_via_paths(rm: RetractionModel, o, directions=None, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Tangent space recovered from one-sided path derivatives.

    Pushes straight paths o + s v through r and differentiates at s = 0+
    (forward differences with one Richardson step).  The span of the
    derivatives over +/- each probe direction is the tangent space; this is
    the sampling route the intersection-based computation is checked against.
    """
    o = np.asarray(o, dtype=float)
    if directions is None:
        directions = list(np.eye(rm.model.dim))
    h = rm.step
    vecs = []
    for v in directions:
        v = np.asarray(v, dtype=float)
        for sgn in (+1.0, -1.0):
            d1 = (rm(o + sgn * h * v) - rm(o)) / h
            d2 = (rm(o + sgn * h / 2.0 * v) - rm(o)) / (h / 2.0)
            vecs.append(sgn * (2.0 * d2 - d1))
    Mv = np.stack(vecs, axis=1)
    U, s, _ = np.linalg.svd(Mv)
    r = int(np.sum(s > tol * max(1.0, float(s[0]) if s.size else 1.0)))
    return U[:, :r]


# --- the jumping demo -----------------------------------------------------------


def jumping_retraction_demo(
    t_grid,
    D: int = 8,
    M: int = 3,
    weights=(0.0, 0.5, 1.0, 1.5),
    csv_path: str | None = None,
) -> list[dict]:
    """Dimension profile of the built-in jumping family along a t-grid.

    For each t the probe point (t, w0) with w0_j = 1/j is retracted to a
    point o(t) on the image, and the tangent rank there is recorded together
    with the idempotency defect at the probe.  Expected profile: rank 1 for
    t <= 0 (base direction only), rank 2 for t > 0 (base plus the g(t) fiber
    line).  Optionally writes CSV rows (t, rank, defect).
    """
    model = make_model(1, 0, D, M, list(weights))
    rm = RetractionModel(model, "jumping")
    w0 = 1.0 / np.arange(1, D + 1)
    rows = []
    for t in t_grid:
        x = np.concatenate([[float(t)], w0])
        rx = rm(x)
        defect = float(np.max(np.abs(rm(rx) - rx)))
        rank = tangent_space(rm, rx).rank
        rows.append({"t": float(t), "rank": rank, "defect": defect})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["t", "rank", "defect"])
            writer.writeheader()
            writer.writerows(rows)
    return rows


# --- bundle version ---------------------------------------------------------------


def _rho_zero(base: RetractionModel, fiber: ScaleModel, params: dict) -> Callable:
    Z = np.zeros((fiber.dim, fiber.dim))
    return lambda x: Z


def _rho_constant(base: RetractionModel, fiber: ScaleModel, params: dict) -> Callable:
    P = np.asarray(params["entries"], dtype=float)
    if P.shape != (fiber.dim, fiber.dim):
        raise ValidationError("constant fiber family needs a square matrix on the fiber")
    return lambda x: P


def _rho_gamma(base: RetractionModel, fiber: ScaleModel, params: dict) -> Callable:
    """Rank-(0 or 1) family: project onto g(t) for t > 0, zero for t <= 0."""
    if base.model.n != 1:
        raise ValidationError("gamma projection family needs the jumping base")

    def rho(x):
        t = float(np.asarray(x, dtype=float)[0])
        if t <= 0:
            return np.zeros((fiber.dim, fiber.dim))
        g = np.concatenate([np.zeros(fiber.n), jump_profile(t, fiber.D)])
        return np.outer(g, g)

    return rho


RHO_BUILDERS = {"zero": _rho_zero, "constant": _rho_constant, "gamma_projection": _rho_gamma}


@dataclass(frozen=True)
class StrongBundleRetraction:
    """R(u, h) = (r(u), rho(u) h) over a base retraction and a fiber model.

    The double filtration indexes base regularity m and fiber regularity k
    with k allowed to exceed m by at most one; `filtration_pairs` lists the
    admissible (m, k).
    """

    base: RetractionModel
    fiber: ScaleModel
    rho_builder: str
    rho_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rho_builder not in RHO_BUILDERS:
            raise ValidationError(f"unknown fiber family {self.rho_builder!r}")
        object.__setattr__(
            self, "_rho", RHO_BUILDERS[self.rho_builder](self.base, self.fiber, self.rho_params)
        )

    def rho(self, x) -> np.ndarray:
        return self._rho(x)

    def __call__(self, u, h):
        u = np.asarray(u, dtype=float)
        return self.base(u), self.rho(u) @ np.asarray(h, dtype=float)

    def filtration_pairs(self) -> list[tuple[int, int]]:
        return [
            (m, k)
            for m in range(self.base.model.M + 1)
            for k in range(min(m + 1, self.fiber.M) + 1)
        ]


def verify_bundle_retraction(sbr: StrongBundleRetraction, samples_u, samples_h) -> dict:
    """Idempotency of R = (r, rho) and the fiber projection defect at fixed u."""
    base_rep = verify_retraction(sbr.base, samples_u)
    worst_fiber = 0.0
    worst_proj = 0.0
    for u in samples_u:
        u = np.asarray(u, dtype=float)
        ru = sbr.base(u)
        prod = sbr.rho(ru) @ sbr.rho(u)
        for h in samples_h:
            h = np.asarray(h, dtype=float)
            worst_fiber = max(worst_fiber, float(np.max(np.abs(prod @ h - sbr.rho(u) @ h))))
        if np.max(np.abs(ru - u)) <= FIXED_POINT_TOL:
            P = sbr.rho(u)
            worst_proj = max(worst_proj, float(np.linalg.norm(P @ P - P, 2)))
    return {
        "base": base_rep,
        "max_fiber_defect": worst_fiber,
        "max_fiber_projection_defect": worst_proj,
        "filtration_pairs": sbr.filtration_pairs(),
    }
