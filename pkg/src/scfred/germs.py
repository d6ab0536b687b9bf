"""Contraction-germ solvers and the local nonlinear toolbox built on them.

The objects here all revolve around one normal form: a map whose fiber
component reads ``w - B(a, w)`` with ``B`` Lipschitz-small in ``w`` on every
retained level.  Solving means running the fixed-point iteration w <- B(a, w)
at level 0 and then *re-verifying* the same solution on higher levels rather
than re-iterating — uniqueness of the level-0 fixed point forces the
restriction, so climbing is a certification pass, not a second solve.

Nonlinearities enter as expression trees or named builders (`expr` module);
nothing in a problem file executes as code.  Contraction constants are
certified by deterministic low-discrepancy (Halton) sampling and every
certificate carries a `sampled` flag: a ledger entry is evidence at finitely
many points, not a proof.

Beyond the solver the module houses the surrounding machinery: basic-germ
bookkeeping (finite part + fiber contraction), filler block analysis, the
normalization of a germ perturbed by a level-gaining section, the conjugation
criterion that turns a section with invertible partial linearization into
contraction normal form, nested-radius compactness probes, kernel-graph
parameterizations of zero sets, and greedy finite-rank transversality repair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import (
    BudgetExceeded,
    ContractionBreach,
    CriterionFailed,
    FillerDegenerate,
    InternalContradiction,
    LedgerIncomplete,
    NoConvergence,
    NotInQuadrant,
    NotTransversal,
    OutOfRadius,
    PreconditionFailed,
    RankAmbiguous,
    ValidationError,
)
from .operators import (
    AMBIGUITY_FACTOR,
    DEFAULT_SC_PLUS_BOUND,
    ScOperator,
    classify_operator,
    fredholm_split,
)
from .retracts import StrongBundleRetraction, numeric_jacobian
from .scales import ScaleModel, make_model, model_from_json

DEFAULT_TOL = 1e-13
DEFAULT_MAX_ITERS = 5000
DEFAULT_RANK_TOL = 1e-9
FD_STEP = 1e-6
# Slack applied when re-checking a certified constant mid-iteration: sampling
# cannot see every point, so a run is only flagged when it beats the ledger
# by more than this margin.
CERTIFICATE_SLACK = 1e-7

_PRIMES: list = [2, 3, 5, 7, 11, 13]


def _prime(idx: int) -> int:
    while len(_PRIMES) <= idx:
        cand = _PRIMES[-1] + 2
        while any(cand % p == 0 for p in _PRIMES if p * p <= cand):
            cand += 2
        _PRIMES.append(cand)
    return _PRIMES[idx]


def _radical_inverse(i: int, base: int) -> float:
    x, f = 0.0, 1.0 / base
    while i > 0:
        x += f * (i % base)
        i //= base
        f /= base
    return x


def halton(dim: int, count: int, skip: int = 20) -> np.ndarray:
    """Deterministic Halton points in [0,1)^dim.

    Hand-rolled on purpose: report determinism is a contract, and the
    sequence must not drift with library versions.  The first `skip` points
    are dropped (the classical fix for early-sequence correlation).  Bases
    come from a cached trial-division sieve, so any dimension works.
    """
    bases = [_prime(d) for d in range(dim)]
    return np.array(
        [[_radical_inverse(i, b) for b in bases] for i in range(skip, skip + count)]
    )


def _weighted_opnorm(A: np.ndarray, G_target: np.ndarray, G_source: np.ndarray) -> float:
    """Operator norm of A between spaces normed by |G x|_2."""
    if A.size == 0:
        return 0.0
    scaled = G_target @ A @ np.linalg.pinv(G_source)
    return float(np.linalg.svd(scaled, compute_uv=False)[0])


def _rank_with_band(s: np.ndarray, tol: float) -> int:
    """Rank from a singular spectrum, refusing to decide inside the band."""
    ambiguous = [float(x) for x in s if tol < x <= AMBIGUITY_FACTOR * tol]
    if ambiguous:
        raise RankAmbiguous(
            f"singular values {ambiguous} fall inside the ambiguity band "
            f"({tol}, {AMBIGUITY_FACTOR * tol}]",
            spectrum=s,
        )
    return int(np.sum(s > tol))


# --- germ objects ---------------------------------------------------------------


@dataclass(frozen=True)
class LedgerEntry:
    """One level's contraction certificate: Lipschitz-in-w constant within a box.

    `epsilon` bounds |B(a,w) - B(a,w')|_level / |w - w'|_level for sampled
    points with |a|_0 <= radius and |w|_level, |w'|_level <= radius.  `sampled`
    stays True for every certificate produced here — there is no interval
    arithmetic behind it.
    """

    level: int
    epsilon: float
    radius: float
    sampled: bool = True
    n_samples: int = 0


class _GermProtocol:
    """Shared solver surface.

    Concrete germs provide: base_dim / corner_count / fiber_dim / max_level,
    eval_B(a, w), jac_B(a, w) -> (B, dB/da, dB/dw), fiber_metric(m) (a matrix
    G with |w|_m = |G w|_2), and a ledger tuple.
    """

    ledger: tuple = ()

    def fiber_norm(self, w, m: int) -> float:
        return float(np.linalg.norm(self.fiber_metric(m) @ np.asarray(w, float)))

    def base_norm(self, a) -> float:
        return float(np.linalg.norm(np.asarray(a, float)))

    def ledger_entry(self, m: int):
        for e in self.ledger:
            if e.level == m:
                return e
        return None


@dataclass(frozen=True)
class ContractionGerm(_GermProtocol):
    """Fiber nonlinearity w - B(a, w) over C = [0,inf)^k + R^(n-k) + W.

    `components` is one expression tree per tail coordinate, over parameter
    bank `a` (size model.n) and unknown bank `w` (size model.D).  B(0,0) = 0
    is asserted at construction.
    """

    model: ScaleModel
    components: tuple
    ledger: tuple = ()

    def __post_init__(self):
        if len(self.components) != self.model.D:
            raise ValidationError(
                f"need {self.model.D} fiber components, got {len(self.components)}"
            )
        for c in self.components:
            ex.validate_expr(c, self.model.n, self.model.D)
        at_zero = ex.eval_vector(list(self.components), np.zeros(self.model.n), np.zeros(self.model.D))
        if np.linalg.norm(at_zero) > 1e-12:
            raise ValidationError(f"B(0,0) must vanish; got |B(0,0)| = {np.linalg.norm(at_zero)}")

    @property
    def base_dim(self) -> int:
        return self.model.n

    @property
    def corner_count(self) -> int:
        return self.model.k

    @property
    def fiber_dim(self) -> int:
        return self.model.D

    @property
    def max_level(self) -> int:
        return self.model.M

    def fiber_metric(self, m: int) -> np.ndarray:
        return np.diag(self.model.tail_weights(m))

    def eval_B(self, a, w) -> np.ndarray:
        return ex.eval_vector(list(self.components), a, w)

    def jac_B(self, a, w):
        return ex.jacobians(list(self.components), a, w)


class TransformedGerm(_GermProtocol):
    """A germ produced by a coordinate change; B is a closure, not a tree.

    Only this module constructs these (normalization and conjugation return
    them), so the no-user-code rule for problem files is untouched.  Jacobians
    fall back to finite differences unless the transform supplies analytic
    ones.  `level_offset` records how many levels the transform consumed: the
    germ's level r reads data from the parent's level r + offset.
    """

    def __init__(self, *, base_dim, corner_count, fiber_dim, max_level, eval_B,
                 fiber_metrics, ledger=(), jac_B=None, provenance="", level_offset=0):
        self.base_dim = base_dim
        self.corner_count = corner_count
        self.fiber_dim = fiber_dim
        self.max_level = max_level
        self._eval = eval_B
        self._jac = jac_B
        self._metrics = fiber_metrics  # list indexed by level
        self.ledger = tuple(ledger)
        self.provenance = provenance
        self.level_offset = level_offset

    def fiber_metric(self, m: int) -> np.ndarray:
        return self._metrics[m]

    def eval_B(self, a, w) -> np.ndarray:
        return self._eval(np.asarray(a, float), np.asarray(w, float))

    def jac_B(self, a, w):
        a = np.asarray(a, float)
        w = np.asarray(w, float)
        if self._jac is not None:
            return self._jac(a, w)
        val = self._eval(a, w)
        Ja = numeric_jacobian(lambda t: self._eval(t, w), a, FD_STEP)
        Jw = numeric_jacobian(lambda t: self._eval(a, t), w, FD_STEP)
        return val, Ja, Jw

    def with_ledger(self, ledger) -> "TransformedGerm":
        return TransformedGerm(
            base_dim=self.base_dim, corner_count=self.corner_count,
            fiber_dim=self.fiber_dim, max_level=self.max_level,
            eval_B=self._eval, fiber_metrics=self._metrics, ledger=ledger,
            jac_B=self._jac, provenance=self.provenance, level_offset=self.level_offset,
        )


# --- named builders --------------------------------------------------------------


def _germ_linear_mix(model: ScaleModel, params: dict) -> tuple:
    """B(a, w) = slope_a * a_0 + slope_w * w  on a one-dimensional fiber."""
    if model.D != 1 or model.n < 1:
        raise ValidationError("linear_mix needs D = 1 and n >= 1")
    sa = float(params.get("slope_a", 0.5))
    sw = float(params.get("slope_w", 0.25))
    return (ex.add(ex.scale(sa, ex.param(0)), ex.scale(sw, ex.var(0))),)


def _germ_diagonal_decay(model: ScaleModel, params: dict) -> tuple:
    """B_j = amp * a_0 * e^(-delta_M * j) + slope * w_j, j = 1..D.

    The a-coefficient decays at the top-level weight rate, so the solution
    keeps finite norms on every retained level.
    """
    if model.n < 1:
        raise ValidationError("diagonal_decay needs n >= 1")
    amp = float(params.get("amp", 1.0))
    slope = float(params.get("slope", 0.25))
    top = model.weights[model.M]
    return tuple(
        ex.add(
            ex.scale(amp * math.exp(-top * j), ex.param(0)),
            ex.scale(slope, ex.var(j - 1)),
        )
        for j in range(1, model.D + 1)
    )


def _germ_zero(model: ScaleModel, params: dict) -> tuple:
    return tuple(ex.const(0.0) for _ in range(model.D))


GERM_BUILDERS = {
    "linear_mix": _germ_linear_mix,
    "diagonal_decay": _germ_diagonal_decay,
    "zero": _germ_zero,
}


# --- sampling + certification -----------------------------------------------------


def _box_points(n: int, k: int, count: int, radius: float, norm, phase: int = 0) -> list:
    """Halton points a with |a| <= radius under `norm`, first k coords >= 0."""
    if n == 0:
        return [np.zeros(0) for _ in range(count)]
    pts = halton(n + 1, count, skip=20 + phase)
    out = []
    for row in pts:
        raw = np.where(np.arange(n) < k, row[:n], 2.0 * row[:n] - 1.0)
        nrm = norm(raw)
        r = radius * row[n] ** (1.0 / n)
        out.append(raw * (r / nrm) if nrm > 1e-12 else raw * 0.0)
    return out


def certify_contraction(germ, levels, radius: float, n_samples: int = 96) -> tuple:
    """Measure per-level Lipschitz-in-w constants by Halton sampling.

    Returns LedgerEntry tuples with the *measured* maxima — no optimistic
    rounding; a non-contraction is recorded as honestly as a contraction.
    """
    entries = []
    for m in levels:
        a_pts = _box_points(germ.base_dim, germ.corner_count, n_samples, radius,
                            germ.base_norm, phase=7 * m)
        w_pts = _box_points(germ.fiber_dim, 0, n_samples, radius,
                            lambda v, m=m: germ.fiber_norm(v, m), phase=7 * m + 3)
        v_pts = _box_points(germ.fiber_dim, 0, n_samples, radius,
                            lambda v, m=m: germ.fiber_norm(v, m), phase=7 * m + 5)
        worst = 0.0
        for a, w, wp in zip(a_pts, w_pts, v_pts):
            gap = germ.fiber_norm(np.asarray(w) - np.asarray(wp), m)
            if gap < 1e-12:
                continue
            d = germ.fiber_norm(germ.eval_B(a, w) - germ.eval_B(a, wp), m)
            worst = max(worst, d / gap)
        entries.append(LedgerEntry(level=m, epsilon=worst, radius=radius,
                                   sampled=True, n_samples=n_samples))
    return tuple(entries)


def make_contraction_germ(model: ScaleModel, spec, radius: float = 1.0,
                          levels=None, n_samples: int = 96) -> ContractionGerm:
    """Build a germ from an expression list, a spec dict, or a named builder,
    then certify its contraction ledger on the requested levels (default: all).
    """
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "expr":
            components = tuple(spec["components"])
        elif kind == "builder":
            name = spec.get("name")
            if name not in GERM_BUILDERS:
                raise ValidationError(f"unknown germ builder {name!r}; available: {sorted(GERM_BUILDERS)}")
            components = GERM_BUILDERS[name](model, spec.get("params", {}))
        else:
            raise ValidationError(f"germ spec kind must be 'expr' or 'builder', got {kind!r}")
    else:
        components = tuple(spec)
    bare = ContractionGerm(model=model, components=components)
    if levels is None:
        levels = range(model.M + 1)
    ledger = certify_contraction(bare, levels, radius, n_samples)
    return ContractionGerm(model=model, components=components, ledger=ledger)


# --- the solver -------------------------------------------------------------------


@dataclass(frozen=True)
class GermSolution:
    a: tuple
    delta: tuple
    residual: float
    iterations: int
    level_norms: dict
    level_residuals: dict
    certified_level: int
    tol: float


def solve_contraction_germ(germ, a, target_level: int = 0, tol: float = DEFAULT_TOL,
                           max_iters: int = DEFAULT_MAX_ITERS, x0=None) -> GermSolution:
    """Fixed-point solve of w = B(a, w), then level climbing by re-verification.

    Level 0 does the only iteration; each higher level just checks that the
    ledger covers it, that (a, delta) sit inside the certified radius, and
    re-evaluates the defect in that level's norm.  The contraction certificate
    is re-checked between consecutive iterates — a breach mid-run raises
    ContractionBreach with the offending pair as witness.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (germ.base_dim,):
        raise ValidationError(f"parameter has shape {a.shape}, expected ({germ.base_dim},)")
    if germ.corner_count > 0 and a[: germ.corner_count].min(initial=math.inf) < -1e-12:
        raise NotInQuadrant("parameter leaves the corner constraints")
    if not 0 <= target_level <= germ.max_level:
        raise ValidationError(f"target level {target_level} outside [0, {germ.max_level}]")

    e0 = germ.ledger_entry(0)
    if e0 is None:
        raise LedgerIncomplete(0)
    if e0.epsilon > 0.5 + 1e-12:
        raise PreconditionFailed(
            f"level-0 contraction constant {e0.epsilon:.6g} exceeds 1/2; refusing to solve"
        )
    if germ.base_norm(a) > e0.radius * (1 + 1e-12):
        raise OutOfRadius(f"|a|_0 = {germ.base_norm(a):.6g} exceeds the level-0 radius {e0.radius}")

    w = np.zeros(germ.fiber_dim) if x0 is None else np.asarray(x0, dtype=float)
    prev_w = None
    prev_Bw = None
    iterations = 0
    converged = False
    for _ in range(max_iters):
        iterations += 1
        Bw = germ.eval_B(a, w)
        if prev_w is not None:
            gap = germ.fiber_norm(w - prev_w, 0)
            jump = germ.fiber_norm(Bw - prev_Bw, 0)
            if jump > (e0.epsilon + CERTIFICATE_SLACK) * gap + 1e-15:
                raise ContractionBreach(
                    f"observed ratio {jump / gap if gap else math.inf:.6g} beats the "
                    f"certified constant {e0.epsilon:.6g} at level 0",
                    witness=(tuple(a), tuple(prev_w), tuple(w)),
                )
        if germ.fiber_norm(Bw, 0) > e0.radius * (1 + 1e-9):
            raise OutOfRadius("iterate left the certified level-0 ball")
        step = germ.fiber_norm(Bw - w, 0)
        prev_w, prev_Bw = w, Bw
        w = Bw
        if step <= tol:
            converged = True
            break
    if not converged:
        raise NoConvergence(f"no fixed point within {max_iters} iterations (last step {step:.3g})")

    delta = w
    level_norms = {0: germ.fiber_norm(delta, 0)}
    level_residuals = {0: germ.fiber_norm(delta - germ.eval_B(a, delta), 0)}
    certified = 0
    for m in range(1, target_level + 1):
        em = germ.ledger_entry(m)
        if em is None:
            raise LedgerIncomplete(m)
        if em.epsilon > 0.5 + 1e-12:
            raise PreconditionFailed(f"level-{m} contraction constant {em.epsilon:.6g} exceeds 1/2")
        if germ.base_norm(a) > em.radius * (1 + 1e-12):
            raise OutOfRadius(f"|a|_0 exceeds the level-{m} radius {em.radius}")
        nm = germ.fiber_norm(delta, m)
        if nm > em.radius * (1 + 1e-9):
            raise OutOfRadius(f"|delta|_{m} = {nm:.6g} exceeds the level-{m} radius {em.radius}")
        level_norms[m] = nm
        level_residuals[m] = germ.fiber_norm(delta - germ.eval_B(a, delta), m)
        certified = m
    return GermSolution(
        a=tuple(float(x) for x in a),
        delta=tuple(float(x) for x in delta),
        residual=level_residuals[0],
        iterations=iterations,
        level_norms=level_norms,
        level_residuals=level_residuals,
        certified_level=certified,
        tol=tol,
    )


def tangent_solution(germ, a, b, tol: float = DEFAULT_TOL,
                     max_iters: int = DEFAULT_MAX_ITERS, solution: GermSolution | None = None) -> np.ndarray:
    """Directional derivative of the solution germ: solves the lifted linear
    fixed point u = D_a B(a, delta) b + D_w B(a, delta) u by iteration.

    The lifted problem inherits the contraction constant of the base germ at
    (a, delta(a)); that is re-checked before iterating.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sol = solution if solution is not None else solve_contraction_germ(germ, a, tol=tol, max_iters=max_iters)
    delta = np.asarray(sol.delta, dtype=float)
    _, Ja, Jw = germ.jac_B(a, delta)
    e0 = germ.ledger_entry(0)
    G0 = germ.fiber_metric(0)
    lin_const = _weighted_opnorm(Jw, G0, G0)
    if lin_const > e0.epsilon + 1e-4:
        raise ContractionBreach(
            f"linearized constant {lin_const:.6g} is not covered by the ledger value {e0.epsilon:.6g}",
            witness=(tuple(a), tuple(delta)),
        )
    rhs = Ja @ b
    u = np.zeros(germ.fiber_dim)
    for _ in range(max_iters):
        u_next = rhs + Jw @ u
        if germ.fiber_norm(u_next - u, 0) <= tol:
            return u_next
        u = u_next
    raise NoConvergence(f"tangent fixed point did not settle within {max_iters} iterations")


# --- basic germs -------------------------------------------------------------------


class BasicGerm:
    """Full-map wrapper: f(a, w) = (finite part, w - B(a, w)).

    The projection identity P o f = w - B(a, w) holds by construction.  The
    constructor asserts f(0) = 0 and — this being the smooth basic class — a
    vanishing w-linearization of B at the origin, checked by central finite
    differences against 1e-6 (the analytic value is not trusted blindly).
    """

    def __init__(self, germ, finite_eval, finite_jac, N: int, finite_components=None):
        self.germ = germ
        self.N = int(N)
        self._finite_eval = finite_eval
        self._finite_jac = finite_jac
        self.finite_components = finite_components

        z_a = np.zeros(germ.base_dim)
        z_w = np.zeros(germ.fiber_dim)
        f0 = self._finite_eval(z_a, z_w)
        if np.linalg.norm(f0) > 1e-12:
            raise ValidationError(f"basic germ must vanish at 0; finite part is {f0}")
        J = numeric_jacobian(lambda t: germ.eval_B(z_a, t), z_w, FD_STEP)
        G0 = germ.fiber_metric(0)
        d2 = _weighted_opnorm(J, G0, G0)
        if d2 > 1e-6:
            raise ValidationError(
                f"w-linearization of B at 0 has norm {d2:.3g} > 1e-6; "
                "not in the smooth basic class"
            )

    @property
    def base_dim(self) -> int:
        return self.germ.base_dim

    @property
    def fiber_dim(self) -> int:
        return self.germ.fiber_dim

    @property
    def index(self) -> int:
        return self.base_dim - self.N

    def eval_f(self, a, w) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        w = np.asarray(w, dtype=float)
        return np.concatenate([self._finite_eval(a, w), w - self.germ.eval_B(a, w)])

    def eval_full(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.eval_f(x[: self.base_dim], x[self.base_dim:])

    def jac_f(self, a, w) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        w = np.asarray(w, dtype=float)
        Fa, Fw = self._finite_jac(a, w)
        _, Ba, Bw = self.germ.jac_B(a, w)
        eye = np.eye(self.fiber_dim)
        return np.block([[Fa, Fw], [-Ba, eye - Bw]])

    def jac_full(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.jac_f(x[: self.base_dim], x[self.base_dim:])


def make_basic_germ(germ: ContractionGerm, finite_components) -> BasicGerm:
    """Expression-tree basic germ over a certified ContractionGerm."""
    comps = list(finite_components)
    for c in comps:
        ex.validate_expr(c, germ.base_dim, germ.fiber_dim)

    def f_eval(a, w):
        return ex.eval_vector(comps, a, w) if comps else np.zeros(0)

    def f_jac(a, w):
        if not comps:
            return np.zeros((0, germ.base_dim)), np.zeros((0, germ.fiber_dim))
        _, Ja, Jw = ex.jacobians(comps, a, w)
        return Ja, Jw

    return BasicGerm(germ, f_eval, f_jac, N=len(comps), finite_components=tuple(comps))


def basic_germ_split(bg: BasicGerm, tol: float = DEFAULT_RANK_TOL):
    """Kernel/cokernel split of Df(0) through the operator machinery.

    Routed through `operators.fredholm_split` so the rank-ambiguity band and
    the index bookkeeping match the linear side of the library exactly.
    """
    g = bg.germ
    weights = getattr(getattr(g, "model", None), "weights", None)
    if weights is None:
        weights = tuple(0.0 + 0.5 * i for i in range(g.max_level + 1))
    fiber_for_model = max(g.fiber_dim, 1)
    src = make_model(g.base_dim, g.corner_count, fiber_for_model, g.max_level, weights)
    tgt = make_model(bg.N, 0, fiber_for_model, g.max_level, weights)
    J = bg.jac_f(np.zeros(g.base_dim), np.zeros(g.fiber_dim))
    if g.fiber_dim == 0:
        J = np.pad(J, ((0, 1), (0, 1)))
        J[-1, -1] = 1.0
    op = ScOperator(src, tgt, J)
    return fredholm_split(op, tol=tol)


# --- fillers ----------------------------------------------------------------------


@dataclass(frozen=True)
class FillerReport:
    index_restricted: int
    index_filled: int
    surjective_restricted: bool
    surjective_filled: bool
    coupling_min_singular: float
    defects: dict = field(default_factory=dict)


def filler_blocks(A, B, C, tol: float = DEFAULT_RANK_TOL) -> FillerReport:
    """Index and surjectivity bookkeeping for the triangular block map
    [[A, B], [0, C]].  C must be invertible — that is what makes the filled
    problem equivalent to the restricted one — otherwise FillerDegenerate.

    Both indices and both surjectivity verdicts come from independent SVD rank
    computations on A and on the assembled block matrix; the equalities are
    asserted, not assumed.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[0] != C.shape[1]:
        raise FillerDegenerate(f"coupling block must be square, got {C.shape}")
    sC = np.linalg.svd(C, compute_uv=False) if C.size else np.zeros(0)
    c_min = float(sC[-1]) if sC.size else math.inf
    if C.size and c_min <= tol:
        raise FillerDegenerate(f"coupling block is singular (smallest singular value {c_min:.3g})")

    full = np.block([[A, B], [np.zeros((C.shape[0], A.shape[1])), C]])
    rA = _rank_with_band(np.linalg.svd(A, compute_uv=False), tol) if A.size else 0
    rF = _rank_with_band(np.linalg.svd(full, compute_uv=False), tol) if full.size else 0
    ind_A = (A.shape[1] - rA) - (A.shape[0] - rA)
    ind_F = (full.shape[1] - rF) - (full.shape[0] - rF)
    surj_A = rA == A.shape[0]
    surj_F = rF == full.shape[0]
    if ind_A != ind_F:
        raise InternalContradiction(
            f"restricted index {ind_A} != filled index {ind_F} despite invertible coupling"
        )
    if surj_A != surj_F:
        raise InternalContradiction("surjectivity equivalence failed despite invertible coupling")
    return FillerReport(
        index_restricted=ind_A,
        index_filled=ind_F,
        surjective_restricted=surj_A,
        surjective_filled=surj_F,
        coupling_min_singular=c_min,
    )


@dataclass(frozen=True)
class FillerProblem:
    """A filled section: bundle retraction (r, rho), the section on the
    retract image, and its extension to the ambient box.

    Both maps are expression lists over the ambient base coordinates
    (parameter bank; the unknown bank is unused), valued in the fiber model.
    """

    bundle: StrongBundleRetraction
    section: tuple
    filled: tuple

    def __post_init__(self):
        d = self.bundle.base.model.dim
        q = self.bundle.fiber.dim
        if len(self.section) != q or len(self.filled) != q:
            raise ValidationError(f"section and filler need {q} fiber components")
        for c in list(self.section) + list(self.filled):
            ex.validate_expr(c, d, 0)

    def eval_section(self, y) -> np.ndarray:
        return ex.eval_vector(list(self.section), np.asarray(y, float), np.zeros(0))

    def eval_filled(self, y) -> np.ndarray:
        return ex.eval_vector(list(self.filled), np.asarray(y, float), np.zeros(0))


def fill_section(fp: FillerProblem, n_samples: int = 40, tol: float = 1e-8,
                 rank_tol: float = DEFAULT_RANK_TOL) -> FillerReport:
    """Verify the three filler conditions on samples and run the block analysis.

    (1) filler = section on the retract image; (2) fiber-invariance of the
    filled value forces membership in the retract (checked in contrapositive
    on samples); (3) the linearization of y -> (1 - rho(r(y))) g(y) at 0 maps
    ker Dr(0) isomorphically onto ker rho(0) — the coupling block C.
    """
    base = fp.bundle.base
    d = base.model.dim
    lo = np.where(np.isfinite(base._lo_arr), base._lo_arr, -1.0)
    hi = np.where(np.isfinite(base._hi_arr), base._hi_arr, 1.0)
    pts = halton(d, n_samples)
    samples = [lo + row * (hi - lo) for row in pts]

    zero = np.zeros(d)
    g0 = fp.eval_filled(zero)
    if np.linalg.norm(g0) > tol:
        raise ValidationError(f"filler must be anchored at a zero; |g(0)| = {np.linalg.norm(g0):.3g}")

    agree = 0.0
    for u in samples:
        y = base(u)
        agree = max(agree, float(np.linalg.norm(fp.eval_filled(y) - fp.eval_section(y))))
    if agree > tol:
        raise ValidationError(f"filler disagrees with the section on the retract image ({agree:.3g})")

    implication_ok = True
    worst_off_retract = math.inf
    for y in samples:
        gy = fp.eval_filled(y)
        inv_defect = float(np.linalg.norm(fp.bundle.rho(base(y)) @ gy - gy))
        off = float(np.linalg.norm(base(y) - y))
        if inv_defect <= tol and off > 100 * tol:
            implication_ok = False
        if off > 100 * tol:
            worst_off_retract = min(worst_off_retract, inv_defect)
    if not implication_ok:
        raise ValidationError("fiber-invariant filled value found away from the retract")

    Jr = base.jacobian(zero)
    rho0 = fp.bundle.rho(base(zero))
    Ur, sr, Vrt = np.linalg.svd(Jr)
    r_rank = _rank_with_band(sr, rank_tol)
    tangent_basis = Ur[:, :r_rank]
    ker_r = Vrt.T[:, r_rank:]
    Up, sp, Vpt = np.linalg.svd(rho0)
    p_rank = _rank_with_band(sp, rank_tol)
    range_rho = Up[:, :p_rank]
    ker_rho = Vpt.T[:, p_rank:]

    def off_part(y):
        return (np.eye(fp.bundle.fiber.dim) - fp.bundle.rho(base(y))) @ fp.eval_filled(y)

    D_off = numeric_jacobian(off_part, zero, FD_STEP)
    _, Dg, _ = ex.jacobians(list(fp.filled), zero, np.zeros(0))

    C = ker_rho.T @ D_off @ ker_r
    if C.shape[0] != C.shape[1]:
        raise FillerDegenerate(
            f"ker Dr(0) and ker rho(0) have different dimensions {C.shape[::-1]}"
        )
    A = range_rho.T @ Dg @ tangent_basis
    Bblk = range_rho.T @ Dg @ ker_r
    lower_left = float(np.linalg.norm(ker_rho.T @ Dg @ tangent_basis)) if ker_rho.size else 0.0

    rep = filler_blocks(A, Bblk, C, tol=rank_tol)
    return FillerReport(
        index_restricted=rep.index_restricted,
        index_filled=rep.index_filled,
        surjective_restricted=rep.surjective_restricted,
        surjective_filled=rep.surjective_filled,
        coupling_min_singular=rep.coupling_min_singular,
        defects={
            "section_agreement": agree,
            "lower_left_block": lower_left,
            "n_samples": n_samples,
        },
    )


# --- normalization under level-gaining perturbations -------------------------------


@dataclass(frozen=True)
class WeakStabilityReport:
    germ: TransformedGerm
    kernel_dim: int
    base_dim_before: int
    base_dim_after: int
    finite_codim_before: int
    finite_codim_after: int
    index_before: int
    index_after: int
    identity: bool
    epsilon_margins: dict
    fiber_transform: dict


def normalize_perturbed_germ(bg: BasicGerm, s_components, rank_tol: float = DEFAULT_RANK_TOL,
                             sc_plus_bound: float = DEFAULT_SC_PLUS_BOUND,
                             radius: float | None = None, n_samples: int = 96) -> WeakStabilityReport:
    """Absorb a level-gaining perturbation into contraction normal form.

    With A the w-linearization of the perturbation's fiber part at 0, the map
    1 + A is split as W = ker ⊕ X -> W = range ⊕ Z; the kernel directions are
    promoted to new base parameters and, on X, the transformed nonlinearity

        Bhat((a, c), x) = L^(-1) P_range [B(a, w) - S(a, w)],   w = ker·c + X·x

    (L the restriction of 1 + A to X, S the nonlinear remainder of the
    perturbation's fiber part) is again a contraction — one level up, which is
    why the returned germ's level r reads the parent's level r + 1.
    """
    g = bg.germ
    if not isinstance(g, ContractionGerm):
        raise ValidationError("normalization expects an expression-tree germ")
    model = g.model
    n, D, N, M = model.n, model.D, bg.N, model.M
    if M < 1:
        raise ValidationError("need at least one retained level above 0 to normalize")
    comps = list(s_components)
    if len(comps) != N + D:
        raise ValidationError(f"perturbation needs {N + D} components, got {len(comps)}")
    for c in comps:
        ex.validate_expr(c, n, D)
    z_a, z_w = np.zeros(n), np.zeros(D)
    s0 = ex.eval_vector(comps, z_a, z_w)
    if np.linalg.norm(s0) > 1e-12:
        raise ValidationError("perturbation must vanish at 0")

    _, Ja_s, Jw_s = ex.jacobians(comps, z_a, z_w)
    Ds0 = np.hstack([Ja_s, Jw_s])
    src = model
    tgt = make_model(N, 0, D, M, model.weights)
    cls = classify_operator(ScOperator(src, tgt, Ds0), sc_plus_bound=sc_plus_bound)
    if not cls["is_sc_plus"]:
        raise ValidationError(
            f"perturbation linearization is not level-gaining within bound {sc_plus_bound} "
            f"(kappa = {cls['kappa']})"
        )

    A = Jw_s[N:, :]  # fiber rows of the perturbation's w-jacobian
    T = np.eye(D) + A
    U, sv, Vt = np.linalg.svd(T)
    rank = _rank_with_band(sv, rank_tol)
    c_dim = D - rank
    Vx = Vt.T[:, :rank]
    Vc = Vt.T[:, rank:]
    Ur = U[:, :rank]
    Uz = U[:, rank:]
    L = Ur.T @ T @ Vx

    fiber_rows = [c for c in comps[N:]]

    def S_eval(a, w):
        return ex.eval_vector(fiber_rows, a, w) - A @ w

    def Bbar(a, w):
        return g.eval_B(a, w) - S_eval(a, w)

    def B_hat(abar, x):
        a = abar[:n]
        cc = abar[n:]
        w = Vc @ cc + Vx @ x if c_dim else Vx @ x
        return np.linalg.solve(L, Ur.T @ Bbar(a, w))

    # level r of the transformed germ is level r+1 of the parent
    metrics = [np.diag(model.tail_weights(m + 1)) @ Vx for m in range(M)]
    new = TransformedGerm(
        base_dim=n + c_dim, corner_count=model.k, fiber_dim=rank, max_level=M - 1,
        eval_B=B_hat, fiber_metrics=metrics,
        provenance="weak-stability normalization", level_offset=1,
    )
    if radius is None:
        e = g.ledger_entry(1) or g.ledger_entry(0)
        radius = (e.radius if e else 1.0) * 0.5
    ledger = certify_contraction(new, range(M), radius, n_samples)
    new = new.with_ledger(ledger)

    margins = {}
    for entry in ledger:
        parent = g.ledger_entry(entry.level + 1)
        if parent is not None:
            margins[entry.level + 1] = entry.epsilon - parent.epsilon

    identity = c_dim == 0 and float(np.linalg.norm(T - np.eye(D))) <= rank_tol
    return WeakStabilityReport(
        germ=new,
        kernel_dim=c_dim,
        base_dim_before=n,
        base_dim_after=n + c_dim,
        finite_codim_before=N,
        finite_codim_after=N + c_dim,
        index_before=n - N,
        index_after=(n + c_dim) - (N + c_dim),
        identity=identity,
        epsilon_margins=margins,
        fiber_transform={
            "L": L,
            "X_basis": Vx,
            "kernel_basis": Vc,
            "range_basis": Ur,
            "defect_basis": Uz,
            "spectrum": sv,
        },
    )


# --- conjugation to normal form -----------------------------------------------------


@dataclass(frozen=True)
class CriterionData:
    """Section data for the conjugation criterion.

    The domain splits into a finite base block b (first `model.n` coordinates,
    quadrant corners among the first model.k) and the fiber block x
    (`model.D` coordinates, unconstrained).  The codomain lists the finite
    complement first (N coordinates) and the fiber image second; the fiber
    projection keeps the last model.D components.
    """

    model: ScaleModel
    N: int
    components: tuple

    def __post_init__(self):
        if len(self.components) != self.N + self.model.D:
            raise ValidationError(
                f"need {self.N + self.model.D} codomain components, got {len(self.components)}"
            )
        for c in self.components:
            ex.validate_expr(c, self.model.n, self.model.D)

    def eval_F(self, b, x) -> np.ndarray:
        return ex.eval_vector(list(self.components), b, x)

    def jac_F(self, b, x):
        return ex.jacobians(list(self.components), b, x)


@dataclass(frozen=True)
class CriterionReport:
    germ: TransformedGerm
    basic: BasicGerm
    lower_bounds: tuple
    projection_norms: tuple
    moduli: tuple
    contraction_constants: tuple
    n_samples: int


def conjugate_to_basic_germ(data: CriterionData, box_b: float = 0.25, box_x: float = 0.25,
                            n_samples: int = 64, rank_tol: float = DEFAULT_RANK_TOL,
                            contraction_cap: float = 0.5) -> CriterionReport:
    """Conjugate a section with invertible fiber-partial linearization to
    contraction normal form.

    Per base sample b the operator L(b) (fiber rows of the x-jacobian at
    (b, 0)) must be invertible; a singular sample aborts with the offending b
    as witness.  The normalized map H(b, x) = x - L(b)^(-1) P (F(b,x) - F(0))
    is then certified against the product bound   lower(L)^(-1) · |P| · modulus
    on every level, and against the hard cap `contraction_cap` at level 0 —
    failing either is a criterion failure, not a numerical mishap.
    """
    model = data.model
    n, D, N, M = model.n, model.D, data.N, model.M
    z = np.zeros(D)
    F00 = data.eval_F(np.zeros(n), z)

    b_pts = _box_points(n, model.k, n_samples, box_b, lambda v: float(np.linalg.norm(v)))
    x_pts = _box_points(D, 0, n_samples, box_x, lambda v: float(np.linalg.norm(v)), phase=3)
    metrics = [np.diag(model.tail_weights(m)) for m in range(M + 1)]

    x2_pts = _box_points(D, 0, n_samples, box_x, lambda v: float(np.linalg.norm(v)), phase=11)
    # Moduli are measured over both pair banks plus pair midpoints: the
    # contraction ratios below compare points drawn from both banks, and the
    # mean-value bound sees the segment between them.
    modulus_pts = (
        x_pts + x2_pts
        + [(np.asarray(x) + np.asarray(xp)) / 2.0 for x, xp in zip(x_pts, x2_pts)]
    )
    c_levels = [math.inf] * (M + 1)
    eps_levels = [0.0] * (M + 1)
    for b in b_pts:
        _, _, Jw0 = data.jac_F(b, z)
        Lb = Jw0[N:, :]
        s = np.linalg.svd(Lb, compute_uv=False)
        if s.size == 0 or s[-1] <= rank_tol:
            raise CriterionFailed(
                "fiber-partial linearization is singular at a base sample", witness=tuple(b)
            )
        for m in range(M + 1):
            Gm = metrics[m]
            sm = np.linalg.svd(Gm @ Lb @ np.linalg.inv(Gm), compute_uv=False)
            c_levels[m] = min(c_levels[m], float(sm[-1]))
        for x in modulus_pts:
            _, _, Jwx = data.jac_F(b, x)
            diff = (Jw0 - Jwx)[N:, :]
            for m in range(M + 1):
                Gm = metrics[m]
                eps_levels[m] = max(eps_levels[m], _weighted_opnorm(diff, Gm, Gm))
    d_levels = [1.0] * (M + 1)  # coordinate projection: weighted norm one on every level

    def H(b, x):
        _, _, Jw0 = data.jac_F(b, z)
        Lb = Jw0[N:, :]
        return x - np.linalg.solve(Lb, (data.eval_F(b, x) - F00)[N:])

    eps_hat = [0.0] * (M + 1)
    for b, x, xp in zip(b_pts, x_pts, x2_pts):
        hx, hxp = H(b, np.asarray(x)), H(b, np.asarray(xp))
        for m in range(M + 1):
            Gm = metrics[m]
            gap = float(np.linalg.norm(Gm @ (np.asarray(x) - np.asarray(xp))))
            if gap < 1e-12:
                continue
            eps_hat[m] = max(eps_hat[m], float(np.linalg.norm(Gm @ (hx - hxp))) / gap)

    # Both sides are sampled suprema, so the comparison carries a small
    # relative slack; a genuine violation of the product bound dwarfs it.
    for m in range(M + 1):
        bound = eps_levels[m] * d_levels[m] / c_levels[m]
        if eps_hat[m] > bound * 1.05 + 1e-9:
            raise InternalContradiction(
                f"measured contraction {eps_hat[m]:.6g} at level {m} exceeds the "
                f"criterion bound {bound:.6g}"
            )
    if eps_hat[0] > contraction_cap:
        raise CriterionFailed(
            f"normalized map is not a contraction on the sampled box "
            f"(level-0 constant {eps_hat[0]:.4g} > {contraction_cap}); "
            "the uniformity hypothesis fails at this scale"
        )

    box_r = min(box_b, box_x)
    germ = TransformedGerm(
        base_dim=n, corner_count=model.k, fiber_dim=D, max_level=M,
        eval_B=H, fiber_metrics=metrics,
        ledger=tuple(
            LedgerEntry(level=m, epsilon=eps_hat[m], radius=box_r, sampled=True, n_samples=n_samples)
            for m in range(M + 1)
        ),
        provenance="conjugation criterion",
    )

    def fin_eval(b, x):
        return (data.eval_F(b, x) - F00)[:N]

    def fin_jac(b, x):
        _, Ja, Jw = data.jac_F(b, x)
        return Ja[:N, :], Jw[:N, :]

    basic = BasicGerm(germ, fin_eval, fin_jac, N=N)
    return CriterionReport(
        germ=germ,
        basic=basic,
        lower_bounds=tuple(c_levels),
        projection_norms=tuple(d_levels),
        moduli=tuple(eps_levels),
        contraction_constants=tuple(eps_hat),
        n_samples=n_samples,
    )


# --- compactness probe ---------------------------------------------------------------


@dataclass(frozen=True)
class ProbeLevel:
    level: int
    tau: float
    tau_prime: float
    contraction: float
    offset_bound: float
    perturbation_bound: float
    solutions_checked: int
    max_solution_norm: float
    within: bool


@dataclass(frozen=True)
class ProbeReport:
    levels: tuple
    embedding_constants: tuple
    all_within: bool

    @property
    def tau(self) -> tuple:
        return tuple(l.tau for l in self.levels)

    @property
    def tau_prime(self) -> tuple:
        return tuple(l.tau_prime for l in self.levels)


def _sampled_contraction(germ, level: int, radius: float, n_samples: int) -> float:
    a_pts = _box_points(germ.base_dim, germ.corner_count, n_samples, radius,
                        germ.base_norm, phase=13 * level)
    w_pts = _box_points(germ.fiber_dim, 0, n_samples, radius,
                        lambda v: germ.fiber_norm(v, level), phase=13 * level + 1)
    v_pts = _box_points(germ.fiber_dim, 0, n_samples, radius,
                        lambda v: germ.fiber_norm(v, level), phase=13 * level + 2)
    worst = 0.0
    for a, w, wp in zip(a_pts, w_pts, v_pts):
        gap = germ.fiber_norm(np.asarray(w) - np.asarray(wp), level)
        if gap < 1e-12:
            continue
        worst = max(worst, germ.fiber_norm(germ.eval_B(a, w) - germ.eval_B(a, wp), level) / gap)
    return worst


def local_compactness_probe(bg: BasicGerm, m: int, s_components=None,
                            n_samples: int = 48, shrink_cap: int = 20,
                            contraction_cap: int = 24, solve_tol: float = 1e-12) -> ProbeReport:
    """Construct the nested radii ladder and verify solution norms level by level.

    Per level i the probe finds tau'_i with a sampled quarter-contraction of B
    on {|a|_0 <= tau'_i, |w|_i <= tau'_i} (halving from the previous level's
    cap, which shrinks through the embedding constant), then tau_i < tau'_i
    small enough that both the offset |B(a, 0)|_i and the perturbation's fiber
    part stay under tau'_i / 4 on the sampled box.  Each search is budgeted;
    exhausting either budget means the data cannot certify that level —
    LedgerIncomplete(i), the honest finite-truncation translation of "the
    perturbation does not gain a level here".

    Verification then solves the combined fiber equation w = B(a,w) - (P s)(a,w)
    on a parameter grid inside O(i) and checks |w|_i <= tau'_i.
    """
    g = bg.germ
    if m > g.max_level:
        raise LedgerIncomplete(m)
    comps = list(s_components) if s_components is not None else None
    if comps is not None:
        for c in comps:
            ex.validate_expr(c, g.base_dim, g.fiber_dim)
        if len(comps) != bg.N + g.fiber_dim:
            raise ValidationError(f"perturbation needs {bg.N + g.fiber_dim} components")

    def Ps(a, w):
        if comps is None:
            return np.zeros(g.fiber_dim)
        return ex.eval_vector(comps, a, w)[bg.N:]

    e0 = g.ledger_entry(0)
    if e0 is None:
        raise LedgerIncomplete(0)

    # |w|_{i-1} <= c_i |w|_i  on the fiber
    embeds = []
    for i in range(1, m + 1):
        Gp, Gi = g.fiber_metric(i - 1), g.fiber_metric(i)
        embeds.append(_weighted_opnorm(np.eye(g.fiber_dim), Gp, Gi))

    levels = []
    all_ok = True
    tau_prev = None
    for i in range(m + 1):
        if g.ledger_entry(i) is None:
            raise LedgerIncomplete(i)
        cap = e0.radius if i == 0 else min(tau_prev, tau_prev / embeds[i - 1]) * (1 - 1e-12)
        tau_p = cap
        eps_i = math.inf
        for _ in range(contraction_cap):
            eps_i = _sampled_contraction(g, i, tau_p, n_samples)
            if eps_i <= 0.25:
                break
            tau_p *= 0.5
        else:
            raise LedgerIncomplete(i)

        tau_i = tau_p / 2
        off = pert = math.inf
        for _ in range(shrink_cap):
            a_pts = _box_points(g.base_dim, g.corner_count, n_samples, tau_i,
                                g.base_norm, phase=17 * i)
            w0_pts = _box_points(g.fiber_dim, 0, n_samples, tau_i,
                                 lambda v: g.fiber_norm(v, 0), phase=17 * i + 1)
            off = max((g.fiber_norm(g.eval_B(a, np.zeros(g.fiber_dim)), i) for a in a_pts),
                      default=0.0)
            pert = max((g.fiber_norm(Ps(a, w), i) for a, w in zip(a_pts, w0_pts)), default=0.0)
            if off <= tau_p / 4 and pert <= tau_p / 4:
                break
            tau_i *= 0.5
        else:
            raise LedgerIncomplete(i)

        grid = _box_points(g.base_dim, g.corner_count, n_samples // 2, tau_i * 0.98,
                           g.base_norm, phase=17 * i + 5)
        worst_norm = 0.0
        checked = 0
        for a in grid:
            w = np.zeros(g.fiber_dim)
            for _ in range(400):
                w_next = g.eval_B(a, w) - Ps(a, w)
                if g.fiber_norm(w_next - w, 0) <= solve_tol:
                    w = w_next
                    break
                w = w_next
            else:
                raise NoConvergence(f"combined fiber equation did not settle at level {i}")
            checked += 1
            worst_norm = max(worst_norm, g.fiber_norm(w, i))
        within = worst_norm <= tau_p * (1 + 1e-9)
        all_ok = all_ok and within
        levels.append(ProbeLevel(
            level=i, tau=tau_i, tau_prime=tau_p, contraction=eps_i,
            offset_bound=off, perturbation_bound=pert,
            solutions_checked=checked, max_solution_norm=worst_norm, within=within,
        ))
        tau_prev = tau_i
    return ProbeReport(levels=tuple(levels), embedding_constants=tuple(embeds), all_within=all_ok)


# --- solution graphs -----------------------------------------------------------------


@dataclass(frozen=True)
class GraphRow:
    point: tuple
    sigma: tuple
    residual: float
    degeneracy_kernel: int
    degeneracy_ambient: int
    surjective: bool


@dataclass(frozen=True)
class SolutionGraphReport:
    rows: tuple
    sigma0_norm: float
    dsigma0_norm: float
    index: int
    kernel_dim: int
    degeneracy_preserved: bool

    def csv_rows(self) -> list:
        out = []
        for r in self.rows:
            row = {f"v{i}": x for i, x in enumerate(r.point)}
            row.update({f"sigma{i}": x for i, x in enumerate(r.sigma)})
            row["residual"] = r.residual
            row["d_kernel"] = r.degeneracy_kernel
            row["d_ambient"] = r.degeneracy_ambient
            out.append(row)
        return out


def kernel_grid(kernel_basis, corner_axes: int, radius: float, per_axis: int) -> list:
    """Ambient grid points over the span of `kernel_basis`.

    The first `corner_axes` basis directions are one-sided (coefficients in
    [0, radius]); the rest sweep [-radius, radius].  Includes the origin.
    """
    K = np.asarray(kernel_basis, dtype=float)
    dim_k = K.shape[0]
    axes = []
    for i in range(dim_k):
        if i < corner_axes:
            axes.append(np.linspace(0.0, radius, per_axis))
        else:
            axes.append(np.linspace(-radius, radius, per_axis if per_axis % 2 else per_axis + 1))
    coords = np.meshgrid(*axes, indexing="ij") if axes else []
    if not axes:
        return [np.zeros(K.shape[1])]
    flat = np.stack([c.ravel() for c in coords], axis=1)
    return [K.T @ c for c in flat]


def solution_graph(bg: BasicGerm, kernel_basis, complement_basis, certificate,
                   grid_points=None, grid_radius: float = 0.4, grid_per_axis: int = 5,
                   tol: float = 1e-11, rank_tol: float = DEFAULT_RANK_TOL,
                   max_iters: int = 300, s_components=None,
                   degeneracy_tol: float = 1e-7) -> SolutionGraphReport:
    """Parameterize the zero set over the kernel: solve f(v + sigma(v)) = 0.

    Requires a surjective linearization at 0 and a certified good-position
    certificate for the kernel (the certificate's verdict is trusted, its
    provenance is not re-derived here).  Each grid solve preconditions by the
    inverse of Df(0) restricted to the complement and iterates the resulting
    contraction; at every solution the linearization must stay surjective.
    Corner bookkeeping: the rows record the vanishing-corner count of v inside
    the kernel quadrant and of v + sigma(v) in the ambient quadrant.
    """
    if getattr(certificate, "verdict", None) != "certified":
        raise PreconditionFailed("good-position certificate is not in the certified state")
    g = bg.germ
    n_amb = g.base_dim + g.fiber_dim
    comps = list(s_components) if s_components is not None else None
    if comps is not None:
        for c in comps:
            ex.validate_expr(c, g.base_dim, g.fiber_dim)

    def f_full(x):
        v = bg.eval_full(x)
        if comps is not None:
            v = v + ex.eval_vector(comps, x[: g.base_dim], x[g.base_dim:])
        return v

    def jac_full(x):
        J = bg.jac_full(x)
        if comps is not None:
            _, Ja, Jw = ex.jacobians(comps, x[: g.base_dim], x[g.base_dim:])
            J = J + np.hstack([Ja, Jw])
        return J

    J0 = jac_full(np.zeros(n_amb))
    s = np.linalg.svd(J0, compute_uv=False)
    if _rank_with_band(s, rank_tol) < J0.shape[0]:
        raise NotTransversal("linearization at 0 is not surjective")

    K = np.asarray(kernel_basis, dtype=float)  # rows are basis vectors
    if K.ndim == 1:
        K = K.reshape(1, -1)
    if K.shape[1] != n_amb:
        raise ValidationError(f"kernel basis lives in dimension {K.shape[1]}, ambient is {n_amb}")
    if float(np.abs(J0 @ K.T).max(initial=0.0)) > 1e-7:
        raise PreconditionFailed("kernel basis is not annihilated by the linearization")
    expected_kernel = n_amb - J0.shape[0]
    if K.shape[0] != expected_kernel:
        raise PreconditionFailed(
            f"kernel basis has {K.shape[0]} vectors; the linearization kernel has dimension {expected_kernel}"
        )
    Y = np.asarray(complement_basis, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(1, -1)
    LY = J0 @ Y.T
    if LY.shape[0] != LY.shape[1]:
        raise PreconditionFailed("complement dimension must match the codomain")
    sy = np.linalg.svd(LY, compute_uv=False)
    if sy[-1] <= rank_tol:
        raise PreconditionFailed("linearization is singular on the chosen complement")

    if grid_points is None:
        corner_axes = sum(
            1 for row in K if np.any(np.abs(np.asarray(row)[: g.corner_count]) > 1e-12)
        )
        grid_points = kernel_grid(K, corner_axes, grid_radius, grid_per_axis)

    def solve_at(v, solve_tol=tol):
        u = np.zeros(Y.shape[0])
        for _ in range(max_iters):
            r = f_full(v + Y.T @ u)
            if float(np.linalg.norm(r)) <= solve_tol:
                return u
            u = u - np.linalg.solve(LY, r)
        raise NoConvergence("graph solve did not converge on a grid point")

    rows = []
    preserved = True
    for v in grid_points:
        v = np.asarray(v, dtype=float)
        u = solve_at(v)
        x = v + Y.T @ u
        res = float(np.linalg.norm(f_full(x)))
        sx = np.linalg.svd(jac_full(x), compute_uv=False)
        surj = bool(sx[-1] > rank_tol)
        if not surj:
            raise NotTransversal("surjectivity lost at a solved grid point")
        kc = g.corner_count
        d_kernel = int(np.sum(np.abs(v[:kc]) <= degeneracy_tol)) if kc else 0
        d_amb = int(np.sum(np.abs(x[:kc]) <= degeneracy_tol)) if kc else 0
        preserved = preserved and (d_kernel == d_amb)
        rows.append(GraphRow(
            point=tuple(float(t) for t in v),
            sigma=tuple(float(t) for t in (Y.T @ u)),
            residual=res,
            degeneracy_kernel=d_kernel,
            degeneracy_ambient=d_amb,
            surjective=surj,
        ))

    # Second-order differences with a tight solve tolerance: the step must be
    # large enough that solver noise (~solve_tol / h) stays under the bound we
    # report, and the formulas must cancel quadratics so that a graph with
    # genuinely vanishing derivative measures as zero.
    fd_tol = min(tol, 1e-13)
    u0 = solve_at(np.zeros(n_amb), fd_tol)
    sigma0 = float(np.linalg.norm(Y.T @ u0))
    h = 1e-3
    cols = []
    for krow in K:
        one_sided = np.any(np.abs(np.asarray(krow)[: g.corner_count]) > 1e-12)
        if one_sided:
            s1 = Y.T @ solve_at(h * krow, fd_tol)
            s2 = Y.T @ solve_at(2 * h * krow, fd_tol)
            cols.append((-3 * (Y.T @ u0) + 4 * s1 - s2) / (2 * h))
        else:
            s1 = Y.T @ solve_at(h * krow, fd_tol)
            s2 = Y.T @ solve_at(-h * krow, fd_tol)
            cols.append((s1 - s2) / (2 * h))
    dsigma0 = float(np.linalg.norm(np.stack(cols, axis=1), 2)) if cols else 0.0
    return SolutionGraphReport(
        rows=tuple(rows),
        sigma0_norm=sigma0,
        dsigma0_norm=dsigma0,
        index=bg.index,
        kernel_dim=K.shape[0],
        degeneracy_preserved=preserved,
    )


# --- auxiliary norms and transversality ----------------------------------------------


@dataclass(frozen=True)
class AuxiliaryNorm:
    """Fiber-wise bound used to measure admissible perturbations.

    `value` is the level-`level` norm in the reference trivialization (finite
    block euclidean, tail block weighted).  `compare` records how the norm
    transports through a change of trivialization: constants (c, C) with
    c·N(w) <= N(T w) <= C·N(w), from the weighted singular values of T.
    """

    model: ScaleModel
    level: int = 1

    def __post_init__(self):
        if not 1 <= self.level <= self.model.M:
            raise ValidationError(f"auxiliary level {self.level} outside [1, {self.model.M}]")

    def value(self, h) -> float:
        h = np.asarray(h, dtype=float)
        if h.shape != (self.model.dim,):
            raise ValidationError(f"value has shape {h.shape}, expected ({self.model.dim},)")
        G = self.model.level_metric(self.level)
        return float(np.linalg.norm(G * h))

    def compare(self, T) -> tuple:
        T = np.asarray(T, dtype=float)
        G = np.diag(self.model.level_metric(self.level))
        scaled = G @ T @ np.linalg.inv(G)
        sv = np.linalg.svd(scaled, compute_uv=False)
        c, C = float(sv[-1]), float(sv[0])
        if not (math.isfinite(c) and math.isfinite(C)):
            raise InternalContradiction("trivialization comparison constants are not finite")
        return c, C


@dataclass(frozen=True)
class TransversalReport:
    sections: tuple
    section_count: int
    aux_norms: tuple
    aux_total: float
    surjective_everywhere: bool
    solution_dim: int
    index_extended: int
    budget: int


def transversal_perturbation(bg: BasicGerm, zeros, aux: AuxiliaryNorm, budget: int,
                             rank_tol: float = DEFAULT_RANK_TOL,
                             s_components=None) -> TransversalReport:
    """Greedy finite-rank repair of surjectivity at sampled zeros.

    Each added section is a constant codomain vector — its coefficient
    becomes a new parameter, so the extended linearization gains that column
    for free.  Vectors are drawn from the cokernel of the current extended
    linearization at the worst offender and the loop repeats until every
    sampled zero is covered or the budget runs out.  Afterwards the sections
    are rescaled so their auxiliary norms sum to 1: any coefficient box
    |lambda|_inf <= 1 then keeps the perturbation inside the unit ball.
    """
    g = bg.germ
    comps = list(s_components) if s_components is not None else None

    def jac_at(x):
        J = bg.jac_full(np.asarray(x, dtype=float))
        if comps is not None:
            _, Ja, Jw = ex.jacobians(comps, x[: g.base_dim], x[g.base_dim:])
            J = J + np.hstack([Ja, Jw])
        return J

    def f_at(x):
        v = bg.eval_full(np.asarray(x, dtype=float))
        if comps is not None:
            v = v + ex.eval_vector(comps, x[: g.base_dim], x[g.base_dim:])
        return v

    zeros = [np.asarray(z, dtype=float) for z in zeros]
    for z in zeros:
        if float(np.linalg.norm(f_at(z))) > 1e-6:
            raise ValidationError("a supplied point is not a zero of the section")

    codim = bg.N + g.fiber_dim
    sections: list[np.ndarray] = []
    while True:
        worst = None
        for z in zeros:
            M = jac_at(z)
            if sections:
                M = np.hstack([np.stack(sections, axis=1), M])
            U, sv, _ = np.linalg.svd(M)
            r = int(np.sum(sv > rank_tol))
            if r < codim:
                worst = U[:, r]
                break
        if worst is None:
            break
        if len(sections) + 1 > budget:
            raise BudgetExceeded(
                f"{len(sections)} sections added and surjectivity still fails; budget is {budget}"
            )
        sections.append(worst)

    count = len(sections)
    if count:
        raw = [aux.value(u) for u in sections]
        sections = [u / (r * count) for u, r in zip(sections, raw)]
    norms = tuple(aux.value(u) for u in sections)
    total = float(sum(norms))
    if total > 1 + 1e-12:
        raise InternalContradiction("auxiliary norm budget exceeded after rescaling")

    dims = set()
    for z in zeros:
        M = jac_at(z)
        if sections:
            M = np.hstack([np.stack(sections, axis=1), M])
        sv = np.linalg.svd(M, compute_uv=False)
        r = int(np.sum(sv > rank_tol))
        if r < codim:
            raise InternalContradiction("greedy loop finished with a non-surjective point")
        dims.add(M.shape[1] - r)
    if len(dims) != 1:
        raise InternalContradiction(f"solution dimension is not constant across zeros: {dims}")
    sol_dim = dims.pop()
    index_ext = (g.base_dim + count) - bg.N
    if sol_dim != index_ext:
        raise InternalContradiction(
            f"kernel dimension {sol_dim} differs from the extended index {index_ext}"
        )
    return TransversalReport(
        sections=tuple(tuple(float(t) for t in u) for u in sections),
        section_count=count,
        aux_norms=norms,
        aux_total=total,
        surjective_everywhere=True,
        solution_dim=sol_dim,
        index_extended=index_ext,
        budget=budget,
    )


# --- problem files -------------------------------------------------------------------


def germ_from_json(obj: dict) -> ContractionGerm:
    """Build and certify a germ from a problem-file fragment."""
    try:
        model = model_from_json(obj["model"])
        spec = obj["germ"]
    except KeyError as e:
        raise ValidationError(f"problem file missing field {e}") from e
    ledger_cfg = obj.get("ledger", {})
    return make_contraction_germ(
        model, spec,
        radius=float(ledger_cfg.get("radius", 1.0)),
        levels=ledger_cfg.get("levels"),
        n_samples=int(ledger_cfg.get("n_samples", 96)),
    )


def solve_from_json(obj: dict) -> dict:
    """Run a solve described by a problem file; returns a JSON-ready report."""
    germ = germ_from_json(obj)
    solve = obj.get("solve", {})
    try:
        a = [float(t) for t in solve["a"]]
    except KeyError as e:
        raise ValidationError("problem file needs solve.a") from e
    target = int(solve.get("levels", 0))
    tol = float(solve.get("tol", DEFAULT_TOL))
    sol = solve_contraction_germ(germ, a, target_level=target, tol=tol,
                                 max_iters=int(solve.get("max_iters", DEFAULT_MAX_ITERS)))
    return {
        "a": list(sol.a),
        "delta": list(sol.delta),
        "residual": sol.residual,
        "iterations": sol.iterations,
        "levels": {
            str(m): {"norm": sol.level_norms[m], "residual": sol.level_residuals[m]}
            for m in sorted(sol.level_norms)
        },
        "certified_level": sol.certified_level,
        "ledger": [
            {"level": e.level, "epsilon": e.epsilon, "radius": e.radius,
             "sampled": e.sampled, "n_samples": e.n_samples}
            for e in germ.ledger
        ],
    }
