"""Linear operators between truncated scale spaces.

Two classification regimes matter: level-preserving maps (bounded on each
level) and level-gaining maps (bounded from level m into level m+1 of the
target — the compact-perturbation class).  At truncation every matrix is
bounded everywhere, so the classifier reports the exact weighted operator
norms and certifies the level-gaining property against an explicit bound;
the norms of a genuinely level-preserving map (e.g. the identity on the tail
factor) blow up as the truncation dimension D grows, which is the finite
shadow of the distinction.

Kernel/cokernel splittings are rank-revealing: decisions happen at a singular
value threshold with an explicit ambiguity band (a spectrum value within 10x
of the threshold raises RankAmbiguous instead of guessing).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelMismatch, RankAmbiguous, ValidationError
from .scales import ScaleModel, ScaleVector, level_norm

DEFAULT_RANK_TOL = 1e-9
DEFAULT_SC_PLUS_BOUND = 10.0
AMBIGUITY_FACTOR = 10.0


@dataclass(frozen=True)
class ScOperator:
    source: ScaleModel
    target: ScaleModel
    matrix: np.ndarray
    declared_class: str = "sc0"  # "sc0" | "scPlus"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (self.target.dim, self.source.dim):
            raise ModelMismatch(
                f"matrix shape {m.shape} does not match "
                f"(target.dim, source.dim) = ({self.target.dim}, {self.source.dim})"
            )
        object.__setattr__(self, "matrix", m)
        if self.declared_class not in ("sc0", "scPlus"):
            raise ValidationError(f"unknown operator class {self.declared_class!r}")

    def __add__(self, other: "ScOperator") -> "ScOperator":
        if self.source != other.source or self.target != other.target:
            raise ModelMismatch("operator sum needs matching models")
        return ScOperator(self.source, self.target, self.matrix + other.matrix)


def _is_diagonal(m: np.ndarray) -> bool:
    return m.shape[0] == m.shape[1] and np.count_nonzero(m - np.diag(np.diagonal(m))) == 0


def _weighted_norm(T: ScOperator, m_src: int, m_tgt: int) -> float:
    """Exact operator norm of T from level m_src to level m_tgt.

    = top singular value of W_tgt @ matrix @ W_src^(-1); closed form for
    diagonal matrices (the rescaling stays diagonal).
    """
    ws = T.source.level_metric(m_src)
    wt = T.target.level_metric(m_tgt)
    if _is_diagonal(T.matrix):
        return float(np.max(np.abs(np.diagonal(T.matrix)) * wt / ws)) if T.matrix.size else 0.0
    scaled = (wt[:, None] * T.matrix) / ws[None, :]
    return float(np.linalg.svd(scaled, compute_uv=False)[0]) if scaled.size else 0.0


def classify_operator(T: ScOperator, sc_plus_bound: float = DEFAULT_SC_PLUS_BOUND) -> dict:
    """Report per-level norms and certify the operator class.

    sc0 bounds: |T|_{m→m} for m <= min(M_s, M_t).
    Level-gain bounds kappa_m: |T|_{m→m+1} for m < min(M_s, M_t).
    scPlus is certified iff every kappa_m <= sc_plus_bound.
    """
    if T.source.M != T.target.M:
        raise ModelMismatch("source and target must retain the same number of levels")
    M = T.source.M
    sc0 = [_weighted_norm(T, m, m) for m in range(M + 1)]
    kappa = [_weighted_norm(T, m, m + 1) for m in range(M)]
    certified = all(k <= sc_plus_bound for k in kappa)
    return {
        "declared": T.declared_class,
        "sc0_bounds": sc0,
        "kappa": kappa,
        "sc_plus_bound": sc_plus_bound,
        "is_sc_plus": certified,
        "class": "scPlus" if certified else "sc0",
    }


@dataclass(frozen=True)
class FredholmSplit:
    """Level-0 rank-revealing splitting of an operator.

    Source = span(kernel) ⊕ span(kernel_complement); target = image ⊕
    span(cokernel_reps); the operator maps the complement bijectively onto the
    image (smallest kept singular value recorded as `injectivity_margin`).
    """

    kernel_basis: list[ScaleVector]
    kernel_complement_basis: np.ndarray  # columns
    cokernel_rep_basis: np.ndarray  # columns
    image_basis: np.ndarray  # columns
    index: int
    tol: float
    spectrum: np.ndarray
    injectivity_margin: float
    kernel_level_norms: list[list[float]] = field(default_factory=list)

    @property
    def dim_kernel(self) -> int:
        return len(self.kernel_basis)

    @property
    def dim_cokernel(self) -> int:
        return self.cokernel_rep_basis.shape[1]


def fredholm_split(T: ScOperator, tol: float = DEFAULT_RANK_TOL) -> FredholmSplit:
    """SVD splitting at level 0 with an explicit rank-ambiguity band."""
    A = T.matrix
    U, s, Vt = np.linalg.svd(A)
    ambiguous = [float(x) for x in s if tol < x <= AMBIGUITY_FACTOR * tol]
    if ambiguous:
        raise RankAmbiguous(
            f"singular values {ambiguous} fall inside the ambiguity band "
            f"({tol}, {AMBIGUITY_FACTOR * tol}]",
            spectrum=s,
        )
    r = int(np.sum(s > tol))
    V = Vt.T
    kernel_cols = V[:, r:]
    n = T.source.n
    kern_vecs = [
        ScaleVector.from_arrays(T.source, kernel_cols[:n, i], kernel_cols[n:, i])
        for i in range(kernel_cols.shape[1])
    ]
    level_norms = [
        [level_norm(v, m) for m in range(T.source.M + 1)] for v in kern_vecs
    ]
    return FredholmSplit(
        kernel_basis=kern_vecs,
        kernel_complement_basis=V[:, :r],
        cokernel_rep_basis=U[:, r:],
        image_basis=U[:, :r],
        index=int(kernel_cols.shape[1] - (A.shape[0] - r)),
        tol=tol,
        spectrum=s,
        injectivity_margin=float(s[r - 1]) if r > 0 else float("inf"),
        kernel_level_norms=level_norms,
    )


def perturbation_stability(T: ScOperator, S: ScOperator, tol: float = DEFAULT_RANK_TOL,
                           sc_plus_bound: float = DEFAULT_SC_PLUS_BOUND) -> dict:
    """Split T and T+S independently and compare indices.

    S must certify as level-gaining first; both splittings go through the
    full rank-revealing pipeline (no shortcut through dimension bookkeeping).
    """
    report = classify_operator(S, sc_plus_bound)
    if not report["is_sc_plus"]:
        raise ValidationError(
            f"perturbation is not certified level-gaining (kappa = {report['kappa']})"
        )
    before = fredholm_split(T, tol)
    after = fredholm_split(T + S, tol)
    return {
        "index_before": before.index,
        "index_after": after.index,
        "equal": before.index == after.index,
        "kappa": report["kappa"],
    }


def direct_sum(T: ScOperator, S: ScOperator) -> ScOperator:
    """Block-diagonal sum on the concatenated models (finite parts first).

    The concatenated model puts T's finite part, then S's finite part, then
    both tails; the matrix is reordered to match.
    """
    from .scales import make_model

    def _cat(a: ScaleModel, b: ScaleModel) -> ScaleModel:
        if a.weights != b.weights:
            raise ModelMismatch("direct sum needs equal level weights")
        # tail dimensions add; corner counts add; the block layout below keeps
        # each summand's coordinates contiguous inside (finite, tail) sections
        return make_model(a.n + b.n, a.k + b.k, a.D + b.D, a.M, a.weights)

    src = _cat(T.source, S.source)
    tgt = _cat(T.target, S.target)
    m = np.zeros((tgt.dim, src.dim))

    def _emb(model_a: ScaleModel, model_b: ScaleModel, which: int) -> list[int]:
        # index map from one summand's coordinates into the concatenation
        na, nb = model_a.n, model_b.n
        if which == 0:
            return list(range(na)) + [na + nb + j for j in range(model_a.D)]
        return list(range(na, na + nb)) + [na + nb + model_a.D + j for j in range(model_b.D)]

    rt = _emb(T.target, S.target, 0)
    ct = _emb(T.source, S.source, 0)
    rs = _emb(T.target, S.target, 1)
    cs = _emb(T.source, S.source, 1)
    m[np.ix_(rt, ct)] = T.matrix
    m[np.ix_(rs, cs)] = S.matrix
    return ScOperator(src, tgt, m)


# --- named builders (JSON interface) -----------------------------------------


def build_operator(source: ScaleModel, target: ScaleModel, spec: dict,
                   rng: np.random.Generator | None = None) -> ScOperator:
    """Construct an operator from a JSON-style descriptor.

    kinds: {"kind": "matrix", "entries": [[...]]};
           {"kind": "projection_to_W"} (target must be the tail-only model);
           {"kind": "diag_smoothing", "scale": c} — tail coordinate j scaled
           by c*e^(−delta_M * j), finite part zero;
           {"kind": "random_seeded", "scale": c} — dense Gaussian, needs rng.
    """
    kind = spec.get("kind")
    if kind == "matrix":
        return ScOperator(source, target, np.array(spec["entries"], dtype=float),
                          spec.get("class", "sc0"))
    if kind == "projection_to_W":
        if target.D != source.D or target.n != 0:
            raise ModelMismatch("projection_to_W needs a tail-only target with equal D")
        m = np.zeros((target.dim, source.dim))
        m[:, source.n:] = np.eye(source.D)
        return ScOperator(source, target, m)
    if kind == "diag_smoothing":
        if (source.n, source.D) != (target.n, target.D):
            raise ModelMismatch("diag_smoothing needs matching shapes")
        c = float(spec.get("scale", 1.0))
        dM = source.weights[source.M]
        diag = np.concatenate([np.zeros(source.n),
                               c * np.exp(-dM * np.arange(1, source.D + 1))])
        return ScOperator(source, target, np.diag(diag), "scPlus")
    if kind == "random_seeded":
        if rng is None:
            raise ValidationError("random_seeded builder needs an rng")
        c = float(spec.get("scale", 1.0))
        return ScOperator(source, target, c * rng.standard_normal((target.dim, source.dim)))
    raise ValidationError(f"unknown operator builder {kind!r}")
