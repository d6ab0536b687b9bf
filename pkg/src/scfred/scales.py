"""Finite truncations of scale Banach spaces.

A model is E = R^n ⊕ W_D where the tail factor W_D keeps the first D
coefficients of a weighted sequence space.  Level m weights tail coordinate j
by e^(delta_m * j), with 0 = delta_0 < delta_1 < ... < delta_M.  The corner
set C = [0,∞)^k ⊕ R^(n−k) ⊕ W_D constrains the first k finite coordinates.

Smoothness of a point has no finite-truncation meaning; `regularity_level`
with a user bound is the operational proxy (and only a proxy — the density
of the smooth points in each level is vacuous here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LevelOutOfRange, ModelMismatch, ValidationError

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class ScaleModel:
    """Shape of a truncated scale space.

    n: finite-part dimension; k: corner count (first k finite coordinates);
    D: retained tail dimension; M: retained levels; weights: exponents
    (delta_0, ..., delta_M), strictly increasing from 0.
    """

    n: int
    k: int
    D: int
    M: int
    weights: tuple[float, ...]

    @property
    def dim(self) -> int:
        return self.n + self.D

    def tail_weights(self, m: int) -> np.ndarray:
        """Per-coordinate weights e^(delta_m * j), j = 1..D."""
        d = self.weights[m]
        return np.exp(d * np.arange(1, self.D + 1))

    def level_metric(self, m: int) -> np.ndarray:
        """Diagonal of the level-m rescaling on R^n ⊕ W_D."""
        return np.concatenate([np.ones(self.n), self.tail_weights(m)])


def make_model(n, k, D, M, weights) -> ScaleModel:
    """Validate and build a ScaleModel. Deterministic for equal inputs."""
    weights = tuple(float(w) for w in weights)
    if n < 0 or D < 1 or M < 1:
        raise ValidationError(f"need n >= 0, D >= 1, M >= 1; got n={n}, D={D}, M={M}")
    if not 0 <= k <= n:
        raise ValidationError(f"corner count k={k} must satisfy 0 <= k <= n={n}")
    if len(weights) != M + 1:
        raise ValidationError(f"need M+1={M + 1} weights, got {len(weights)}")
    if weights[0] != 0.0:
        raise ValidationError(f"delta_0 must be 0, got {weights[0]}")
    for a, b in zip(weights, weights[1:]):
        if not b > a:
            raise ValidationError(f"weights must increase strictly; {b} !> {a}")
    return ScaleModel(int(n), int(k), int(D), int(M), weights)


@dataclass(frozen=True)
class ScaleVector:
    model: ScaleModel
    finite: tuple[float, ...]
    tail: tuple[float, ...]
    declared_level: int = 0

    def __post_init__(self):
        if len(self.finite) != self.model.n or len(self.tail) != self.model.D:
            raise ValidationError(
                f"vector shape ({len(self.finite)}, {len(self.tail)}) does not "
                f"match model ({self.model.n}, {self.model.D})"
            )
        if not 0 <= self.declared_level <= self.model.M:
            raise ValidationError(f"declared_level {self.declared_level} outside [0, {self.model.M}]")

    @classmethod
    def from_arrays(cls, model, finite, tail, level=0):
        return cls(model, tuple(float(x) for x in finite), tuple(float(x) for x in tail), level)

    def as_array(self) -> np.ndarray:
        return np.array(self.finite + self.tail, dtype=float)


def level_norm(x: ScaleVector, m: int) -> float:
    """|x|_m = sqrt(sum finite_i^2 + sum (e^(delta_m j) tail_j)^2)."""
    if not 0 <= m <= x.model.M:
        raise LevelOutOfRange(f"level {m} outside [0, {x.model.M}]")
    w = x.model.tail_weights(m)
    return float(math.hypot(np.linalg.norm(x.finite), np.linalg.norm(w * np.asarray(x.tail))))


def regularity_level(x: ScaleVector, bound: float) -> int:
    """Largest m <= M with |x|_m <= bound (M when all levels pass).

    Norm monotonicity in m makes this a prefix property, but each level is
    evaluated anyway: the cost is trivial and the diagnostics keep every norm.
    """
    if bound <= 0:
        raise ValidationError("bound must be positive")
    best = 0
    for m in range(x.model.M + 1):
        if level_norm(x, m) <= bound:
            best = m
        else:
            break
    return best


@dataclass(frozen=True)
class PartialQuadrant:
    """C = [0,∞)^k ⊕ R^(n−k) ⊕ W_D for the model's corner count k."""

    model: ScaleModel

    def contains(self, x: ScaleVector, tol: float = DEFAULT_TOL) -> bool:
        return quadrant_membership(x, self, tol)[0]


def quadrant_membership(x: ScaleVector, C, tol: float = DEFAULT_TOL):
    """(is_member, margin): membership up to tol, margin = min corner coordinate.

    C may be a PartialQuadrant or its underlying ScaleModel.  With k = 0 the
    margin is +inf (no constraint).
    """
    model = C.model if isinstance(C, PartialQuadrant) else C
    if x.model != model:
        raise ModelMismatch("vector and quadrant use different models")
    k = model.k
    if k == 0:
        return True, math.inf
    margin = min(x.finite[:k])
    return margin >= -tol, float(margin)


def inclusion_tail_bound(model: ScaleModel, m: int, J: int) -> float:
    """Operator norm bound e^(−(delta_{m+1}−delta_m) J) for the inclusion
    level-(m+1) → level-m restricted to tail coordinates j >= J."""
    if not 0 <= m < model.M:
        raise LevelOutOfRange(f"need 0 <= m < M={model.M}")
    gap = model.weights[m + 1] - model.weights[m]
    return float(math.exp(-gap * J))


# --- JSON interface -----------------------------------------------------------


def model_to_json(model: ScaleModel) -> dict:
    return {"n": model.n, "k": model.k, "D": model.D, "M": model.M, "weights": list(model.weights)}


def model_from_json(d: dict) -> ScaleModel:
    try:
        return make_model(d["n"], d["k"], d["D"], d["M"], d["weights"])
    except KeyError as e:
        raise ValidationError(f"model descriptor missing field {e}") from e


def vector_from_json(model: ScaleModel, d: dict) -> ScaleVector:
    try:
        return ScaleVector.from_arrays(model, d["finite"], d["tail"], d.get("level", 0))
    except KeyError as e:
        raise ValidationError(f"vector descriptor missing field {e}") from e
