"""Scale-model validation, level norms, regularity levels, and quadrant tests."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfred.errors import LevelOutOfRange, ModelMismatch, ValidationError
from scfred.scales import (
    ScaleVector,
    inclusion_tail_bound,
    level_norm,
    make_model,
    model_from_json,
    model_to_json,
    quadrant_membership,
    regularity_level,
    vector_from_json,
)


def std_model():
    return make_model(2, 1, 8, 3, [0.0, 0.5, 1.0, 1.5])


class TestModelValidation:
    def test_accepts_the_reference_shape(self):
        m = std_model()
        assert m.dim == 10
        assert m.M == 3

    def test_rejects_non_increasing_weights(self):
        with pytest.raises(ValidationError):
            make_model(2, 1, 8, 1, [0.0, 0.0])

    def test_rejects_corner_count_above_finite_dim(self):
        with pytest.raises(ValidationError):
            make_model(2, 3, 8, 1, [0.0, 0.5])

    def test_rejects_weight_count_mismatch(self):
        with pytest.raises(ValidationError):
            make_model(2, 1, 8, 3, [0.0, 0.5, 1.0])

    def test_rejects_negative_sizes(self):
        with pytest.raises(ValidationError):
            make_model(-1, 0, 8, 1, [0.0, 1.0])
        with pytest.raises(ValidationError):
            make_model(2, 1, 0, 1, [0.0, 1.0])


class TestLevelNorm:
    def test_matches_hand_computation_at_each_level(self):
        m = std_model()
        x = ScaleVector.from_arrays(m, [3.0, 4.0], [1.0] + [0.0] * 7)
        # tail weight of entry j=1 at level l is exp(delta_l * 1)
        for lvl in range(4):
            expected = math.sqrt(3.0**2 + 4.0**2 + math.exp(m.weights[lvl]) ** 2)
            got = level_norm(x, lvl)
            assert got == pytest.approx(expected, rel=1e-14), f"level {lvl}"

    def test_level_out_of_range(self):
        m = std_model()
        x = ScaleVector.from_arrays(m, [0.0, 0.0], [0.0] * 8)
        with pytest.raises(LevelOutOfRange):
            level_norm(x, 4)
        with pytest.raises(LevelOutOfRange):
            level_norm(x, -1)

    @given(
        finite=st.lists(st.floats(-10, 10), min_size=2, max_size=2),
        tail=st.lists(st.floats(-2, 2), min_size=8, max_size=8),
    )
    def test_norms_nondecreasing_in_level(self, finite, tail):
        m = std_model()
        x = ScaleVector.from_arrays(m, finite, tail)
        norms = [level_norm(x, lvl) for lvl in range(4)]
        for lo, hi in zip(norms, norms[1:]):
            assert hi >= lo * (1 - 1e-12), f"monotonicity broken: {norms}"


class TestRegularityLevel:
    def test_zero_vector_has_top_regularity(self):
        m = std_model()
        x = ScaleVector.from_arrays(m, [0.0, 0.0], [0.0] * 8)
        assert regularity_level(x, bound=1.0) == 3

    def test_fast_decay_reaches_top_level(self):
        m = std_model()
        tail = [math.exp(-m.weights[-1] * j) for j in range(1, 9)]
        x = ScaleVector.from_arrays(m, [0.0, 0.0], tail)
        # every tail term contributes exactly 1 at the top level
        top = level_norm(x, 3)
        assert regularity_level(x, bound=top * (1 + 1e-12)) == 3

    def test_flat_tail_with_small_bound_is_level_zero(self):
        m = std_model()
        x = ScaleVector.from_arrays(m, [0.0, 0.0], [1.0] * 8)
        assert regularity_level(x, bound=1.0) == 0


class TestQuadrantMembership:
    def test_nonnegative_corner_is_inside_with_zero_margin(self):
        m = make_model(2, 2, 8, 3, [0.0, 0.5, 1.0, 1.5])
        x = ScaleVector.from_arrays(m, [0.0, 0.0], [0.3] * 8)
        inside, margin = quadrant_membership(x, m)
        assert inside and margin == 0.0

    def test_negative_corner_is_outside(self):
        m = make_model(2, 2, 8, 3, [0.0, 0.5, 1.0, 1.5])
        x = ScaleVector.from_arrays(m, [1.0, -1.0], [0.0] * 8)
        inside, _ = quadrant_membership(x, m)
        assert not inside

    def test_corner_free_model_is_all_of_space(self):
        m = make_model(2, 0, 8, 3, [0.0, 0.5, 1.0, 1.5])
        x = ScaleVector.from_arrays(m, [-5.0, -7.0], [0.0] * 8)
        inside, margin = quadrant_membership(x, m)
        assert inside and margin == math.inf

    def test_model_mismatch_is_rejected(self):
        m1 = std_model()
        m2 = make_model(3, 1, 8, 3, [0.0, 0.5, 1.0, 1.5])
        x = ScaleVector.from_arrays(m1, [1.0, 1.0], [0.0] * 8)
        with pytest.raises(ModelMismatch):
            quadrant_membership(x, m2)


class TestInclusionCompactness:
    def test_tail_bound_dominates_sampled_operator_norm(self):
        """Restricting to tail coordinates >= J, the inclusion (m+1)->m contracts."""
        m = std_model()
        rng = np.random.default_rng(7)
        for lvl in range(3):
            gap = m.weights[lvl + 1] - m.weights[lvl]
            for J in (1, 3, 5, 8):
                bound = inclusion_tail_bound(m, lvl, J)
                assert bound == pytest.approx(math.exp(-gap * J), rel=1e-14)
                for _ in range(20):
                    tail = np.zeros(8)
                    tail[J - 1 :] = rng.normal(size=8 - (J - 1))
                    x = ScaleVector.from_arrays(m, [0.0, 0.0], tail)
                    hi = level_norm(x, lvl + 1)
                    lo = level_norm(x, lvl)
                    if hi > 0:
                        assert lo <= bound * hi * (1 + 1e-12)

    def test_bound_is_tight_on_the_first_allowed_coordinate(self):
        m = std_model()
        J = 4
        tail = np.zeros(8)
        tail[J - 1] = 1.0  # coordinate j = J
        x = ScaleVector.from_arrays(m, [0.0, 0.0], tail)
        ratio = level_norm(x, 1) / level_norm(x, 2)
        assert ratio == pytest.approx(inclusion_tail_bound(m, 1, J), rel=1e-12)


class TestDeterminismAndJson:
    def test_norms_are_bit_identical_across_runs(self):
        m = std_model()
        rng = np.random.default_rng(123)
        xs = [
            ScaleVector.from_arrays(m, rng.normal(size=2), rng.normal(size=8))
            for _ in range(10)
        ]
        first = [level_norm(x, lvl) for x in xs for lvl in range(4)]
        second = [level_norm(x, lvl) for x in xs for lvl in range(4)]
        assert first == second  # exact equality, not approx

    def test_model_json_roundtrip(self):
        m = std_model()
        blob = json.dumps(model_to_json(m))
        m2 = model_from_json(json.loads(blob))
        assert m2 == m

    def test_vector_json_roundtrip(self):
        m = std_model()
        x = ScaleVector.from_arrays(m, [1.5, -2.25], [0.125] * 8)
        blob = model_to_json(m)
        x2 = vector_from_json(
            m, {"finite": list(map(float, x.finite)), "tail": list(map(float, x.tail))}
        )
        assert np.array_equal(x2.as_array(), x.as_array())
        assert json.dumps(blob)  # serializable
