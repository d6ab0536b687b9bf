"""Operator classification, Fredholm splitting, and index arithmetic."""

import math

import numpy as np
import pytest

from scfred.errors import ModelMismatch, RankAmbiguous, ValidationError
from scfred.operators import (
    ScOperator,
    build_operator,
    classify_operator,
    direct_sum,
    fredholm_split,
    perturbation_stability,
)
from scfred.scales import make_model


def model(n=2, k=1, D=8, M=3, weights=(0.0, 0.5, 1.0, 1.5)):
    return make_model(n, k, D, M, list(weights))


def tail_projection(src):
    tgt = make_model(0, 0, src.D, src.M, list(src.weights))
    return build_operator(src, tgt, {"kind": "projection_to_W"}), tgt


def weighted_norm_oracle(T, m_src, m_tgt):
    """Independent route: explicit rescale then dense 2-norm."""
    ws = T.source.level_metric(m_src)
    wt = T.target.level_metric(m_tgt)
    return float(np.linalg.norm((T.matrix * wt[:, None]) / ws[None, :], 2))


class TestClassification:
    def test_identity_on_tail_is_bounded_but_not_level_gaining(self):
        m = model()
        T, _ = tail_projection(m)
        rep = classify_operator(T)
        assert rep["class"] == "sc0"
        assert not rep["is_sc_plus"]
        # the level-(m -> m+1) norms grow geometrically with the weight gap
        kappas = rep["kappa"]
        assert all(b > 1.0 for b in kappas)
        # largest rescaled entry sits at the last tail coordinate
        gap = m.weights[1] - m.weights[0]
        assert kappas[0] == pytest.approx(math.exp(gap * m.D), rel=1e-12)

    def test_diagonal_smoothing_gains_a_level(self):
        m = model()
        S = build_operator(m, m, {"kind": "diag_smoothing", "scale": 1.0})
        rep = classify_operator(S)
        assert rep["class"] == "scPlus"
        assert rep["is_sc_plus"]
        assert all(b <= rep["sc_plus_bound"] for b in rep["kappa"])

    def test_zero_operator_gains_a_level(self):
        m = model()
        Z = ScOperator(m, m, np.zeros((m.dim, m.dim)))
        rep = classify_operator(Z)
        assert rep["class"] == "scPlus"
        assert rep["kappa"] == [0.0, 0.0, 0.0]

    def test_bounds_match_dense_svd_oracle(self):
        m = model()
        rng = np.random.default_rng(42)
        T = ScOperator(m, m, rng.normal(size=(m.dim, m.dim)))
        rep = classify_operator(T)
        for lvl in range(4):
            assert rep["sc0_bounds"][lvl] == pytest.approx(
                weighted_norm_oracle(T, lvl, lvl), rel=1e-10
            )
        for lvl in range(3):
            assert rep["kappa"][lvl] == pytest.approx(
                weighted_norm_oracle(T, lvl, lvl + 1), rel=1e-10
            )

    def test_shape_mismatch_raises(self):
        m = model()
        m2 = model(n=3)
        with pytest.raises(ModelMismatch):
            ScOperator(m, m2, np.zeros((m.dim, m.dim)))


class TestFredholmSplit:
    def test_projection_to_tail_kills_the_finite_block(self):
        m = model()
        T, _ = tail_projection(m)
        # source = finite part + tail; the finite part (dim n) is the kernel
        sp = fredholm_split(T)
        assert sp.dim_kernel == m.n
        assert sp.dim_cokernel == 0
        assert sp.index == m.n
        for v in sp.kernel_basis:
            assert np.allclose(T.matrix @ v.as_array(), 0.0, atol=1e-12)

    def test_projection_between_different_models_has_nonzero_index(self):
        src = model(n=2)
        tgt_weights = list(src.weights)
        tgt = make_model(0, 0, src.D, src.M, tgt_weights)
        mat = np.zeros((tgt.dim, src.dim))
        mat[:, src.n :] = np.eye(src.D)
        T = ScOperator(src, tgt, mat)
        sp = fredholm_split(T)
        assert sp.dim_kernel == src.n
        assert sp.dim_cokernel == 0
        assert sp.index == src.n

    def test_invertible_operator_has_trivial_split(self):
        m = model()
        rng = np.random.default_rng(5)
        A = rng.normal(size=(m.dim, m.dim)) + 3.0 * np.eye(m.dim)
        sp = fredholm_split(ScOperator(m, m, A))
        assert sp.index == 0
        assert sp.kernel_basis == []
        assert sp.cokernel_rep_basis.shape[1] == 0
        assert sp.injectivity_margin > 0

    def test_single_zero_singular_value(self):
        m = model()
        d = np.ones(m.dim)
        d[4] = 0.0
        sp = fredholm_split(ScOperator(m, m, np.diag(d)))
        assert (sp.dim_kernel, sp.dim_cokernel, sp.index) == (1, 1, 0)
        v = sp.kernel_basis[0].as_array()
        assert abs(abs(v[4]) - 1.0) < 1e-12

    def test_rank_ambiguity_is_reported_with_spectrum(self):
        m = model()
        d = np.ones(m.dim)
        d[-1] = 5e-9  # inside (tol, 10*tol] at the default tol=1e-9
        with pytest.raises(RankAmbiguous) as ei:
            fredholm_split(ScOperator(m, m, np.diag(d)))
        assert ei.value.spectrum is not None
        assert any(1e-9 < s <= 1e-8 for s in ei.value.spectrum)

    def test_tolerance_doubling_is_stable_away_from_the_window(self):
        m = model()
        rng = np.random.default_rng(99)
        for _ in range(25):
            A = rng.normal(size=(m.dim, m.dim))
            try:
                a = fredholm_split(ScOperator(m, m, A), tol=1e-9)
                b = fredholm_split(ScOperator(m, m, A), tol=2e-9)
            except RankAmbiguous:
                continue
            assert (a.dim_kernel, a.dim_cokernel) == (b.dim_kernel, b.dim_cokernel)


class TestPerturbation:
    def test_zero_perturbation_keeps_the_index(self):
        src = model(n=2)
        tgt = make_model(0, 0, src.D, src.M, list(src.weights))
        mat = np.zeros((tgt.dim, src.dim))
        mat[:, src.n :] = np.eye(src.D)
        T = ScOperator(src, tgt, mat)
        S = ScOperator(src, tgt, np.zeros_like(mat), declared_class="scPlus")
        rep = perturbation_stability(T, S)
        assert rep["equal"] and rep["index_before"] == rep["index_after"] == src.n

    def test_small_smoothing_perturbation_keeps_the_index(self):
        src = model(n=2)
        tgt = make_model(0, 0, src.D, src.M, list(src.weights))
        mat = np.zeros((tgt.dim, src.dim))
        mat[:, src.n :] = np.eye(src.D)
        T = ScOperator(src, tgt, mat)
        # rank-one smoothing bump of norm 0.1
        u = np.exp(-src.weights[-1] * np.arange(1, src.D + 1))
        u = 0.1 * u / np.linalg.norm(u)
        mat_s = np.zeros_like(mat)
        mat_s[:, src.n] = u
        S = ScOperator(src, tgt, mat_s, declared_class="scPlus")
        rep = perturbation_stability(T, S)
        assert rep["equal"]

    def test_non_smoothing_perturbation_is_rejected(self):
        m = model()
        T, _ = tail_projection(m)
        with pytest.raises(ValidationError):
            perturbation_stability(T, T)  # projection is not level-gaining

    def test_hundred_random_smoothing_pairs_keep_the_index(self):
        rng = np.random.default_rng(2024)
        src = model(n=2)
        tgt = make_model(0, 0, src.D, src.M, list(src.weights))
        base = np.zeros((tgt.dim, src.dim))
        base[:, src.n :] = np.eye(src.D)
        smooth_profile = np.exp(-src.weights[-1] * np.arange(1, src.D + 1))
        kept = 0
        for _ in range(100):
            T = ScOperator(src, tgt, base + 0.3 * rng.normal(size=base.shape))
            coeffs = rng.normal(size=(src.dim,))
            S_mat = 0.05 * np.outer(smooth_profile, coeffs)
            S = ScOperator(src, tgt, S_mat, declared_class="scPlus")
            try:
                rep = perturbation_stability(T, S)
            except RankAmbiguous:
                continue
            assert rep["equal"], "index moved under a level-gaining perturbation"
            kept += 1
        assert kept >= 90


class TestDirectSum:
    def test_index_is_additive(self):
        rng = np.random.default_rng(11)
        m1 = model(n=2, k=1, D=4)
        m2 = model(n=3, k=0, D=5)
        for _ in range(20):
            A = rng.normal(size=(m1.dim, m1.dim))
            B = rng.normal(size=(m2.dim, m2.dim))
            # zero out rows/columns to force nontrivial kernels sometimes
            if rng.random() < 0.5:
                A[:, 0] = 0.0
            if rng.random() < 0.5:
                B[1, :] = 0.0
            T = ScOperator(m1, m1, A)
            S = ScOperator(m2, m2, B)
            try:
                st_, ss = fredholm_split(T), fredholm_split(S)
                sd = fredholm_split(direct_sum(T, S))
            except RankAmbiguous:
                continue
            assert sd.index == st_.index + ss.index
            assert sd.dim_kernel == st_.dim_kernel + ss.dim_kernel

    def test_sum_requires_matching_weight_ladders(self):
        m1 = model()
        m2 = model(weights=(0.0, 0.4, 1.0, 1.5))
        T = ScOperator(m1, m1, np.eye(m1.dim))
        S = ScOperator(m2, m2, np.eye(m2.dim))
        with pytest.raises(ModelMismatch):
            direct_sum(T, S)
