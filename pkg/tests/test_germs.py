"""Germ solver: fixed points, tangents, fillers, normalization, probes, graphs."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfred import expr as ex
from scfred.cones import GoodPositionCertificate
from scfred.errors import (
    BudgetExceeded,
    ContractionBreach,
    CriterionFailed,
    FillerDegenerate,
    LedgerIncomplete,
    NoConvergence,
    NotInQuadrant,
    NotTransversal,
    OutOfRadius,
    PreconditionFailed,
    RankAmbiguous,
    ValidationError,
)
from scfred.germs import (
    AuxiliaryNorm,
    ContractionGerm,
    CriterionData,
    FillerProblem,
    LedgerEntry,
    basic_germ_split,
    certify_contraction,
    conjugate_to_basic_germ,
    fill_section,
    filler_blocks,
    germ_from_json,
    halton,
    local_compactness_probe,
    make_basic_germ,
    make_contraction_germ,
    normalize_perturbed_germ,
    solution_graph,
    solve_contraction_germ,
    solve_from_json,
    tangent_solution,
    transversal_perturbation,
)
from scfred.retracts import RetractionModel, StrongBundleRetraction, numeric_jacobian
from scfred.scales import make_model, model_to_json

LADDER = (0.0, 0.5, 1.0)


def thin_model(n=1, k=0):
    """One tail coordinate, two levels above ground."""
    return make_model(n, k, 1, 2, LADDER)


def linear_germ(**kw):
    return make_contraction_germ(thin_model(**kw), {"kind": "builder", "name": "linear_mix"})


def quadratic_germ(radius=0.5):
    """B(a, w) = 0.3 a + 0.2 w^2; fixed point solvable by the quadratic formula."""
    comps = (
        ex.add(ex.scale(0.3, ex.param(0)), ex.scale(0.2, ex.mul(ex.var(0), ex.var(0)))),
    )
    return make_contraction_germ(thin_model(), comps, radius=radius)


def quadratic_root(a):
    # w = 0.3 a + 0.2 w^2  ==>  the branch through 0
    return (1.0 - math.sqrt(1.0 - 0.24 * a)) / 0.4


class TestHalton:
    def test_deterministic_and_in_range(self):
        p1 = halton(3, 50)
        p2 = halton(3, 50)
        assert np.array_equal(p1, p2)
        assert p1.shape == (50, 3)
        assert np.all((p1 >= 0) & (p1 < 1))

    def test_rows_are_distinct(self):
        p = halton(2, 64)
        assert len({tuple(r) for r in p}) == 64

    def test_high_dimension_is_supported(self):
        p = halton(45, 4)
        assert p.shape == (4, 45)
        assert np.all((p >= 0) & (p < 1))


class TestMakeGerm:
    def test_unknown_builder(self):
        with pytest.raises(ValidationError):
            make_contraction_germ(thin_model(), {"kind": "builder", "name": "levitate"})

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            make_contraction_germ(thin_model(), {"kind": "oracle"})

    def test_component_count_must_match_fiber(self):
        with pytest.raises(ValidationError):
            ContractionGerm(model=thin_model(), components=(ex.var(0), ex.var(0)))

    def test_must_vanish_at_origin(self):
        with pytest.raises(ValidationError, match="vanish"):
            ContractionGerm(model=thin_model(), components=(ex.const(0.1),))

    def test_ledger_covers_all_levels(self):
        g = linear_germ()
        assert [e.level for e in g.ledger] == [0, 1, 2]
        assert all(e.sampled and e.n_samples > 0 for e in g.ledger)
        # the measured constant of 0.5 a + 0.25 w is the slope itself
        assert all(abs(e.epsilon - 0.25) <= 1e-9 for e in g.ledger)

    def test_ledger_respects_level_selection(self):
        g = make_contraction_germ(
            thin_model(), {"kind": "builder", "name": "linear_mix"}, levels=[0]
        )
        assert g.ledger_entry(0) is not None
        assert g.ledger_entry(1) is None


class TestSolve:
    def test_linear_fixture_exact(self):
        g = linear_germ()
        sol = solve_contraction_germ(g, [0.3], target_level=2, tol=1e-15)
        assert abs(sol.delta[0] - 0.2) <= 1e-12
        assert sol.residual <= 1e-12
        assert sol.certified_level == 2
        # one tail coordinate: the level-m norm is e^{w_m} |delta|
        for m, wt in enumerate(LADDER):
            assert math.isclose(sol.level_norms[m], math.exp(wt) * 0.2, rel_tol=1e-9)

    def test_scaling_is_linear_in_the_parameter(self):
        g = linear_germ()
        for a in (0.1, -0.4, 0.9):
            sol = solve_contraction_germ(g, [a], tol=1e-15)
            assert abs(sol.delta[0] - (2.0 / 3.0) * a) <= 1e-12

    def test_zero_parameter_gives_zero(self):
        sol = solve_contraction_germ(linear_germ(), [0.0])
        assert sol.delta == (0.0,)
        assert sol.iterations == 1

    def test_diagonal_decay_closed_form(self):
        m = make_model(1, 1, 4, 3, (0.0, 0.4, 0.8, 1.2))
        g = make_contraction_germ(m, {"kind": "builder", "name": "diagonal_decay"})
        sol = solve_contraction_germ(g, [0.3], target_level=3, tol=1e-15)
        expected = [0.3 * (4.0 / 3.0) * math.exp(-1.2 * j) for j in range(1, 5)]
        assert max(abs(d - e) for d, e in zip(sol.delta, expected)) <= 1e-12
        # norms stay finite and grow with the level, topping out at 0.8
        norms = [sol.level_norms[i] for i in range(4)]
        assert all(b > a for a, b in zip(norms, norms[1:]))
        assert math.isclose(norms[3], 0.8, rel_tol=1e-9)

    def test_solution_leaving_a_high_level_ball_is_refused(self):
        m = make_model(1, 1, 4, 3, (0.0, 0.4, 0.8, 1.2))
        g = make_contraction_germ(m, {"kind": "builder", "name": "diagonal_decay"})
        # |delta|_3 = (4/3) * 0.5 * 2 = 4/3 > 1, while levels 0..2 are fine
        solve_contraction_germ(g, [0.5], target_level=2)
        with pytest.raises(OutOfRadius):
            solve_contraction_germ(g, [0.5], target_level=3)

    def test_quadratic_fixture_against_the_formula(self):
        g = quadratic_germ()
        for a in (0.1, 0.25, 0.4):
            sol = solve_contraction_germ(g, [a], target_level=2, tol=1e-15)
            assert abs(sol.delta[0] - quadratic_root(a)) <= 1e-12

    def test_uniqueness_from_different_starts(self):
        g = quadratic_germ()
        tol = 1e-13
        s1 = solve_contraction_germ(g, [0.3], tol=tol)
        s2 = solve_contraction_germ(g, [0.3], tol=tol, x0=[0.2])
        s3 = solve_contraction_germ(g, [0.3], tol=tol, x0=[-0.3])
        assert abs(s1.delta[0] - s2.delta[0]) <= 10 * tol
        assert abs(s1.delta[0] - s3.delta[0]) <= 10 * tol

    def test_restart_from_the_solution_is_instant(self):
        g = quadratic_germ()
        s1 = solve_contraction_germ(g, [0.3], tol=1e-13)
        s2 = solve_contraction_germ(g, [0.3], tol=1e-13, x0=s1.delta)
        assert s2.iterations == 1


class TestTangent:
    def test_linear_fixture(self):
        u = tangent_solution(linear_germ(), [0.3], [1.0])
        assert abs(u[0] - 2.0 / 3.0) <= 1e-12

    def test_quadratic_fixture_matches_the_derivative_formula(self):
        g = quadratic_germ()
        a = 0.3
        d = quadratic_root(a)
        # implicit differentiation: delta' = 0.3 / (1 - 0.4 delta)
        expected = 0.3 / (1.0 - 0.4 * d)
        u = tangent_solution(g, [a], [1.0])
        assert abs(u[0] - expected) <= 1e-10

    def test_matches_finite_differences(self):
        g = quadratic_germ()

        def solved(a_vec):
            return np.asarray(
                solve_contraction_germ(g, a_vec, tol=1e-14).delta
            )

        fd = numeric_jacobian(solved, np.array([0.3]), 1e-5)
        u = tangent_solution(g, [0.3], [1.0])
        assert abs(fd[0, 0] - u[0]) <= 1e-6

    def test_zero_direction_gives_zero(self):
        u = tangent_solution(quadratic_germ(), [0.3], [0.0])
        assert np.linalg.norm(u) <= 1e-12


class TestSolveErrors:
    def test_corner_violation(self):
        with pytest.raises(NotInQuadrant):
            solve_contraction_germ(linear_germ(k=1), [-0.1])

    def test_level_out_of_range(self):
        with pytest.raises(ValidationError):
            solve_contraction_germ(linear_germ(), [0.1], target_level=7)

    def test_missing_ledger(self):
        bare = ContractionGerm(
            model=thin_model(),
            components=(ex.scale(0.25, ex.var(0)),),
        )
        with pytest.raises(LedgerIncomplete):
            solve_contraction_germ(bare, [0.0])

    def test_missing_higher_level_entry(self):
        g = make_contraction_germ(
            thin_model(), {"kind": "builder", "name": "linear_mix"}, levels=[0]
        )
        solve_contraction_germ(g, [0.1])
        with pytest.raises(LedgerIncomplete, match="level 1"):
            solve_contraction_germ(g, [0.1], target_level=1)

    def test_weak_contraction_is_refused(self):
        g = make_contraction_germ(thin_model(), (ex.scale(0.8, ex.var(0)),))
        with pytest.raises(PreconditionFailed):
            solve_contraction_germ(g, [0.0])

    def test_parameter_outside_radius(self):
        g = make_contraction_germ(
            thin_model(), {"kind": "builder", "name": "linear_mix"}, radius=0.2
        )
        with pytest.raises(OutOfRadius):
            solve_contraction_germ(g, [0.5])

    def test_iteration_budget(self):
        with pytest.raises(NoConvergence):
            solve_contraction_germ(linear_germ(), [0.3], tol=1e-15, max_iters=2)

    def test_breach_of_a_doctored_certificate(self):
        # A ledger is an input claim; the solver cross-checks it en route.
        doctored = ContractionGerm(
            model=thin_model(),
            components=(ex.add(ex.scale(0.5, ex.param(0)), ex.scale(0.25, ex.var(0))),),
            ledger=(LedgerEntry(level=0, epsilon=0.05, radius=1.0),),
        )
        with pytest.raises(ContractionBreach) as err:
            solve_contraction_germ(doctored, [0.5])
        assert err.value.witness is not None

    def test_tangent_rejects_doctored_certificate(self):
        doctored = ContractionGerm(
            model=thin_model(),
            components=(ex.add(ex.scale(0.5, ex.param(0)), ex.scale(0.25, ex.var(0))),),
            ledger=(LedgerEntry(level=0, epsilon=0.05, radius=1.0),),
        )
        with pytest.raises(ContractionBreach):
            tangent_solution(doctored, [0.0], [1.0], solution=_fake_zero_solution())


def _fake_zero_solution():
    from scfred.germs import GermSolution

    return GermSolution(
        a=(0.0,), delta=(0.0,), residual=0.0, iterations=1,
        level_norms={0: 0.0}, level_residuals={0: 0.0}, certified_level=0, tol=1e-13,
    )


class TestBasicGerm:
    def test_quadratic_is_in_the_basic_class(self):
        bg = make_basic_germ(quadratic_germ(), [ex.param(0)])
        assert bg.index == 0
        assert np.allclose(bg.eval_f([0.0], [0.0]), 0.0)

    def test_linear_w_term_is_rejected(self):
        # the solvable class is wider than the basic class: a germ with a
        # first-order w term solves fine but cannot be wrapped as basic
        g = linear_germ()
        solve_contraction_germ(g, [0.3])
        with pytest.raises(ValidationError, match="basic class"):
            make_basic_germ(g, [ex.param(0)])

    def test_finite_part_must_vanish(self):
        with pytest.raises(ValidationError):
            make_basic_germ(quadratic_germ(), [ex.add(ex.param(0), ex.const(1.0))])

    def test_jacobian_blocks_match_finite_differences(self):
        bg = make_basic_germ(
            quadratic_germ(),
            [ex.add(ex.param(0), ex.mul(ex.param(0), ex.var(0)))],
        )
        x = np.array([0.2, 0.1])
        J = bg.jac_full(x)
        J_fd = numeric_jacobian(bg.eval_full, x, 1e-5)
        assert np.abs(J - J_fd).max() <= 1e-6

    def test_split_dimensions_and_index(self):
        m = make_model(2, 0, 1, 2, LADDER)
        g = make_contraction_germ(m, (ex.scale(0.2, ex.mul(ex.var(0), ex.var(0))),))
        bg = make_basic_germ(g, [ex.param(0)])
        assert bg.index == 1
        sp = basic_germ_split(bg)
        assert sp.index == bg.index
        assert sp.dim_kernel == 1
        assert sp.dim_cokernel == 0


class TestFillerBlocks:
    def test_random_blocks_keep_index_and_surjectivity(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            rows = rng.integers(1, 4)
            cols = rng.integers(1, 5)
            q = rng.integers(1, 4)
            A = rng.standard_normal((rows, cols))
            B = rng.standard_normal((rows, q))
            C = rng.standard_normal((q, q)) + 3.0 * np.eye(q)
            rep = filler_blocks(A, B, C)
            assert rep.index_restricted == rep.index_filled
            assert rep.surjective_restricted == rep.surjective_filled
            assert rep.coupling_min_singular > 1e-9

    def test_index_two_example(self):
        rep = filler_blocks(np.array([[1.0, 0.0, 0.0]]), np.array([[0.7]]), np.array([[2.0]]))
        assert rep.index_restricted == 2
        assert rep.index_filled == 2
        assert rep.surjective_filled

    def test_singular_coupling(self):
        with pytest.raises(FillerDegenerate):
            filler_blocks(np.eye(2), np.zeros((2, 1)), np.zeros((1, 1)))

    def test_non_square_coupling(self):
        with pytest.raises(FillerDegenerate):
            filler_blocks(np.eye(2), np.zeros((2, 2)), np.zeros((2, 1)))


class TestFillSection:
    def make_problem(self, filled=None, section=None):
        base = make_model(2, 0, 1, 1, (0.0, 0.5))  # ambient base is 3-dim; box the first two
        rm = RetractionModel(
            base, "coordinate_projection", {"keep": [0]},
            lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 1.0),
        )
        fiber = make_model(2, 0, 1, 1, (0.0, 0.5))
        proj = np.zeros((3, 3))
        proj[0, 0] = 1.0
        sbr = StrongBundleRetraction(rm, fiber, "constant", {"entries": proj.tolist()})
        sec = section or (ex.param(0), ex.param(1), ex.param(2))
        fil = filled or (ex.param(0), ex.param(1), ex.param(2))
        return FillerProblem(bundle=sbr, section=sec, filled=fil)

    def test_identity_style_filler(self):
        rep = fill_section(self.make_problem())
        assert rep.index_restricted == rep.index_filled == 0
        assert rep.surjective_restricted and rep.surjective_filled
        assert rep.coupling_min_singular > 0.5
        assert rep.defects["section_agreement"] <= 1e-10
        assert rep.defects["lower_left_block"] <= 1e-6

    def test_unanchored_filler_is_rejected(self):
        fp = self.make_problem(
            filled=(ex.add(ex.param(0), ex.const(0.1)), ex.param(1), ex.param(2))
        )
        with pytest.raises(ValidationError, match="anchored"):
            fill_section(fp)

    def test_disagreement_on_the_retract_is_rejected(self):
        fp = self.make_problem(
            section=(ex.scale(2.0, ex.param(0)), ex.param(1), ex.param(2))
        )
        with pytest.raises(ValidationError, match="disagrees"):
            fill_section(fp)

    def test_kernel_mismatch_is_degenerate(self):
        base = make_model(2, 0, 1, 1, (0.0, 0.5))
        rm = RetractionModel(
            base, "coordinate_projection", {"keep": [0]},
            lo=(-1.0,) * 3, hi=(1.0,) * 3,
        )
        fiber = make_model(2, 0, 1, 1, (0.0, 0.5))
        sbr = StrongBundleRetraction(rm, fiber, "zero")
        fp = FillerProblem(
            bundle=sbr,
            section=(ex.param(0), ex.param(1), ex.param(2)),
            filled=(ex.param(0), ex.param(1), ex.param(2)),
        )
        with pytest.raises(FillerDegenerate):
            fill_section(fp)


class TestNormalize:
    def base_germ(self):
        comps = (
            ex.add(ex.scale(0.3, ex.param(0)), ex.scale(0.2, ex.mul(ex.var(0), ex.var(0)))),
        )
        g = make_contraction_germ(thin_model(), comps, radius=0.5)
        return make_basic_germ(g, [ex.param(0)])

    def test_zero_perturbation_is_the_identity_transform(self):
        bg = self.base_germ()
        rep = normalize_perturbed_germ(bg, [ex.const(0.0)] * 2)
        assert rep.identity
        assert rep.kernel_dim == 0
        assert rep.index_before == rep.index_after == 0
        assert rep.base_dim_after == 1
        assert rep.germ.max_level == 1  # one level consumed
        assert rep.germ.level_offset == 1
        # its level-0 norm is the parent's level-1 norm
        assert math.isclose(rep.germ.fiber_norm([1.0], 0), math.exp(0.5), rel_tol=1e-12)

    def test_invertible_fiber_perturbation_preserves_solutions(self):
        bg = self.base_germ()
        rep = normalize_perturbed_germ(bg, [ex.const(0.0), ex.scale(-2.0, ex.var(0))])
        assert rep.kernel_dim == 0
        assert rep.index_before == rep.index_after
        sol = solve_contraction_germ(rep.germ, [0.2], tol=1e-14)
        w = rep.fiber_transform["X_basis"] @ np.asarray(sol.delta)
        # the original perturbed fiber equation: w - B(a,w) + s_w(w) = 0
        assert abs(0.2 * w[0] ** 2 + w[0] + 0.3 * 0.2) <= 1e-9

    def test_margins_stay_small_for_smoothing_perturbations(self):
        bg = self.base_germ()
        rep = normalize_perturbed_germ(bg, [ex.const(0.0), ex.scale(0.1, ex.var(0))])
        assert rep.kernel_dim == 0
        assert all(m <= 0.1 for m in rep.epsilon_margins.values())

    def test_eigenvalue_minus_one_promotes_a_parameter(self):
        bg = self.base_germ()
        rep = normalize_perturbed_germ(bg, [ex.const(0.0), ex.neg(ex.var(0))])
        assert rep.kernel_dim == 1
        assert rep.base_dim_after == rep.base_dim_before + 1
        assert rep.finite_codim_after == rep.finite_codim_before + 1
        assert rep.index_before == rep.index_after
        assert rep.germ.fiber_dim == 0

    def test_ambiguous_kernel_is_refused(self):
        bg = self.base_germ()
        s = [ex.const(0.0), ex.scale(-1.0 + 3e-9, ex.var(0))]
        with pytest.raises(RankAmbiguous):
            normalize_perturbed_germ(bg, s)

    def test_level_losing_perturbation_is_rejected(self):
        m = make_model(1, 0, 2, 2, (0.0, 1.2, 2.4))
        comps = tuple(
            ex.scale(0.1, ex.mul(ex.param(0), ex.param(0))) for _ in range(2)
        )
        bg = make_basic_germ(make_contraction_germ(m, comps, radius=0.5), [ex.param(0)])
        s = [ex.const(0.0), ex.var(0), ex.var(1)]  # identity on the fiber: no gain
        with pytest.raises(ValidationError, match="level-gaining"):
            normalize_perturbed_germ(bg, s)

    def test_nonvanishing_perturbation_is_rejected(self):
        with pytest.raises(ValidationError, match="vanish"):
            normalize_perturbed_germ(self.base_germ(), [ex.const(0.2), ex.const(0.0)])

    def test_wrong_component_count(self):
        with pytest.raises(ValidationError):
            normalize_perturbed_germ(self.base_germ(), [ex.const(0.0)])


class TestCriterion:
    def quadratic_data(self):
        return CriterionData(
            model=thin_model(), N=1,
            components=(
                ex.param(0),
                ex.add(ex.var(0), ex.mul(ex.param(0), ex.var(0), ex.var(0))),
            ),
        )

    def test_quadratic_family_certifies(self):
        rep = conjugate_to_basic_germ(self.quadratic_data(), box_b=0.2, box_x=0.2)
        assert all(e <= 0.1 for e in rep.contraction_constants)
        assert all(c > 0.9 for c in rep.lower_bounds)
        assert rep.basic.index == 0
        sol = solve_contraction_germ(rep.germ, [0.1], target_level=2, tol=1e-14)
        assert abs(sol.delta[0]) <= 1e-12  # x + b x^2 = 0 near 0 only at x = 0

    def test_linear_section_normalizes_to_zero(self):
        data = CriterionData(
            model=thin_model(), N=1,
            components=(ex.param(0), ex.scale(2.0, ex.var(0))),
        )
        rep = conjugate_to_basic_germ(data, box_b=0.2, box_x=0.2)
        assert rep.contraction_constants == (0.0, 0.0, 0.0)
        assert rep.moduli == (0.0, 0.0, 0.0)

    def test_nonuniform_modulus_fails_the_criterion(self):
        data = CriterionData(
            model=thin_model(), N=1,
            components=(
                ex.param(0),
                ex.add(
                    ex.var(0),
                    ex.mul(ex.const(10.0), ex.var(0), ex.var(0),
                           ex.exp(ex.scale(5.0, ex.param(0)))),
                ),
            ),
        )
        with pytest.raises(CriterionFailed, match="not a contraction"):
            conjugate_to_basic_germ(data, box_b=0.35, box_x=0.35)

    def test_singular_partial_linearization_names_a_witness(self):
        data = CriterionData(
            model=thin_model(), N=1,
            components=(ex.param(0), ex.mul(ex.var(0), ex.var(0))),
        )
        with pytest.raises(CriterionFailed) as err:
            conjugate_to_basic_germ(data, box_b=0.2, box_x=0.2)
        assert err.value.witness is not None

    def test_component_count_is_checked(self):
        with pytest.raises(ValidationError):
            CriterionData(model=thin_model(), N=2, components=(ex.param(0), ex.var(0)))


class TestCompactnessProbe:
    def test_pure_offset_germ_has_closed_form_radii(self):
        # B = 0.5 a: no w-dependence at all, so tau' never shrinks below its
        # cap and tau is pinned by the offset bound |B(a,0)| <= tau'/4.
        g = make_contraction_germ(thin_model(), (ex.scale(0.5, ex.param(0)),))
        bg = make_basic_germ(g, [ex.param(0)])
        rep = local_compactness_probe(bg, 1, n_samples=32)
        assert rep.all_within
        assert math.isclose(rep.tau_prime[0], 1.0, rel_tol=1e-9)
        assert math.isclose(rep.tau[0], 0.5, rel_tol=1e-9)
        assert math.isclose(rep.tau[1], 0.125, rel_tol=1e-9)

    def test_zero_germ_ladder_halves(self):
        m = make_model(1, 0, 2, 3, (0.0, 0.5, 1.0, 1.5))
        g = make_contraction_germ(m, {"kind": "builder", "name": "zero"})
        bg = make_basic_germ(g, [ex.param(0)])
        rep = local_compactness_probe(bg, 3, n_samples=24)
        assert rep.all_within
        assert rep.tau == pytest.approx((0.5, 0.25, 0.125, 0.0625), rel=1e-9)
        assert all(
            math.isclose(c, math.exp(-0.5), rel_tol=1e-12) for c in rep.embedding_constants
        )

    def test_perturbed_solutions_stay_inside(self):
        m = make_model(1, 0, 2, 3, (0.0, 0.5, 1.0, 1.5))
        g = make_contraction_germ(m, {"kind": "builder", "name": "zero"})
        bg = make_basic_germ(g, [ex.param(0)])
        s = [ex.const(0.0), ex.scale(0.1, ex.param(0)), ex.scale(0.05, ex.param(0))]
        rep = local_compactness_probe(bg, 2, s_components=s, n_samples=24)
        assert rep.all_within
        assert all(l.solutions_checked > 0 for l in rep.levels)

    def test_tail_rough_data_certifies_one_level_only(self):
        # perturbation hitting the deepest tail coordinate, normalized to
        # level-1 size one: its level-2 size is e^{0.5*40}, far beyond what a
        # bounded shrink search can absorb.
        m = make_model(1, 0, 40, 3, (0.0, 0.5, 1.0, 1.5))
        g = make_contraction_germ(m, {"kind": "builder", "name": "zero"}, n_samples=16)
        bg = make_basic_germ(g, [ex.param(0)])
        amp = math.exp(-0.5 * 40)
        rough = [ex.const(0.0)] * 40 + [ex.scale(amp, ex.param(0))]
        assert local_compactness_probe(bg, 1, s_components=rough, n_samples=12).all_within
        with pytest.raises(LedgerIncomplete):
            local_compactness_probe(bg, 2, s_components=rough, n_samples=12)

    def test_level_above_the_model_is_refused(self):
        bg = make_basic_germ(quadratic_germ(), [ex.param(0)])
        with pytest.raises(LedgerIncomplete):
            local_compactness_probe(bg, 5)


def certified_cert(ambient=3):
    """A minimal good-position certificate for coordinate subspaces."""
    from fractions import Fraction

    basis = tuple(
        tuple(Fraction(1) if j == i else Fraction(0) for j in range(ambient))
        for i in range(1, ambient)
    )
    return GoodPositionCertificate(Y_basis=basis, epsilon=Fraction(1, 2), verdict="certified")


class TestSolutionGraph:
    def parabola(self):
        # f(a1, a2, w) = (a2 - a1^2, w): kernel is the a1 axis, graph is a2 = a1^2
        m = make_model(2, 1, 1, 2, LADDER)
        g = make_contraction_germ(m, {"kind": "builder", "name": "zero"})
        return make_basic_germ(g, [ex.sub(ex.param(1), ex.mul(ex.param(0), ex.param(0)))])

    def setup_bases(self):
        K = np.array([[1.0, 0.0, 0.0]])
        Y = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        return K, Y

    def test_parabola_graph(self):
        K, Y = self.setup_bases()
        rep = solution_graph(self.parabola(), K, Y, certified_cert(), grid_radius=0.4)
        assert rep.sigma0_norm <= 1e-11
        assert rep.dsigma0_norm <= 1e-6
        assert rep.kernel_dim == 1 and rep.index == 1
        assert rep.degeneracy_preserved
        for row in rep.rows:
            t = row.point[0]
            assert abs(row.sigma[1] - t * t) <= 1e-10
            assert row.residual <= 1e-10
            assert row.surjective

    def test_corner_degeneracy_tracks_both_sides(self):
        K, Y = self.setup_bases()
        rep = solution_graph(self.parabola(), K, Y, certified_cert(), grid_radius=0.4)
        kinds = {(r.degeneracy_kernel, r.degeneracy_ambient) for r in rep.rows}
        assert (1, 1) in kinds  # the corner point itself
        assert (0, 0) in kinds  # interior of the half-line

    def test_linear_map_has_flat_graph(self):
        m = make_model(2, 0, 1, 2, LADDER)
        g = make_contraction_germ(m, {"kind": "builder", "name": "zero"})
        bg = make_basic_germ(g, [ex.param(1)])
        K = np.array([[1.0, 0.0, 0.0]])
        Y = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        rep = solution_graph(bg, K, Y, certified_cert(), grid_radius=0.5)
        assert all(np.linalg.norm(r.sigma) <= 1e-11 for r in rep.rows)
        assert rep.dsigma0_norm <= 1e-8

    def test_uncertified_position_is_refused(self):
        from fractions import Fraction

        K, Y = self.setup_bases()
        bad = GoodPositionCertificate(Y_basis=(), epsilon=Fraction(1), verdict="refuted")
        with pytest.raises(PreconditionFailed):
            solution_graph(self.parabola(), K, Y, bad)

    def test_nonsurjective_linearization_is_refused(self):
        m = make_model(1, 0, 1, 2, LADDER)
        g = make_contraction_germ(m, {"kind": "builder", "name": "zero"})
        bg = make_basic_germ(g, [ex.mul(ex.param(0), ex.param(0))])
        with pytest.raises(NotTransversal):
            solution_graph(
                bg, np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), certified_cert(2)
            )

    def test_kernel_basis_must_span_the_kernel(self):
        _, Y = self.setup_bases()
        with pytest.raises((PreconditionFailed, ValidationError)):
            solution_graph(self.parabola(), np.zeros((0, 3)), Y, certified_cert())

    def test_csv_rows_carry_the_grid(self):
        K, Y = self.setup_bases()
        rep = solution_graph(self.parabola(), K, Y, certified_cert(), grid_radius=0.4)
        rows = rep.csv_rows()
        assert len(rows) == len(rep.rows)
        assert {"v0", "sigma1", "residual", "d_kernel", "d_ambient"} <= set(rows[0])


class TestTransversal:
    def aux(self):
        return AuxiliaryNorm(make_model(1, 0, 1, 1, (0.0, 0.5)), level=1)

    def flat_germ(self, n=1):
        m = make_model(n, 0, 1, 1, (0.0, 0.5))
        return make_contraction_germ(m, {"kind": "builder", "name": "zero"})

    def test_already_transversal_needs_no_sections(self):
        bg = make_basic_germ(self.flat_germ(), [ex.param(0)])
        rep = transversal_perturbation(bg, [np.zeros(2)], self.aux(), budget=3)
        assert rep.section_count == 0
        assert rep.surjective_everywhere
        assert rep.solution_dim == rep.index_extended == 0

    def test_one_dimensional_defect_needs_one_section(self):
        bg = make_basic_germ(self.flat_germ(), [ex.mul(ex.param(0), ex.param(0))])
        rep = transversal_perturbation(bg, [np.zeros(2)], self.aux(), budget=3)
        assert rep.section_count == 1
        assert math.isclose(rep.aux_total, 1.0, rel_tol=1e-12)
        assert rep.solution_dim == rep.index_extended == 1

    def test_extended_solution_dim_matches_extended_index(self):
        bg = make_basic_germ(
            self.flat_germ(n=2),
            [ex.add(ex.mul(ex.param(0), ex.param(0)), ex.mul(ex.param(1), ex.param(1)))],
        )
        rep = transversal_perturbation(bg, [np.zeros(3)], self.aux(), budget=3)
        assert rep.section_count == 1
        assert rep.solution_dim == rep.index_extended == 2

    def test_budget_zero_raises(self):
        bg = make_basic_germ(self.flat_germ(), [ex.mul(ex.param(0), ex.param(0))])
        with pytest.raises(BudgetExceeded):
            transversal_perturbation(bg, [np.zeros(2)], self.aux(), budget=0)

    def test_non_zero_points_are_rejected(self):
        bg = make_basic_germ(self.flat_germ(), [ex.param(0)])
        with pytest.raises(ValidationError):
            transversal_perturbation(bg, [np.array([0.5, 0.0])], self.aux(), budget=1)


class TestAuxiliaryNorm:
    def test_value_matches_the_level_metric(self):
        m = make_model(1, 0, 2, 2, LADDER)
        aux = AuxiliaryNorm(m, level=1)
        h = np.array([1.0, 1.0, 1.0])
        expected = math.sqrt(1.0 + math.exp(2 * 0.5) + math.exp(2 * 1.0))
        assert math.isclose(aux.value(h), expected, rel_tol=1e-12)

    def test_compare_returns_ordered_finite_constants(self):
        m = make_model(1, 0, 2, 2, LADDER)
        aux = AuxiliaryNorm(m, level=1)
        c, C = aux.compare(np.diag([1.0, 2.0, 0.5]))
        assert 0 < c <= C < math.inf

    def test_ground_level_is_not_an_auxiliary_level(self):
        with pytest.raises(ValidationError):
            AuxiliaryNorm(thin_model(), level=0)

    def test_dimension_is_checked(self):
        aux = AuxiliaryNorm(thin_model(), level=1)
        with pytest.raises(ValidationError):
            aux.value(np.ones(5))


class TestProblemFiles:
    def problem(self):
        return {
            "model": model_to_json(thin_model()),
            "germ": {"kind": "builder", "name": "linear_mix"},
            "solve": {"a": [0.3], "levels": 2, "tol": 1e-14},
        }

    def test_solve_report_fields(self):
        rep = solve_from_json(self.problem())
        assert abs(rep["delta"][0] - 0.2) <= 1e-12
        assert rep["certified_level"] == 2
        assert set(rep["levels"]) == {"0", "1", "2"}
        assert all(e["sampled"] for e in rep["ledger"])

    def test_reports_are_deterministic(self):
        r1 = json.dumps(solve_from_json(self.problem()), sort_keys=True)
        r2 = json.dumps(solve_from_json(json.loads(json.dumps(self.problem()))), sort_keys=True)
        assert r1 == r2

    def test_expression_germs_from_json(self):
        obj = {
            "model": model_to_json(thin_model()),
            "germ": {
                "kind": "expr",
                "components": [
                    {"op": "scale", "c": 0.4, "arg": {"op": "a", "i": 0}},
                ],
            },
        }
        g = germ_from_json(obj)
        sol = solve_contraction_germ(g, [0.5])
        assert abs(sol.delta[0] - 0.2) <= 1e-12

    def test_missing_fields(self):
        with pytest.raises(ValidationError):
            germ_from_json({"germ": {"kind": "builder", "name": "zero"}})
        with pytest.raises(ValidationError):
            solve_from_json({"model": model_to_json(thin_model()),
                             "germ": {"kind": "builder", "name": "zero"}})


class TestGermProperties:
    @given(
        sa=st.floats(min_value=-0.5, max_value=0.5),
        sw=st.floats(min_value=-0.45, max_value=0.45),
        a=st.floats(min_value=-0.9, max_value=0.9),
    )
    @settings(max_examples=40, deadline=None)
    def test_linear_germs_solve_in_closed_form(self, sa, sw, a):
        g = make_contraction_germ(
            thin_model(),
            {"kind": "builder", "name": "linear_mix", "params": {"slope_a": sa, "slope_w": sw}},
            n_samples=16,
        )
        sol = solve_contraction_germ(g, [a], tol=1e-14)
        assert abs(sol.delta[0] - sa * a / (1.0 - sw)) <= 1e-9

    @given(
        c2=st.floats(min_value=-0.3, max_value=0.3),
        c1=st.floats(min_value=-0.5, max_value=0.5),
    )
    @settings(max_examples=25, deadline=None)
    def test_basic_class_has_vanishing_fiber_linearization(self, c2, c1):
        comps = (
            ex.add(ex.scale(c1, ex.param(0)), ex.scale(c2, ex.mul(ex.var(0), ex.var(0)))),
        )
        g = make_contraction_germ(thin_model(), comps, radius=0.5, n_samples=16)
        bg = make_basic_germ(g, [ex.param(0)])
        J = numeric_jacobian(lambda w: bg.germ.eval_B(np.zeros(1), w), np.zeros(1), 1e-6)
        assert abs(J[0, 0]) <= 1e-6

    @given(a=st.floats(min_value=0.05, max_value=0.45))
    @settings(max_examples=20, deadline=None)
    def test_level_norms_increase_with_the_level(self, a):
        g = quadratic_germ()
        sol = solve_contraction_germ(g, [a], target_level=2, tol=1e-14)
        norms = [sol.level_norms[m] for m in range(3)]
        assert norms[0] <= norms[1] <= norms[2]

    def test_measured_constants_are_stable_across_runs(self):
        g = quadratic_germ()
        again = certify_contraction(g, range(3), 0.5, n_samples=96)
        for e_old, e_new in zip(g.ledger, again):
            assert e_old.epsilon == e_new.epsilon
