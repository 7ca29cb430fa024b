"""Unit tests for the lattice counting and weighted-sum verifiers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import roughwave as rw
from roughwave.counting import (
    BoundVerification,
    BudgetExceededError,
    CaseSpec,
    Pairing,
    enumerate_pairings,
    exact_count,
    phase_value,
    sine_cancellation_sum,
    tensor_unfold_norms,
    verify_bound,
    weighted_sum,
)


def bracket(v):
    v = np.asarray(v, dtype=np.float64)
    return np.sqrt(1.0 + (v * v).sum(axis=-1))


def brute_annulus(N):
    r = 2 * N
    g = np.arange(-r, r + 1)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    r2 = gx * gx + gy * gy
    keep = (r2 >= (N / 2.0) ** 2) & (r2 <= float(4 * N * N))
    return np.stack([gx[keep], gy[keep]], axis=1).astype(np.int64)


def window_hits(values, m):
    return int(np.count_nonzero(np.abs(values - m) <= 1.0))


def m_grid(*scales):
    top = 4 * max(scales) + 4
    return range(-top, top + 1)


class TestPhaseValue:
    def test_two_vector_example(self):
        # accumulation is strictly left to right: ((0 + <sum>) - <n1>) - <n2>
        got = phase_value([(1, 0), (0, 1)], (1, -1, -1))
        expect = (math.sqrt(3.0) - math.sqrt(2.0)) - math.sqrt(2.0)
        assert got == expect

    def test_single_vector(self):
        got = phase_value([(3, 4)], (1, 1))
        expect = math.sqrt(26.0) + math.sqrt(26.0)
        assert got == expect

    def test_negating_all_vectors_is_invariant(self):
        ns = [(2, -1), (0, 3), (-4, 1)]
        flipped = [(-a, -b) for a, b in ns]
        signs = (1, -1, 1, -1)
        assert phase_value(flipped, signs) == phase_value(ns, signs)

    def test_flipping_all_signs_negates(self):
        ns = [(1, 2), (3, -1)]
        signs = (1, -1, 1)
        neg = tuple(-s for s in signs)
        assert phase_value(ns, neg) == -phase_value(ns, signs)

    def test_sign_arity_checked(self):
        with pytest.raises(ValueError):
            phase_value([(1, 0), (0, 1)], (1, -1))

    def test_sign_values_checked(self):
        with pytest.raises(ValueError):
            phase_value([(1, 0)], (1, 2))


class TestCaseSpecValidation:
    def test_unknown_lemma(self):
        with pytest.raises(ValueError, match="unknown lemma"):
            CaseSpec(lemma="cubic-v", scales=(2, 2, 2))

    def test_scale_arity(self):
        with pytest.raises(ValueError, match="expects"):
            CaseSpec(lemma="cubic-i", scales=(2, 2))

    def test_scales_must_be_dyadic(self):
        with pytest.raises(ValueError, match="powers of two"):
            CaseSpec(lemma="basic-hyp", scales=(3, 4))

    def test_alpha_window_left_closed(self):
        CaseSpec(lemma="special-cubic", scales=(2, 2, 2), alpha=0.25)
        with pytest.raises(ValueError, match="alpha"):
            CaseSpec(lemma="special-cubic", scales=(2, 2, 2), alpha=0.2)

    def test_alpha_window_right_open(self):
        with pytest.raises(ValueError, match="alpha"):
            CaseSpec(lemma="cubic-sum", scales=(2, 2, 2), alpha=5.0 / 12.0, s=0.5)

    def test_quartic_s_window(self):
        CaseSpec(lemma="quartic", scales=(2, 2, 2, 2), alpha=0.3, s=-0.4)
        with pytest.raises(ValueError, match="quartic requires"):
            CaseSpec(lemma="quartic", scales=(2, 2, 2, 2), alpha=0.3, s=-0.2)

    def test_septic_s_cap(self):
        with pytest.raises(ValueError, match="septic requires"):
            CaseSpec(lemma="septic", scales=(1,) * 7, alpha=0.3, s=0.7)

    def test_sign_tuple_validated(self):
        with pytest.raises(ValueError, match="signs"):
            CaseSpec(lemma="cubic-i", scales=(2, 2, 2), signs=(1, -1))
        with pytest.raises(ValueError, match="\\+1 or -1"):
            CaseSpec(lemma="cubic-i", scales=(2, 2, 2), signs=(1, 0, 1, 1))

    def test_default_signs_exposed(self):
        case = CaseSpec(lemma="basic-hyp", scales=(4, 4))
        assert case.effective_signs() == (1, -1)

    def test_all_signs_must_be_expanded_by_caller(self):
        case = CaseSpec(lemma="cubic-i", scales=(2, 2, 2), signs="all")
        with pytest.raises(ValueError):
            case.effective_signs()


class TestBasicCounts:
    def test_hyperbolic_matches_brute(self):
        A, N = 4, 8
        case = CaseSpec(lemma="basic-hyp", scales=(A, N), signs=(1, -1))
        rep = exact_count(case)
        pts = brute_annulus(N)
        a = np.array([A, 0])
        phi = 1.0 * bracket(pts + a) + (-1.0) * bracket(pts)
        best = max(window_hits(phi, m) for m in m_grid(A, N))
        assert rep.lhs == best
        assert rep.per_m[rep.m_at] == rep.lhs

    def test_elliptic_matches_brute(self):
        A, N = 4, 8
        case = CaseSpec(lemma="basic-ell", scales=(A, N), signs=(1, 1))
        rep = exact_count(case)
        pts = brute_annulus(N)
        a = np.array([A, 0])
        phi = 1.0 * bracket(pts + a) + 1.0 * bracket(pts)
        best = max(window_hits(phi, m) for m in m_grid(A, N))
        assert rep.lhs == best

    def test_custom_shift_vector(self):
        case = CaseSpec(
            lemma="basic-hyp", scales=(4, 8), signs=(1, -1), params={"a": (1, 3)}
        )
        rep = exact_count(case)
        pts = brute_annulus(8)
        phi = 1.0 * bracket(pts + np.array([1, 3])) + (-1.0) * bracket(pts)
        best = max(window_hits(phi, m) for m in m_grid(4, 8))
        assert rep.lhs == best

    def test_ball_universe_contains_annulus(self):
        ann = exact_count(CaseSpec(lemma="basic-hyp", scales=(4, 8), signs=(1, -1)))
        ball = exact_count(
            CaseSpec(
                lemma="basic-hyp",
                scales=(4, 8),
                signs=(1, -1),
                params={"universe": "ball"},
            )
        )
        for m, count in ann.per_m.items():
            assert ball.per_m[m] >= count

    def test_two_ball_restricts_hyperbolic(self):
        hyp = exact_count(CaseSpec(lemma="basic-hyp", scales=(4, 8), signs=(1, -1)))
        two = exact_count(CaseSpec(lemma="two-ball", scales=(4, 8, 8), signs=(1, -1)))
        for m, count in two.per_m.items():
            assert count <= hyp.per_m[m]
        assert two.lhs <= hyp.lhs

    def test_per_m_keys_cover_reachable_centres(self):
        rep = exact_count(CaseSpec(lemma="basic-hyp", scales=(4, 4)))
        top = 4 * 4 + 4
        assert sorted(rep.per_m) == list(range(-top, top + 1))
        assert all(isinstance(v, int) for v in rep.per_m.values())

    def test_budget_refusal_carries_estimate(self):
        case = CaseSpec(lemma="basic-hyp", scales=(256, 256))
        with pytest.raises(BudgetExceededError, match="estimated") as err:
            exact_count(case)
        assert err.value.estimated_cost > 0

    def test_count_lemma_guard(self):
        with pytest.raises(ValueError, match="weighted_sum"):
            exact_count(CaseSpec(lemma="cubic-sum", scales=(2, 2, 2), alpha=0.3, s=0.5))


class TestCubicCounts:
    def test_pair_difference_family_matches_brute(self):
        # variables (n2, n3, n34); phase <n2+n34> - <n2> + <n3> - <n34-n3>
        signs = (1, -1, 1, -1)
        case = CaseSpec(lemma="cubic-iii", scales=(2, 2, 2), signs=signs)
        rep = exact_count(case)
        p1 = brute_annulus(2)
        p2 = brute_annulus(2)
        p3 = brute_annulus(2)
        phis = []
        for x in p1:
            for y in p2:
                phi = np.zeros(len(p3))
                phi = phi + signs[0] * bracket(x[None, :] + p3)
                phi = phi + signs[1] * bracket(x)
                phi = phi + signs[2] * bracket(y)
                phi = phi + signs[3] * bracket(p3 - y[None, :])
                phis.append(phi)
        allphi = np.concatenate(phis)
        best = max(window_hits(allphi, m) for m in m_grid(2))
        assert rep.lhs == best

    def test_chained_difference_family_matches_brute(self):
        # variables (n3, n34, n234); phase <n234> - <n234-n34> - <n3> + <n34-n3>
        signs = (1, -1, -1, 1)
        case = CaseSpec(lemma="cubic-iv", scales=(2, 2, 2), signs=signs)
        rep = exact_count(case)
        p1 = brute_annulus(2)
        p2 = brute_annulus(2)
        p3 = brute_annulus(2)
        phis = []
        for x in p1:  # n3
            for y in p2:  # n34
                phi = np.zeros(len(p3))
                phi = phi + signs[0] * bracket(p3)
                phi = phi + signs[1] * bracket(p3 - y[None, :])
                phi = phi + signs[2] * bracket(x)
                phi = phi + signs[3] * bracket(y - x)
                phis.append(phi)
        allphi = np.concatenate(phis)
        best = max(window_hits(allphi, m) for m in m_grid(2))
        assert rep.lhs == best

    def test_fixed_vector_sup_matches_brute(self):
        signs = (1, -1, 1, -1)
        fixed = np.array([1, 2])
        case = CaseSpec(
            lemma="cubic-sup-2",
            scales=(2, 2, 4),
            signs=signs,
            params={"n3": (1, 2)},
        )
        rep = exact_count(case)
        p1 = brute_annulus(2)
        p2 = brute_annulus(2)
        bf = float(bracket(fixed))
        phis = []
        for x in p1:
            tot = x[None, :] + p2 + fixed[None, :]
            r2 = (tot[:, 0] ** 2 + tot[:, 1] ** 2).astype(float)
            keep = (r2 >= 4.0) & (r2 <= 64.0)
            if not keep.any():
                continue
            phi = np.zeros(int(keep.sum()))
            phi = phi + signs[0] * np.sqrt(1.0 + r2[keep])
            phi = phi + signs[1] * bracket(x)
            phi = phi + signs[2] * bracket(p2[keep])
            phi = phi + signs[3] * bf
            phis.append(phi)
        allphi = np.concatenate(phis)
        best = max(window_hits(allphi, m) for m in m_grid(2, 2, 4))
        assert rep.lhs == best

    def test_shared_total_sup_is_dominated_by_plain_count(self):
        signs = (1, -1, 1, -1)
        sup = exact_count(CaseSpec(lemma="cubic-sup-1", scales=(2, 2, 2), signs=signs))
        plain = exact_count(CaseSpec(lemma="cubic-i", scales=(2, 2, 2), signs=signs))
        assert sup.lhs <= plain.lhs
        assert sup.lhs > 0

    def test_sign_maximisation_dominates_each_choice(self):
        every = exact_count(CaseSpec(lemma="cubic-i", scales=(2, 2, 2), signs="all"))
        one = exact_count(
            CaseSpec(lemma="cubic-i", scales=(2, 2, 2), signs=(1, -1, 1, -1))
        )
        assert every.lhs >= one.lhs


class TestWeightedSums:
    def test_three_variable_sum_factorized_equals_naive(self):
        case = CaseSpec(lemma="cubic-sum", scales=(2, 4, 2), alpha=0.3, s=0.5)
        fac = weighted_sum(case, method="factorized")
        nai = weighted_sum(case, method="naive")
        assert fac.lhs == pytest.approx(nai.lhs, rel=1e-10)
        assert fac.m_at == nai.m_at

    def test_resonant_chain_sum_factorized_equals_naive(self):
        case = CaseSpec(lemma="special-cubic", scales=(4, 2, 2), alpha=0.3)
        fac = weighted_sum(case, method="factorized")
        nai = weighted_sum(case, method="naive")
        assert fac.lhs == pytest.approx(nai.lhs, rel=1e-10)

    def test_four_variable_sum_factorized_equals_naive(self):
        case = CaseSpec(lemma="quartic", scales=(2, 2, 2, 4), alpha=0.3, s=-0.45)
        fac = weighted_sum(case, method="factorized")
        nai = weighted_sum(case, method="naive")
        assert fac.lhs == pytest.approx(nai.lhs, rel=1e-10)

    def test_five_variable_sum_factorized_equals_naive(self):
        case = CaseSpec(lemma="quintic", scales=(1,) * 5, alpha=0.3, s=0.6)
        fac = weighted_sum(case, method="factorized")
        nai = weighted_sum(case, method="naive")
        assert fac.lhs == pytest.approx(nai.lhs, rel=1e-10)

    def test_seven_variable_sum_factorized_equals_naive(self):
        case = CaseSpec(lemma="septic", scales=(1,) * 7, alpha=0.3, s=0.55)
        fac = weighted_sum(case, method="factorized")
        nai = weighted_sum(case, method="naive")
        assert fac.lhs == pytest.approx(nai.lhs, rel=1e-8)

    def test_resonant_sum_positive_and_bounded(self):
        case = CaseSpec(lemma="basic-resonant", scales=(8,), alpha=0.3)
        rep = weighted_sum(case)
        assert rep.lhs > 0
        assert math.isfinite(rep.ratio)

    def test_alpha_required(self):
        with pytest.raises(ValueError, match="alpha"):
            weighted_sum(CaseSpec(lemma="basic-resonant", scales=(4,)))

    def test_exponent_required(self):
        with pytest.raises(ValueError, match="exponent"):
            weighted_sum(CaseSpec(lemma="cubic-sum", scales=(2, 2, 2), alpha=0.3))

    def test_method_name_checked(self):
        case = CaseSpec(lemma="basic-resonant", scales=(4,), alpha=0.3)
        with pytest.raises(ValueError, match="method"):
            weighted_sum(case, method="fast")

    def test_count_case_rejected(self):
        with pytest.raises(ValueError, match="not a weighted-sum"):
            weighted_sum(CaseSpec(lemma="cubic-i", scales=(2, 2, 2)))


class TestVerifyBound:
    def test_integer_entries_promote_to_uniform_tuples(self):
        case = CaseSpec(lemma="basic-hyp", scales=(4, 4))
        ver = verify_bound(case, [4, 8])
        assert [r.scales for r in ver.reports] == [(4, 4), (8, 8)]

    def test_reports_ordered_by_max_scale(self):
        case = CaseSpec(lemma="basic-hyp", scales=(4, 4))
        ver = verify_bound(case, [(16, 16), (4, 4), (8, 8)])
        tops = [max(r.scales) for r in ver.reports]
        assert tops == sorted(tops)

    def test_unequal_cubic_scales_expand_to_permutations(self):
        case = CaseSpec(lemma="cubic-i", scales=(2, 2, 2), signs=(1, -1, 1, -1))
        ver = verify_bound(case, [(2, 2, 4)])
        assert [r.scales for r in ver.reports] == [(2, 2, 4), (2, 4, 2), (4, 2, 2)]

    def test_growth_is_ratio_of_two_largest_scales(self):
        case = CaseSpec(lemma="basic-hyp", scales=(4, 4))
        ver = verify_bound(case, [4, 8, 16])
        by_top = {max(r.scales): r.ratio for r in ver.reports}
        expect = by_top[16] / by_top[8] - 1.0
        assert ver.growth == pytest.approx(expect, rel=1e-12)
        assert ver.flagged == (ver.growth > 0.10)

    def test_verification_is_iterable(self):
        case = CaseSpec(lemma="basic-hyp", scales=(4, 4))
        ver = verify_bound(case, [4, 8])
        assert isinstance(ver, BoundVerification)
        assert len(ver) == 2
        assert ver[0].scales == (4, 4)
        assert [r.scales for r in ver] == [(4, 4), (8, 8)]


class TestPairings:
    def test_two_blocks_of_two(self):
        got = enumerate_pairings(4, blocks=[[1, 2], [3, 4]])
        as_sets = [p.pairs for p in got]
        expect = [
            (),
            ((1, 3),),
            ((1, 3), (2, 4)),
            ((1, 4),),
            ((1, 4), (2, 3)),
            ((2, 3),),
            ((2, 4),),
        ]
        assert sorted(as_sets) == sorted(expect)
        assert as_sets == [p.pairs for p in enumerate_pairings(4, blocks=[[1, 2], [3, 4]])]

    def test_single_block_has_only_empty_pairing(self):
        got = enumerate_pairings(3, blocks=[[1, 2, 3]])
        assert [p.pairs for p in got] == [()]

    def test_range_validated(self):
        with pytest.raises(ValueError, match="J"):
            enumerate_pairings(0, blocks=[])
        with pytest.raises(ValueError, match="J"):
            enumerate_pairings(10, blocks=[[i] for i in range(1, 11)])

    def test_blocks_must_partition(self):
        with pytest.raises(ValueError):
            enumerate_pairings(3, blocks=[[1, 2]])
        with pytest.raises(ValueError):
            enumerate_pairings(3, blocks=[[1, 2], [2, 3]])

    def test_pairing_rejects_reflexive_pair(self):
        with pytest.raises(ValueError, match="reflexive"):
            Pairing(pairs=((2, 2),))

    def test_pairing_rejects_shared_index(self):
        with pytest.raises(ValueError, match="reused"):
            Pairing(pairs=((1, 2), (2, 3)))

    def test_pairing_rejects_pair_inside_block(self):
        with pytest.raises(ValueError, match="block"):
            Pairing(pairs=((1, 2),), blocks=(frozenset({1, 2}), frozenset({3})))

    def test_pairing_normalises_order(self):
        p = Pairing(pairs=((4, 3), (2, 1)))
        assert p.pairs == ((1, 2), (3, 4))
        assert p.paired == frozenset({1, 2, 3, 4})


class TestSineCancellation:
    def test_closed_form_matches_quadrature_closure(self):
        # the two-sine instance, re-supplied as a raw closure so the adaptive
        # quadrature path is exercised against the closed form; zero gate
        # times keep the integrand smooth so both paths converge tightly
        s3, s4 = 0.0, 0.0
        n2 = np.array([2, 1])
        n4 = np.array([1, -2])
        shift = n2 + n4
        b4 = math.sqrt(1.0 + float(n4 @ n4))
        inst = sine_cancellation_sum(
            N=8,
            T=1.0,
            instance="double-sine",
            params={"s3": s3, "s4": s4, "n2": tuple(n2), "n4": tuple(n4)},
            t_samples=3,
        )

        def closure(tp, t, pts):
            br = np.sqrt(1.0 + (pts * pts).sum(axis=1).astype(float))
            bra = np.sqrt(
                1.0 + ((pts + shift) ** 2).sum(axis=1).astype(float)
            )
            gate = 1.0 if tp >= max(s3, s4) else 0.0
            return (
                gate
                * (1.0 / bra)
                * br**-2.0
                * np.sin((t - s3) * br)
                * math.sin((t - s4) * b4)
            )

        quad = sine_cancellation_sum(
            N=8, T=1.0, f=closure, a=tuple(shift), t_samples=3, tol=1e-10
        )
        assert np.allclose(inst.values, quad.values, rtol=0.0, atol=1e-7)

    def test_amplitude_claim_below_measurement_rejected(self):
        with pytest.raises(ValueError, match="amplitude"):
            sine_cancellation_sum(
                N=8, T=1.0, instance="modulated-pair", amplitude=1e-12
            )

    def test_cutoff_must_be_dyadic(self):
        with pytest.raises(ValueError, match="power of two"):
            sine_cancellation_sum(N=9, T=1.0, instance="modulated-pair")

    def test_instance_or_closure_required(self):
        with pytest.raises(ValueError, match="instance"):
            sine_cancellation_sum(N=8, T=1.0)

    def test_report_carries_bound_data(self):
        rep = sine_cancellation_sum(N=16, T=1.0, instance="modulated-pair")
        assert rep.cutoff == 16
        assert rep.bound > 0
        assert rep.amplitude > 0
        assert len(rep.values) == len(rep.times) == 8


class TestTensorNorms:
    def test_unfolding_keys_and_positivity(self):
        out = tensor_unfold_norms(
            alpha=0.3, s=0.36, scales=(2, 2, 2, 2), signs=(1, -1, 1, -1)
        )
        assert sorted(out) == ["n1n2n3->n", "n1n3->nn2", "n2n3->nn1", "n3->nn1n2"]
        assert all(v >= 0 for v in out.values())

    def test_triple_unfolding_is_max_column_norm(self):
        alpha, s = 0.3, 0.36
        signs = (1, -1, 1, -1)
        pts = brute_annulus(2)
        br = bracket(pts)
        cells = {}
        for i1 in range(len(pts)):
            for i2 in range(len(pts)):
                tot2 = pts[i1] + pts[i2]
                base = tot2[None, :] + pts
                r2 = (base[:, 0] ** 2 + base[:, 1] ** 2).astype(float)
                keep = (r2 >= 1.0) & (r2 <= 16.0)
                btot = np.sqrt(1.0 + r2)
                phi = signs[0] * btot + signs[1] * br[i1] + signs[2] * br[i2] + signs[3] * br
                keep &= np.abs(phi) <= 1.0
                vals = btot[keep] ** (s - 1.0) / (
                    br[i1] ** (1.0 - alpha) * br[i2] ** (1.0 - alpha) * br[keep] ** s
                )
                for key, v in zip(map(tuple, base[keep]), vals):
                    cells.setdefault(key, 0.0)
                    cells[key] += v * v
        expect = math.sqrt(max(cells.values()))
        out = tensor_unfold_norms(alpha=alpha, s=s, scales=(2, 2, 2, 2), signs=signs)
        assert out["n1n2n3->n"] == pytest.approx(expect, rel=1e-10)

    def test_unreachable_window_gives_zero(self):
        out = tensor_unfold_norms(
            alpha=0.3, s=0.36, scales=(2, 2, 2, 2), signs=(1, -1, 1, -1), m=1000
        )
        assert all(v == 0.0 for v in out.values())

    def test_budget_refusal(self):
        with pytest.raises(BudgetExceededError):
            tensor_unfold_norms(
                alpha=0.3, s=0.36, scales=(16, 16, 16, 16), signs=(1, -1, 1, -1)
            )

    def test_scale_arity(self):
        with pytest.raises(ValueError, match="scales"):
            tensor_unfold_norms(alpha=0.3, s=0.36, scales=(4, 4, 4), signs=(1, -1, 1, -1))


vec = st.tuples(st.integers(-8, 8), st.integers(-8, 8))


class TestPhaseValueProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(vec, min_size=1, max_size=4), st.data())
    def test_negation_invariance(self, ns, data):
        signs = tuple(
            data.draw(st.sampled_from((-1, 1))) for _ in range(len(ns) + 1)
        )
        flipped = [(-a, -b) for a, b in ns]
        assert phase_value(flipped, signs) == phase_value(ns, signs)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(vec, min_size=1, max_size=4), st.data())
    def test_sign_flip_negates(self, ns, data):
        signs = tuple(
            data.draw(st.sampled_from((-1, 1))) for _ in range(len(ns) + 1)
        )
        neg = tuple(-s for s in signs)
        assert phase_value(ns, neg) == -phase_value(ns, signs)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(vec, min_size=1, max_size=4), st.data())
    def test_lipschitz_range(self, ns, data):
        # each bracket lies in [1, 1+sum|n|]; the signed combination can
        # never escape the corresponding interval
        signs = tuple(
            data.draw(st.sampled_from((-1, 1))) for _ in range(len(ns) + 1)
        )
        val = phase_value(ns, signs)
        cap = sum(1.0 + math.hypot(*n) for n in ns) + (
            1.0 + sum(math.hypot(*n) for n in ns)
        )
        assert abs(val) <= cap + 1e-9
