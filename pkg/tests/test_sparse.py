"""Sparse engine: flow verification, forms, optimizers, CZ, stopping."""

import itertools
import json
from fractions import Fraction

import numpy as np
import pytest

from sparsedom.dyadic import Cube, build_grid, grid_norm
from sparsedom.maximal import scalar_maximal
from sparsedom.spaces import AtomicMeasure, LebesgueSpace
from sparsedom.sparse import (
    GREEDY_FACTOR,
    SparseFamily,
    SparseRefutation,
    StoppingFailure,
    carleson_constant,
    cz_decompose,
    family_from_json,
    family_to_json,
    form_bound_from_pointwise,
    optimal_sparse_form,
    packing_sparse,
    sparse_form,
    stopping_domination,
    verify_sparse,
)

from oracles import exhaustive_best_form, hall_feasible

ROOT = Cube(0, (0,), 0)
LEFT = Cube(1, (0,), 0)
RIGHT = Cube(1, (1,), 0)
TREE1 = [ROOT, LEFT, RIGHT]


def full_tree(d, depth):
    g = build_grid(d, depth)
    return list(g.cubes())


# ---------------------------------------------------------------------------
# verify_sparse
# ---------------------------------------------------------------------------


class TestVerifySparse:
    def test_disjoint_cubes_sparse_at_any_eta(self):
        cubes = [Cube(2, (i,), 0) for i in range(4)]
        fam = verify_sparse(cubes, 15 / 16)
        assert isinstance(fam, SparseFamily)
        assert fam.check_certificate()

    def test_level1_tree_sparse_at_half(self):
        fam = verify_sparse(TREE1, 0.5)
        assert isinstance(fam, SparseFamily)
        # total demand 1/2 + 1/4 + 1/4 exhausts the unit measure exactly
        assert fam.certificate_depth == 2
        used = sorted(c for cells in fam.certificate.values() for c in cells)
        assert used == [0, 1, 2, 3]
        assert fam.check_certificate()

    def test_level2_tree_not_sparse_at_half(self):
        ref = verify_sparse(full_tree(1, 2), 0.5)
        assert isinstance(ref, SparseRefutation)
        assert ref.demand > ref.available
        assert set(ref.cubes) <= set(full_tree(1, 2))

    def test_level2_tree_total_demand(self):
        # the counting obstruction: demands sum to 3/2 over measure 1
        ref = verify_sparse(full_tree(1, 2), 0.5)
        total = sum(Fraction(1, 2) * Fraction(1, 2**q.level) for q in full_tree(1, 2))
        assert total == Fraction(3, 2)
        assert ref.demand <= total

    def test_d2_one_level_tight(self):
        fam = verify_sparse(full_tree(2, 1), 0.5)
        assert isinstance(fam, SparseFamily)
        assert fam.check_certificate()

    def test_d2_two_levels_refuted(self):
        assert isinstance(verify_sparse(full_tree(2, 2), 0.5), SparseRefutation)

    def test_certificate_sizes_exact(self):
        fam = verify_sparse(TREE1, 0.5)
        for cube, cells in fam.certificate.items():
            need = Fraction(1, 2) * 2 ** (fam.certificate_depth - cube.level)
            assert len(cells) == need

    def test_empty_family(self):
        fam = verify_sparse([], 0.5)
        assert fam.cubes == []

    @pytest.mark.parametrize("eta", [0.25, 0.5, 0.625, 0.75])
    def test_matches_hall_oracle(self, eta):
        rng = np.random.default_rng(7)
        pool = full_tree(1, 3)
        for _ in range(12):
            size = rng.integers(1, 8)
            pick = rng.choice(len(pool), size=size, replace=False)
            cubes = [pool[i] for i in pick]
            out = verify_sparse(cubes, eta)
            depth = out.certificate_depth if isinstance(out, SparseFamily) else out.depth
            assert isinstance(out, SparseFamily) == hall_feasible(cubes, eta, depth)

    def test_non_dyadic_eta_rejected(self):
        with pytest.raises(ValueError, match="not dyadic"):
            verify_sparse(TREE1, Fraction(1, 3))

    def test_unresolvable_float_eta_rejected(self):
        with pytest.raises(ValueError, match="resolution cap"):
            verify_sparse(TREE1, 0.3)

    def test_shifted_cubes_rejected(self):
        with pytest.raises(ValueError, match="standard lattice"):
            verify_sparse([Cube(1, (0,), 1)], 0.5)

    def test_eta_out_of_range(self):
        with pytest.raises(ValueError):
            verify_sparse(TREE1, 1.5)


class TestCarleson:
    def test_single_cube(self):
        assert carleson_constant([ROOT]) == 1.0

    def test_level1_tree_attains_packing_bound(self):
        assert carleson_constant(TREE1) == 2.0

    def test_bounded_by_inverse_eta_on_certificates(self):
        rng = np.random.default_rng(3)
        pool = full_tree(1, 3)
        for _ in range(20):
            pick = rng.choice(len(pool), size=rng.integers(1, 8), replace=False)
            out = verify_sparse([pool[i] for i in pick], 0.5)
            if isinstance(out, SparseFamily):
                assert carleson_constant(out) <= 2.0 + 1e-12


class TestPackingEquivalence:
    def test_packing_matches_flow(self):
        # on one lattice the per-cube packing bound is exactly Hall's condition
        rng = np.random.default_rng(11)
        pool = full_tree(1, 3)
        for _ in range(30):
            pick = rng.choice(len(pool), size=rng.integers(1, 9), replace=False)
            cubes = [pool[i] for i in pick]
            flow_ok = isinstance(verify_sparse(cubes, 0.5), SparseFamily)
            assert packing_sparse(cubes, 0.5) == flow_ok


# ---------------------------------------------------------------------------
# sparse_form
# ---------------------------------------------------------------------------


class TestSparseForm:
    def test_single_cube_all_ones(self):
        g = build_grid(1, 2)
        ones = np.ones(4)
        for q in (0.5, 1.0, 2.0):
            val = sparse_form([ROOT], g, [ones], [1.0], g=ones, q=q)
            assert val == pytest.approx(1.0)

    def test_level1_tree_measure_sum(self):
        g = build_grid(1, 1)
        ones = np.ones(2)
        assert sparse_form(TREE1, g, [ones], [1.0], q=1.0) == pytest.approx(2.0)

    def test_chain_family_hand_value(self):
        g = build_grid(1, 2)
        f = np.array([4.0, 0.0, 0.0, 0.0])
        S = [Cube(2, (0,), 0), LEFT, ROOT]
        assert sparse_form(S, g, [f], [1.0]) == pytest.approx(3.0)

    def test_qth_root_reporting(self):
        g = build_grid(1, 1)
        ones = np.ones(2)
        c = 3.7
        val = sparse_form([ROOT], g, [ones], [1.0], g=c * ones, q=2.0)
        assert val == pytest.approx(c)

    def test_sigma_override(self):
        g = build_grid(1, 1)
        gfun = np.array([1.0, 3.0])
        v1 = sparse_form([ROOT], g, [np.ones(2)], [1.0], g=gfun, sigma=2.0)
        assert v1 == pytest.approx(np.sqrt(5.0))

    def test_accepts_family_object(self):
        fam = verify_sparse(TREE1, 0.5)
        g = build_grid(1, 1)
        assert sparse_form(fam, g, [np.ones(2)], [1.0]) == pytest.approx(2.0)

    def test_bad_exponent(self):
        g = build_grid(1, 1)
        with pytest.raises(ValueError):
            sparse_form([ROOT], g, [np.ones(2)], [1.0], q=0.0)


# ---------------------------------------------------------------------------
# optimal_sparse_form
# ---------------------------------------------------------------------------


def oracle_best(fs, rs, grid, eta):
    from sparsedom.dyadic import average

    vals = {}
    for q in grid.cubes():
        prod = 1.0
        for f, r in zip(fs, rs):
            prod *= float(average(grid, f, r, q))
        vals[q] = prod * q.measure
    depth = max(q.level for q in vals) + 1
    return exhaustive_best_form(vals, eta, depth)


class TestOptimalExact:
    def test_single_cube_grid(self):
        g = build_grid(1, 0)
        val, fam = optimal_sparse_form([np.array([3.0])], [1.0], g)
        assert fam.cubes == [ROOT]
        assert val == pytest.approx(3.0)

    def test_constant_one_attains_two(self):
        for depth in (1, 2):
            g = build_grid(1, depth)
            val, fam = optimal_sparse_form([np.ones(2**depth)], [1.0], g)
            assert val == pytest.approx(2.0)
            assert isinstance(fam, SparseFamily)
            assert fam.check_certificate()

    def test_quarter_bump_hand_value(self):
        g = build_grid(1, 2)
        f = np.array([4.0, 0.0, 0.0, 0.0])
        val, fam = optimal_sparse_form([f], [1.0], g)
        assert val == pytest.approx(3.0)
        assert set(fam.cubes) == {Cube(2, (0,), 0), LEFT, ROOT}

    @pytest.mark.parametrize("rs", [(1.0,), (1.0, 1.0), (2.0, 1.0)])
    def test_matches_exhaustive_oracle(self, rs):
        g = build_grid(1, 2)
        rng = np.random.default_rng(hash(rs) % 2**32)
        for _ in range(6):
            fs = [rng.uniform(0.0, 2.0, size=4) for _ in rs]
            val, fam = optimal_sparse_form(fs, list(rs), g)
            best, _ = oracle_best(fs, list(rs), g, 0.5)
            assert val == pytest.approx(best, rel=1e-12)
            assert val == pytest.approx(
                sparse_form(fam, g, fs, list(rs)), rel=1e-12
            )

    def test_d2_matches_oracle(self):
        g = build_grid(2, 1)
        rng = np.random.default_rng(5)
        fs = [rng.uniform(0.0, 2.0, size=(2, 2))]
        val, fam = optimal_sparse_form(fs, [1.0], g)
        best, _ = oracle_best(fs, [1.0], g, 0.5)
        assert val == pytest.approx(best, rel=1e-12)

    def test_size_cap(self):
        g = build_grid(1, 4)
        with pytest.raises(ValueError, match="cap"):
            optimal_sparse_form([np.ones(16)], [1.0], g, mode="exact")

    def test_zero_function(self):
        g = build_grid(1, 1)
        val, fam = optimal_sparse_form([np.zeros(2)], [1.0], g)
        assert val == 0.0

    def test_unknown_mode(self):
        g = build_grid(1, 1)
        with pytest.raises(ValueError, match="mode"):
            optimal_sparse_form([np.ones(2)], [1.0], g, mode="best")


class TestGreedy:
    def test_realizes_half_the_maximal_norm(self):
        rng = np.random.default_rng(17)
        for rs in [(1.0,), (1.0, 1.0), (2.0, 1.0)]:
            g = build_grid(1, 4)
            fs = [rng.uniform(0.0, 3.0, size=16) for _ in rs]
            val, fam = optimal_sparse_form(fs, list(rs), g, mode="greedy")
            mnorm = grid_norm(g, scalar_maximal(g, fs, list(rs)), 1.0)
            assert val >= GREEDY_FACTOR * mnorm - 1e-12
            assert val == pytest.approx(
                sparse_form(fam, g, fs, list(rs)), rel=1e-12
            )
            assert fam.check_certificate()

    def test_within_quarter_of_exact(self):
        rng = np.random.default_rng(23)
        g = build_grid(1, 2)
        for rs in [(1.0,), (1.0, 1.0), (2.0, 1.0)]:
            for _ in range(5):
                fs = [rng.uniform(0.0, 2.0, size=4) for _ in rs]
                gval, _ = optimal_sparse_form(fs, list(rs), g, mode="greedy")
                eval_, _ = optimal_sparse_form(fs, list(rs), g, mode="exact")
                assert gval >= 0.25 * eval_ - 1e-12

    def test_greedy_eta_values(self):
        g = build_grid(1, 2)
        cases = {(1.0,): 0.5, (1.0, 1.0): 0.25, (2.0, 1.0): 0.3125}
        for rs, eta in cases.items():
            fs = [np.ones(4) for _ in rs]
            _, fam = optimal_sparse_form(fs, list(rs), g, mode="greedy")
            assert fam.eta == eta

    def test_root_always_selected(self):
        g = build_grid(1, 2)
        _, fam = optimal_sparse_form([np.zeros(4)], [1.0], g, mode="greedy")
        assert ROOT in fam.cubes


# ---------------------------------------------------------------------------
# Calderon-Zygmund decomposition
# ---------------------------------------------------------------------------


class TestCZ:
    def test_huge_threshold_trivial(self):
        g = build_grid(1, 2)
        f = np.array([4.0, 0.0, 0.0, 0.0])
        parts = cz_decompose(g, [f], [1.0], lam=100.0)
        assert parts.stopping_cubes == [[]]
        np.testing.assert_allclose(parts.good[0], f)
        np.testing.assert_allclose(parts.bad, 0.0)

    def test_quarter_bump_root_selected_at_half(self):
        # at lam = 1/2 the root average 1 exceeds the threshold, so the
        # maximal selected cube is the root and g freezes the root average
        g = build_grid(1, 2)
        f = np.array([4.0, 0.0, 0.0, 0.0])
        parts = cz_decompose(g, [f], [1.0], lam=0.5)
        assert parts.stopping_cubes == [[ROOT]]
        np.testing.assert_allclose(parts.good[0], np.ones(4))
        assert np.max(np.abs(parts.averaged[0])) <= 2 ** (1 / 1) * 0.5 + 1e-12

    def test_low_threshold_freezes_ancestor_average(self):
        # lam far below the root average: the zero-extension ancestor two
        # levels up still averages 0.25 > 0.2 while its parent drops to
        # 0.125, so the frozen value is 0.25 and the doubling bound holds
        g = build_grid(1, 2)
        f = np.array([4.0, 0.0, 0.0, 0.0])
        parts = cz_decompose(g, [f], [1.0], lam=0.2)
        assert parts.stopping_cubes == [[ROOT]]
        np.testing.assert_allclose(parts.good[0], 0.25 * np.ones(4))
        assert np.max(np.abs(parts.averaged[0])) <= 2.0 * 0.2 + 1e-12

    def test_quarter_bump_halfcube_selected_above_one(self):
        g = build_grid(1, 2)
        f = np.array([4.0, 0.0, 0.0, 0.0])
        parts = cz_decompose(g, [f], [1.0], lam=1.2)
        assert parts.stopping_cubes == [[LEFT]]
        np.testing.assert_allclose(parts.good[0], np.array([2.0, 2.0, 0.0, 0.0]))
        np.testing.assert_allclose(
            parts.level_sets[0], np.array([True, True, False, False])
        )

    def test_norm_preserved(self):
        rng = np.random.default_rng(31)
        g = build_grid(1, 3)
        for rs in [(1.0,), (1.0, 2.0)]:
            fs = [rng.uniform(0.1, 3.0, size=8) for _ in rs]
            parts = cz_decompose(g, fs, list(rs), lam=1.0)
            for gj, r in zip(parts.good, rs):
                assert grid_norm(g, gj, r) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("d,m", [(1, 1), (1, 2), (2, 1), (2, 2)])
    def test_proof_estimates(self, d, m):
        rng = np.random.default_rng(10 * d + m)
        depth = 3 if d == 1 else 2
        g = build_grid(d, depth)
        shape = g.cell_shape
        rs = [1.0, 2.0][:m]
        r = 1.0 / sum(1.0 / rj for rj in rs)
        for lam in [2.0 ** (-d / r), 1.0, 1.7]:
            for _ in range(8):
                fs = [rng.uniform(0.0, 4.0, size=shape) for _ in range(m)]
                parts = cz_decompose(g, fs, rs, lam=lam)
                for j, rj in enumerate(rs):
                    thr = lam ** (r / rj)
                    assert np.max(np.abs(parts.flat[j])) <= thr + 1e-12
                    assert (
                        np.max(np.abs(parts.averaged[j]))
                        <= 2 ** (d / rj) * thr + 1e-12
                    )
                exceed = np.abs(parts.bad) > lam
                assert np.sum(exceed) * g.cell_measure <= m / lam**r + 1e-12

    def test_bad_supported_on_level_sets(self):
        rng = np.random.default_rng(41)
        g = build_grid(1, 3)
        fs = [rng.uniform(0.0, 4.0, size=8) for _ in range(2)]
        parts = cz_decompose(g, fs, [1.0, 1.0], lam=1.3)
        union = parts.level_sets[0] | parts.level_sets[1]
        assert np.all(parts.bad[~union] == 0.0)

    def test_splitting_identity(self):
        rng = np.random.default_rng(43)
        g = build_grid(1, 3)
        fs = [rng.uniform(0.0, 4.0, size=8) for _ in range(2)]
        parts = cz_decompose(g, fs, [1.0, 1.0], lam=1.1)
        fn = [f / grid_norm(g, f, 1.0) for f in fs]
        np.testing.assert_allclose(
            np.prod(fn, axis=0), np.prod(parts.good, axis=0) + parts.bad, atol=1e-12
        )

    def test_supplied_norms_respected(self):
        g = build_grid(1, 2)
        f = np.array([4.0, 0.0, 0.0, 0.0])
        parts = cz_decompose(g, [f], [1.0], lam=0.5, norms=[2.0])
        np.testing.assert_allclose(parts.good[0] + parts.bad, f / 2.0)

    def test_domain_errors(self):
        g = build_grid(1, 1)
        with pytest.raises(ValueError):
            cz_decompose(g, [np.ones(2)], [1.0], lam=0.0)
        with pytest.raises(ValueError):
            cz_decompose(g, [np.zeros(2)], [1.0], lam=1.0)


# ---------------------------------------------------------------------------
# stopping-time domination
# ---------------------------------------------------------------------------


def vec(cells, atom_values):
    """Constant-in-x vector function with the given atom values."""
    out = np.empty(cells + (len(atom_values),))
    out[...] = atom_values
    return out


class TestStopping:
    def test_constant_input_selects_root_only(self):
        g = build_grid(1, 2)
        X = [LebesgueSpace(4.0, AtomicMeasure.unit(2)), LebesgueSpace(4 / 3, AtomicMeasure.unit(2))]
        Fs = [vec((4,), [1.0, 2.0]), vec((4,), [3.0, 1.0])]
        cert = stopping_domination(g, Fs, [1.0, 1.0], 1.0, X)
        assert cert.family.cubes == [Cube(0, (0,), 0)]
        assert cert.c_stop == 1.0
        assert cert.doublings == 0
        assert cert.pointwise_ok
        assert all(v <= 1 + 1e-12 for v in cert.ratios.values())

    def test_scalar_principal_tree(self):
        g = build_grid(1, 2)
        f = np.array([4.0, 0.0, 0.0, 0.0])[:, None]
        cert = stopping_domination(g, [f], [1.0], 1.0, [LebesgueSpace(1.0, AtomicMeasure.unit(1))])
        assert set(cert.family.cubes) == {ROOT, LEFT, Cube(2, (0,), 0)}
        assert cert.pointwise_ok
        assert cert.c_stop == 1.0

    def test_doubling_triggered_by_wide_plateau(self):
        # three quarters at a common height force children of total measure
        # 3/4 at the initial constant, so one doubling is required
        g = build_grid(1, 2)
        f = np.array([1.9, 1.9, 1.9, 0.0])[:, None]
        cert = stopping_domination(g, [f], [1.0], 1.0, [LebesgueSpace(1.0, AtomicMeasure.unit(1))])
        assert cert.doublings == 1
        assert cert.c_stop == 2.0
        assert cert.family.cubes == [ROOT]
        assert cert.pointwise_ok

    def test_random_suite_produces_valid_certificates(self):
        rng = np.random.default_rng(53)
        for n in (2, 8):
            mu = AtomicMeasure.unit(n)
            X = [LebesgueSpace(4.0, mu), LebesgueSpace(4 / 3, mu)]
            g = build_grid(1, 3)
            Fs = [rng.uniform(0.0, 3.0, size=(8, n)) for _ in range(2)]
            cert = stopping_domination(g, Fs, [1.0, 1.0], 1.0, X)
            assert cert.pointwise_ok
            assert cert.family.check_certificate()
            assert all(v <= 1 + 1e-9 for v in cert.ratios.values())

    def test_q_convex_aggregation(self):
        rng = np.random.default_rng(59)
        X = [LebesgueSpace(4.0, AtomicMeasure.unit(4)), LebesgueSpace(4.0, AtomicMeasure.unit(4))]
        g = build_grid(1, 3)
        Fs = [rng.uniform(0.0, 3.0, size=(8, 4)) for _ in range(2)]
        cert = stopping_domination(g, Fs, [1.0, 1.0], 2.0, X)
        assert cert.pointwise_ok

    def test_convexity_validation(self):
        g = build_grid(1, 1)
        with pytest.raises(ValueError, match="convex"):
            stopping_domination(
                g, [np.ones((2, 1))], [1.0], 1.0, [LebesgueSpace(0.5, AtomicMeasure.unit(1))]
            )

    def test_alignment_validation(self):
        g = build_grid(1, 1)
        with pytest.raises(ValueError, match="align"):
            stopping_domination(g, [np.ones((2, 1))], [1.0, 1.0], 1.0,
                                [LebesgueSpace(1.0, AtomicMeasure.unit(1))])


class TestFormBound:
    def test_single_cube_all_ones(self):
        g = build_grid(1, 1)
        ones = np.ones(2)
        T = np.ones(2)
        assert form_bound_from_pointwise(g, T, [ones], ones, [1.0], 1.0) <= 1 + 1e-12

    @pytest.mark.parametrize("q", [1.0, 0.5])
    def test_tree_operator_bounded_by_hypothesis_constant(self, q):
        rng = np.random.default_rng(61)
        g = build_grid(1, 2)
        for _ in range(10):
            fs = [rng.uniform(0.1, 2.0, size=4)]
            gg = rng.uniform(0.1, 2.0, size=4)
            T = np.zeros(4)
            from sparsedom.dyadic import average

            for Q in TREE1:
                T[g.cube_slices(Q)] += float(average(g, fs[0], 1.0, Q))
            ratio = form_bound_from_pointwise(g, T, fs, gg, [1.0], q)
            assert ratio <= 0.5 ** (-1.0 / min(q, 1.0)) + 1e-9

    def test_zero_cases(self):
        g = build_grid(1, 1)
        z = np.zeros(2)
        assert form_bound_from_pointwise(g, z, [z], z, [1.0], 1.0) == 0.0
        with pytest.raises(ValueError):
            form_bound_from_pointwise(g, np.ones(2), [z], np.ones(2), [1.0], 1.0)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


class TestFamilyJSON:
    def test_round_trip_bit_exact(self):
        fam = verify_sparse(TREE1, 0.5)
        text = family_to_json(fam)
        back = family_from_json(text)
        assert family_to_json(back) == text
        assert back.cubes == fam.cubes
        assert back.certificate == fam.certificate
        assert back.check_certificate()

    def test_schema_fields(self):
        fam = verify_sparse([ROOT], 0.5)
        obj = json.loads(family_to_json(fam))
        assert set(obj) == {"eta", "cubes", "certificate", "depth"}
        assert obj["cubes"][0] == {"level": 0, "index": [0], "shift": 0}
