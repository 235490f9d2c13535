import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unitary_factor.errors import ClassOverflow
from unitary_factor.generators import build_generator
from unitary_factor.kernel import (
    AffineInjection,
    BlockOperator,
    Progression,
    StructuredOperator,
    _assemble,
    affine_compose,
    affine_invert,
    dyadic,
    from_dense,
    identity,
    is_unitary_window,
    op_apply,
    op_equal,
    op_window_eq,
    progression_intersect,
    rank_one,
    shift,
    window_residual,
    zero,
)

from oracle import random_scalar_expression, scalar_oracle_residual
from schema_util import validate

progressions = st.builds(
    lambda s, m, r: Progression.make(s, m, r),
    st.integers(1, 30),
    st.integers(1, 12),
    st.integers(0, 11),
)


def members(p, upto=200):
    return set(int(i) for i in p.members(upto))


class TestProgression:
    def test_lcm_of_congruences(self):
        assert progression_intersect(Progression.make(2, 2, 0), Progression.make(3, 3, 0)) == Progression(6, 6, 0)

    def test_disjoint_residues(self):
        assert progression_intersect(Progression.make(1, 2, 1), Progression.make(2, 2, 0)) is None

    def test_crt_case(self):
        got = progression_intersect(Progression.make(5, 4, 1), Progression.make(9, 6, 3))
        assert got == Progression(9, 12, 9)
        brute = {i for i in range(1, 101) if i >= 5 and i % 4 == 1 and i >= 9 and i % 6 == 3}
        assert members(got, 100) == brute

    def test_start_is_least_member(self):
        p = Progression.make(4, 5, 2)
        assert p.start == 7 and p.contains(7) and not p.contains(2)

    @given(progressions, progressions)
    def test_intersection_matches_brute_force(self, p, q):
        got = progression_intersect(p, q)
        expect = members(p) & members(q)
        if got is None:
            assert not expect
        else:
            assert members(got) == expect


class TestAffine:
    def test_shift_after_doubling(self):
        f = AffineInjection.make(Progression.make(1), 1, 1, 1)
        g = AffineInjection.make(Progression.make(1), 2, 0, 1)
        h = affine_compose(f, g)
        assert h.key == (2, 1, 1) and h.domain == g.domain

    def test_halving_after_shift(self):
        f = AffineInjection.make(Progression.make(2, 2, 0), 1, 0, 2)
        g = AffineInjection.make(Progression.make(1), 1, 1, 1)
        h = affine_compose(f, g)
        assert h.key == (1, 1, 2)
        assert h.domain == Progression(1, 2, 1)

    def test_rational_composition(self):
        f = AffineInjection.make(Progression.make(1, 2, 1), 3, 1, 2)
        g = AffineInjection.make(Progression.make(1), 2, -1, 1)
        h = affine_compose(f, g)
        assert h.key == (3, -1, 1)
        for i in range(1, 51):
            assert h(i) == f(g(i))

    def test_invert_shift(self):
        f = AffineInjection.make(Progression.make(3), 1, 4, 1)
        inv = affine_invert(f)
        assert inv.key == (1, -4, 1) and inv.domain.start == 7

    def test_invert_doubling(self):
        inv = affine_invert(AffineInjection.make(Progression.make(1), 2, 0, 1))
        assert inv.key == (1, 0, 2) and inv.domain == Progression(2, 2, 0)

    def test_invert_affine(self):
        start = 3
        f = AffineInjection.make(Progression.make(start), 2, 4, 1)
        inv = affine_invert(f)
        assert inv.domain == Progression(2 * start + 4, 2, 0)
        for i in range(start, 51):
            assert inv(f(i)) == i

    def test_rejects_non_integral(self):
        with pytest.raises(ValueError):
            AffineInjection.make(Progression.make(1), 1, 0, 2)

    @given(
        progressions,
        st.integers(1, 4), st.integers(-3, 6), st.sampled_from([1, 2]),
        progressions,
        st.integers(1, 4), st.integers(-3, 6), st.sampled_from([1, 2]),
    )
    def test_compose_pointwise(self, pf, af, bf, df, pg, ag, bg, dg):
        try:
            f = AffineInjection.make(pf, af, bf, df)
            g = AffineInjection.make(pg, ag, bg, dg)
        except ValueError:
            return
        h = affine_compose(f, g)
        expect = {i: f(g(i)) for i in members(g.domain, 150) if f.domain.contains(g(i))}
        if h is None:
            assert not expect
            return
        got = {int(i): int(h(i)) for i in h.domain.members(150)}
        assert got == expect


class TestApply:
    def test_shift(self):
        assert op_apply(shift(1), 3) == [(4, 1)]

    def test_dyadic(self):
        assert op_apply(dyadic(1), 5) == [(10, 1)]

    def test_shift_defect(self):
        S = shift(1)
        assert op_apply(S @ S.H, 1) == []

    def test_rejects_zero_index(self):
        with pytest.raises(ValueError):
            op_apply(identity(), 0)


class TestAlgebra:
    def test_isometries_are_structurally_isometric(self):
        S, L = shift(1), dyadic(1)
        assert op_equal(S.H @ S, identity())
        assert op_equal(L.H @ L, identity())

    def test_shift_range_projection(self):
        S = shift(1)
        P1 = rank_one([1.0], [1.0])
        assert op_equal(S @ S.H, identity() - P1)

    def test_dyadic_range_is_even_indices(self):
        L = dyadic(1)
        cols = (L @ L.H).columns(64)
        expect = np.diag([1.0 if i % 2 == 0 else 0.0 for i in range(1, 65)])
        assert np.array_equal(cols[:64, :64], expect)

    def test_adjoint_involution_is_structural(self):
        rng = np.random.default_rng(3)
        A = from_dense(rng.standard_normal((3, 2)), 0.5j) @ shift(2) + dyadic(1).H
        assert op_equal(A.H.H, A)

    def test_adjoint_of_product(self):
        for a, b in [(1, 2), (4, 7), (5, 1), (2, 6)]:
            A = build_generator(a) @ build_generator(b).H
            B = build_generator(b) @ build_generator(a)
            assert window_residual((A @ B).H, B.H @ A.H, 64) <= 1e-12

    def test_ring_axioms_on_window(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            ops = [from_dense(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)), 1.0) @ x
                   for x in (shift(1), dyadic(1), shift(-2))]
            A, B, C = (ops[i] for i in rng.permutation(3))
            assert window_residual((A @ B) @ C, A @ (B @ C), 64) <= 1e-10
            assert window_residual(A @ (B + C), A @ B + A @ C, 64) <= 1e-10

    def test_tail_collisions_merge(self):
        A = shift(1) + shift(1) * 2.0
        assert len(A.tails) == 1 and A.tails[0].weight == 3

    def test_period_overflow(self):
        primes = [2, 3, 5, 7, 11, 13, 17, 19]
        terms = [(1.0 + k, AffineInjection.make(Progression.make(1, p, 0), 1, 0, 1)) for k, p in enumerate(primes)]
        with pytest.raises(ClassOverflow):
            _assemble(np.zeros((0, 0)), terms)

    @settings(max_examples=60)
    @given(st.integers(0, 10_000))
    def test_matches_sparse_oracle(self, seed):
        assert scalar_oracle_residual(random_scalar_expression(seed), 32) <= 1e-12


class TestWindow:
    def test_identity(self):
        assert op_window_eq(identity(), identity(), 16, 1e-12)

    def test_shift_vs_adjoint(self):
        assert not op_window_eq(shift(1), shift(-1), 4, 1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            op_window_eq(identity(), identity(), 0, 1e-12)
        with pytest.raises(ValueError):
            op_window_eq(identity(), identity(), 4, 0.0)

    def test_swap_is_unitary(self):
        swap = BlockOperator(zero(), identity(), identity(), zero())
        assert is_unitary_window(swap, 64, 1e-12)

    def test_shift_diag_is_not_unitary(self):
        S = shift(1)
        assert not is_unitary_window(BlockOperator.diag(S, S.H), 64, 1e-12)

    def test_residual_sees_sub_threshold_differences(self):
        A = from_dense(np.array([[1.0]]), 1.0)
        B = from_dense(np.array([[1.0 + 1e-15]]), 1.0)
        assert 0 < window_residual(A, B, 4) < 1e-14

    def test_columns_are_not_clipped(self):
        c = dyadic(1).columns(10)
        assert c.shape[0] == 20 and c[19, 9] == 1


class TestSerialization:
    @pytest.mark.parametrize("index", range(1, 9))
    def test_generator_round_trip(self, index):
        g = build_generator(index)
        data = json.loads(json.dumps(g.to_dict()))
        validate(data, "block_operator.schema.json")
        back = BlockOperator.from_dict(data)
        for x, y in zip(back.blocks, g.blocks):
            for a, b in zip(x, y):
                assert op_equal(a, b)

    def test_dense_entries_are_one_based_column_major(self):
        A = from_dense(np.array([[1, 2], [3, 4]]))
        assert [e[:2] for e in A.to_dict()["dense"]] == [[1, 1], [2, 1], [1, 2], [2, 2]]

    def test_round_trip_with_rational_tail(self):
        A = shift(3) @ dyadic(1).H * (0.25 - 1j)
        data = A.to_dict()
        validate(data, "operator.schema.json")
        assert op_equal(StructuredOperator.from_dict(data), A)
