import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unitary_factor.errors import NotUnitary, UnsupportedClass
from unitary_factor.factorizer import commutator_verify, factorize, verify_word
from unitary_factor.generators import Gen, Word, build_generator, evaluate, m1, m2
from unitary_factor.harness import gen_random_input, haar_unitary
from unitary_factor.kernel import BlockOperator, from_dense, identity, shift, window_residual

from schema_util import validate

STAGE_INVARIANTS = (
    "positive_corner.negativity",
    "self_adjoint_form.U' self-adjoint",
    "canonical_form.uR^2u*+XX*=1",
    "canonical_form.vR^2v*+X*X=1",
    "canonical_form.uRT+XvR=0",
    "canonical_form.vRT+X*uR=0",
    "self_adjoint_form.delta*delta=q",
    "self_adjoint_form.delta delta*=p",
)


def diag_unitary(seed, n):
    return from_dense(haar_unitary(seed, n), 1.0)


class TestExamples:
    def test_identity(self):
        word, trace = factorize(BlockOperator.identity())
        assert len(word) <= 2 and trace.residual == 0

    def test_swap(self):
        word, trace = factorize(build_generator(8))
        assert Gen(8) in word.letters and trace.residual <= 1e-12

    def test_random_lengths_agree_across_dims(self):
        lengths = set()
        for n in (4, 8, 16):
            word, trace = factorize(gen_random_input(7, n))
            assert trace.residual <= 1e-8
            lengths.add(len(word))
        assert len(lengths) == 1

    def test_generator_inverse_shortcut(self):
        word, _ = factorize(build_generator(2).H)
        assert word.letters == (Gen(2, True),)

    def test_block_diagonal_shortcut(self):
        U = BlockOperator.diag(diag_unitary(1, 3), diag_unitary(2, 2))
        word, trace = factorize(U)
        assert len(word) == 1 and word.generator_count == 0 and trace.residual <= 1e-14


class TestBranches:
    @pytest.mark.parametrize("index", range(1, 9))
    def test_generators_without_shortcuts(self, index):
        word, trace = factorize(build_generator(index), shortcuts=False)
        assert trace.residual <= 1e-12 and not trace.failed_checks()

    def test_adjoint_flip(self):
        U = build_generator(4) @ build_generator(8)
        word, trace = factorize(U, shortcuts=False)
        assert trace.flipped
        assert trace.residual <= 1e-12

    def test_swap_of_p_and_q(self):
        U = build_generator(8) @ m2(shift(3)) @ build_generator(8)
        word, trace = factorize(U, shortcuts=False)
        notes = [n for s in trace.steps for n in s.notes]
        assert any("swapped" in n for n in notes)
        assert Gen(8) in word.letters and trace.residual <= 1e-12

    def test_lemma_targets(self):
        for k in range(1, 9):
            for U in (m1(shift(k)), m2(shift(k))):
                _, trace = factorize(U)
                assert trace.residual <= 1e-12

    def test_conjugated_random_input(self):
        D = BlockOperator.diag(diag_unitary(3, 5), diag_unitary(4, 2))
        U = D @ gen_random_input(3, 6) @ build_generator(1)
        word, trace = factorize(U)
        assert trace.residual <= 1e-8 and not trace.failed_checks()


class TestStageInvariants:
    @pytest.mark.parametrize("n", [2, 3, 5, 8])
    def test_invariants_recorded_and_small(self, n):
        _, trace = factorize(gen_random_input(11, n))
        checks = trace.checks
        for name in STAGE_INVARIANTS:
            assert checks[name] <= 1e-9, name
        assert trace.max_check <= 1e-9

    def test_abs_of_corner_identity_holds(self):
        _, trace = factorize(gen_random_input(5, 6))
        assert trace.checks["self_adjoint_form.|X|=q+vTv*"] <= 1e-9

    def test_emitted_letters_compose_to_input(self):
        U = gen_random_input(2, 4)
        word, trace = factorize(U)
        emitted = [x for s in trace.steps for x in s.emitted]
        assert sorted(map(id, emitted)) == sorted(map(id, word.letters))

    def test_random_word_shape(self):
        word, _ = factorize(gen_random_input(1, 8))
        gens = [x.index for x in word.letters if isinstance(x, Gen)]
        assert gens == [3, 3, 3, 3]
        assert len(word) == 12


class TestErrors:
    def test_not_unitary(self):
        S = shift(1)
        with pytest.raises(NotUnitary) as exc:
            factorize(BlockOperator.diag(S, S.H) + build_generator(1))
        assert exc.value.stage == "input"

    def test_unsupported_class_names_stage(self):
        U = build_generator(2) @ build_generator(3)
        with pytest.raises(UnsupportedClass) as exc:
            factorize(U, shortcuts=False)
        assert exc.value.stage == "orientation"
        assert "[orientation]" in str(exc.value)


class TestVerify:
    def test_empty_word(self):
        assert verify_word(Word(), BlockOperator.identity()) == 0

    def test_swap_letter(self):
        assert verify_word(Word([Gen(8)]), build_generator(8)) == 0

    def test_detects_mismatch(self):
        assert verify_word(Word([Gen(1)]), build_generator(4)) > 0.1

    @settings(max_examples=10)
    @given(st.integers(0, 10_000), st.sampled_from([1, 2, 3, 4, 6, 9]))
    def test_round_trip(self, seed, n):
        U = gen_random_input(seed, n)
        word, trace = factorize(U)
        assert verify_word(word, U, 64 + 2 * U.reach()) <= 1e-8
        assert not trace.failed_checks()
        back = Word.from_json(json.loads(word.dumps()))
        assert window_residual(evaluate(back), evaluate(word), 64) == 0


class TestCommutator:
    def test_trivial(self):
        one = identity()
        assert commutator_verify(one, one, one)

    def test_self_commutator(self):
        A = diag_unitary(3, 4)
        assert commutator_verify(identity(), A, A)

    def test_rotation_generically_fails(self):
        T = identity() * np.exp(0.7j)
        fails = [not commutator_verify(T, diag_unitary(s, 3), diag_unitary(s + 100, 3)) for s in range(5)]
        assert all(fails)


class TestTraceExport:
    def test_schema_and_content(self):
        word, trace = factorize(gen_random_input(4, 4))
        data = json.loads(trace.dumps())
        validate(data, "trace.schema.json")
        names = [s["name"] for s in data["steps"]]
        assert names == [
            "orientation",
            "positive_corner",
            "canonical_form",
            "self_adjoint_form",
            "split_kernel",
            "isometry_extension",
            "functional_calculus",
            "assemble",
        ]
        assert sum(len(s["emitted"]) for s in data["steps"]) == len(word)

    def test_operators_on_request(self):
        _, trace = factorize(gen_random_input(4, 2))
        data = trace.to_dict(include_operators=True)
        assert any("operator" in s for s in data["steps"])
        assert all("operator" not in s for s in trace.to_dict()["steps"])
