"""Exact structured operators on l2(N) and factorization of 2x2 block unitaries
into words over eight generators and block-diagonal unitaries."""

from .errors import (
    ClassOverflow,
    DimensionObstruction,
    DomainViolation,
    FactorizeError,
    NotHermitian,
    NotIsometricColumn,
    NotUnitary,
    UnsupportedClass,
    UnsupportedDefect,
)
from .factorizer import PipelineTrace, commutator_verify, factorize, verify_word
from .generators import Diag, Gen, Word, build_generator, evaluate, lemma_part_cos, lemma_part_power
from .harness import RunReport, SuiteConfig, gen_random_input, run_suite
from .kernel import BlockOperator, StructuredOperator, dyadic, from_dense, identity, shift, zero

__all__ = [
    "BlockOperator",
    "ClassOverflow",
    "Diag",
    "DimensionObstruction",
    "DomainViolation",
    "FactorizeError",
    "Gen",
    "NotHermitian",
    "NotIsometricColumn",
    "NotUnitary",
    "PipelineTrace",
    "RunReport",
    "StructuredOperator",
    "SuiteConfig",
    "UnsupportedClass",
    "UnsupportedDefect",
    "Word",
    "build_generator",
    "commutator_verify",
    "dyadic",
    "evaluate",
    "factorize",
    "from_dense",
    "gen_random_input",
    "identity",
    "lemma_part_cos",
    "lemma_part_power",
    "run_suite",
    "shift",
    "verify_word",
    "zero",
]
