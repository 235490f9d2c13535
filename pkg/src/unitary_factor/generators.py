"""The eight generators, words over them and block-diagonal unitaries.

For an isometry ``u`` with defect projection ``p_u = 1 - uu*`` the two
families are::

    M1(u) = [[u, p_u], [0, u*]]
    M2(u) = 1/sqrt2 [[1, u*], [u, -uu* + sqrt2 p_u]]

and ``M4`` is the swap ``[[0, 1], [1, 0]]``. Generators ``U1..U8`` are, in
this fixed order: ``M1(S), M1(L), M2(1), M2(S), M2(L), M2(S^2), M2(L^2), M4``.

A :class:`Word` is a product of letters, each either a generator (or its
inverse) or a block-diagonal unitary ``diag(a, b)``. ``evaluate`` multiplies
left to right, so the leftmost letter is applied last.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Union

import numpy as np

from .errors import UnsupportedDefect
from .kernel import (
    BlockOperator,
    StructuredOperator,
    _assemble,
    dyadic,
    from_dense,
    identity,
    op_equal,
    shift,
    window_residual,
    zero,
)
from .spectral import finite_basis, projection_rank

SQRT2 = np.sqrt(2.0)

GENERATOR_NAMES = {
    1: "M1(S)",
    2: "M1(L)",
    3: "M2(1)",
    4: "M2(S)",
    5: "M2(L)",
    6: "M2(S^2)",
    7: "M2(L^2)",
    8: "M4",
}


def defect(u: StructuredOperator) -> StructuredOperator:
    """``p_u = 1 - uu*``."""
    return identity() - u @ u.H


def m1(u: StructuredOperator) -> BlockOperator:
    return BlockOperator(u, defect(u), zero(), u.H)


def m2(u: StructuredOperator) -> BlockOperator:
    r = 1 / SQRT2
    return BlockOperator(identity() * r, u.H * r, u * r, (u @ u.H) * -r + defect(u))


def swap() -> BlockOperator:
    return BlockOperator(zero(), identity(), identity(), zero())


@lru_cache(maxsize=None)
def build_generator(index: int) -> BlockOperator:
    S, L = shift(1), dyadic(1)
    table = {
        1: lambda: m1(S),
        2: lambda: m1(L),
        3: lambda: m2(identity()),
        4: lambda: m2(S),
        5: lambda: m2(L),
        6: lambda: m2(shift(2)),
        7: lambda: m2(dyadic(2)),
        8: swap,
    }
    if index not in table:
        raise ValueError(f"generator index must be 1..8, got {index}")
    return table[index]()


# ---------------------------------------------------------------------------
# letters and words


@dataclass(frozen=True)
class Gen:
    index: int
    inverse: bool = False

    def matrix(self) -> BlockOperator:
        g = build_generator(self.index)
        return g.H if self.inverse else g

    def inv(self) -> "Gen":
        return Gen(self.index, not self.inverse)

    def to_dict(self) -> dict:
        return {"gen": self.index, "inv": self.inverse}


@dataclass(frozen=True, eq=False)
class Diag:
    """Block-diagonal unitary ``diag(a, b)`` acting on ``X (+) X^perp``."""

    a: StructuredOperator
    b: StructuredOperator
    label: str = field(default="", compare=False)

    def matrix(self) -> BlockOperator:
        return BlockOperator.diag(self.a, self.b)

    def inv(self) -> "Diag":
        return Diag(self.a.H, self.b.H, self.label + "^-1" if self.label else "")

    def to_dict(self) -> dict:
        return {"diag": [self.a.to_dict(), self.b.to_dict()]}


Letter = Union[Gen, Diag]


def letter_from_dict(data: dict) -> Letter:
    if "gen" in data:
        return Gen(int(data["gen"]), bool(data.get("inv", False)))
    a, b = data["diag"]
    return Diag(StructuredOperator.from_dict(a), StructuredOperator.from_dict(b))


@dataclass(frozen=True)
class Word:
    letters: tuple = ()

    def __init__(self, letters: Iterable[Letter] = ()):
        object.__setattr__(self, "letters", tuple(letters))

    def __len__(self) -> int:
        return len(self.letters)

    def __add__(self, other: "Word") -> "Word":
        return Word(self.letters + tuple(other.letters))

    def __iter__(self):
        return iter(self.letters)

    @property
    def generator_count(self) -> int:
        """Length not counting block-diagonal letters."""
        return sum(isinstance(x, Gen) for x in self.letters)

    def inverse(self) -> "Word":
        return Word(x.inv() for x in reversed(self.letters))

    def to_json(self) -> list:
        return [x.to_dict() for x in self.letters]

    @classmethod
    def from_json(cls, data: list) -> "Word":
        return cls(letter_from_dict(x) for x in data)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def evaluate(word: Word) -> BlockOperator:
    """Ordered product of the letter matrices; the empty word is the identity."""
    out = None
    for x in word:
        m = x.matrix()
        out = m if out is None else out @ m
    return BlockOperator.identity() if out is None else out


# ---------------------------------------------------------------------------
# words for M1(S^k) and M2(S^k)


@dataclass
class PowerResult:
    word: Word
    target: BlockOperator
    corner: StructuredOperator  # the upper-right block A of M1(S)^k
    correction: StructuredOperator  # U = (1 - p_{S^k}) + A


def lemma_part_power(k: int) -> PowerResult:
    """Word for ``M1(S^k)``: ``M1(S)^k`` followed by ``diag(1, U*)``.

    ``M1(S)^k = [[S^k, A], [0, S*^k]]`` where ``A`` is a partial isometry with
    initial and final space ``Im p_{S^k}``; ``U = (1 - p_{S^k}) + A`` is unitary.
    When ``U`` is the identity (``k = 1``) the correction letter is omitted.
    """
    if k < 1:
        raise ValueError("k must be positive")
    g = build_generator(1)
    P = g
    for _ in range(k - 1):
        P = P @ g
    A = P.ur
    pk = defect(shift(k))
    U = identity() - pk + A
    letters = [Gen(1)] * k
    if not op_equal(U, identity(), 1e-14):
        letters.append(Diag(identity(), U.H, f"corr{k}"))
    return PowerResult(Word(letters), m1(shift(k)), A, U)


def rotation(k: int) -> StructuredOperator:
    """Unitary with ``e_1 -> (e_1 + e_k)/sqrt2``, ``e_k -> (e_1 - e_k)/sqrt2``, identity elsewhere."""
    M = np.eye(k, dtype=complex)
    r = 1 / SQRT2
    M[0, 0], M[k - 1, 0], M[0, k - 1], M[k - 1, k - 1] = r, r, r, -r
    return from_dense(M, 1.0)


@dataclass
class CosResult:
    word: Word
    target: BlockOperator
    steps: list = field(default_factory=list)  # (k, ||X - uV||) per induction step


@lru_cache(maxsize=None)
def lemma_part_cos(k: int) -> CosResult:
    """Word for ``M2(S^k)``.

    ``k = 1, 2`` are the generators ``M2(S)``, ``M2(S^2)``. Otherwise
    ``M2(S^k) = diag(1, u*) M1(S)* M2(S^{k-2}) M1(S)`` with ``u`` the rotation
    of ``e_1, e_k``; each step checks ``X = uV`` on columns.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if k == 1:
        return CosResult(Word([Gen(4)]), build_generator(4))
    if k == 2:
        return CosResult(Word([Gen(6)]), build_generator(6))
    prev = lemma_part_cos(k - 2)
    g = build_generator(1)
    conj = g.H @ prev.target @ g
    X = conj.lr * SQRT2
    Sk = shift(k)
    V = (Sk @ Sk.H) * -1.0 + defect(Sk) * SQRT2
    u = rotation(k)
    res = window_residual(X, u @ V, 64 + k)
    letters = [Diag(identity(), u.H, f"rot{k}"), Gen(1, True), *prev.word.letters, Gen(1)]
    return CosResult(Word(letters), m2(Sk), prev.steps + [(k, res)])


# ---------------------------------------------------------------------------
# isometries up to block-diagonal unitaries


@dataclass
class StandardForm:
    """``left @ u @ right`` equals the standard isometry ``S^k``, ``L`` or ``1``."""

    left: StructuredOperator
    right: StructuredOperator
    kind: str  # "unitary", "shift" or "dyadic"
    k: int = 0

    @property
    def standard(self) -> StructuredOperator:
        if self.kind == "shift":
            return shift(self.k)
        if self.kind == "dyadic":
            return dyadic(self.k)
        return identity()

    def trivial(self) -> bool:
        one = identity()
        return op_equal(self.left, one, 1e-12) and op_equal(self.right, one, 1e-12)


def isometry_to_standard(u: StructuredOperator, window: int = 64, tol: float = 1e-9) -> StandardForm:
    """Conjugators ``d1, d2`` with ``d1 u d2`` standard, chosen by the defect of ``u``."""
    one = identity()
    if window_residual(u.H @ u, one, window + u.reach()) > tol:
        raise UnsupportedDefect("not an isometry")
    p = defect(u)
    k = projection_rank(p)
    if k == 0:
        return StandardForm(u.H, one, "unitary")
    if p.tails:
        for power in (1, 2):
            L = dyadic(power)
            pL = defect(L)
            if op_equal(p, pL, 1e-12):
                return StandardForm(L @ u.H + pL, one, "dyadic", power)
        raise UnsupportedDefect("infinite defect not of the dyadic form")
    f = finite_basis(p)
    Sk = shift(k)
    # d1 = S^k u* + sum_j e_j f_j*
    F = _assemble(f.conj().T, [], f.shape[0])
    return StandardForm(Sk @ u.H + F, one, "shift", k)


def _conjugated(word: Word, left: Diag, right: Diag, trivial: bool) -> Word:
    if trivial:
        return word
    return Word([left]) + word + Word([right])


def word_m1(u: StructuredOperator) -> Word:
    """Word for ``M1(u)``: ``diag(d1*, d2) M1(std) diag(d2*, d1)``."""
    sf = isometry_to_standard(u)
    if sf.kind == "unitary":
        return Word([Diag(u, u.H, "M1(unitary)")])
    if sf.kind == "dyadic" and sf.k != 1:
        raise UnsupportedDefect("M1 of a dyadic power above 1 has no word here")
    core = lemma_part_power(sf.k).word if sf.kind == "shift" else Word([Gen(2)])
    d1, d2 = sf.left, sf.right
    return _conjugated(core, Diag(d1.H, d2), Diag(d2.H, d1), sf.trivial())


def word_m2(u: StructuredOperator) -> Word:
    """Word for ``M2(u)``: ``diag(d2, d1*) M2(std) diag(d2*, d1)``."""
    sf = isometry_to_standard(u)
    if sf.kind == "shift":
        core = lemma_part_cos(sf.k).word
    elif sf.kind == "dyadic":
        core = Word([Gen(5 if sf.k == 1 else 7)])
    else:
        core = Word([Gen(3)])
    d1, d2 = sf.left, sf.right
    return _conjugated(core, Diag(d2, d1.H), Diag(d2.H, d1), sf.trivial())
