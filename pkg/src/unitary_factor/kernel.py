"""Exact-structure arithmetic for operators on l2(N) and l2(N) + l2(N).

A :class:`StructuredOperator` is a finite complex block (columns ``1..cutoff``)
plus a finite list of weighted *affine tails*: each tail sends ``e_i`` to
``w * e_{(a*i + b)/d}`` for ``i`` in an arithmetic progression beyond the
cutoff. The shift ``S`` (``i -> i+1``) and the dyadic isometry ``L``
(``i -> 2i``) live in this class together with every finite-rank operator,
and the class is closed under the ring operations and adjoints. Index
bookkeeping is exact integer arithmetic; only the weights are floating point.

Basis indices start at 1.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import ClassOverflow

__all__ = [
    "Progression",
    "AffineInjection",
    "TailTerm",
    "StructuredOperator",
    "BlockOperator",
    "progression_intersect",
    "affine_compose",
    "affine_invert",
    "op_apply",
    "op_mul",
    "op_add",
    "op_scale",
    "op_adjoint",
    "op_equal",
    "op_window_eq",
    "window_residual",
    "is_unitary_window",
    "identity",
    "zero",
    "shift",
    "dyadic",
    "from_dense",
    "rank_one",
]

ZERO_TOL = 1e-14
MAX_PERIOD = 1 << 16


# ---------------------------------------------------------------------------
# index progressions


@dataclass(frozen=True, order=True)
class Progression:
    """``{i >= start : i = residue (mod modulus)}``; ``start`` is the least member."""

    start: int
    modulus: int
    residue: int

    @classmethod
    def make(cls, start: int = 1, modulus: int = 1, residue: int | None = None) -> "Progression":
        if modulus < 1:
            raise ValueError(f"modulus must be positive, got {modulus}")
        start = max(int(start), 1)
        residue = start % modulus if residue is None else int(residue) % modulus
        first = start + (residue - start) % modulus
        return cls(first, modulus, residue)

    def contains(self, i: int) -> bool:
        return i >= self.start and (i - self.residue) % self.modulus == 0

    def members(self, upto: int) -> np.ndarray:
        """Members ``<= upto`` as an int64 array."""
        if upto < self.start:
            return np.empty(0, dtype=np.int64)
        return np.arange(self.start, upto + 1, self.modulus, dtype=np.int64)

    def first_after(self, n: int) -> int:
        if n < self.start:
            return self.start
        return n + 1 + (self.residue - n - 1) % self.modulus

    def restrict(self, n: int) -> "Progression":
        """Members strictly greater than ``n``."""
        return Progression(self.first_after(n), self.modulus, self.residue)


def progression_intersect(p1: Progression, p2: Progression) -> Progression | None:
    """Exact intersection; ``None`` when the congruences are incompatible."""
    g = math.gcd(p1.modulus, p2.modulus)
    if (p2.residue - p1.residue) % g:
        return None
    m = p1.modulus // g * p2.modulus
    # solve r = p1.residue + p1.modulus * k = p2.residue (mod p2.modulus)
    k = ((p2.residue - p1.residue) // g * pow(p1.modulus // g, -1, p2.modulus // g)) % (
        p2.modulus // g
    ) if p2.modulus // g > 1 else 0
    r = (p1.residue + p1.modulus * k) % m
    return Progression.make(max(p1.start, p2.start), m, r)


# ---------------------------------------------------------------------------
# affine partial injections


@dataclass(frozen=True)
class AffineInjection:
    """The partial injection ``i -> (a*i + b) / d`` on ``domain``."""

    domain: Progression
    a: int
    b: int
    d: int

    @classmethod
    def make(cls, domain: Progression, a: int = 1, b: int = 0, d: int = 1) -> "AffineInjection":
        if a <= 0 or d <= 0:
            raise ValueError("affine maps need a > 0 and d > 0")
        g = reduce(math.gcd, (a, abs(b), d))
        a, b, d = a // g, b // g, d // g
        if (a * domain.start + b) % d or (a * domain.modulus) % d:
            raise ValueError(f"(a*i+b) not divisible by d on {domain}")
        if (a * domain.start + b) // d < 1:
            raise ValueError("image must consist of indices >= 1")
        return cls(domain, a, b, d)

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.a, self.b, self.d)

    def __call__(self, i):
        return (self.a * i + self.b) // self.d

    @property
    def step(self) -> int:
        """Image spacing between consecutive domain members."""
        return self.a * self.domain.modulus // self.d

    def image(self) -> Progression:
        s = self(self.domain.start)
        return Progression(s, self.step, s % self.step)

    def inverse(self) -> "AffineInjection":
        return affine_invert(self)

    def compose(self, g: "AffineInjection") -> "AffineInjection | None":
        return affine_compose(self, g)

    def restrict(self, n: int) -> "AffineInjection":
        return AffineInjection(self.domain.restrict(n), self.a, self.b, self.d)

    def is_identity_map(self) -> bool:
        return self.key == (1, 0, 1)


def affine_invert(f: AffineInjection) -> AffineInjection:
    """``j -> (d*j - b)/a`` on the image progression of ``f``."""
    return AffineInjection.make(f.image(), f.d, -f.b, f.a)


def affine_compose(f: AffineInjection, g: AffineInjection) -> AffineInjection | None:
    """``f o g`` on ``{i in dom g : g(i) in dom f}``, or ``None`` if that is empty."""
    img = g.image()
    meet = progression_intersect(img, f.domain)
    if meet is None:
        return None
    start = (g.d * meet.start - g.b) // g.a
    modulus = g.domain.modulus * (meet.modulus // img.modulus)
    dom = Progression.make(start, modulus, start % modulus)
    return AffineInjection.make(dom, f.a * g.a, f.a * g.b + f.b * g.d, f.d * g.d)


@dataclass(frozen=True)
class TailTerm:
    weight: complex
    map: AffineInjection

    def sort_key(self):
        f = self.map
        return (f.a, f.d, f.b, f.domain.modulus, f.domain.residue, f.domain.start)


# ---------------------------------------------------------------------------
# structured operators


def _divisors(n: int) -> list[int]:
    small = [k for k in range(1, int(math.isqrt(n)) + 1) if n % k == 0]
    return sorted(set(small + [n // k for k in small]))


def _assemble(dense: np.ndarray, tails, cutoff: int = 0) -> "StructuredOperator":
    """Canonicalize raw ``(weight, AffineInjection)`` tails plus a dense block.

    Tail prefixes below the cutoff move into the dense block; tails sharing a
    formula are merged into one term per residue class of the coarsest period
    of their summed weight function.
    """
    tails = [(complex(w), f) for w, f in tails if abs(w) >= ZERO_TOL]
    n = max([int(cutoff), dense.shape[1]] + [f.domain.start - 1 for _, f in tails])

    moves = []
    rows = dense.shape[0]
    for w, f in tails:
        idx = f.domain.members(n)
        if idx.size:
            img = f(idx)
            rows = max(rows, int(img[-1]))
            moves.append((w, idx, img))
    D = np.zeros((rows, n), dtype=complex)
    D[: dense.shape[0], : dense.shape[1]] = dense
    for w, idx, img in moves:
        D[img - 1, idx - 1] += w

    groups = defaultdict(list)
    for w, f in tails:
        groups[f.key].append((w, f.domain.modulus, f.domain.residue))
    out = []
    for key, terms in groups.items():
        period = reduce(math.lcm, (m for _, m, _ in terms), 1)
        if period > MAX_PERIOD:
            raise ClassOverflow(f"tail period {period} exceeds {MAX_PERIOD}")
        wr = np.zeros(period, dtype=complex)
        for w, m, r in terms:
            wr[r::m] += w
        base = np.arange(period)
        for m in _divisors(period):
            if np.all(np.abs(wr - wr[base % m]) <= ZERO_TOL):
                break
        for r in range(m):
            if abs(wr[r]) >= ZERO_TOL:
                f = AffineInjection.make(Progression.make(n + 1, m, r), *key)
                out.append(TailTerm(complex(wr[r]), f))
    out.sort(key=TailTerm.sort_key)

    D[np.abs(D) < ZERO_TOL] = 0
    nz = np.flatnonzero(np.any(D != 0, axis=1))
    D = D[: nz[-1] + 1 if nz.size else 0]
    return StructuredOperator(n, D, tuple(out))


@dataclass(frozen=True, eq=False)
class StructuredOperator:
    """Finite dense block on columns ``1..cutoff`` plus affine tails beyond it.

    ``dense[r-1, c-1]`` is the ``(r, c)`` entry. Instances are canonical when
    built through the module functions; treat them as immutable.
    """

    cutoff: int
    dense: np.ndarray
    tails: tuple[TailTerm, ...]

    # arithmetic sugar
    def __matmul__(self, other):
        if isinstance(other, StructuredOperator):
            return op_mul(self, other)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, StructuredOperator):
            return op_add(self, other)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, StructuredOperator):
            return op_add(self, op_scale(-1.0, other))
        return NotImplemented

    def __neg__(self):
        return op_scale(-1.0, self)

    def __mul__(self, c):
        if isinstance(c, (int, float, complex, np.number)):
            return op_scale(c, self)
        return NotImplemented

    __rmul__ = __mul__

    @property
    def H(self) -> "StructuredOperator":
        return op_adjoint(self)

    @property
    def rows(self) -> int:
        return self.dense.shape[0]

    def reach(self) -> int:
        """Largest index touched by the dense block."""
        return max(self.cutoff, self.rows)

    def is_finite_rank(self) -> bool:
        return not self.tails

    def apply(self, i: int) -> list[tuple[int, complex]]:
        return op_apply(self, i)

    def columns(self, K: int) -> np.ndarray:
        """Exact columns ``1..K`` as a ``(rows, K)`` array; nothing is clipped."""
        pieces = []
        rows = self.rows if self.cutoff else 0
        for t in self.tails:
            idx = t.map.domain.members(K)
            if idx.size:
                img = t.map(idx)
                rows = max(rows, int(img[-1]))
                pieces.append((t.weight, idx, img))
        out = np.zeros((rows, K), dtype=complex)
        k = min(K, self.cutoff)
        out[: self.rows, :k] = self.dense[:, :k]
        for w, idx, img in pieces:
            out[img - 1, idx - 1] += w
        return out

    def to_dense(self, K: int) -> np.ndarray:
        """``K x K`` truncation (rows beyond ``K`` dropped)."""
        c = self.columns(K)
        out = np.zeros((K, K), dtype=complex)
        r = min(K, c.shape[0])
        out[:r] = c[:r]
        return out

    def bumped(self, n: int) -> "StructuredOperator":
        """Same operator re-expressed with cutoff ``max(cutoff, n)``."""
        if n <= self.cutoff:
            return self
        return _assemble(self.dense, [(t.weight, t.map) for t in self.tails], n)

    def to_dict(self) -> dict:
        cols, rows = np.nonzero(self.dense.T)  # column-major order
        dense = [
            [int(r) + 1, int(c) + 1, float(self.dense[r, c].real), float(self.dense[r, c].imag)]
            for c, r in zip(cols, rows)
        ]
        tails = [
            {
                "re": float(t.weight.real),
                "im": float(t.weight.imag),
                "a": t.map.a,
                "b": t.map.b,
                "d": t.map.d,
                "start": t.map.domain.start,
                "mod": t.map.domain.modulus,
                "res": t.map.domain.residue,
            }
            for t in self.tails
        ]
        return {"cutoff": self.cutoff, "dense": dense, "tails": tails}

    @classmethod
    def from_dict(cls, data: dict) -> "StructuredOperator":
        cutoff = int(data.get("cutoff", 0))
        entries = data.get("dense", [])
        rows = max([int(e[0]) for e in entries], default=0)
        cols = max([int(e[1]) for e in entries] + [cutoff])
        D = np.zeros((rows, cols), dtype=complex)
        for row, col, re, im in entries:
            if row < 1 or col < 1:
                raise ValueError("dense indices start at 1")
            D[int(row) - 1, int(col) - 1] += complex(re, im)
        tails = []
        for t in data.get("tails", []):
            dom = Progression.make(int(t["start"]), int(t["mod"]), int(t["res"]))
            tails.append((complex(t["re"], t["im"]), AffineInjection.make(dom, int(t["a"]), int(t["b"]), int(t["d"]))))
        return _assemble(D, tails, cols)

    def __repr__(self):
        return f"StructuredOperator(cutoff={self.cutoff}, dense={self.dense.shape}, tails={len(self.tails)})"


def op_apply(A: StructuredOperator, i: int) -> list[tuple[int, complex]]:
    """Exact column ``A e_i`` as sorted ``(index, coefficient)`` pairs."""
    if i < 1:
        raise ValueError("indices start at 1")
    col = defaultdict(complex)
    if i <= A.cutoff:
        for r in np.flatnonzero(A.dense[:, i - 1]):
            col[int(r) + 1] += A.dense[r, i - 1]
    else:
        for t in A.tails:
            if t.map.domain.contains(i):
                col[int(t.map(i))] += t.weight
    return sorted((k, complex(v)) for k, v in col.items() if abs(v) >= ZERO_TOL)


def _apply_matrix(A: StructuredOperator, X: np.ndarray) -> np.ndarray:
    """``A @ X`` for a finite block of columns ``X`` (rows are indices 1..len)."""
    R, C = X.shape
    k = min(R, A.cutoff)
    rows = A.rows if k else 0
    pieces = []
    for t in A.tails:
        idx = t.map.domain.members(R)
        if idx.size:
            img = t.map(idx)
            rows = max(rows, int(img[-1]))
            pieces.append((t.weight, idx, img))
    Y = np.zeros((rows, C), dtype=complex)
    if k:
        Y[: A.rows] = A.dense[:, :k] @ X[:k]
    for w, idx, img in pieces:
        Y[img - 1] += w * X[idx - 1]
    return Y


def op_mul(A: StructuredOperator, B: StructuredOperator) -> StructuredOperator:
    NA, NB = A.cutoff, B.cutoff
    parts = [(np.arange(1, NB + 1), _apply_matrix(A, B.dense) if NB else np.zeros((0, 0)))]
    raw = []
    for t in B.tails:
        g = t.map
        if NA and g(g.domain.start) <= NA:
            upper = (NA * g.d - g.b) // g.a
            idx = g.domain.members(upper)
            parts.append((idx, t.weight * A.dense[:, g(idx) - 1]))
        for s in A.tails:
            h = s.map.compose(g)
            if h is not None:
                raw.append((s.weight * t.weight, h))
    ncols = max(int(idx[-1]) if len(idx) else 0 for idx, _ in parts)
    nrows = max(block.shape[0] for _, block in parts)
    D = np.zeros((nrows, max(ncols, NB)), dtype=complex)
    for idx, block in parts:
        if len(idx):
            D[: block.shape[0], idx - 1] += block
    return _assemble(D, raw, max(ncols, NB))


def op_add(A: StructuredOperator, B: StructuredOperator) -> StructuredOperator:
    rows = max(A.rows, B.rows)
    cols = max(A.cutoff, B.cutoff)
    D = np.zeros((rows, cols), dtype=complex)
    D[: A.rows, : A.cutoff] += A.dense
    D[: B.rows, : B.cutoff] += B.dense
    raw = [(t.weight, t.map) for t in A.tails + B.tails]
    return _assemble(D, raw, cols)


def op_scale(c, A: StructuredOperator) -> StructuredOperator:
    c = complex(c)
    if c == 0:
        return zero()
    return _assemble(c * A.dense, [(c * t.weight, t.map) for t in A.tails], A.cutoff)


def op_adjoint(A: StructuredOperator) -> StructuredOperator:
    D = A.dense.conj().T
    raw = [(t.weight.conjugate(), affine_invert(t.map)) for t in A.tails]
    return _assemble(D, raw, A.rows)


def op_equal(A: StructuredOperator, B: StructuredOperator, tol: float = 0.0) -> bool:
    """Structural equality after bringing both to a common cutoff."""
    n = max(A.cutoff, B.cutoff)
    A, B = A.bumped(n), B.bumped(n)
    if len(A.tails) != len(B.tails):
        return False
    for s, t in zip(A.tails, B.tails):
        if s.map != t.map or abs(s.weight - t.weight) > tol:
            return False
    rows = max(A.rows, B.rows)
    D = np.zeros((rows, n), dtype=complex)
    D[: A.rows] += A.dense
    D[: B.rows] -= B.dense
    return bool(np.all(np.abs(D) <= tol))


# ---------------------------------------------------------------------------
# constructors


def identity() -> StructuredOperator:
    return _assemble(np.zeros((0, 0)), [(1.0, AffineInjection.make(Progression.make(1)))])


def zero() -> StructuredOperator:
    return StructuredOperator(0, np.zeros((0, 0), dtype=complex), ())


def shift(k: int = 1) -> StructuredOperator:
    """``S^k``: ``e_i -> e_{i+k}``; negative ``k`` gives ``S*^|k|``."""
    if k >= 0:
        return _assemble(np.zeros((0, 0)), [(1.0, AffineInjection.make(Progression.make(1), 1, k, 1))])
    return op_adjoint(shift(-k))


def dyadic(power: int = 1) -> StructuredOperator:
    """``L^power``: ``e_i -> e_{2^power i}``."""
    return _assemble(np.zeros((0, 0)), [(1.0, AffineInjection.make(Progression.make(1), 2**power, 0, 1))])


def from_dense(M, tail_scalar: complex = 0.0) -> StructuredOperator:
    """``M`` on the first ``n`` coordinates (``M`` may be rectangular) plus a
    scalar identity tail beyond ``M``'s column count."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    raw = []
    if tail_scalar != 0:
        raw.append((tail_scalar, AffineInjection.make(Progression.make(M.shape[1] + 1))))
    return _assemble(M, raw, M.shape[1])


def rank_one(x, y) -> StructuredOperator:
    """``x y*`` for finite vectors indexed from 1."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return from_dense(np.outer(x, y.conj()))


# ---------------------------------------------------------------------------
# 2x2 block operators on X + X^perp


@dataclass(frozen=True, eq=False)
class BlockOperator:
    ul: StructuredOperator
    ur: StructuredOperator
    ll: StructuredOperator
    lr: StructuredOperator

    @classmethod
    def identity(cls) -> "BlockOperator":
        return cls(identity(), zero(), zero(), identity())

    @classmethod
    def diag(cls, a: StructuredOperator, b: StructuredOperator) -> "BlockOperator":
        return cls(a, zero(), zero(), b)

    @property
    def blocks(self):
        return ((self.ul, self.ur), (self.ll, self.lr))

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        if not isinstance(other, BlockOperator):
            return NotImplemented
        a, b = self, other
        return BlockOperator(
            a.ul @ b.ul + a.ur @ b.ll,
            a.ul @ b.ur + a.ur @ b.lr,
            a.ll @ b.ul + a.lr @ b.ll,
            a.ll @ b.ur + a.lr @ b.lr,
        )

    def __add__(self, other: "BlockOperator") -> "BlockOperator":
        return BlockOperator(self.ul + other.ul, self.ur + other.ur, self.ll + other.ll, self.lr + other.lr)

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        return BlockOperator(self.ul - other.ul, self.ur - other.ur, self.ll - other.ll, self.lr - other.lr)

    def __mul__(self, c):
        return BlockOperator(c * self.ul, c * self.ur, c * self.ll, c * self.lr)

    __rmul__ = __mul__

    @property
    def H(self) -> "BlockOperator":
        return BlockOperator(self.ul.H, self.ll.H, self.ur.H, self.lr.H)

    def reach(self) -> int:
        return max(x.reach() for x in (self.ul, self.ur, self.ll, self.lr))

    def columns(self, K: int) -> np.ndarray:
        """Exact columns ``1..K`` of both block columns, stacked as
        ``[[ul, ur], [ll, lr]]`` with each block padded to a common row count."""
        cols = [[x.columns(K) for x in row] for row in self.blocks]
        R = max(c.shape[0] for row in cols for c in row)
        out = np.zeros((2 * R, 2 * K), dtype=complex)
        for i, row in enumerate(cols):
            for j, c in enumerate(row):
                out[i * R : i * R + c.shape[0], j * K : (j + 1) * K] = c
        return out

    def to_dict(self) -> dict:
        return {"blocks": [[x.to_dict() for x in row] for row in self.blocks]}

    @classmethod
    def from_dict(cls, data: dict) -> "BlockOperator":
        (a, b), (c, d) = data["blocks"]
        return cls(*(StructuredOperator.from_dict(x) for x in (a, b, c, d)))


def _pad_rows(x: np.ndarray, rows: int) -> np.ndarray:
    if x.shape[0] == rows:
        return x
    out = np.zeros((rows, x.shape[1]), dtype=complex)
    out[: x.shape[0]] = x
    return out


def _column_diff(A: StructuredOperator, B: StructuredOperator, K: int) -> np.ndarray:
    # subtract exact columns rather than forming A - B, whose canonical form
    # would flush sub-ZERO_TOL differences
    a, b = A.columns(K), B.columns(K)
    rows = max(a.shape[0], b.shape[0])
    return _pad_rows(a, rows) - _pad_rows(b, rows)


def window_residual(A, B, K: int) -> float:
    """``max_{i <= K} ||(A - B) e_i||_2`` (over both block columns for block operators)."""
    if isinstance(A, BlockOperator):
        best = 0.0
        for j in range(2):
            sq = sum(
                (np.abs(_column_diff(A.blocks[i][j], B.blocks[i][j], K)) ** 2).sum(axis=0)
                for i in range(2)
            )
            best = max(best, float(np.sqrt(sq.max(initial=0.0))))
        return best
    d = _column_diff(A, B, K)
    if d.size == 0:
        return 0.0
    return float(np.linalg.norm(d, axis=0).max())


def op_window_eq(A, B, K: int, tol: float) -> bool:
    if K < 1 or tol <= 0:
        raise ValueError("need K >= 1 and tol > 0")
    return window_residual(A, B, K) <= tol


def is_unitary_window(A, K: int, tol: float) -> bool:
    one = BlockOperator.identity() if isinstance(A, BlockOperator) else identity()
    return op_window_eq(A.H @ A, one, K, tol) and op_window_eq(A @ A.H, one, K, tol)
