"""Spectral tools for the "finite Hermitian block + scalar tail" subclass.

Everything here works on operators of the form ``H (+) lam * 1`` where ``H``
is an ``n x n`` Hermitian matrix acting on ``e_1..e_n`` and ``lam`` acts as a
multiple of the identity on ``e_{n+1}, e_{n+2}, ...``. Every spectral
function reduces to a dense eigendecomposition of ``H`` plus the same scalar
function applied to ``lam``.

Subspace helpers at the bottom compute ranks of structured projections and
orthonormal bases of their ranges (Gram-Schmidt over ``e_1, e_2, ...`` in
ascending order), which is what partial-isometry extension needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionObstruction, DomainViolation, NotHermitian, NotIsometricColumn, UnsupportedClass
from .kernel import (
    AffineInjection,
    Progression,
    StructuredOperator,
    _assemble,
    from_dense,
    identity,
    window_residual,
    zero,
)

HERMITIAN_TOL = 1e-12
CLAMP_TOL = 1e-10
ONE_TOL = 1e-9  # eigenvalue |mu - 1| <= ONE_TOL counts as 1
PSD_ZERO_TOL = 1e-13  # eigenvalue of a positive square treated as 0
GS_TOL = 1e-8
INF = math.inf


@dataclass(frozen=True, eq=False)
class FiniteScalarSelfAdjoint:
    dim: int
    block: np.ndarray
    tail_scalar: float

    @classmethod
    def from_operator(cls, A: StructuredOperator, tol: float = HERMITIAN_TOL) -> "FiniteScalarSelfAdjoint":
        lam = 0.0
        if A.tails:
            t = A.tails[0]
            if len(A.tails) > 1 or not t.map.is_identity_map() or t.map.domain.modulus != 1:
                raise UnsupportedClass("tail is not a scalar multiple of the identity")
            if abs(t.weight.imag) > tol:
                raise NotHermitian(f"non-real tail scalar {t.weight}")
            lam = t.weight.real
        n = A.cutoff
        if A.rows > n:
            raise NotHermitian("dense block reaches rows beyond its columns")
        H = np.zeros((n, n), dtype=complex)
        H[: A.rows] = A.dense
        err = np.abs(H - H.conj().T).max(initial=0.0)
        if err > tol:
            raise NotHermitian(f"block not Hermitian (error {err:.2e})")
        return cls(n, (H + H.conj().T) / 2, float(lam))

    def to_operator(self) -> StructuredOperator:
        return from_dense(self.block, self.tail_scalar)


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    tail_scalar: float

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def _as_fssa(T) -> FiniteScalarSelfAdjoint:
    if isinstance(T, FiniteScalarSelfAdjoint):
        return T
    return FiniteScalarSelfAdjoint.from_operator(T)


def eig(T) -> SpectralData:
    """Ascending eigendecomposition of the finite block (LAPACK ``heevd``)."""
    T = _as_fssa(T)
    if T.dim == 0:
        return SpectralData(np.zeros(0), np.zeros((0, 0), dtype=complex), T.tail_scalar)
    w, V = np.linalg.eigh(T.block)
    return SpectralData(w, V, T.tail_scalar)


def _clamped(lo: float, hi: float, name: str) -> Callable:
    def check(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < lo - CLAMP_TOL) or np.any(x > hi + CLAMP_TOL):
            raise DomainViolation(f"{name}: spectrum {x.min():.3g}..{x.max():.3g} outside [{lo}, {hi}]")
        return np.clip(x, lo, hi)

    return check


_FUNCTIONS = {
    "arccos": (_clamped(-1.0, 1.0, "arccos"), np.arccos),
    "sqrt": (_clamped(0.0, np.inf, "sqrt"), np.sqrt),
    "cos": (None, np.cos),
    "sin": (None, np.sin),
    "expi": (None, None),  # x -> exp(i*theta*x)
}


def _apply_named(names: Sequence[str], x: np.ndarray, theta: float) -> np.ndarray:
    for name in names:
        if name not in _FUNCTIONS:
            raise ValueError(f"unknown function {name!r}; choose from {sorted(_FUNCTIONS)}")
        check, fn = _FUNCTIONS[name]
        if check is not None:
            if np.iscomplexobj(x):
                if np.abs(np.imag(x)).max(initial=0.0) > CLAMP_TOL:
                    raise DomainViolation(f"{name} applied to non-real values")
                x = np.real(x)
            x = check(x)
        x = np.exp(1j * theta * x) if name == "expi" else fn(x)
    return x


def func_calc(T, f: str | Sequence[str], theta: float = 1.0) -> StructuredOperator:
    """``f(T)`` for ``T`` in the finite-block + scalar-tail class.

    ``f`` is a name from ``arccos, sqrt, cos, sin, expi`` or a sequence of
    names applied first-to-last, so ``("arccos", "expi")`` is
    ``exp(i*theta*arccos T)``.
    """
    names = (f,) if isinstance(f, str) else tuple(f)
    sd = eig(T)
    vals = _apply_named(names, np.append(sd.eigenvalues, sd.tail_scalar), theta)
    fw, flam = vals[:-1], complex(vals[-1])
    V = sd.eigenvectors
    block = (V * fw) @ V.conj().T if V.size else np.zeros((0, 0))
    return from_dense(block, flam)


def _spectral_map(T, fn: Callable[[np.ndarray], np.ndarray]) -> StructuredOperator:
    sd = eig(T)
    vals = fn(np.append(sd.eigenvalues, sd.tail_scalar))
    V = sd.eigenvectors
    block = (V * vals[:-1]) @ V.conj().T if V.size else np.zeros((0, 0))
    return from_dense(block, complex(vals[-1]))


def spectral_projection(T, predicate: Callable[[np.ndarray], np.ndarray]) -> StructuredOperator:
    """Projection onto the span of eigenvectors whose eigenvalue satisfies ``predicate``."""
    return _spectral_map(T, lambda x: predicate(x).astype(float))


def one_eigenspace(T, tol: float = ONE_TOL) -> StructuredOperator:
    """Projection onto ``ker(1 - T)`` with the ``|mu - 1| <= tol`` convention."""
    return spectral_projection(T, lambda x: np.abs(x - 1.0) <= tol)


def kernel_dimension(P, tol: float = PSD_ZERO_TOL) -> float:
    """``dim ker P`` for positive ``P`` in the class (``inf`` if the tail vanishes)."""
    sd = eig(P)
    count = int(np.sum(sd.eigenvalues <= tol))
    return INF if abs(sd.tail_scalar) <= tol else count


def _pinv_sqrt_parts(P, support_tol: float):
    """Square root of positive ``P`` and its pseudo-inverse on ``{mu > support_tol}``."""
    def root(x):
        return np.sqrt(np.clip(x, 0.0, None))

    def inv_root(x):
        out = np.zeros_like(x)
        keep = x > support_tol
        out[keep] = 1.0 / np.sqrt(x[keep])
        return out

    sd = eig(P)
    if np.any(np.append(sd.eigenvalues, sd.tail_scalar) < -CLAMP_TOL):
        raise DomainViolation("operator is not positive")
    return _spectral_map(P, root), _spectral_map(P, inv_root)


def polar_decompose(T: StructuredOperator, support_tol: float = PSD_ZERO_TOL):
    """``T = u |T|``; returns ``(u, |T|)`` with ``|T|`` as a :class:`FiniteScalarSelfAdjoint`.

    ``u`` is ``T`` times the pseudo-inverse of ``|T|``: a partial isometry from
    ``(ker T)^perp`` onto the closure of the range of ``T``.
    """
    try:
        P = FiniteScalarSelfAdjoint.from_operator(T.H @ T)
    except UnsupportedClass as exc:
        raise UnsupportedClass(f"T*T outside the supported class: {exc}") from None
    absT, pinv = _pinv_sqrt_parts(P, support_tol)
    return T @ pinv, FiniteScalarSelfAdjoint.from_operator(absT)


def isometry_column_factor(
    A: StructuredOperator,
    B: StructuredOperator,
    support_tol: float = PSD_ZERO_TOL,
    window: int = 64,
    tol: float = 1e-9,
) -> StructuredOperator:
    """Partial isometry ``v`` with ``B = v (1 - A*A)^{1/2}`` for an isometric column ``[A; B]``."""
    one = identity()
    AA = A.H @ A
    if window_residual(AA + B.H @ B, one, window + max(A.reach(), B.reach())) > tol:
        raise NotIsometricColumn("A*A + B*B differs from the identity")
    try:
        P = FiniteScalarSelfAdjoint.from_operator(one - AA)
    except UnsupportedClass as exc:
        raise UnsupportedClass(f"1 - A*A outside the supported class: {exc}") from None
    _, pinv = _pinv_sqrt_parts(P, support_tol)
    return B @ pinv


# ---------------------------------------------------------------------------
# projections and their ranges


def projection_rank(P: StructuredOperator) -> float:
    if P.tails:
        return INF
    k = min(P.rows, P.cutoff)
    return int(round(float(np.trace(P.dense[:k, :k]).real)))


def projection_corank(P: StructuredOperator) -> float:
    return projection_rank(identity() - P)


def dim_key(P: StructuredOperator) -> tuple[float, float]:
    """Sort key for ``dim Im P``: infinite ranges are ordered by their codimension."""
    r = projection_rank(P)
    return (r, -projection_corank(P)) if r == INF else (r, 0.0)


def _gram_schmidt(columns: np.ndarray, tol: float = GS_TOL) -> np.ndarray:
    basis = []
    for j in range(columns.shape[1]):
        x = columns[:, j].copy()
        for _ in range(2):
            for q in basis:
                x -= q * np.vdot(q, x)
        nx = np.linalg.norm(x)
        if nx > tol:
            basis.append(x / nx)
    if not basis:
        return np.zeros((columns.shape[0], 0), dtype=complex)
    return np.stack(basis, axis=1)


def _is_cofinite(P: StructuredOperator) -> bool:
    return (
        len(P.tails) == 1
        and P.tails[0].map.is_identity_map()
        and P.tails[0].map.domain.modulus == 1
        and abs(P.tails[0].weight - 1) <= 1e-12
    )


def finite_basis(P: StructuredOperator) -> np.ndarray:
    """Orthonormal basis (columns) of ``Im P`` for a finite-rank projection."""
    if P.tails:
        raise DimensionObstruction("range is infinite-dimensional")
    n = P.reach()
    Q = _gram_schmidt(P.columns(n) if n else np.zeros((0, 0)))
    if Q.shape[1] != projection_rank(P):
        raise DimensionObstruction("Gram-Schmidt rank disagrees with the trace rank")
    return Q


def cofinite_basis(P: StructuredOperator) -> tuple[np.ndarray, int]:
    """``(Q, N)`` with ``Im P = span(Q) (+) span(e_i : i > N)`` for a projection
    whose tail is the identity."""
    if not _is_cofinite(P):
        raise DimensionObstruction("projection is neither finite rank nor of finite codimension")
    N = P.cutoff
    if P.rows > N:
        raise DimensionObstruction("projection block is not square")
    Q = _gram_schmidt(P.columns(N)[:N] if N else np.zeros((0, 0)))
    expected = N - projection_corank(P)
    if Q.shape[1] != expected:
        raise DimensionObstruction("Gram-Schmidt rank disagrees with the trace rank")
    return Q, N


def basis_prefix(P: StructuredOperator, k: int) -> np.ndarray:
    """First ``k`` vectors of the ascending Gram-Schmidt basis of ``Im P``."""
    if k == 0:
        return np.zeros((0, 0), dtype=complex)
    limit = P.reach() + 4 * k + 8
    Q = _gram_schmidt(P.columns(limit))
    if Q.shape[1] < k:
        raise DimensionObstruction(f"could not find {k} basis vectors of the range")
    return Q[:, :k]


def _dense_map(target: np.ndarray, source: np.ndarray) -> StructuredOperator:
    """``sum_k target_k source_k*`` as a finite structured operator."""
    if target.size == 0 or source.size == 0:
        return zero()
    M = target @ source.conj().T
    return _assemble(M, [], M.shape[1])


def _extend_rows(Q: np.ndarray, rows: int) -> np.ndarray:
    out = np.zeros((rows, Q.shape[1]), dtype=complex)
    out[: Q.shape[0]] = Q
    return out


def ordered_bijection(P: StructuredOperator, Q: StructuredOperator) -> StructuredOperator:
    """Partial isometry from ``Im P`` onto ``Im Q`` sending the k-th basis vector
    of one to the k-th basis vector of the other."""
    rp, rq = projection_rank(P), projection_rank(Q)
    if rp != INF and rq != INF:
        if rp != rq:
            raise DimensionObstruction(f"ranks differ ({rp} vs {rq})")
        a, b = finite_basis(P), finite_basis(Q)
        return _dense_map(b, a)
    if rp != rq:
        raise DimensionObstruction("one range is finite and the other infinite")
    a, Np = cofinite_basis(P)
    b, Nq = cofinite_basis(Q)
    # pad the shorter finite basis with e_{N+1}, e_{N+2}, ...
    if a.shape[1] < b.shape[1]:
        extra = b.shape[1] - a.shape[1]
        a = np.hstack([_extend_rows(a, Np + extra), np.eye(Np + extra, dtype=complex)[:, Np:]])
        Np += extra
    elif b.shape[1] < a.shape[1]:
        extra = a.shape[1] - b.shape[1]
        b = np.hstack([_extend_rows(b, Nq + extra), np.eye(Nq + extra, dtype=complex)[:, Nq:]])
        Nq += extra
    M = np.zeros((Nq, Np), dtype=complex)
    if a.shape[1]:
        M[:Nq] = _extend_rows(b, Nq) @ _extend_rows(a, Np).conj().T
    tail = AffineInjection.make(Progression.make(Np + 1), 1, Nq - Np, 1)
    return _assemble(M, [(1.0, tail)], Np)


def is_partial_isometry(u: StructuredOperator, K: int = 64, tol: float = 1e-9) -> bool:
    """``u*u`` and ``uu*`` idempotent on the window."""
    K = K + u.reach()
    p, q = u.H @ u, u @ u.H
    return window_residual(p @ p, p, K) <= tol and window_residual(q @ q, q, K) <= tol


def extend_partial_isometry(
    u: StructuredOperator,
    mode: str = "isometry",
    fixed: StructuredOperator | None = None,
    window: int = 64,
    tol: float = 1e-9,
) -> StructuredOperator:
    """Extend ``u`` (plus the optional constraint piece ``fixed``) to an isometry or unitary.

    ``fixed`` is a partial isometry that the result must agree with on its
    initial space; ``u + fixed`` must itself be a partial isometry. The
    remaining domain deficiency is mapped onto the codomain deficiency by the
    ascending Gram-Schmidt bases.
    """
    if mode not in ("isometry", "unitary"):
        raise ValueError("mode must be 'isometry' or 'unitary'")
    c = u if fixed is None else u + fixed
    if not is_partial_isometry(c, window, tol):
        raise DimensionObstruction("input is not a partial isometry")
    one = identity()
    dom = one - c.H @ c
    cod = one - c @ c.H
    rd, rc = projection_rank(dom), projection_rank(cod)
    if mode == "unitary":
        if rd == 0 and rc == 0:
            return c
        return c + ordered_bijection(dom, cod)
    if rd == 0:
        return c
    if rd != INF:
        if rc < rd:
            raise DimensionObstruction(f"domain deficiency {rd} exceeds codomain deficiency {rc}")
        a = finite_basis(dom)
        if rc == rd:
            return c + ordered_bijection(dom, cod)
        b = basis_prefix(cod, a.shape[1])
        return c + _dense_map(b, a)
    if rc != INF:
        raise DimensionObstruction("infinite domain deficiency, finite codomain deficiency")
    try:
        return c + ordered_bijection(dom, cod)
    except DimensionObstruction as exc:
        raise DimensionObstruction(f"no structured extension: {exc}") from None
