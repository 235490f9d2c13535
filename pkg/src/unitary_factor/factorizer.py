"""Factor a unitary on ``X (+) X^perp`` into generator and block-diagonal letters.

Given ``U = [[T, M], [N, K]]`` the pipeline

1. replaces ``U`` by ``U*`` when ``dim ker T > dim ker T*``;
2. left-multiplies by ``M1(w)*`` (``w`` an isometry extending the polar part
   of ``T``) so the corner becomes ``|T|``;
3. writes ``N = u R`` and ``M = R v*`` with ``R = (1 - T^2)^{1/2}``;
4. right-multiplies by ``diag(1, s)`` with ``s = v u* + delta*`` and
   ``delta = p X q``, giving the self-adjoint form
   ``[[T, R u*], [u R, -u T u* + p]]``;
5. splits off ``q' = ker(1 - T)`` (swapping the blocks when ``p`` is the
   smaller projection) and conjugates by ``diag(1, b)`` so ``q' <= p``;
6. extends ``u`` to an isometry ``w`` and peels off the partial swap
   ``Z = [[1-q', q'], [q', 1-q']] = M2(1) diag(1, 1-2q') M2(1)``;
7. closes with
   ``diag(1,-i) M2(w) diag(A, w B w* - p_w) M2(w) diag(1,-i)`` where
   ``A = exp(i arccos T')`` and ``B = A*``;
8. assembles (and, after step 1, inverts) the accumulated word.

Each stage records residuals of the identities it relies on.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import FactorizeError, NotUnitary, UnsupportedClass
from .generators import (
    Diag,
    Gen,
    Word,
    build_generator,
    defect,
    evaluate,
    m1,
    word_m1,
    word_m2,
)
from .kernel import (
    BlockOperator,
    StructuredOperator,
    identity,
    is_unitary_window,
    op_equal,
    window_residual,
    zero,
)
from .spectral import (
    INF,
    ONE_TOL,
    FiniteScalarSelfAdjoint,
    _dense_map,
    basis_prefix,
    dim_key,
    eig,
    extend_partial_isometry,
    finite_basis,
    func_calc,
    isometry_column_factor,
    kernel_dimension,
    one_eigenspace,
    polar_decompose,
    projection_rank,
)

CHECK_TOL = 1e-9
# eigenvalue nu of 1 - T^2 counts as zero exactly when mu of T counts as 1
SUPPORT_TOL = 1.0 - (1.0 - ONE_TOL) ** 2


def _letter_summary(x) -> dict:
    if isinstance(x, Gen):
        return {"gen": x.index, "inv": x.inverse}
    return {"diag": x.label or "D"}


@dataclass
class Step:
    name: str
    emitted: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    operator: BlockOperator | None = None

    def to_dict(self, include_operators: bool = False) -> dict:
        out = {
            "name": self.name,
            "emitted": [_letter_summary(x) for x in self.emitted],
            "checks": {k: float(v) for k, v in self.checks.items()},
            "notes": list(self.notes),
        }
        if include_operators and self.operator is not None:
            out["operator"] = self.operator.to_dict()
        return out


@dataclass
class PipelineTrace:
    steps: list = field(default_factory=list)
    flipped: bool = False
    residual: float = float("nan")
    check_tol: float = CHECK_TOL

    def add(self, name: str) -> Step:
        step = Step(name)
        self.steps.append(step)
        return step

    @property
    def checks(self) -> dict:
        return {f"{s.name}.{k}": v for s in self.steps for k, v in s.checks.items()}

    @property
    def max_check(self) -> float:
        return max(self.checks.values(), default=0.0)

    def failed_checks(self) -> dict:
        return {k: v for k, v in self.checks.items() if not v <= self.check_tol}

    def to_dict(self, include_operators: bool = False) -> dict:
        return {
            "flipped": self.flipped,
            "residual": float(self.residual),
            "max_check": float(self.max_check),
            "steps": [s.to_dict(include_operators) for s in self.steps],
        }

    def dumps(self, include_operators: bool = False) -> str:
        return json.dumps(self.to_dict(include_operators), indent=2)


def verify_word(word: Word, U: BlockOperator, K: int = 64, tol: float | None = None) -> float:
    """``max_{i <= K} ||(evaluate(word) - U) e_i||`` over both block columns."""
    return window_residual(evaluate(word), U, K)


def commutator_verify(T, A, B, K: int = 64, tol: float = 1e-10) -> bool:
    """True iff ``A B A* B*`` window-equals ``T``. Witnesses are not constructed here."""
    return window_residual(A @ B @ A.H @ B.H, T, K) <= tol


@contextmanager
def _stage(name: str):
    """Tag errors raised inside with the stage name."""
    try:
        yield
    except FactorizeError as exc:
        if exc.stage is not None:
            raise
        raise type(exc)(str(exc), name) from None


def _is_zero(A: StructuredOperator, K: int, tol: float) -> bool:
    return window_residual(A, zero(), K + A.reach()) <= tol


class _Pipeline:
    def __init__(self, U: BlockOperator, window: int, check_tol: float, trace: PipelineTrace):
        self.U = U
        self.window = window
        self.check_tol = check_tol
        self.trace = trace
        self.left: list = []
        self.right: list = []

    # helpers
    def res(self, A, B) -> float:
        return window_residual(A, B, self.window + 2 * max(A.reach(), B.reach()))

    def emit(self, step: Step, letters, side: str):
        letters = list(letters)
        for x in letters:
            if isinstance(x, Diag):
                K = self.window + 2 * max(x.a.reach(), x.b.reach())
                ok = is_unitary_window(x.a, K, self.check_tol) and is_unitary_window(x.b, K, self.check_tol)
                if not ok:
                    raise NotUnitary(f"emitted letter {x.label or 'diag'} is not unitary", step.name)
        step.emitted.extend(letters)
        if side == "left":
            self.left.extend(letters)
        elif side == "right":
            self.right[:0] = letters

    def close_if_diagonal(self, cur: BlockOperator, step: Step) -> list | None:
        K = self.window + cur.reach()
        if _is_zero(cur.ur, K, self.check_tol) and _is_zero(cur.ll, K, self.check_tol):
            step.notes.append("block diagonal; closed with one diagonal letter")
            letter = Diag(cur.ul, cur.lr, "closing")
            self.emit(step, [letter], "final")
            return [letter]
        return None

    # stages
    def run(self) -> Word:
        tr = self.trace
        cur = self.U

        # 1. orientation
        st = tr.add("orientation")
        T = cur.ul
        with _stage("orientation"):
            dker = kernel_dimension(T.H @ T)
            dker_adj = kernel_dimension(T @ T.H) if dker else 0
        st.notes.append(f"dim ker T = {dker}, dim ker T* = {dker_adj}")
        if dker > dker_adj:
            cur = cur.H
            tr.flipped = True
            st.notes.append("replaced U by U*")
        st.operator = cur

        # 2. positive corner
        st = tr.add("positive_corner")
        T = cur.ul
        with _stage("positive_corner"):
            u0, absT = polar_decompose(T)
            wt = extend_partial_isometry(u0, "isometry", window=self.window)
        absT_op = absT.to_operator()
        st.checks["polar"] = self.res(wt @ absT_op, T)
        M1 = m1(wt)
        letters = word_m1(wt)
        st.checks["m1_word"] = self.res(evaluate(letters), M1)
        self.emit(st, letters, "left")
        cur = M1.H @ cur
        st.checks["corner_is_abs"] = self.res(cur.ul, absT_op)
        with _stage("positive_corner"):
            sd = eig(FiniteScalarSelfAdjoint.from_operator(cur.ul, tol=1e-10))
        lowest = min(np.min(sd.eigenvalues, initial=np.inf), sd.tail_scalar)
        st.checks["negativity"] = max(0.0, -float(lowest))
        st.operator = cur
        final = self.close_if_diagonal(cur, st)
        if final is not None:
            return Word(self.left + final + self.right)

        # 3. canonical form
        st = tr.add("canonical_form")
        one = identity()
        T = FiniteScalarSelfAdjoint.from_operator(cur.ul, tol=1e-10).to_operator()
        N, M, X = cur.ll, cur.ur, cur.lr
        with _stage("canonical_form"):
            u = isometry_column_factor(T, N, SUPPORT_TOL, self.window)
            v = isometry_column_factor(T, M.H, SUPPORT_TOL, self.window)
            R = func_calc(one - T @ T, "sqrt")
        p = one - u @ u.H
        q = one - v @ v.H
        RR = R @ R
        st.checks["N=uR"] = self.res(N, u @ R)
        st.checks["M=Rv*"] = self.res(M, R @ v.H)
        st.checks["u*u=v*v"] = self.res(u.H @ u, v.H @ v)
        st.checks["uR^2u*+XX*=1"] = self.res(u @ RR @ u.H + X @ X.H, one)
        st.checks["vR^2v*+X*X=1"] = self.res(v @ RR @ v.H + X.H @ X, one)
        st.checks["uRT+XvR=0"] = self.res(u @ R @ T + X @ v @ R, zero())
        st.checks["vRT+X*uR=0"] = self.res(v @ R @ T + X.H @ u @ R, zero())
        uTv = u @ T @ v.H
        st.checks["-uTv*=X(1-q)"] = self.res(-uTv, X @ (one - q))
        st.checks["-uTv*=(1-p)X"] = self.res(-uTv, (one - p) @ X)
        st.operator = cur

        # 4. self-adjoint form
        st = tr.add("self_adjoint_form")
        delta = p @ X @ q
        st.checks["X=delta-uTv*"] = self.res(X, delta - uTv)
        st.checks["delta*delta=q"] = self.res(delta.H @ delta, q)
        st.checks["delta delta*=p"] = self.res(delta @ delta.H, p)
        # the polar parts of X only audit delta; s is built from delta directly
        try:
            alpha, absX = polar_decompose(X)
            beta, absXs = polar_decompose(X.H)
        except UnsupportedClass as exc:
            st.notes.append(f"polar audit of X skipped: {exc}")
        else:
            st.checks["|X|=q+vTv*"] = self.res(absX.to_operator(), q + v @ T @ v.H)
            st.checks["|X*|=p+uTu*"] = self.res(absXs.to_operator(), p + u @ T @ u.H)
            st.checks["alpha q=delta"] = self.res(alpha @ q, delta)
            st.checks["p beta*=delta"] = self.res(p @ beta.H, delta)
        with _stage("self_adjoint_form"):
            s = extend_partial_isometry(v @ u.H, "unitary", fixed=delta.H, window=self.window)
        st.checks["v=su"] = self.res(v, s @ u)
        st.checks["s=delta* on Im p"] = self.res(s @ p, delta.H)
        self.emit(st, [Diag(one, s.H, "s^-1")], "right")
        cur = cur @ BlockOperator.diag(one, s)
        st.checks["U' self-adjoint"] = self.res(cur, cur.H)
        model = BlockOperator(T, R @ u.H, u @ R, -(u @ T @ u.H) + p)
        st.checks["U' form"] = self.res(cur, model)
        st.operator = cur

        # 5. split off q' = ker(1 - T)
        st = tr.add("split_kernel")
        qp = one_eigenspace(FiniteScalarSelfAdjoint.from_operator(T))
        Tp = T - qp
        st.checks["q'=1-u*u"] = self.res(qp, one - u.H @ u)
        st.checks["T'q'=0"] = self.res(Tp @ qp, zero())
        kq, kp = dim_key(qp), dim_key(p)
        st.notes.append(f"dim Im q' = {kq[0]}, dim Im p = {kp[0]}")
        if kq[0] == INF and kp[0] == INF and kq != kp:
            st.notes.append("both ranges infinite; ordered by codimension")
        if kp < kq:
            sw = build_generator(8)
            self.emit(st, [Gen(8)], "left")
            self.emit(st, [Gen(8)], "right")
            cur = sw @ cur @ sw
            Tp, qp, p, u = -(u @ Tp @ u.H), p, qp, u.H
            st.notes.append("swapped the roles of p and q'")
        Rp = func_calc(FiniteScalarSelfAdjoint.from_operator(one - Tp @ Tp, tol=1e-10), "sqrt")
        st.checks["form with T'+q'"] = self.res(
            cur, BlockOperator(Tp + qp, Rp @ u.H, u @ Rp, -(u @ Tp @ u.H) + p)
        )

        # conjugate by diag(1, b) so that q' <= p
        with _stage("split_kernel"):
            if dim_key(qp)[0] == dim_key(p)[0]:
                b = extend_partial_isometry(u, "unitary", window=self.window)
                case = "equal"
            else:
                rq = projection_rank(qp)
                j0 = _dense_map(basis_prefix(p, rq), finite_basis(qp)) if rq else zero()
                b = extend_partial_isometry(j0, "unitary", window=self.window)
                case = "smaller"
        st.notes.append(f"q' range {case} than p range")
        if not op_equal(b, one, 1e-12):
            self.emit(st, [Diag(one, b, "b")], "left")
            self.emit(st, [Diag(one, b.H, "b^-1")], "right")
            cur = BlockOperator.diag(one, b.H) @ cur @ BlockOperator.diag(one, b)
        ut = b.H @ u
        pt = b.H @ p @ b
        st.checks["q'<=p"] = self.res(pt @ qp, qp)
        st.operator = cur

        # 6. isometry extension and the partial swap
        st = tr.add("isometry_extension")
        if case == "equal":
            w = one
            st.checks["b*u=1-q'"] = self.res(ut, one - qp)
        else:
            w = ut + qp
        pw = defect(w)
        st.checks["w isometry"] = self.res(w.H @ w, one)
        st.checks["(w-u)(1-q')=0"] = self.res((w - ut) @ (one - qp), zero())
        st.checks["wq'=q'"] = self.res(w @ qp, qp)
        Uw = BlockOperator(Tp, Rp @ w.H, w @ Rp, -(w @ Tp @ w.H) + pw)
        H = build_generator(3)
        zero_q = op_equal(qp, zero(), 1e-12)
        if zero_q:
            Z = BlockOperator.identity()
            z_letters = []
        else:
            flip_q = one - qp * 2.0
            z_letters = [Gen(3), Diag(one, flip_q, "1-2q'"), Gen(3)]
            Z = H @ BlockOperator.diag(one, flip_q) @ H
            st.checks["Z partial swap"] = self.res(Z, BlockOperator(one - qp, qp, qp, one - qp))
        st.checks["U''=Uw Z"] = self.res(cur, Uw @ Z)
        st.operator = Uw

        # 7. functional calculus and the closing identity
        st = tr.add("functional_calculus")
        with _stage("functional_calculus"):
            Tfs = FiniteScalarSelfAdjoint.from_operator(Tp, tol=1e-10)
            A = func_calc(Tfs, ("arccos", "expi"), theta=1.0)
            B = func_calc(Tfs, ("arccos", "expi"), theta=-1.0)
        st.checks["A+B=2T'"] = self.res(A + B, Tp * 2.0)
        st.checks["A-B=2iR'"] = self.res(A - B, Rp * 2j)
        st.checks["AB=1"] = self.res(A @ B, one)
        C = w @ B @ w.H - pw
        phase = Diag(one, one * -1j, "diag(1,-i)")
        m2w = word_m2(w)
        final = [phase, *m2w, Diag(A, C, "diag(A, wBw*-p)"), *m2w, phase, *z_letters]
        self.emit(st, final, "final")
        st.checks["three-factor identity"] = self.res(evaluate(Word(final[: len(final) - len(z_letters)])), Uw)
        st.operator = Uw
        return Word(self.left + final + self.right)


def _shortcut(U: BlockOperator, K: int, tol: float) -> Word | None:
    if _is_zero(U.ur, K, tol) and _is_zero(U.ll, K, tol):
        return Word([Diag(U.ul, U.lr, "input")])
    for i in range(1, 9):
        g = build_generator(i)
        if window_residual(U, g, K) <= tol:
            return Word([Gen(i)])
        if window_residual(U, g.H, K) <= tol:
            return Word([Gen(i, True)])
    return None


def factorize(
    U: BlockOperator,
    window: int = 64,
    tol: float = 1e-8,
    check_tol: float = CHECK_TOL,
    shortcuts: bool = True,
) -> tuple[Word, PipelineTrace]:
    """Word over generators and block-diagonal unitaries evaluating to ``U``.

    ``shortcuts`` lets block-diagonal inputs and the generators themselves
    return one-letter words. The returned trace holds per-stage residuals and
    the final ``verify_word`` residual; the word is returned even when a
    residual exceeds its tolerance, so callers decide how to report it.
    """
    K = window + 2 * U.reach()
    if not is_unitary_window(U, K, tol):
        raise NotUnitary("input is not unitary on the window", "input")
    trace = PipelineTrace(check_tol=check_tol)
    word = _shortcut(U, K, 1e-12) if shortcuts else None
    if word is not None:
        st = trace.add("shortcut")
        st.emitted.extend(word.letters)
        st.notes.append("input is block diagonal or a generator")
    else:
        word = _Pipeline(U, window, check_tol, trace).run()
        if trace.flipped:
            word = word.inverse()
            trace.add("assemble").notes.append("inverted the word of U*")
        else:
            trace.add("assemble")
    trace.residual = verify_word(word, U, K)
    return word, trace
