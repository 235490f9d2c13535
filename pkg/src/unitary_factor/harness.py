"""Input generation, suite execution and reports.

Random inputs: ``numpy.random.default_rng(seed)`` draws an ``n x n`` matrix
with real and imaginary parts standard normal (real parts first, row-major),
scaled by ``1/sqrt2``; QR with the diagonal of ``R`` rotated to be positive
gives a Haar unitary ``W``. With ``m = ceil(n/2)`` the blocks are
``T = W[:m,:m] (+) 1``, ``M = W[:m,m:]``, ``N = W[m:,:m]`` and
``K = W[m:,m:] (+) 1``, each tail the identity beyond the finite region.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FactorizeError
from .factorizer import factorize
from .generators import GENERATOR_NAMES, build_generator, m1, m2
from .kernel import BlockOperator, from_dense, shift

CSV_FIELDS = [
    "case",
    "seed",
    "dim",
    "residual",
    "length",
    "generator_count",
    "max_check",
    "passed",
    "error",
]


@dataclass
class SuiteConfig:
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    dims: list = field(default_factory=lambda: [2, 4, 8, 16, 32])
    window: int = 64
    tol: float = 1e-8
    out_path: str | None = None
    format: str = "json"
    include_fixed: bool = True
    timings: bool = False  # wall times break byte-identical reports, so off by default

    def validate(self) -> None:
        if any(int(d) < 1 for d in self.dims):
            raise ValueError("dims must all be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.window < 8:
            raise ValueError("window must be >= 8")
        if self.format not in ("json", "csv"):
            raise ValueError("format must be json or csv")


@dataclass
class RunReport:
    config: dict
    records: list
    summary: dict

    @property
    def passed(self) -> bool:
        return self.summary["failures"] == 0

    def to_dict(self) -> dict:
        return {"config": self.config, "records": self.records, "summary": self.summary}

    def dumps_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def dumps_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in self.records:
            row = {k: rec.get(k) for k in CSV_FIELDS}
            for k in ("residual", "max_check"):
                if row[k] is not None:
                    row[k] = repr(float(row[k]))
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
        return buf.getvalue()

    def write(self, path: str, fmt: str = "json") -> None:
        text = self.dumps_json() if fmt == "json" else self.dumps_csv()
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def haar_unitary(seed: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def gen_random_input(seed: int, n: int) -> BlockOperator:
    if n < 1:
        raise ValueError("n must be >= 1")
    W = haar_unitary(seed, n)
    m = (n + 1) // 2
    return BlockOperator(
        from_dense(W[:m, :m], 1.0),
        from_dense(W[:m, m:]),
        from_dense(W[m:, :m]),
        from_dense(W[m:, m:], 1.0),
    )


def fixed_family() -> list[tuple[str, BlockOperator]]:
    """Identity, the eight generators and ``M1(S^k)``, ``M2(S^k)`` for ``k <= 8``."""
    cases = [("identity", BlockOperator.identity())]
    cases += [(f"U{i}={GENERATOR_NAMES[i]}", build_generator(i)) for i in range(1, 9)]
    for k in range(1, 9):
        cases.append((f"M1(S^{k})", m1(shift(k))))
        cases.append((f"M2(S^{k})", m2(shift(k))))
    return cases


def _run_case(args) -> dict:
    name, seed, dim, U, window, tol, timings = args
    if U is None:
        U = gen_random_input(seed, dim)
    rec = {"case": name, "seed": seed, "dim": dim}
    t0 = time.perf_counter()
    try:
        word, trace = factorize(U, window=window, tol=tol)
    except FactorizeError as exc:
        rec.update(residual=None, length=None, generator_count=None, max_check=None,
                   checks={}, failed_checks={}, passed=False, error=str(exc))
    else:
        residual = float(trace.residual)
        rec.update(
            residual=residual,
            length=len(word),
            generator_count=word.generator_count,
            max_check=float(trace.max_check),
            checks={k: float(v) for k, v in trace.checks.items()},
            failed_checks={k: float(v) for k, v in trace.failed_checks().items()},
            passed=residual <= tol,
            error=None,
        )
    if timings:
        rec["wall_time"] = time.perf_counter() - t0
    return rec


def summarize(records: list, tol: float) -> dict:
    """Summary recomputed from the per-case records."""
    residuals = [r["residual"] for r in records if r["residual"] is not None]
    random = [r for r in records if r["case"] == "random" and r["length"] is not None]
    lengths = sorted({r["length"] for r in random})
    gen_counts = sorted({r["generator_count"] for r in random})
    return {
        "cases": len(records),
        "max_residual": max(residuals, default=0.0),
        "max_check": max((r["max_check"] for r in records if r["max_check"] is not None), default=0.0),
        "failures": sum(not r["passed"] for r in records),
        "stage_failures": sum(bool(r["failed_checks"]) for r in records),
        "random_lengths": lengths,
        "random_generator_counts": gen_counts,
        "length_constant": len(lengths) <= 1,
        "L_max": lengths[-1] if lengths else None,
        "tol": tol,
    }


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FACTORIZE_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(cfg: SuiteConfig) -> RunReport:
    """Factor every (seed, dim) case plus the fixed family; write the report if ``out_path``."""
    cfg.validate()
    jobs = []
    if cfg.include_fixed:
        jobs += [(name, None, None, U, cfg.window, cfg.tol, cfg.timings) for name, U in fixed_family()]
    jobs += [
        ("random", int(s), int(d), None, cfg.window, cfg.tol, cfg.timings)
        for d in cfg.dims
        for s in cfg.seeds
    ]
    workers = min(_threads(), len(jobs)) if jobs else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_case, jobs))
    else:
        records = [_run_case(j) for j in jobs]
    config = asdict(cfg)
    config.pop("out_path")
    report = RunReport(config, records, summarize(records, cfg.tol))
    if cfg.out_path:
        report.write(cfg.out_path, cfg.format)
    return report
