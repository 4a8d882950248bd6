"""Virtual-time master/worker simulation of coded linear transform jobs.

No wall clock and no real threads: each worker's finish time is its operation
count times a base rate, scaled up when the straggler model slows it, so runs
are machine independent and a (config, seed) pair always reproduces the same
trace. The master takes the earliest n arrivals, decodes, and the decode's
own operation count is charged at the same rate, which is what makes the
cheaper hybrid decoding visible in job times.

Straggler models:

* ``fixed-set``           the listed workers run slow_factor times slower.
* ``delay-distribution``  each worker is slowed independently with
                          probability slow_prob, redrawn every job.
* ``bernoulli``           each worker fails outright (never finishes) with
                          probability q, redrawn every job; decoding then
                          relies on whichever workers remain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .blocks import DataMatrix, partition
from .codes import CodeSpec, CodingMatrix, build_code, encode
from .decoder import DecodeError, DecodeReport, ReceivedSet, diagonal_decode, hybrid_decode
from .exact import rank_exact
from .seeding import derive_seed, rng_from

_DATA_TAG = 0xD47A
_JOB_TAG = 0x10B5


class SimulationError(RuntimeError):
    """Decoded output failed verification against the direct product."""


class InsufficientResultsError(RuntimeError):
    """Fewer than n workers finished; the job cannot complete."""


@dataclass(frozen=True)
class StragglerModel:
    kind: str
    base_rate: float = 1e-6
    slow_factor: float = 10.0
    fixed_ids: tuple[int, ...] = ()
    q: float = 0.0
    slow_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("fixed-set", "bernoulli", "delay-distribution"):
            raise ValueError(f"unknown straggler model {self.kind!r}")
        if not 0.0 <= self.q <= 1.0 or not 0.0 <= self.slow_prob <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.base_rate <= 0 or self.slow_factor < 1:
            raise ValueError("base_rate must be positive and slow_factor >= 1")
        object.__setattr__(self, "fixed_ids", tuple(int(i) for i in self.fixed_ids))

    @classmethod
    def fixed_set(cls, ids, **kw) -> "StragglerModel":
        return cls(kind="fixed-set", fixed_ids=tuple(ids), **kw)

    @classmethod
    def bernoulli(cls, q: float, **kw) -> "StragglerModel":
        return cls(kind="bernoulli", q=q, **kw)

    @classmethod
    def delay(cls, slow_prob: float, **kw) -> "StragglerModel":
        return cls(kind="delay-distribution", slow_prob=slow_prob, **kw)

    def finish_times(self, costs, job_seed: int) -> np.ndarray:
        """Virtual finish time per worker; inf marks a worker that never returns."""
        costs = np.asarray(costs, dtype=np.float64)
        m = costs.shape[0]
        if self.kind == "fixed-set":
            if any(not 1 <= i <= m for i in self.fixed_ids):
                raise ValueError(f"fixed straggler ids must lie in 1..{m}")
            slow = np.zeros(m, dtype=bool)
            for i in self.fixed_ids:
                slow[i - 1] = True
            failed = np.zeros(m, dtype=bool)
        elif self.kind == "delay-distribution":
            rng = rng_from(self.seed, _JOB_TAG, job_seed)
            slow = rng.random(m) < self.slow_prob
            failed = np.zeros(m, dtype=bool)
        else:
            rng = rng_from(self.seed, _JOB_TAG, job_seed)
            failed = rng.random(m) < self.q
            slow = np.zeros(m, dtype=bool)
        times = costs * self.base_rate
        times[slow] *= self.slow_factor
        times[failed] = np.inf
        return times


@dataclass(frozen=True)
class JobTrace:
    """One simulated job: timing, chosen subset, and the decode report."""

    finish_times: tuple[float, ...]
    arrival_order: tuple[int, ...]
    used_subset: tuple[int, ...]
    retries: int
    decode_start: float
    decode_report: DecodeReport
    job_time: float

    CSV_HEADER = ("job_time,decode_start,retries,decode_method,rooting_steps,"
                  "peeling_steps,decode_scalar_ops,residual,used_subset")

    def to_json(self) -> str:
        doc = {
            "finish_times": [None if not np.isfinite(t) else t for t in self.finish_times],
            "arrival_order": list(self.arrival_order),
            "used_subset": list(self.used_subset),
            "retries": self.retries,
            "decode_start": self.decode_start,
            "decode_method": self.decode_report.method,
            "rooting_steps": self.decode_report.rooting_steps,
            "peeling_steps": self.decode_report.peeling_steps,
            "decode_scalar_ops": self.decode_report.scalar_ops,
            "residual": self.decode_report.residual,
            "job_time": self.job_time,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def csv_rows(self) -> list[str]:
        rep = self.decode_report
        subset = ";".join(str(i) for i in self.used_subset)
        return [self.CSV_HEADER,
                f"{self.job_time!r},{self.decode_start!r},{self.retries},{rep.method},"
                f"{rep.rooting_steps},{rep.peeling_steps},{rep.scalar_ops},"
                f"{rep.residual!r},{subset}"]


def _decode_for(code: CodingMatrix, received: ReceivedSet) -> DecodeReport:
    if code.family in ("s-diagonal", "one-diagonal"):
        return diagonal_decode(received)
    return hybrid_decode(received)


def _pick_decodable_subset(code: CodingMatrix, arrived: list[int]) -> list[int] | None:
    """Greedy earliest-arrival rows that are independent; None if rank < n."""
    chosen: list[int] = []
    rank = 0
    for wid in arrived:
        candidate = chosen + [wid]
        r = rank_exact(code.submatrix(candidate), stop_at=code.n)
        if r > rank:
            chosen = candidate
            rank = r
            if rank == code.n:
                return sorted(chosen)
    return None


def run_transform(a: DataMatrix, x, code: CodingMatrix, model: StragglerModel,
                  seed: int, *, wait_for_all: bool = False, verify: bool = True,
                  job_index: int = 0) -> JobTrace:
    """Simulate one coded y = Ax job and decode from the earliest arrivals.

    With ``wait_for_all`` the master behaves like the uncoded baseline and
    only proceeds once every worker has finished. If the first n arrivals
    give a singular submatrix (possible for random codes), later arrivals
    are folded in one at a time until a decodable subset exists; each extra
    arrival counts as one retry.
    """
    part = partition(a, code.n)
    assignments = encode(part, code)
    costs = np.array([asg.coded_block.matvec_ops for asg in assignments], dtype=np.float64)
    times = model.finish_times(costs, derive_seed(seed, job_index))
    order = sorted(range(1, code.m + 1), key=lambda i: (times[i - 1], i))
    finite = [i for i in order if np.isfinite(times[i - 1])]
    if len(finite) < code.n:
        raise InsufficientResultsError(
            f"insufficient results: only {len(finite)} of {code.m} workers finished")

    if wait_for_all and len(finite) < code.m:
        raise InsufficientResultsError("insufficient results: a worker never finished")

    x = np.asarray(x, dtype=np.float64)
    results = {i: assignments[i - 1].coded_block.matvec(x) for i in finite}
    pool = finite
    subset = sorted(pool[: code.n])
    retries = 0
    used = code.n
    while True:
        received = ReceivedSet(
            code=code, subset=tuple(subset),
            results=tuple(results[i] for i in subset), pad_rows=part.pad_rows)
        try:
            report = _decode_for(code, received)
            break
        except DecodeError:
            while used < len(pool):
                used += 1
                retries += 1
                candidate = _pick_decodable_subset(code, pool[:used])
                if candidate is not None:
                    subset = candidate
                    break
            else:
                raise InsufficientResultsError(
                    "insufficient results: no decodable subset among finished workers") from None

    if wait_for_all:
        decode_start = float(max(times[i - 1] for i in pool))
    else:
        decode_start = float(max(times[i - 1] for i in subset))
    job_time = decode_start + report.scalar_ops * model.base_rate

    if verify:
        direct = a.matvec(x)
        scale = 1.0 + float(np.max(np.abs(direct), initial=0.0))
        err = float(np.max(np.abs(report.output - direct), initial=0.0)) / scale
        if err > 1e-8:
            raise SimulationError(f"decoded output off by {err:.3e} relative")

    return JobTrace(
        finish_times=tuple(float(t) for t in times),
        arrival_order=tuple(order),
        used_subset=tuple(subset),
        retries=retries,
        decode_start=decode_start,
        decode_report=report,
        job_time=job_time,
    )


def suggest_step_size(a: DataMatrix, iters: int = 60) -> float:
    """1 / lambda_max(A^T A) from a fixed-start power iteration."""
    v = np.ones(a.cols)
    v /= np.linalg.norm(v)
    lam = 1.0
    mat = a.raw
    for _ in range(iters):
        w = mat.T @ (mat @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 1.0
        v = w / lam
    return 1.0 / lam


@dataclass(frozen=True)
class GdTrace:
    """Gradient-descent run: per-iteration virtual time and scaled gradient."""

    iterations: tuple[tuple[int, float, float], ...]
    final_x: np.ndarray
    eta: float

    def to_json(self) -> str:
        doc = {
            "eta": self.eta,
            "iterations": [
                {"iteration": it, "time": t, "grad_norm_sq": g}
                for it, t, g in self.iterations
            ],
            "final_x": [float(v) for v in self.final_x],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def csv_rows(self) -> list[str]:
        rows = ["iteration,time,grad_norm_sq"]
        rows += [f"{it},{t!r},{g!r}" for it, t, g in self.iterations]
        return rows


def run_coded_gd(a: DataMatrix, b, code: CodingMatrix, eta: float | None,
                 iters: int, model: StragglerModel, seed: int, *,
                 x0=None, wait_for_all: bool = False) -> GdTrace:
    """Least-squares gradient descent with coded per-iteration gradients.

    Workers hold block Gram tasks: worker i returns the weighted sum of
    A_j^T A_j x over its support. The master decodes the n block gradients,
    assembles A^T(Ax - b) with the precomputed A^T b, and steps. Straggling
    moves virtual time only; with successful decodes the iterates match the
    uncoded run.
    """
    # zero pad rows leave every A_j^T A_j unchanged, so padding needs no care here
    part = partition(a, code.n)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.rows,):
        raise ValueError("label vector length must match the row count")
    if eta is None:
        eta = suggest_step_size(a)
    if eta < 0:
        raise ValueError("eta must be >= 0")
    at_b = a.raw.T @ b
    at_b = np.asarray(at_b, dtype=np.float64)

    block_cost = np.array([2.0 * blk.matvec_ops for blk in part.blocks])
    costs = np.zeros(code.m)
    for i in range(1, code.m + 1):
        costs[i - 1] = sum(block_cost[j - 1] for j in code.support(i))

    x = np.zeros(a.cols) if x0 is None else np.array(x0, dtype=np.float64)
    clock = 0.0
    steps: list[tuple[int, float, float]] = []
    for it in range(iters):
        grads = [np.asarray(blk.raw.T @ (blk.raw @ x), dtype=np.float64)
                 for blk in part.blocks]
        worker_out = {}
        times = model.finish_times(costs, derive_seed(seed, _JOB_TAG, it))
        order = sorted(range(1, code.m + 1), key=lambda i: (times[i - 1], i))
        finite = [i for i in order if np.isfinite(times[i - 1])]
        if len(finite) < code.n:
            raise InsufficientResultsError(
                f"insufficient results at iteration {it}")
        if wait_for_all and len(finite) < code.m:
            raise InsufficientResultsError(
                f"insufficient results at iteration {it}: a worker never finished")
        for i in finite:
            acc = np.zeros(a.cols)
            for j, coef in code.row(i):
                acc += coef * grads[j - 1]
            worker_out[i] = acc

        subset = sorted(finite[: code.n])
        retries = 0
        used = code.n
        while True:
            received = ReceivedSet(code=code, subset=tuple(subset),
                                   results=tuple(worker_out[i] for i in subset))
            try:
                report = _decode_for(code, received)
                break
            except DecodeError:
                while used < len(finite):
                    used += 1
                    retries += 1
                    candidate = _pick_decodable_subset(code, finite[:used])
                    if candidate is not None:
                        subset = candidate
                        break
                else:
                    raise InsufficientResultsError(
                        f"insufficient results at iteration {it}: "
                        "no decodable subset") from None

        if wait_for_all:
            decode_start = float(max(times[i - 1] for i in finite))
        else:
            decode_start = float(max(times[i - 1] for i in subset))
        clock += decode_start + report.scalar_ops * model.base_rate

        block_grads = report.output.reshape(code.n, a.cols)
        gradient = block_grads.sum(axis=0) - at_b
        x = x - eta * gradient
        scaled = eta * gradient
        steps.append((it, clock, float(scaled @ scaled)))

    return GdTrace(iterations=tuple(steps), final_x=x, eta=float(eta))


@dataclass(frozen=True)
class SchemeSpec:
    """One competitor in a comparison: a CodeSpec or the uncoded baseline."""

    name: str
    code: CodeSpec | None = None  # None means uncoded (identity, wait for all)


@dataclass(frozen=True)
class CompareConfig:
    n: int
    rows: int
    cols: int
    schemes: tuple[SchemeSpec, ...]
    model: StragglerModel
    trials: int
    seed: int


@dataclass(frozen=True)
class ExperimentReport:
    """Per-trial rows plus per-scheme summaries, CSV/JSON serializable."""

    config: CompareConfig
    rows: tuple[dict, ...]

    CSV_HEADER = "scheme,trial,job_time,retries,rooting_steps,peeling_steps,decode_scalar_ops"

    def csv_rows(self) -> list[str]:
        out = [self.CSV_HEADER]
        for r in self.rows:
            out.append(f"{r['scheme']},{r['trial']},{r['job_time']!r},{r['retries']},"
                       f"{r['rooting_steps']},{r['peeling_steps']},{r['decode_scalar_ops']}")
        return out

    def summary(self) -> dict:
        per: dict[str, dict] = {}
        for scheme in self.config.schemes:
            rows = [r for r in self.rows if r["scheme"] == scheme.name]
            times = [r["job_time"] for r in rows]
            per[scheme.name] = {
                "trials": len(rows),
                "mean_job_time": sum(times) / len(times),
                "min_job_time": min(times),
                "max_job_time": max(times),
                "retry_fraction": sum(1 for r in rows if r["retries"]) / len(rows),
                "mean_rooting_steps": sum(r["rooting_steps"] for r in rows) / len(rows),
            }
        return per

    def to_json(self) -> str:
        return json.dumps({"summary": self.summary(), "rows": list(self.rows)},
                          sort_keys=True, separators=(",", ":"))


def _identity_code(n: int) -> CodingMatrix:
    return CodingMatrix(n, n, [(i, i, 1) for i in range(1, n + 1)],
                        family="s-diagonal", seed=None)


def compare_schemes(config: CompareConfig) -> ExperimentReport:
    """Run every scheme over the same synthetic data, fresh per trial."""
    rows: list[dict] = []
    for trial in range(config.trials):
        rng = rng_from(config.seed, _DATA_TAG, trial)
        a = DataMatrix(rng.standard_normal((config.rows, config.cols)))
        x = rng.standard_normal(config.cols)
        for idx, scheme in enumerate(config.schemes):
            if scheme.code is None:
                code = _identity_code(config.n)
                wait_for_all = True
            else:
                spec = scheme.code
                code = build_code(CodeSpec(
                    family=spec.family, n=spec.n, m=spec.m, s=spec.s, p=spec.p,
                    d1=spec.d1, d2=spec.d2, coeff_set_size=spec.coeff_set_size,
                    seed=derive_seed(config.seed, idx, trial)))
                wait_for_all = False
            trace = run_transform(a, x, code, config.model,
                                  derive_seed(config.seed, idx), job_index=trial,
                                  wait_for_all=wait_for_all)
            rows.append({
                "scheme": scheme.name,
                "trial": trial,
                "job_time": trace.job_time,
                "retries": trace.retries,
                "rooting_steps": trace.decode_report.rooting_steps,
                "peeling_steps": trace.decode_report.peeling_steps,
                "decode_scalar_ops": trace.decode_report.scalar_ops,
            })
    return ExperimentReport(config=config, rows=tuple(rows))
