"""Exact verification oracles and Monte Carlo estimators.

The exact side enumerates worker subsets and computes integer ranks, so a
recovery threshold or a straggler-resistance claim is settled outright, not
sampled. The probabilistic side estimates full-rank fractions and load
statistics for the random families; each trial draws from a seed derived
from (experiment seed, trial index), so trials are independent, reorderable,
and reproducible, and running them across processes cannot change the
aggregates.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from math import comb

from .codes import CodeSpec, CodingMatrix, build_code
from .exact import rank_exact
from .seeding import derive_seed, rng_from, sample_without_replacement

ENUMERATION_GUARD = 10**6


class EnumerationGuardError(RuntimeError):
    """Subset space too large to enumerate; use the Monte Carlo estimator."""


@dataclass(frozen=True)
class SupportGraph:
    """Bipartite support of a coding matrix: workers 1..m against blocks 1..n."""

    workers: int
    blocks: int
    edges: frozenset[tuple[int, int]]

    @classmethod
    def from_code(cls, code: CodingMatrix) -> "SupportGraph":
        return cls(workers=code.m, blocks=code.n,
                   edges=frozenset((i, j) for i, j, _ in code.entries()))

    def neighbors(self, worker: int) -> tuple[int, ...]:
        return tuple(sorted(j for i, j in self.edges if i == worker))


def has_perfect_matching(graph: SupportGraph, subset) -> bool:
    """True iff the workers in ``subset`` can be matched to all blocks.

    Kuhn's augmenting-path search; deterministic because adjacency is
    scanned in sorted order.
    """
    subset = sorted(set(subset))
    if len(subset) != graph.blocks:
        raise ValueError(f"subset must contain exactly {graph.blocks} workers")
    adj = {i: graph.neighbors(i) for i in subset}
    match_of_block: dict[int, int] = {}

    def try_assign(worker: int, visited: set[int]) -> bool:
        for j in adj[worker]:
            if j in visited:
                continue
            visited.add(j)
            if j not in match_of_block or try_assign(match_of_block[j], visited):
                match_of_block[j] = worker
                return True
        return False

    matched = 0
    for i in subset:
        if try_assign(i, set()):
            matched += 1
    return matched == graph.blocks


def _guard(count: int, what: str):
    if count > ENUMERATION_GUARD:
        raise EnumerationGuardError(
            f"{what} would enumerate {count} subsets (> {ENUMERATION_GUARD}); "
            "use probabilistic_threshold_estimate instead")


def _first_deficient(code: CodingMatrix, k: int) -> tuple[int, ...] | None:
    """Lexicographically first k-subset whose submatrix has rank < n."""
    _guard(comb(code.m, k), f"rank check at k={k}")
    for subset in combinations(range(1, code.m + 1), k):
        if rank_exact(code.submatrix(subset)) < code.n:
            return subset
    return None


def find_deficient_subset(code: CodingMatrix) -> tuple[int, ...] | None:
    """First n-subset that cannot decode, or None if all are full rank."""
    return _first_deficient(code, code.n)


def recovery_threshold_exact(code: CodingMatrix) -> int:
    """Smallest k such that every k-subset decodes; m + 1 if none does.

    Exhaustive and exact; k-recoverability is monotone in k, so the first
    k that passes is the threshold.
    """
    for k in range(code.n, code.m + 1):
        if _first_deficient(code, k) is None:
            return k
    return code.m + 1


def verify_resists(code: CodingMatrix, s: int) -> tuple[bool, tuple[int, ...] | None]:
    """Check that any s stragglers leave a decodable subset.

    Returns (True, None) or (False, witness) where witness is a set of
    m - s surviving workers whose submatrix is rank deficient.
    """
    if not 0 <= s <= code.m - code.n:
        raise ValueError(f"s must lie in 0..{code.m - code.n}")
    witness = _first_deficient(code, code.m - s)
    return (witness is None), witness


@dataclass(frozen=True)
class AuditRecord:
    """Measured load/threshold of a code against the structural bounds."""

    n: int
    m: int
    s: int
    load: int
    load_bound: int
    load_slack: int
    threshold: int
    threshold_bound: int
    threshold_slack: int

    CSV_HEADER = ("n,m,s,load,load_bound,load_slack,threshold,threshold_bound,"
                  "threshold_slack")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, separators=(",", ":"))

    def to_csv_row(self) -> str:
        return (f"{self.n},{self.m},{self.s},{self.load},{self.load_bound},"
                f"{self.load_slack},{self.threshold},{self.threshold_bound},"
                f"{self.threshold_slack}")


def lower_bound_audit(code: CodingMatrix, s: int) -> AuditRecord:
    """Audit a code that resists s stragglers against the two lower bounds:
    load >= n*(s+1) and threshold >= n. Violations are impossible for a
    correct implementation, so they raise instead of being reported."""
    ok, witness = verify_resists(code, s)
    if not ok:
        raise ValueError(f"code does not resist {s} stragglers (witness {witness})")
    load = code.nnz
    load_bound = code.n * (s + 1)
    threshold = recovery_threshold_exact(code)
    if load < load_bound or threshold < code.n:
        raise RuntimeError("structural lower bound violated; rank oracle is broken")
    return AuditRecord(
        n=code.n, m=code.m, s=s,
        load=load, load_bound=load_bound, load_slack=load - load_bound,
        threshold=threshold, threshold_bound=code.n,
        threshold_slack=threshold - code.n,
    )


@dataclass(frozen=True)
class McReport:
    """Monte Carlo summary of full-rank fraction and per-worker load."""

    trials: int
    full_rank_fraction: float | None
    mean_load_per_worker: float
    load_std: float
    sz_misses: int | None
    protocol: str
    seed: int
    family_params: CodeSpec | None

    CSV_HEADER = ("protocol,family,n,m,trials,seed,full_rank_fraction,"
                  "mean_load_per_worker,load_std,sz_misses")

    def to_json(self) -> str:
        doc = dict(
            trials=self.trials,
            full_rank_fraction=self.full_rank_fraction,
            mean_load_per_worker=self.mean_load_per_worker,
            load_std=self.load_std,
            sz_misses=self.sz_misses,
            protocol=self.protocol,
            seed=self.seed,
            family_params=self.family_params.params_dict() if self.family_params else None,
        )
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def to_csv_row(self) -> str:
        fam = self.family_params.family if self.family_params else ""
        n = self.family_params.n if self.family_params else ""
        m = self.family_params.m if self.family_params else ""
        frac = "" if self.full_rank_fraction is None else repr(self.full_rank_fraction)
        misses = "" if self.sz_misses is None else self.sz_misses
        return (f"{self.protocol},{fam},{n},{m},{self.trials},{self.seed},"
                f"{frac},{self.mean_load_per_worker!r},{self.load_std!r},{misses}")


def rank_matching_pair(code: CodingMatrix, subset) -> tuple[bool, bool]:
    """(exact rank == n, support has a perfect matching) for one subset."""
    full = rank_exact(code.submatrix(subset), stop_at=code.n) == code.n
    match = has_perfect_matching(SupportGraph.from_code(code), subset)
    return full, match


def _rank_trial(arg) -> tuple[bool, int, bool]:
    """One trial: (full rank?, load, matching-but-deficient?). Top level so
    process pools can run trials; seeded per trial index."""
    spec_or_code, seed, t = arg
    if isinstance(spec_or_code, CodeSpec):
        code = build_code(_respec(spec_or_code, derive_seed(seed, t, 0)))
    else:
        code = spec_or_code
    rng = rng_from(seed, t, 1)
    subset = [i + 1 for i in sample_without_replacement(rng, code.m, code.n)]
    full, match = rank_matching_pair(code, subset)
    return full, code.nnz, (match and not full)


def _respec(spec: CodeSpec, seed: int) -> CodeSpec:
    return CodeSpec(family=spec.family, n=spec.n, m=spec.m, s=spec.s, p=spec.p,
                    d1=spec.d1, d2=spec.d2, coeff_set_size=spec.coeff_set_size,
                    seed=seed)


def _run_trials(fn, args, jobs: int):
    if jobs <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, args, chunksize=max(1, len(args) // (8 * jobs))))


def probabilistic_threshold_estimate(code_or_spec, trials: int, seed: int,
                                     *, jobs: int = 1) -> McReport:
    """Fraction of uniformly sampled n-subsets whose submatrix is full rank.

    Given a CodingMatrix, the matrix is fixed and only subsets are sampled.
    Given a CodeSpec, each trial also redraws the matrix from a derived
    seed, which is how the random-family experiments are run. Schwartz-
    Zippel misses (perfect matching but rank-deficient coefficients) are
    counted; at the default coefficient set they are essentially impossible.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    fixed = isinstance(code_or_spec, CodingMatrix)
    args = [(code_or_spec, seed, t) for t in range(trials)]
    rows = _run_trials(_rank_trial, args, jobs)
    fulls = sum(1 for full, _, _ in rows if full)
    loads = [load for _, load, _ in rows]
    misses = sum(1 for _, _, miss in rows if miss)
    m = code_or_spec.m
    mean_load = sum(loads) / trials / m
    var = sum((load / m - mean_load) ** 2 for load in loads) / trials
    if fixed:
        params = None
    else:
        params = code_or_spec
    return McReport(
        trials=trials,
        full_rank_fraction=fulls / trials,
        mean_load_per_worker=mean_load,
        load_std=var ** 0.5,
        sz_misses=misses,
        protocol="fixed-matrix" if fixed else "resampled",
        seed=seed,
        family_params=params,
    )


def _load_trial(arg) -> int:
    spec, seed, t = arg
    return build_code(_respec(spec, derive_seed(seed, t, 0))).nnz


def load_statistics(spec: CodeSpec, trials: int, seed: int, *, jobs: int = 1) -> McReport:
    """Mean and standard deviation of load per worker over fresh draws."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    loads = _run_trials(_load_trial, [(spec, seed, t) for t in range(trials)], jobs)
    mean_load = sum(loads) / trials / spec.m
    var = sum((load / spec.m - mean_load) ** 2 for load in loads) / trials
    return McReport(
        trials=trials,
        full_rank_fraction=None,
        mean_load_per_worker=mean_load,
        load_std=var ** 0.5,
        sz_misses=None,
        protocol="resampled-load",
        seed=seed,
        family_params=spec,
    )
