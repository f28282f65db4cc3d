"""Full-straggler runs: survivors reduce everything, load scales by K/kappa.

Because every exchange round involves only two senders, the scheme
tolerates up to g-2 failed servers: each cover member still has two
surviving rows to carry its round.  The surviving kappa servers split
the Q functions evenly, payloads grow to (Q/kappa)*T bytes, and the
measured load becomes (2/g)*(K-r)/kappa regardless of which servers
failed.  The known optimal load for the subset placement under full
stragglers is provided as a comparison oracle only.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from math import comb, lcm
from typing import Mapping

from .balance import (
    BalanceError,
    perfect_matching,
)
from .covers import man_cover
from .constructions import man_matrix
from .fmt import decimal_trunc, printed_places
from .shuffle import (
    JobSpec,
    ReduceAssignment,
    ReduceResult,
    ShuffleTranscript,
    default_plan,
    measured_load,
    run_map_phase,
    run_reduce,
    run_shuffle,
)


@dataclass(frozen=True)
class StragglerScenario:
    """Survivor set plus the reassigned reduce duties."""

    survivors: tuple[str, ...]
    stragglers: tuple[str, ...]
    assignment: ReduceAssignment

    @classmethod
    def from_stragglers(
        cls, spec: JobSpec, stragglers, num_functions: int | None = None
    ) -> "StragglerScenario":
        """Build a scenario from the failed-server labels.

        Survivors keep matrix row order; duties are contiguous blocks of
        Q/kappa functions in that order, so Q must divide evenly.
        """
        Q = spec.num_functions if num_functions is None else num_functions
        straggler_set = set(stragglers)
        unknown = straggler_set - set(spec.matrix.rows)
        if unknown:
            raise ValueError(f"unknown straggler labels {sorted(unknown)}")
        survivors = tuple(k for k in spec.matrix.rows if k not in straggler_set)
        if len(survivors) < 2:
            raise ValueError("at least two servers must survive")
        if Q % len(survivors):
            raise ValueError(
                f"Q={Q} is not divisible by kappa={len(survivors)} survivors"
            )
        return cls(
            survivors=survivors,
            stragglers=tuple(k for k in spec.matrix.rows if k in straggler_set),
            assignment=ReduceAssignment.block_partition(survivors, Q),
        )

    @property
    def kappa(self) -> int:
        return len(self.survivors)


def straggler_load_formula(K: int, r: int, g: int, kappa: int) -> Fraction:
    """Closed-form load (2/g) * (K - r) / kappa of a straggler run."""
    return Fraction(2, g) * Fraction(K - r, kappa)


@dataclass
class StragglerRunResult:
    scenario: StragglerScenario
    transcript: ShuffleTranscript
    reduce_result: ReduceResult
    load: Fraction
    plan_mode: str


def _survivor_balanced_plan(
    spec: JobSpec, scenario: StragglerScenario
) -> dict[int, tuple[str, str]]:
    """Two-matching plan over the survivor-restricted graph.

    The balancing hypotheses rarely hold once rows are removed; raises
    BalanceError whenever they do not, and the caller falls back to the
    first-two-surviving-rows plan.
    """
    S = spec.cover.size
    kappa = scenario.kappa
    if S % kappa:
        raise BalanceError(f"S={S} not divisible by kappa={kappa}")
    gamma = S // kappa
    survivor_set = set(scenario.survivors)
    membership: dict[str, list[int]] = {k: [] for k in scenario.survivors}
    for idx, member in enumerate(spec.cover.members):
        for k in member.rows:
            if k in survivor_set:
                membership[k].append(idx)
    adj = {
        (k, j): tuple(membership[k])
        for k in scenario.survivors
        for j in range(gamma)
    }
    first = perfect_matching(adj)
    coded_by_member: dict[int, str] = {}
    for (server, _copy), member in first.items():
        coded_by_member[member] = server
    residual = {
        left: tuple(i for i in members if coded_by_member[i] != left[0])
        for left, members in adj.items()
    }
    second = perfect_matching(residual)
    uncoded_by_member: dict[int, str] = {}
    for (server, _copy), member in second.items():
        uncoded_by_member[member] = server
    return {i: (coded_by_member[i], uncoded_by_member[i]) for i in range(S)}


def straggler_run(
    spec: JobSpec,
    scenario: StragglerScenario,
    plan: str | Mapping[int, tuple[str, str]] = "default",
) -> StragglerRunResult:
    """Simulate one straggler scenario end to end.

    Stragglers map nothing and never transmit; every member must keep at
    least two surviving rows.  The transcript has 2S transmissions of
    (Q/kappa)*T bytes.
    """
    K = spec.matrix.K
    g = spec.g
    n_stragglers = K - scenario.kappa
    if not 0 <= n_stragglers <= g - 2:
        raise ValueError(
            f"{n_stragglers} stragglers exceed the tolerance g-2 = {g - 2}"
        )
    survivor_set = set(scenario.survivors)
    for idx, member in enumerate(spec.cover.members):
        alive = sum(1 for k in member.rows if k in survivor_set)
        if alive < 2:
            raise ValueError(f"member {idx} has {alive} surviving rows, needs 2")

    states = run_map_phase(spec, skip=set(scenario.stragglers))
    plan_mode = plan if isinstance(plan, str) else "explicit"
    if plan == "balanced":
        try:
            resolved = _survivor_balanced_plan(spec, scenario)
        except BalanceError:
            resolved = default_plan(spec, scenario.assignment)
            plan_mode = "default (balanced unavailable)"
    elif plan == "default":
        resolved = default_plan(spec, scenario.assignment)
    elif isinstance(plan, str):
        raise ValueError(f"unknown plan mode {plan!r}")
    else:
        resolved = dict(plan)

    transcript = run_shuffle(spec, scenario.assignment, states, resolved)
    senders = {tx.sender for tx in transcript.transmissions}
    if senders & set(scenario.stragglers):
        raise RuntimeError("a straggler appeared as a sender; scheduling bug")
    reduce_result = run_reduce(spec, scenario.assignment, states)
    return StragglerRunResult(
        scenario=scenario,
        transcript=transcript,
        reduce_result=reduce_result,
        load=measured_load(transcript, spec),
        plan_mode=plan_mode,
    )


@dataclass
class SweepResult:
    """Loads over every (or a sampled set of) straggler subsets."""

    runs: list[tuple[tuple[str, ...], Fraction, bool]]   # (stragglers, load, decode ok)
    max_load: Fraction
    min_load: Fraction
    all_equal: bool
    sampled: bool
    total_subsets: int


def worst_case_sweep(
    spec: JobSpec,
    kappa: int,
    plan: str = "default",
    cap: int = 2000,
    seed: int = 0,
) -> SweepResult:
    """Run every straggler subset of size K - kappa and compare loads.

    Uniform covers give the same load for every subset, which the sweep
    asserts.  When the subset count exceeds *cap*, a seeded sample is
    swept instead and flagged as such.
    """
    rows = spec.matrix.rows
    n_stragglers = spec.matrix.K - kappa
    if n_stragglers < 0:
        raise ValueError(f"kappa={kappa} exceeds K={spec.matrix.K}")
    total = comb(spec.matrix.K, n_stragglers)
    sampled = total > cap
    if not sampled:
        subsets = list(itertools.combinations(rows, n_stragglers))
    else:
        rng = random.Random(seed)
        picked: set[tuple[str, ...]] = set()
        while len(picked) < cap:
            picked.add(tuple(sorted(rng.sample(rows, n_stragglers))))
        subsets = sorted(picked)
    runs = []
    for subset in subsets:
        scenario = StragglerScenario.from_stragglers(spec, subset)
        result = straggler_run(spec, scenario, plan)
        runs.append((subset, result.load, result.reduce_result.ok))
    loads = [load for _, load, _ in runs]
    all_equal = len(set(loads)) == 1
    if not all_equal:
        raise RuntimeError(
            "straggler load varied across subsets of a uniform cover: "
            f"{sorted(set(loads))}"
        )
    return SweepResult(
        runs=runs,
        max_load=max(loads),
        min_load=min(loads),
        all_equal=all_equal,
        sampled=sampled,
        total_subsets=total,
    )


def optimal_straggler_load(K: int, r: int, kappa: int) -> Fraction:
    """Known optimal load for the subset placement under full stragglers.

    Comparison oracle only; this package does not implement the scheme
    attaining it.  The summation's lower index is clamped to 1 when
    r + kappa - K is not positive (see optimal_load_is_extrapolated).
    """
    if kappa < 2:
        raise ValueError("need at least two survivors")
    if K - kappa > r - 1:
        raise ValueError(
            f"{K - kappa} stragglers exceed the reference scheme's tolerance r-1={r - 1}"
        )
    lo = max(1, r + kappa - K)
    hi = min(r, kappa - 1)
    total = Fraction(0)
    for i in range(lo, hi + 1):
        total += Fraction(1, i) * Fraction(
            comb(r, i) * comb(K - r - 1, kappa - i - 1), comb(K - 1, kappa - 1)
        )
    return (1 - Fraction(r, K)) * total


def optimal_load_is_extrapolated(K: int, r: int, kappa: int) -> bool:
    """True when the summation's stated lower index r + kappa - K is <= 0
    and the clamp to 1 kicked in."""
    return r + kappa - K <= 0


@dataclass
class ComparisonRow:
    K: int
    r: int
    N: int
    g: int
    kappa: int
    ours: Fraction
    optimal: Fraction
    printed_ours: str | None
    printed_optimal: str | None
    simulated: Fraction | None
    decode_ok: bool | None
    extrapolated: bool
    passed: bool | None
    golden: bool


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]

    @property
    def ok(self) -> bool:
        return all(row.passed for row in self.rows if row.golden)

    def failures(self) -> list[ComparisonRow]:
        return [row for row in self.rows if row.golden and not row.passed]


# Golden benchmark rows for the subset placement under full stragglers:
# (K, r, kappa, reference load of this scheme, reference optimal load).
# The reference decimals are truncated, not rounded; comparisons at
# printed precision must truncate the exact rationals the same way.
GOLDEN_ROWS: tuple[tuple[int, int, int, str, str], ...] = (
    (5, 2, 4, "0.5", "0.45"),
    (7, 4, 5, "0.24", "0.169"),
    (7, 4, 4, "0.3", "0.2428"),
    (10, 3, 8, "0.4375", "0.3305"),
)


def comparison_row(
    K: int,
    r: int,
    kappa: int,
    printed_ours: str | None = None,
    printed_optimal: str | None = None,
    simulate: bool = True,
    iva_bytes: int = 4,
) -> ComparisonRow:
    """Build one comparison row, optionally backing ours by simulation."""
    g = r + 1
    N = comb(K, r)
    ours = straggler_load_formula(K, r, g, kappa)
    optimal = optimal_straggler_load(K, r, kappa)
    simulated = None
    decode_ok = None
    if simulate:
        matrix = man_matrix(K, r)
        spec = JobSpec(matrix, man_cover(matrix), lcm(K, kappa), iva_bytes)
        stragglers = matrix.rows[kappa:]
        result = straggler_run(spec, StragglerScenario.from_stragglers(spec, stragglers))
        simulated = result.load
        decode_ok = result.reduce_result.ok
    passed = None
    if printed_ours is not None and printed_optimal is not None:
        passed = (
            decimal_trunc(ours, printed_places(printed_ours)) == printed_ours
            and decimal_trunc(optimal, printed_places(printed_optimal)) == printed_optimal
            and (simulated is None or (simulated == ours and bool(decode_ok)))
        )
    return ComparisonRow(
        K=K, r=r, N=N, g=g, kappa=kappa,
        ours=ours, optimal=optimal,
        printed_ours=printed_ours, printed_optimal=printed_optimal,
        simulated=simulated, decode_ok=decode_ok,
        extrapolated=optimal_load_is_extrapolated(K, r, kappa),
        passed=passed,
        golden=printed_ours is not None,
    )


def comparison_table(simulate: bool = True, iva_bytes: int = 4) -> ComparisonTable:
    """The four golden benchmark rows, simulation-backed by default."""
    rows = [
        comparison_row(K, r, kappa, po, popt, simulate=simulate, iva_bytes=iva_bytes)
        for K, r, kappa, po, popt in GOLDEN_ROWS
    ]
    return ComparisonTable(rows)


def extended_comparison_rows(
    params: list[tuple[int, int, int]], iva_bytes: int = 4
) -> list[ComparisonRow]:
    """Formula-only rows beyond the golden set, marked non-golden."""
    out = []
    for K, r, kappa in params:
        row = comparison_row(K, r, kappa, simulate=False, iva_bytes=iva_bytes)
        out.append(row)
    return out
