"""Non-overlapping identity submatrix covers.

Analytic covers exist for the three generated families (subset placement,
t-subset scheme, transversal design); arbitrary matrices, e.g. ingested
block designs, go through the exact backtracking search or the seeded
greedy search.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .constructions import (
    man_matrix,
    subset_label,
    t_subset_matrix,
    transversal_block_label,
    transversal_matrix,
    transversal_point_label,
)
from .matrix import BinaryComputingMatrix, IdentityCover, IdentitySubmatrix


class CoverSearchError(Exception):
    """Base class for cover search failures."""


class CoverInfeasibleError(CoverSearchError):
    """No cover with the requested uniform size exists (or can exist)."""


class CoverBudgetError(CoverSearchError):
    """The search budget ran out before a cover was found or refuted."""


class MatrixShapeError(ValueError):
    """The matrix does not have the shape the analytic cover requires."""


def _matrices_equal(a: BinaryComputingMatrix, b: BinaryComputingMatrix) -> bool:
    return a.rows == b.rows and a.cols == b.cols and np.array_equal(a.bits, b.bits)


def man_cover(m: BinaryComputingMatrix) -> IdentityCover:
    """Analytic cover of a subset-placement matrix: one member per
    (r+1)-subset B, rows B, row k matched with column B minus k."""
    K, r = m.K, m.r
    if not _matrices_equal(m, man_matrix(K, r)):
        raise MatrixShapeError("matrix is not the subset placement for its (K, r)")
    members = []
    for B in itertools.combinations(range(1, K + 1), r + 1):
        rows = tuple(str(k) for k in B)
        cols = tuple(subset_label(str(x) for x in B if x != k) for k in B)
        members.append(IdentitySubmatrix(rows, cols))
    return IdentityCover(tuple(members))


def t_subset_cover(m: BinaryComputingMatrix) -> IdentityCover:
    """Analytic cover of a t-subset matrix.

    One member per (t-1)-subset D: rows are the v-t+1 servers outside D,
    and row k is matched with the column D + {k}.
    """
    v = m.K
    t = v - m.r
    if not _matrices_equal(m, t_subset_matrix(v, t)):
        raise MatrixShapeError("matrix is not the t-subset scheme for its (v, t)")
    members = []
    for D in itertools.combinations(range(1, v + 1), t - 1):
        outside = [k for k in range(1, v + 1) if k not in D]
        rows = tuple(str(k) for k in outside)
        cols = tuple(subset_label(str(x) for x in sorted((*D, k))) for k in outside)
        members.append(IdentitySubmatrix(rows, cols))
    return IdentityCover(tuple(members))


def transversal_cover(m: BinaryComputingMatrix) -> IdentityCover:
    """Analytic cover of a transversal-design matrix, g = n.

    One member per (group, slope) pair: its rows are the n blocks of that
    slope and each block is matched with its own point of that group.
    """
    n = int(round(m.K**0.5))
    if n * n != m.K or m.N % n:
        raise MatrixShapeError("matrix dimensions do not fit a transversal design")
    k = m.N // n
    if not _matrices_equal(m, transversal_matrix(k, n)):
        raise MatrixShapeError("matrix is not the transversal design for its (k, n)")
    members = []
    for i in range(1, k + 1):
        for a in range(n):
            rows = tuple(transversal_block_label(a, b) for b in range(n))
            cols = tuple(
                transversal_point_label(i, (a * (i - 1) + b) % n) for b in range(n)
            )
            members.append(IdentitySubmatrix(rows, cols))
    return IdentityCover(tuple(members))


def search_cover(
    m: BinaryComputingMatrix,
    g: int,
    mode: str = "exact",
    seed: int = 0,
    restarts: int = 64,
    max_nodes: int | None = None,
) -> IdentityCover:
    """Find a non-overlapping cover with uniform member size g.

    Exact mode backtracks over one-entries in row-major scan order,
    always branching on the first uncovered entry; it is complete, so a
    failure there means no such cover exists.  Greedy mode grows maximal
    members from the first uncovered entry and restarts with seeded
    shuffles; it may fail on covers the exact mode would find.  Both
    modes are deterministic given (matrix, g, mode, seed).
    """
    if g < 2:
        raise CoverInfeasibleError("member size g must be at least 2")
    total_ones = m.ones_count()
    if total_ones % g:
        raise CoverInfeasibleError(
            f"{total_ones} one-entries are not divisible by g={g}"
        )
    ones = [(int(i), int(j)) for i, j in zip(*np.nonzero(m.bits))]
    if mode == "exact":
        member_idx = _exact_search(m.bits, ones, g, max_nodes)
        if member_idx is None:
            raise CoverInfeasibleError(
                f"exhaustive search: no non-overlapping size-{g} cover exists"
            )
    elif mode == "greedy":
        member_idx = _greedy_search(m.bits, ones, g, seed, restarts)
        if member_idx is None:
            raise CoverBudgetError(
                f"greedy search failed after {restarts} restarts (a cover may still exist)"
            )
    else:
        raise ValueError(f"unknown search mode {mode!r}")
    members = tuple(
        IdentitySubmatrix(
            tuple(m.rows[ones[t][0]] for t in member),
            tuple(m.cols[ones[t][1]] for t in member),
        )
        for member in member_idx
    )
    return IdentityCover(members)


def _compatible(bits: np.ndarray, rows: list[int], cols: list[int], i: int, j: int) -> bool:
    # A new matched one (i, j) must sit on zero cross entries with every
    # one already in the partial member.
    if i in rows or j in cols:
        return False
    for jc in cols:
        if bits[i, jc]:
            return False
    for ir in rows:
        if bits[ir, j]:
            return False
    return True


def _exact_search(
    bits: np.ndarray, ones: list[tuple[int, int]], g: int, max_nodes: int | None
) -> list[list[int]] | None:
    n_ones = len(ones)
    covered = bytearray(n_ones)
    chosen: list[list[int]] = []
    nodes = 0

    def extensions(partial: list[int], rows: list[int], cols: list[int], start: int):
        for t in range(start, n_ones):
            if covered[t]:
                continue
            i, j = ones[t]
            if _compatible(bits, rows, cols, i, j):
                yield t

    def solve(scan_from: int) -> bool:
        nonlocal nodes
        t0 = scan_from
        while t0 < n_ones and covered[t0]:
            t0 += 1
        if t0 == n_ones:
            return True
        nodes += 1
        if max_nodes is not None and nodes > max_nodes:
            raise CoverBudgetError(f"exact search exceeded {max_nodes} nodes")
        i0, j0 = ones[t0]
        partial = [t0]
        rows = [i0]
        cols = [j0]

        def grow(start: int) -> bool:
            if len(partial) == g:
                for t in partial:
                    covered[t] = 1
                chosen.append(list(partial))
                if solve(t0 + 1):
                    return True
                chosen.pop()
                for t in partial:
                    covered[t] = 0
                return False
            for t in extensions(partial, rows, cols, start):
                i, j = ones[t]
                partial.append(t)
                rows.append(i)
                cols.append(j)
                if grow(t + 1):
                    return True
                partial.pop()
                rows.pop()
                cols.pop()
            return False

        return grow(t0 + 1)

    return chosen if solve(0) else None


def _greedy_search(
    bits: np.ndarray, ones: list[tuple[int, int]], g: int, seed: int, restarts: int
) -> list[list[int]] | None:
    n_ones = len(ones)

    def attempt(rng: random.Random | None) -> list[list[int]] | None:
        covered = bytearray(n_ones)
        chosen: list[list[int]] = []
        remaining = n_ones
        while remaining:
            t0 = next(t for t in range(n_ones) if not covered[t])
            i0, j0 = ones[t0]
            partial = [t0]
            rows = [i0]
            cols = [j0]
            candidates = [t for t in range(t0 + 1, n_ones) if not covered[t]]
            if rng is not None:
                rng.shuffle(candidates)
            for t in candidates:
                if len(partial) == g:
                    break
                i, j = ones[t]
                if _compatible(bits, rows, cols, i, j):
                    partial.append(t)
                    rows.append(i)
                    cols.append(j)
            if len(partial) != g:
                return None
            for t in partial:
                covered[t] = 1
            remaining -= g
            chosen.append(partial)
        return chosen

    result = attempt(None)
    if result is not None:
        return result
    for run in range(1, restarts):
        result = attempt(random.Random((seed << 20) ^ run))
        if result is not None:
            return result
    return None


@dataclass
class RowRegularityReport:
    """Per-server appearance counts across cover members."""

    counts: dict[str, int]
    regular: bool
    expected: Fraction


def row_regularity(c: IdentityCover, m: BinaryComputingMatrix) -> RowRegularityReport:
    """Count, per server, the members whose row set contains it.

    The cover is balanced-schedulable only when every count equals the
    average S*g/K, which is what the ``regular`` flag reports.
    """
    counts = {k: 0 for k in m.rows}
    slots = 0
    for sub in c.members:
        slots += sub.size
        for k in sub.rows:
            counts[k] += 1
    expected = Fraction(slots, m.K)
    regular = all(count == expected for count in counts.values())
    return RowRegularityReport(counts=counts, regular=regular, expected=expected)
