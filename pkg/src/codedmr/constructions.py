"""Generators for binary computing matrices.

Covers the subset-indexed MAN placement, the t-subset scheme, the
built-in Fano plane, incidence matrices of ingested (v,k,1)-block
designs, and transversal designs built from prime-field lines.  Also
provides the closed-form communication loads for the five design-based
scheme families (ids "I" to "V") with and without full stragglers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .matrix import BinaryComputingMatrix, FormatError


class DesignError(ValueError):
    """Raised when a block design violates the declared parameters."""


def subset_label(elems) -> str:
    """Stable label for a set of point labels.

    Single-character points concatenate ('127'); anything longer joins
    with '-' so labels stay unambiguous.
    """
    elems = [str(e) for e in elems]
    if all(len(e) == 1 for e in elems):
        return "".join(elems)
    return "-".join(elems)


def _colex_subsets(universe: range, size: int) -> list[tuple[int, ...]]:
    # Colexicographic order makes subset-indexed columns deterministic.
    return sorted(itertools.combinations(universe, size), key=lambda a: a[::-1])


def man_matrix(K: int, r: int) -> BinaryComputingMatrix:
    """All-r-subsets placement: column f_A has zeros exactly on A.

    Columns are indexed by the r-subsets A of [K] in colex order, so
    N = C(K, r) and every column has r zeros.
    """
    if not 1 <= r < K:
        raise ValueError(f"need 1 <= r < K, got r={r}, K={K}")
    subsets = _colex_subsets(range(1, K + 1), r)
    rows = tuple(str(k) for k in range(1, K + 1))
    cols = tuple(subset_label(map(str, a)) for a in subsets)
    bits = np.ones((K, len(subsets)), dtype=np.uint8)
    for j, a in enumerate(subsets):
        for k in a:
            bits[k - 1, j] = 0
    return BinaryComputingMatrix(rows, cols, bits, r)


def t_subset_matrix(v: int, t: int) -> BinaryComputingMatrix:
    """t-subset scheme: column A has ones exactly on A, so r = v - t."""
    if not 1 <= t < v:
        raise ValueError(f"need 1 <= t < v, got t={t}, v={v}")
    subsets = _colex_subsets(range(1, v + 1), t)
    rows = tuple(str(k) for k in range(1, v + 1))
    cols = tuple(subset_label(map(str, a)) for a in subsets)
    bits = np.zeros((v, len(subsets)), dtype=np.uint8)
    for j, a in enumerate(subsets):
        for k in a:
            bits[k - 1, j] = 1
    return BinaryComputingMatrix(rows, cols, bits, v - t)


FANO_BLOCKS = ("127", "145", "136", "467", "256", "357", "234")


def fano_design() -> "BlockDesign":
    """The 7-point plane as a block design (7 blocks of size 3)."""
    return BlockDesign(
        points=tuple(str(p) for p in range(1, 8)),
        blocks=tuple(tuple(b) for b in FANO_BLOCKS),
        block_size=3,
    )


def fano_matrix() -> BinaryComputingMatrix:
    """The built-in 7x7 incidence matrix of the Fano plane, r = 4."""
    rows = tuple(str(k) for k in range(1, 8))
    bits = np.zeros((7, 7), dtype=np.uint8)
    for j, block in enumerate(FANO_BLOCKS):
        for p in block:
            bits[int(p) - 1, j] = 1
    return BinaryComputingMatrix(rows, FANO_BLOCKS, bits, 4)


@dataclass(frozen=True)
class BlockDesign:
    """A set system: v points and b blocks, each block a tuple of points."""

    points: tuple[str, ...]
    blocks: tuple[tuple[str, ...], ...]
    block_size: int

    @property
    def v(self) -> int:
        return len(self.points)

    @property
    def b(self) -> int:
        return len(self.blocks)

    def replication(self) -> dict[str, int]:
        """Block-membership count per point."""
        counts = {p: 0 for p in self.points}
        for block in self.blocks:
            for p in block:
                counts[p] += 1
        return counts


def validate_bibd(d: BlockDesign) -> list[str]:
    """Violations of the (v, k, 1)-design axioms, empty when valid."""
    problems: list[str] = []
    k = d.block_size
    for block in d.blocks:
        if len(set(block)) != len(block):
            problems.append(f"block {subset_label(block)} repeats a point")
        elif len(block) != k:
            problems.append(f"block {subset_label(block)} has size {len(block)}, expected {k}")
    pair_counts: dict[frozenset[str], int] = {}
    for block in d.blocks:
        for p, q in itertools.combinations(sorted(set(block)), 2):
            pair_counts[frozenset((p, q))] = pair_counts.get(frozenset((p, q)), 0) + 1
    for p, q in itertools.combinations(d.points, 2):
        n = pair_counts.get(frozenset((p, q)), 0)
        if n != 1:
            problems.append(f"pair ({p},{q}) occurs in {n} blocks, expected 1")
    expected_b = d.v * (d.v - 1) // (k * (k - 1)) if k >= 2 else 0
    if k >= 2 and d.v * (d.v - 1) % (k * (k - 1)) == 0 and d.b != expected_b:
        problems.append(f"{d.b} blocks, but a (v={d.v}, k={k}, 1)-design has {expected_b}")
    reps = set(d.replication().values())
    if len(reps) > 1:
        problems.append(f"non-uniform replication counts {sorted(reps)}")
    return problems


def bibd_matrix(d: BlockDesign) -> BinaryComputingMatrix:
    """Incidence matrix of a (v, k, 1)-design: K = v, N = b, r = v - k."""
    problems = validate_bibd(d)
    if problems:
        raise DesignError("; ".join(problems))
    rows = d.points
    cols = tuple(subset_label(block) for block in d.blocks)
    bits = np.zeros((d.v, d.b), dtype=np.uint8)
    point_idx = {p: i for i, p in enumerate(d.points)}
    for j, block in enumerate(d.blocks):
        for p in block:
            bits[point_idx[p], j] = 1
    return BinaryComputingMatrix(rows, cols, bits, d.v - d.block_size)


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % p for p in range(2, int(n**0.5) + 1))


def transversal_point_label(group: int, value: int) -> str:
    return f"{group}:{value}"


def transversal_block_label(a: int, b: int) -> str:
    return f"{a},{b}"


def transversal_matrix(k: int, n: int) -> BinaryComputingMatrix:
    """Transversal design TD(k, n) from lines over Z_n, n prime.

    Points (i, x) for groups i in [k] and values x in Z_n are the N = kn
    columns; the K = n^2 rows are the blocks {(i, a*(i-1)+b mod n)} for
    slopes a and intercepts b.  Each point lies in n blocks, so
    r = n(n-1).  Composite n would need mutually orthogonal Latin
    squares, which this generator does not build.
    """
    if not _is_prime(n):
        raise ValueError(
            f"n={n} is not prime; the line construction needs Z_n arithmetic "
            "(composite n is unsupported)"
        )
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    points = [(i, x) for i in range(1, k + 1) for x in range(n)]
    cols = tuple(transversal_point_label(i, x) for i, x in points)
    rows = tuple(transversal_block_label(a, b) for a in range(n) for b in range(n))
    bits = np.zeros((n * n, k * n), dtype=np.uint8)
    col_idx = {pt: j for j, pt in enumerate(points)}
    for ri, (a, b) in enumerate((a, b) for a in range(n) for b in range(n)):
        for i in range(1, k + 1):
            bits[ri, col_idx[(i, (a * (i - 1) + b) % n)]] = 1
    return BinaryComputingMatrix(rows, cols, bits, n * (n - 1))


@dataclass(frozen=True)
class SchemeParameters:
    """Derived job parameters for one design-based scheme family.

    ``scheme`` is the family id "I".."V"; ``g`` is the identity size of
    the known cover, or None for family III where only the load formula
    is exposed.
    """

    scheme: str
    v: int | None = None
    k: int | None = None
    t: int | None = None
    n: int | None = None
    K: int = 0
    N: int = 0
    r: int = 0
    g: int | None = None

    @classmethod
    def bibd(cls, v: int, k: int) -> "SchemeParameters":
        """Family I: (v, k, 1)-design incidence matrix."""
        if not 2 <= k < v:
            raise ValueError(f"need 2 <= k < v, got k={k}, v={v}")
        if (v - 1) % (k - 1) or (v * (v - 1)) % (k * (k - 1)):
            raise ValueError(f"(v={v}, k={k}) violates the design divisibility conditions")
        return cls(
            "I", v=v, k=k,
            K=v, N=v * (v - 1) // (k * (k - 1)), r=v - k, g=(v - 1) // (k - 1),
        )

    @classmethod
    def symmetric_bibd(cls, v: int, k: int) -> "SchemeParameters":
        """Family II: symmetric design with two blocks per pair."""
        if not 3 <= k < v:
            raise ValueError(f"need 3 <= k < v, got k={k}, v={v}")
        return cls("II", v=v, k=k, K=v, N=k * v, r=v - k + 1, g=k - 1)

    @classmethod
    def t_design_1(cls, v: int, k: int, t: int) -> "SchemeParameters":
        """Family III: first t-design scheme; load formula only, g implied."""
        if not 2 <= t <= k < v:
            raise ValueError(f"need 2 <= t <= k < v, got t={t}, k={k}, v={v}")
        if (comb(v, t) * k) % comb(k, t):
            raise ValueError(f"(v={v}, k={k}, t={t}) gives a non-integral subfile count")
        return cls(
            "III", v=v, k=k, t=t,
            K=comb(v, t - 1), N=comb(v, t) * k // comb(k, t),
            r=comb(v, t - 1) - comb(k - 1, t - 1), g=None,
        )

    @classmethod
    def t_design_2(cls, v: int, t: int) -> "SchemeParameters":
        """Family IV: the t-subset scheme built by t_subset_matrix."""
        if not 1 <= t < v:
            raise ValueError(f"need 1 <= t < v, got t={t}, v={v}")
        return cls("IV", v=v, t=t, K=v, N=comb(v, t), r=v - t, g=v - t + 1)

    @classmethod
    def transversal(cls, k: int, n: int) -> "SchemeParameters":
        """Family V: transversal design TD(k, n)."""
        if not 2 <= k <= n:
            raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
        return cls("V", k=k, n=n, K=n * n, N=k * n, r=n * (n - 1), g=n)


def scheme_load(p: SchemeParameters, survivors: int | None = None) -> Fraction:
    """Closed-form communication load of a scheme family.

    With ``survivors`` (the count of non-straggling servers) the
    full-straggler variant of the formula is returned instead.
    """
    kappa = survivors
    if kappa is not None and not 1 <= kappa <= p.K:
        raise ValueError(f"survivors={kappa} out of range [1, K={p.K}]")
    if p.scheme == "I":
        v, k = p.v, p.k
        if kappa is None:
            return Fraction(2 * k * (k - 1), v * (v - 1))
        return Fraction(2 * k * (k - 1), kappa * (v - 1))
    if p.scheme == "II":
        if kappa is None:
            return Fraction(2, p.v)
        return Fraction(2, kappa)
    if p.scheme == "III":
        v, k, t = p.v, p.k, p.t
        if kappa is None:
            return Fraction(
                2 * (v - t + 1) * comb(k - 1, t - 1) ** 2,
                v * comb(v - 1, t - 1) ** 2,
            )
        return Fraction(2 * comb(k - 1, t - 1) ** 2, kappa * comb(v - 1, t - 1))
    if p.scheme == "IV":
        v, t = p.v, p.t
        if kappa is None:
            return Fraction(2 * t, v * (v - t + 1))
        return Fraction(2 * t, kappa * (v - t + 1))
    if p.scheme == "V":
        if kappa is None:
            return Fraction(2, p.n * p.n)
        return Fraction(2, kappa)
    raise ValueError(f"unknown scheme family {p.scheme!r}")


def ingest_design(text: str) -> BlockDesign:
    """Parse the design file format.

    Line 1 is ``v b k``, line 2 the point labels, then b block lines of
    space-separated point labels.  Lines starting with '#' are comments.
    Structural errors raise; design-axiom validation is deferred to
    :func:`bibd_matrix` or the caller.
    """
    raw_lines = text.splitlines()
    lines: list[str] = []
    for raw in raw_lines:
        stripped = raw.strip()
        if stripped.startswith("#"):
            continue
        lines.append(stripped)
    # Drop trailing blank lines but keep interior ones: a blank where a
    # block should be is a malformed (empty) block line.
    while lines and not lines[-1]:
        lines.pop()
    if len(lines) < 2:
        raise FormatError("design file needs a header and a point-label line")
    header = lines[0].split()
    if len(header) != 3:
        raise FormatError(f"design header must be 'v b k', got {lines[0]!r}")
    try:
        v, b, k = (int(tok) for tok in header)
    except ValueError as exc:
        raise FormatError(f"non-integer design header: {lines[0]!r}") from exc
    points = tuple(lines[1].split())
    if len(points) != v:
        raise FormatError(f"expected {v} point labels, got {len(points)}")
    if len(set(points)) != v:
        raise FormatError("duplicate point labels")
    block_lines = lines[2:]
    if len(block_lines) != b:
        raise FormatError(f"expected {b} block lines, got {len(block_lines)}")
    point_set = set(points)
    blocks: list[tuple[str, ...]] = []
    seen: set[frozenset[str]] = set()
    for ln in block_lines:
        toks = tuple(ln.split())
        if not toks:
            raise FormatError("empty block line")
        for p in toks:
            if p not in point_set:
                raise FormatError(f"block point {p!r} is not a declared point")
        key = frozenset(toks)
        if key in seen:
            raise FormatError(f"duplicate block {subset_label(sorted(toks))}")
        seen.add(key)
        blocks.append(toks)
    return BlockDesign(points=points, blocks=tuple(blocks), block_size=k)


def format_design(d: BlockDesign) -> str:
    lines = [f"{d.v} {d.b} {d.block_size}", " ".join(d.points)]
    lines.extend(" ".join(block) for block in d.blocks)
    return "\n".join(lines) + "\n"
