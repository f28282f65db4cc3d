"""Map / coded-shuffle / reduce pipeline with byte-exact accounting.

Subfiles are seeded pseudorandom byte strings and the map and reduce
functions are keyed digests, so every run is deterministic and decode
correctness can be checked byte-for-byte against a central oracle that
maps everything locally.

Each identity submatrix of the cover drives one exchange round of two
broadcasts: a coded one (bytewise XOR of the intermediate values the
other member rows are missing) and an uncoded one (the values the coded
sender itself is missing).  Payloads are exactly beta*T bytes, where
beta is the number of reduce functions per participating server and T
the intermediate-value size in bytes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from .matrix import (
    BinaryComputingMatrix,
    IdentityCover,
    format_cover,
    format_matrix,
    verify_cover,
)


class ShuffleError(Exception):
    """A shuffle-phase precondition or decode prerequisite failed."""


# ---------------------------------------------------------------------------
# Synthetic workload primitives.
# ---------------------------------------------------------------------------


def _digest_stream(tag: bytes, parts: Iterable[bytes], length: int) -> bytes:
    """Deterministic byte stream of *length* from length-prefixed parts."""
    material = b"".join(len(p).to_bytes(4, "big") + p for p in parts)
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(
            hashlib.blake2b(
                counter.to_bytes(4, "big") + material, digest_size=64, person=tag[:16]
            ).digest()
        )
        counter += 1
    return bytes(out[:length])


def make_subfile(file_seed: int, f: str, size: int) -> bytes:
    """Synthetic contents of subfile *f* under the given seed."""
    return _digest_stream(b"subfile", [str(file_seed).encode(), f.encode()], size)


def synth_map(q: int, f: str, subfile: bytes, iva_bytes: int) -> bytes:
    """Intermediate value of function q on subfile f, exactly T bytes.

    A pure keyed digest: identical inputs give identical values on every
    server.
    """
    return _digest_stream(b"iva", [q.to_bytes(8, "big"), f.encode(), subfile], iva_bytes)


def reduce_digest(q: int, ivas_in_col_order: Iterable[bytes]) -> bytes:
    """Synthetic reduce output over the N intermediate values of q."""
    return _digest_stream(b"reduce", [q.to_bytes(8, "big"), *ivas_in_col_order], 32)


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


# ---------------------------------------------------------------------------
# Job description.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JobSpec:
    """Everything one simulation run needs, immutable and reusable."""

    matrix: BinaryComputingMatrix
    cover: IdentityCover
    num_functions: int              # Q, a multiple of K
    iva_bytes: int                  # T
    file_seed: int = 0
    subfile_bytes: int = 64

    def __post_init__(self) -> None:
        g = self.cover.uniform_size
        if g is None or g < 2:
            raise ValueError("job needs a uniform cover with member size >= 2")
        if self.num_functions < self.matrix.K or self.num_functions % self.matrix.K:
            raise ValueError(
                f"Q={self.num_functions} must be a positive multiple of K={self.matrix.K}"
            )
        if self.iva_bytes < 1:
            raise ValueError("intermediate values need at least one byte")
        if self.subfile_bytes < 1:
            raise ValueError("subfiles need at least one byte")

    @property
    def g(self) -> int:
        return self.cover.uniform_size  # type: ignore[return-value]

    @property
    def beta(self) -> int:
        return self.num_functions // self.matrix.K


@dataclass(frozen=True)
class ReduceAssignment:
    """Partition of the function indices 1..Q over the reducing servers."""

    duties: dict[str, tuple[int, ...]]

    def __post_init__(self) -> None:
        if not self.duties:
            raise ValueError("assignment needs at least one server")
        sizes = {len(v) for v in self.duties.values()}
        if len(sizes) != 1:
            raise ValueError("per-server duty sizes differ")
        total = sum(len(v) for v in self.duties.values())
        flat = [q for v in self.duties.values() for q in v]
        if sorted(flat) != list(range(1, total + 1)):
            raise ValueError("duties must partition 1..Q exactly")

    @classmethod
    def block_partition(cls, servers: Iterable[str], num_functions: int) -> "ReduceAssignment":
        """Contiguous blocks of Q/len(servers) functions in server order."""
        servers = list(servers)
        if num_functions % len(servers):
            raise ValueError(
                f"Q={num_functions} is not divisible by {len(servers)} servers"
            )
        beta = num_functions // len(servers)
        return cls(
            {
                k: tuple(range(i * beta + 1, (i + 1) * beta + 1))
                for i, k in enumerate(servers)
            }
        )

    @property
    def beta(self) -> int:
        return len(next(iter(self.duties.values())))

    @property
    def servers(self) -> tuple[str, ...]:
        return tuple(self.duties)


@dataclass
class ServerState:
    """One server's intermediate values, map-phase and received kept apart.

    Decoding may only cancel against ``mapped``; ``received`` holds what
    the shuffle delivered.
    """

    label: str
    mapped: dict[tuple[int, str], bytes] = field(default_factory=dict)
    received: dict[tuple[int, str], bytes] = field(default_factory=dict)

    def value(self, q: int, f: str) -> bytes | None:
        v = self.mapped.get((q, f))
        return v if v is not None else self.received.get((q, f))


@dataclass(frozen=True)
class Transmission:
    """One broadcast: payload plus the intermediate values it describes."""

    sender: str
    member: int
    kind: str                    # "coded" | "uncoded"
    payload: bytes
    described_ivas: tuple[tuple[int, str], ...] = ()


@dataclass
class ShuffleTranscript:
    """Ordered broadcasts with per-server bit counters."""

    transmissions: tuple[Transmission, ...]
    servers: tuple[str, ...]
    payload_bytes: int
    sent_bits: dict[str, int]
    received_bits: dict[str, int]

    @property
    def total_bits(self) -> int:
        return sum(len(t.payload) * 8 for t in self.transmissions)


# ---------------------------------------------------------------------------
# Pipeline phases.
# ---------------------------------------------------------------------------


def _iva_factory(spec: JobSpec) -> Callable[[int, str], bytes]:
    """Memoised (q, f) -> intermediate value for one job's subfile contents."""
    subfiles = {
        f: make_subfile(spec.file_seed, f, spec.subfile_bytes) for f in spec.matrix.cols
    }
    cache: dict[tuple[int, str], bytes] = {}

    def iva(q: int, f: str) -> bytes:
        v = cache.get((q, f))
        if v is None:
            v = synth_map(q, f, subfiles[f], spec.iva_bytes)
            cache[(q, f)] = v
        return v

    return iva


def run_map_phase(
    spec: JobSpec,
    skip: frozenset[str] | set[str] = frozenset(),
    subfile_filter: Mapping[str, set[str]] | None = None,
) -> dict[str, ServerState]:
    """Compute, per server, the intermediate values of its zero columns.

    Servers in *skip* (full stragglers) map nothing.  Servers listed in
    *subfile_filter* (partial stragglers) map only the listed subfiles
    out of their assigned ones.
    """
    m = spec.matrix
    iva = _iva_factory(spec)
    states: dict[str, ServerState] = {}
    for k in m.rows:
        state = ServerState(label=k)
        states[k] = state
        if k in skip:
            continue
        assigned = m.zeros_in_row(k)
        if subfile_filter is not None and k in subfile_filter:
            assigned = tuple(f for f in assigned if f in subfile_filter[k])
        for f in assigned:
            for q in range(1, spec.num_functions + 1):
                state.mapped[(q, f)] = iva(q, f)
    return states


def round_for_member(
    spec: JobSpec,
    member_index: int,
    assignment: ReduceAssignment,
    states: dict[str, ServerState],
    coded_sender: str,
    uncoded_sender: str,
    tamper: Callable[[Transmission], Transmission] | None = None,
) -> tuple[Transmission, Transmission]:
    """One exchange round for a cover member: build, broadcast, decode.

    The coded payload carries, for each duty slot b, the XOR over the
    participating rows other than the coded sender of the value that row
    is missing; the uncoded payload carries the coded sender's own
    missing values.  After the round every participating row holds the
    values for its matched column.  *tamper* is a fault-injection hook
    applied to each transmission before decoding.
    """
    member = spec.cover.members[member_index]
    col_of = dict(zip(member.rows, member.cols))
    active = [k for k in member.rows if k in assignment.duties]
    if coded_sender == uncoded_sender:
        raise ShuffleError("coded and uncoded sender must be distinct servers")
    if coded_sender not in active or uncoded_sender not in active:
        raise ShuffleError("senders must be participating rows of the member")
    beta = assignment.beta
    T = spec.iva_bytes

    def mapped(owner: str, q: int, f: str) -> bytes:
        try:
            return states[owner].mapped[(q, f)]
        except KeyError:
            raise ShuffleError(
                f"server {owner!r} lacks mapped value (q={q}, f={f!r}); "
                "map phase is inconsistent with the schedule"
            ) from None

    coded_parts: list[bytes] = []
    coded_desc: list[tuple[int, str]] = []
    for b in range(beta):
        stream = bytes(T)
        for k_i in active:
            if k_i == coded_sender:
                continue
            q_i = assignment.duties[k_i][b]
            stream = _xor(stream, mapped(coded_sender, q_i, col_of[k_i]))
            coded_desc.append((q_i, col_of[k_i]))
        coded_parts.append(stream)
    f_p = col_of[coded_sender]
    uncoded_parts = []
    uncoded_desc = []
    for b in range(beta):
        q_p = assignment.duties[coded_sender][b]
        uncoded_parts.append(mapped(uncoded_sender, q_p, f_p))
        uncoded_desc.append((q_p, f_p))

    tx_coded = Transmission(coded_sender, member_index, "coded", b"".join(coded_parts), tuple(coded_desc))
    tx_uncoded = Transmission(uncoded_sender, member_index, "uncoded", b"".join(uncoded_parts), tuple(uncoded_desc))
    if tamper is not None:
        tx_coded = tamper(tx_coded)
        tx_uncoded = tamper(tx_uncoded)

    # Decode the coded broadcast at every participating row but the sender,
    # cancelling only against the receiver's own map-phase store.
    for k_i in active:
        if k_i == coded_sender:
            continue
        f_i = col_of[k_i]
        for b in range(beta):
            q_i = assignment.duties[k_i][b]
            value = tx_coded.payload[b * T : (b + 1) * T]
            for k_j in active:
                if k_j in (coded_sender, k_i):
                    continue
                q_j = assignment.duties[k_j][b]
                value = _xor(value, mapped(k_i, q_j, col_of[k_j]))
            states[k_i].received[(q_i, f_i)] = value
    # The uncoded broadcast serves the coded sender directly.
    for b in range(beta):
        q_p = assignment.duties[coded_sender][b]
        states[coded_sender].received[(q_p, f_p)] = tx_uncoded.payload[b * T : (b + 1) * T]
    return tx_coded, tx_uncoded


def default_plan(
    spec: JobSpec, assignment: ReduceAssignment, forbidden: frozenset[str] = frozenset()
) -> dict[int, tuple[str, str]]:
    """First-two-participating-rows sender plan (deliberately unbalanced)."""
    order = {k: i for i, k in enumerate(spec.matrix.rows)}
    plan: dict[int, tuple[str, str]] = {}
    for idx, member in enumerate(spec.cover.members):
        eligible = sorted(
            (k for k in member.rows if k in assignment.duties and k not in forbidden),
            key=order.__getitem__,
        )
        if len(eligible) < 2:
            raise ShuffleError(
                f"member {idx} has {len(eligible)} eligible senders, needs 2"
            )
        plan[idx] = (eligible[0], eligible[1])
    return plan


def run_shuffle(
    spec: JobSpec,
    assignment: ReduceAssignment,
    states: dict[str, ServerState],
    plan: Mapping[int, tuple[str, str]] | None = None,
    tamper: Callable[[Transmission], Transmission] | None = None,
) -> ShuffleTranscript:
    """Run the two broadcasts of every cover member and decode them.

    The cover is re-verified first; a broken cover is rejected before any
    transmission.  After the shuffle every reducing server holds the
    values for all subfiles of its duty functions.
    """
    report = verify_cover(spec.matrix, spec.cover)
    if not report.ok:
        raise ShuffleError(
            "cover failed verification: "
            f"{len(report.malformed)} malformed, {len(report.missing)} missing, "
            f"{len(report.overlapping)} overlapping"
        )
    if plan is None:
        plan = default_plan(spec, assignment)
    transmissions: list[Transmission] = []
    sent_bits = {k: 0 for k in spec.matrix.rows}
    received_bits = {k: 0 for k in spec.matrix.rows}
    for idx in range(spec.cover.size):
        coded_sender, uncoded_sender = plan[idx]
        tx_c, tx_u = round_for_member(
            spec, idx, assignment, states, coded_sender, uncoded_sender, tamper
        )
        member = spec.cover.members[idx]
        active = [k for k in member.rows if k in assignment.duties]
        for tx in (tx_c, tx_u):
            transmissions.append(tx)
            sent_bits[tx.sender] += len(tx.payload) * 8
            for k in active:
                if k != tx.sender:
                    received_bits[k] += len(tx.payload) * 8
    # Completeness: the shuffle must have delivered every value a reducing
    # server could not map itself, i.e. the ones of its row.
    for k, duties in assignment.duties.items():
        state = states[k]
        i = spec.matrix.row_index(k)
        missing_cols = [f for j, f in enumerate(spec.matrix.cols) if spec.matrix.bits[i, j]]
        for q in duties:
            for f in missing_cols:
                if state.value(q, f) is None:
                    raise ShuffleError(
                        f"server {k!r} is still missing (q={q}, f={f!r}) after shuffle"
                    )
    return ShuffleTranscript(
        transmissions=tuple(transmissions),
        servers=spec.matrix.rows,
        payload_bytes=assignment.beta * spec.iva_bytes,
        sent_bits=sent_bits,
        received_bits=received_bits,
    )


@dataclass
class ReduceResult:
    """Per-function outputs plus the byte-exact verdict against the oracle."""

    ok: bool
    outputs: dict[tuple[str, int], bytes]
    mismatches: list[tuple[str, int, str]]   # (server, q, f or "" for output)


def run_reduce(
    spec: JobSpec, assignment: ReduceAssignment, states: dict[str, ServerState]
) -> ReduceResult:
    """Reduce every duty function and compare against a central oracle.

    The oracle maps every subfile locally, so any decoding error shows up
    as a named (server, q, f) mismatch.
    """
    m = spec.matrix
    subfiles = {f: make_subfile(spec.file_seed, f, spec.subfile_bytes) for f in m.cols}
    oracle: dict[tuple[int, str], bytes] = {}

    def oracle_iva(q: int, f: str) -> bytes:
        v = oracle.get((q, f))
        if v is None:
            v = synth_map(q, f, subfiles[f], spec.iva_bytes)
            oracle[(q, f)] = v
        return v

    outputs: dict[tuple[str, int], bytes] = {}
    mismatches: list[tuple[str, int, str]] = []
    for k, duties in assignment.duties.items():
        state = states[k]
        for q in duties:
            vals = []
            complete = True
            for f in m.cols:
                v = state.value(q, f)
                if v is None or v != oracle_iva(q, f):
                    mismatches.append((k, q, f))
                    complete = False
                else:
                    vals.append(v)
            if complete:
                out = reduce_digest(q, vals)
                outputs[(k, q)] = out
                expected = reduce_digest(q, [oracle_iva(q, f) for f in m.cols])
                if out != expected:
                    mismatches.append((k, q, ""))
    return ReduceResult(ok=not mismatches, outputs=outputs, mismatches=mismatches)


def measured_load(transcript: ShuffleTranscript, spec: JobSpec) -> Fraction:
    """Total payload bits normalized by Q*N*T bits, as an exact rational."""
    denom = spec.num_functions * spec.matrix.N * spec.iva_bytes * 8
    return Fraction(transcript.total_bits, denom)


@dataclass
class PipelineResult:
    states: dict[str, ServerState]
    transcript: ShuffleTranscript
    reduce_result: ReduceResult
    load: Fraction


def run_pipeline(
    spec: JobSpec,
    plan: Mapping[int, tuple[str, str]] | None = None,
    tamper: Callable[[Transmission], Transmission] | None = None,
) -> PipelineResult:
    """Map, shuffle, reduce, and measure one no-straggler job."""
    assignment = ReduceAssignment.block_partition(spec.matrix.rows, spec.num_functions)
    states = run_map_phase(spec)
    transcript = run_shuffle(spec, assignment, states, plan, tamper)
    reduce_result = run_reduce(spec, assignment, states)
    return PipelineResult(states, transcript, reduce_result, measured_load(transcript, spec))


def partial_straggler_needs(
    spec: JobSpec, plan: Mapping[int, tuple[str, str]], partial: frozenset[str]
) -> dict[str, set[str]]:
    """Subfiles each partial straggler must map to decode its own values.

    A partial straggler cancels, per member it belongs to, the values of
    the other participating rows except the coded sender's own column.
    """
    needs: dict[str, set[str]] = {k: set() for k in partial}
    for idx, member in enumerate(spec.cover.members):
        coded_sender = plan[idx][0]
        for k in member.rows:
            if k not in partial:
                continue
            for k_j, f_j in zip(member.rows, member.cols):
                if k_j not in (k, coded_sender):
                    needs[k].add(f_j)
    return needs


def run_partial_straggler_pipeline(
    spec: JobSpec,
    partial: frozenset[str],
    plan: Mapping[int, tuple[str, str]] | None = None,
) -> PipelineResult:
    """Run mode where *partial* servers map only what their decodes need.

    Partial stragglers never transmit but still reduce their share; the
    communication load is unchanged from the no-straggler run.
    """
    assignment = ReduceAssignment.block_partition(spec.matrix.rows, spec.num_functions)
    if plan is None:
        plan = default_plan(spec, assignment, forbidden=partial)
    for idx, (cs, us) in plan.items():
        if cs in partial or us in partial:
            raise ShuffleError(f"member {idx}: sender plan uses a partial straggler")
    needs = partial_straggler_needs(spec, plan, partial)
    states = run_map_phase(spec, subfile_filter=needs)
    transcript = run_shuffle(spec, assignment, states, plan)
    # Slow servers finish the rest of their map work after the shuffle
    # window has closed; the transcript and load are already fixed.
    iva = _iva_factory(spec)
    for k in partial:
        for f in spec.matrix.zeros_in_row(k):
            for q in range(1, spec.num_functions + 1):
                states[k].mapped.setdefault((q, f), iva(q, f))
    reduce_result = run_reduce(spec, assignment, states)
    return PipelineResult(states, transcript, reduce_result, measured_load(transcript, spec))


# ---------------------------------------------------------------------------
# Transcript persistence: binary log plus a JSON-friendly summary.
# ---------------------------------------------------------------------------

_MAGIC = b"CMRT"
_KIND_CODE = {"coded": 0, "uncoded": 1}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


def job_digest(spec: JobSpec) -> bytes:
    """32-byte digest identifying (matrix, cover, Q, T, seed)."""
    h = hashlib.sha256()
    h.update(format_matrix(spec.matrix).encode())
    h.update(format_cover(spec.cover).encode())
    h.update(
        f"Q={spec.num_functions} T={spec.iva_bytes} seed={spec.file_seed} "
        f"subfile={spec.subfile_bytes}".encode()
    )
    return h.digest()


def save_transcript(path, spec: JobSpec, transcript: ShuffleTranscript) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(">B", 1))
        fh.write(job_digest(spec))
        fh.write(
            struct.pack(
                ">7I",
                spec.matrix.K,
                spec.matrix.N,
                spec.matrix.r,
                spec.g,
                spec.cover.size,
                spec.num_functions,
                spec.iva_bytes,
            )
        )
        fh.write(struct.pack(">I", len(transcript.transmissions)))
        for tx in transcript.transmissions:
            sender = tx.sender.encode()
            fh.write(struct.pack(">H", len(sender)))
            fh.write(sender)
            fh.write(struct.pack(">IB", tx.member, _KIND_CODE[tx.kind]))
            fh.write(struct.pack(">I", len(tx.payload)))
            fh.write(tx.payload)


def load_transcript(path) -> tuple[dict, tuple[Transmission, ...]]:
    """Read a transcript log; described values are not persisted."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a transcript log")
    off = 4
    (version,) = struct.unpack_from(">B", data, off)
    off += 1
    digest = data[off : off + 32]
    off += 32
    K, N, r, g, S, Q, T = struct.unpack_from(">7I", data, off)
    off += 28
    (count,) = struct.unpack_from(">I", data, off)
    off += 4
    transmissions = []
    for _ in range(count):
        (slen,) = struct.unpack_from(">H", data, off)
        off += 2
        sender = data[off : off + slen].decode()
        off += slen
        member, kind = struct.unpack_from(">IB", data, off)
        off += 5
        (plen,) = struct.unpack_from(">I", data, off)
        off += 4
        payload = data[off : off + plen]
        off += plen
        transmissions.append(Transmission(sender, member, _KIND_NAME[kind], payload))
    header = {
        "version": version,
        "job_digest": digest.hex(),
        "K": K, "N": N, "r": r, "g": g, "S": S, "Q": Q, "T": T,
    }
    return header, tuple(transmissions)
