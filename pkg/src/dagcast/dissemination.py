"""Round-based dissemination: one participant's protocol state machine.

Each slot a participant transmits exactly one :class:`BroadcastMessage`.  It
carries the participant's latest vertex and every vertex it learned since its
previous transmission, so each holder forwards a piece of history once.
Enquiry requests and responses ride on the same per-slot transmission.
"""
from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from . import equivocation
from .dag import (
    ForgeryError,
    Keyring,
    LocalDag,
    ProtocolParams,
    Vertex,
    VertexRef,
    completeness,
    make_vertex,
    sort_key,
)


class ProtocolViolation(Exception):
    pass


class Kind(str, Enum):
    ROUND = "round_broadcast"
    ENQUIRY_REQUEST = "enquiry_request"
    ENQUIRY_RESPONSE = "enquiry_response"


class Status(str, Enum):
    ACTIVE = "active"
    COMPLETE = "complete"
    DEGRADED = "degraded"
    HALTED = "halted"


@dataclass(frozen=True)
class BroadcastMessage:
    sender: int
    round: int
    new_vertex: Vertex
    delta: tuple[Vertex, ...] = ()
    kind: Kind = Kind.ROUND
    request: frozenset[tuple[int, int]] = frozenset()

    def vertices(self) -> list[Vertex]:
        return [self.new_vertex, *self.delta]


@dataclass(frozen=True)
class Advance:
    vertex: Vertex


@dataclass(frozen=True)
class Wait:
    missing: int


@dataclass(frozen=True)
class Halt:
    status: Status


AdvanceDecision = Advance | Wait | Halt


@dataclass(frozen=True)
class RecoveryStep:
    action: str  # "wait" or "enquire"
    slots: frozenset[tuple[int, int]] = frozenset()


@dataclass(frozen=True)
class RecoveryPlan:
    steps: tuple[RecoveryStep, ...] = ()
    exhausted: bool = False

    def __bool__(self):
        return bool(self.steps)


TRACE_FIELDS = ("time_ms", "participant", "event", "origin", "round", "digest", "detail")

TraceSink = Callable[[float, int, str, VertexRef | None, str], None]


def trace_row(time: float, pid: int, event: str, ref: VertexRef | None, detail: str = ""):
    if ref is None:
        return (f"{time:.3f}", pid, event, "", "", "", detail)
    return (f"{time:.3f}", pid, event, ref.origin, ref.round, ref.digest[:8].hex(), detail)


def trace_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class _PendingResponse:
    slots: set[tuple[int, int]]
    due: int


class Participant:
    """Protocol state of a single participant; owned by one event loop."""

    def __init__(self, pid: int, params: ProtocolParams, keyring: Keyring, *,
                 e_max: int = 2, rng: random.Random | None = None,
                 trace: TraceSink | None = None):
        self.id = pid
        self.params = params
        self.keyring = keyring
        self.e_max = e_max
        self.rng = rng or random.Random(pid)
        self._trace = trace
        self.dag = LocalDag(keyring)
        self.current_round = -1
        self.own: dict[int, Vertex] = {}
        self.last_broadcast: dict[int, BroadcastMessage] = {}
        self.status = Status.ACTIVE
        self.arrival: dict[VertexRef, float] = {}
        self.complete_at: float | None = None
        self.complete_round: int | None = None
        self.flagged: dict[int, int] = {}
        self.enquiries_sent = 0
        self.pending_enquiries: dict[int, _PendingResponse] = {}
        self._fresh: dict[VertexRef, Vertex] = {}
        self._incomplete_since: int | None = None
        self._slot = 0

    def _log(self, time, event, ref=None, detail=""):
        if self._trace is not None:
            self._trace(time, self.id, event, ref, detail)

    @property
    def frontier(self) -> Vertex:
        return self.own[self.current_round]

    # -- protocol operations ---------------------------------------------

    def start_round0(self, payload: bytes, now: float = 0.0) -> BroadcastMessage:
        if self.current_round != -1:
            raise ProtocolViolation(f"p{self.id} already started")
        if not payload:
            raise ValueError("round-0 payload must be non-empty")
        v = make_vertex(self.keyring, self.id, 0, payload)
        self._adopt(v, now)
        msg = BroadcastMessage(self.id, 0, v)
        self.last_broadcast[0] = msg
        self._log(now, "advance", v.ref)
        return msg

    def on_receive(self, msg: BroadcastMessage, now: float
                   ) -> list[equivocation.EquivocationEvidence]:
        """Merge a delivered message.  Returns fresh equivocation evidence."""
        try:
            new = self.dag.absorb(msg.vertices())
        except ForgeryError:
            self._log(now, "forgery", msg.new_vertex.ref, f"from={msg.sender}")
            raise
        for v in new:
            self.arrival.setdefault(v.ref, now)
            self._fresh[v.ref] = v
        fresh = equivocation.refresh(self.dag, new) if new else []
        for ev in fresh:
            flag_round = self.current_round + 1
            self.flagged.setdefault(ev.offender, flag_round)
            self._log(now, "flag", ev.variant_a.ref, ev.to_json())
        if msg.request and msg.sender != self.id:
            self._queue_response(msg.sender, msg.request)
        if msg.kind is Kind.ENQUIRY_RESPONSE and self.pending_enquiries:
            self._suppress(msg)
        return fresh

    def originals_held(self) -> int:
        """Participants with a full, valid round-0 vertex in the local DAG.

        Every held round-0 vertex is below the next vertex's parents, so this
        equals the originals reachable from the vertex about to be created.
        """
        dag = self.dag
        count = 0
        for j in range(self.params.n):
            if j in dag.byzantine:
                continue
            for r in dag.variants(j, 0):
                if r not in dag.invalidated and dag[r].payload is not None:
                    count += 1
                    break
        return count

    def try_advance(self, now: float) -> AdvanceDecision:
        if self.current_round < 0:
            raise ProtocolViolation("start_round0 not called")
        if self.status is Status.HALTED:
            return Halt(self.status)
        if self.current_round >= self.params.r_max:
            return Halt(self.finish(now))
        held = self.originals_held()
        if held < self.params.quorum:
            self._log(now, "wait", self.frontier.ref, f"originals={held}")
            return Wait(self.params.quorum - held)
        r = self.current_round + 1
        parents = self.dag.tips_below(r)
        parents.add(self.frontier.ref)
        v = make_vertex(self.keyring, self.id, r, b"", parents)
        self._adopt(v, now)
        self._log(now, "advance", v.ref, f"parents={len(parents)}")
        if self.status is not Status.COMPLETE and r > self.params.history_depth:
            rep = completeness(self.dag, v.ref, self.params)
            if rep.complete:
                self.status = Status.COMPLETE
                self.complete_round = r
                self.complete_at = self._history_time(v.ref)
                self._log(self.complete_at, "complete", v.ref, f"round={r}")
            elif self._incomplete_since is None:
                self._incomplete_since = r
        return Advance(v)

    def missing_slots(self) -> set[tuple[int, int]]:
        """History slots for which no variant is held at all."""
        return {(j, k) for j in range(self.params.n)
                for k in range(self.params.history_depth + 1)
                if not self.dag.variants(j, k)}

    def plan_recovery(self) -> RecoveryPlan:
        if (self.status is Status.COMPLETE or self._incomplete_since is None
                or self.current_round <= self.params.history_depth):
            return RecoveryPlan()
        missing = frozenset(self.missing_slots())
        if not missing:
            # everything is held; the next vertex will close the gap
            return RecoveryPlan((RecoveryStep("wait"),))
        if self.current_round <= self._incomplete_since:
            return RecoveryPlan((RecoveryStep("wait"), RecoveryStep("enquire", missing)))
        if self.enquiries_sent < self.e_max:
            return RecoveryPlan((RecoveryStep("enquire", missing),))
        return RecoveryPlan(exhausted=True)

    def outgoing(self, now: float, slot: int) -> BroadcastMessage:
        """The single transmission for ``slot``."""
        self._slot = slot
        plan = self.plan_recovery()
        kind = Kind.ROUND
        request: frozenset = frozenset()
        if plan.exhausted and self.status is Status.ACTIVE:
            self.status = Status.DEGRADED
            self._log(now, "degraded", self.frontier.ref, "enquiry budget exhausted")
        elif plan.steps and plan.steps[0].action == "enquire":
            request = plan.steps[0].slots
            kind = Kind.ENQUIRY_REQUEST
            self.enquiries_sent += 1
            self._log(now, "enquiry", self.frontier.ref,
                      ";".join(f"{j}:{k}" for j, k in sorted(request)))
        delta = dict(self._fresh)
        self._fresh.clear()
        due = [j for j, p in self.pending_enquiries.items() if p.due <= slot]
        if due:
            for j in sorted(due):
                for v in self._sub_dag(self.pending_enquiries.pop(j).slots):
                    delta.setdefault(v.ref, v)
            if kind is Kind.ROUND:
                kind = Kind.ENQUIRY_RESPONSE
            self._log(now, "response", self.frontier.ref, ",".join(map(str, sorted(due))))
        delta.pop(self.frontier.ref, None)
        body = tuple(delta[r] for r in sorted(delta, key=sort_key))
        msg = BroadcastMessage(self.id, self.current_round, self.frontier, body, kind, request)
        self.last_broadcast[self.current_round] = msg
        return msg

    def finish(self, now: float) -> Status:
        """Settle the terminal status once the round budget is spent."""
        if self.status is Status.COMPLETE or self.status is Status.HALTED:
            return self.status
        vanished = {j for j in range(self.params.n)
                    if not any(self.dag.variants(j, k) for k in range(self.params.r_max + 1))}
        rep = completeness(self.dag, self.frontier.ref, self.params, exclude=vanished)
        self.status = Status.DEGRADED if (rep.complete and vanished) else Status.HALTED
        self._log(now, self.status.value, self.frontier.ref,
                  ";".join(f"{j}:{k}" for j, k in sorted(rep.missing)))
        return self.status

    # -- internals --------------------------------------------------------

    def _adopt(self, v: Vertex, now: float):
        self.dag.absorb([v])
        self.own[v.ref.round] = v
        self.arrival[v.ref] = now
        self.current_round = v.ref.round

    def _history_time(self, own: VertexRef) -> float:
        """Earliest time at which every required history slot was held."""
        anc = self.dag.ancestors([own])
        best: dict[tuple[int, int], float] = {}
        for r in anc:
            if r.round <= self.params.history_depth:
                key = (r.origin, r.round)
                t = self.arrival[r]
                if key not in best or t < best[key]:
                    best[key] = t
        return max(best.values())

    def _queue_response(self, requester: int, slots):
        held = {s for s in slots if self.dag.variants(*s)}
        if not held:
            return
        pend = self.pending_enquiries.get(requester)
        if pend is None:
            backoff = self.rng.randint(0, 1)
            self.pending_enquiries[requester] = _PendingResponse(held, self._slot + 1 + backoff)
        else:
            pend.slots |= held

    def _suppress(self, msg: BroadcastMessage):
        covered = {(v.ref.origin, v.ref.round) for v in msg.delta}
        for j in list(self.pending_enquiries):
            if self.pending_enquiries[j].slots <= covered:
                del self.pending_enquiries[j]

    def _sub_dag(self, slots) -> list[Vertex]:
        roots = [r for s in slots for r in self.dag.variants(*s)]
        return [self.dag[r] for r in self.dag.ancestors(roots)]
