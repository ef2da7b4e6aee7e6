"""Deterministic discrete-event simulator of a lossy broadcast medium.

Time is in milliseconds.  Slot ``k`` closes at ``(k + 1) * slot``; at that
boundary every live participant evaluates its advancement rule, then each
transmits once in its own turn on the shared channel (participant ``i`` at
offset ``i * slot / n``).  Unless ``t_slot`` is fixed explicitly, a slot lasts
``n * airtime``.  A broadcast is ``n - 1`` independent unicast fates.  The run
ends at boundary ``r_max``, where participants take their last step and
settle.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Mapping

from .dag import Keyring, ProtocolParams, Vertex, make_vertex
from .dissemination import (
    BroadcastMessage,
    Participant,
    Status,
    trace_row,
    trace_to_csv,
)

HONEST = "honest"
CRASH = "crash"
WRONG_VALUE = "wrong_value"
EQUIVOCATOR = "equivocator"
ADVERSARY_KINDS = (HONEST, CRASH, WRONG_VALUE, EQUIVOCATOR)


@dataclass(frozen=True)
class Adversary:
    kind: str = HONEST
    at_round: int = 0  # crash: first slot with no transmission
    partition: frozenset[int] = frozenset()  # equivocator: receivers of variant A

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")


@dataclass(frozen=True)
class LossModel:
    """``bernoulli``: each delivery lost independently with probability ``p``.
    ``budget``: exactly ``floor(rho * M)`` of the run's ``M`` transmissions
    are lost, chosen uniformly (or early-round first when ``greedy``).
    ``scripted``: the listed ``(slot, sender, receiver)`` deliveries are lost;
    ``late`` maps a delivery to a number of extra slots of delay.
    """
    mode: str = "bernoulli"
    p: float = 0.0
    rho: float = 0.0
    greedy: bool = False
    drops: frozenset[tuple[int, int, int]] = frozenset()
    late: Mapping[tuple[int, int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("bernoulli", "budget", "scripted"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.rho <= 1.0):
            raise ValueError("loss probabilities must lie in [0, 1]")

    @classmethod
    def none(cls) -> LossModel:
        return cls("bernoulli", p=0.0)

    @classmethod
    def budget(cls, rho: float, greedy: bool = False) -> LossModel:
        return cls("budget", rho=rho, greedy=greedy)

    @classmethod
    def scripted(cls, drops=(), late=None) -> LossModel:
        return cls("scripted", drops=frozenset(drops), late=dict(late or {}))


@dataclass(frozen=True)
class DelayModel:
    base: float = 2.0
    jitter: float = 3.0
    straggler_prob: float = 0.0
    straggler_extra: float = 25.0

    def __post_init__(self):
        if min(self.base, self.jitter, self.straggler_prob, self.straggler_extra) < 0:
            raise ValueError("delay parameters must be non-negative")


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n: int
    f: int | None = None
    t_slot: float | None = None  # None: n * airtime
    airtime: float = 6.25
    loss: LossModel = field(default_factory=LossModel)
    delay: DelayModel = field(default_factory=DelayModel)
    adversaries: Mapping[int, Adversary] = field(default_factory=dict)
    r_max: int = 12
    e_max: int = 2
    history_depth: int = 1
    stop_early: bool | None = None  # default: stop unless budget-mode loss
    silent: frozenset[int] = frozenset()  # sit the instance out entirely

    def __post_init__(self):
        if self.f is None:
            object.__setattr__(self, "f", (self.n - 1) // 3)
        self.params  # validates n, f, r_max
        bad = [i for i, a in self.adversaries.items() if a.kind != HONEST]
        if len(bad) > self.f:
            raise ValueError(f"{len(bad)} adversaries exceed f={self.f}")
        for i, a in self.adversaries.items():
            if not 0 <= i < self.n:
                raise ValueError(f"adversary id {i} out of range")
            if a.kind == EQUIVOCATOR:
                side_a = set(a.partition) - {i}
                side_b = set(range(self.n)) - side_a - {i}
                if not side_a or not side_b:
                    raise ValueError("equivocator partition must split receivers")

    @property
    def slot_ms(self) -> float:
        return self.t_slot if self.t_slot else self.n * self.airtime

    def send_offset(self, i: int) -> float:
        return i * self.slot_ms / self.n

    @property
    def params(self) -> ProtocolParams:
        return ProtocolParams(self.n, self.f, self.r_max, self.history_depth)

    def adversary(self, i: int) -> Adversary:
        return self.adversaries.get(i, Adversary())

    @property
    def honest(self) -> list[int]:
        return [i for i in range(self.n)
                if self.adversary(i).kind == HONEST and i not in self.silent]

    def crash_slot(self, i: int) -> int | None:
        if i in self.silent:
            return 0
        a = self.adversary(i)
        return a.at_round if a.kind == CRASH else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"]["drops"] = sorted(map(list, self.loss.drops))
        d["loss"]["late"] = [[*k, v] for k, v in sorted(self.loss.late.items())]
        d["adversaries"] = {str(k): {"kind": a.kind, "at_round": a.at_round,
                                     "partition": sorted(a.partition)}
                            for k, a in sorted(self.adversaries.items())}
        d["silent"] = sorted(self.silent)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> SimConfig:
        d = dict(d)
        loss = dict(d.pop("loss", {}))
        loss["drops"] = frozenset(tuple(x) for x in loss.get("drops", []))
        loss["late"] = {tuple(x[:3]): x[3] for x in loss.get("late", [])}
        delay = d.pop("delay", {})
        advs = {int(k): Adversary(v["kind"], v.get("at_round", 0),
                                  frozenset(v.get("partition", [])))
                for k, v in d.pop("adversaries", {}).items()}
        d["silent"] = frozenset(d.get("silent", ()))
        return cls(loss=LossModel(**loss), delay=DelayModel(**delay), adversaries=advs, **d)

    @classmethod
    def from_json(cls, text: str) -> SimConfig:
        return cls.from_dict(json.loads(text))


def _rng(seed: int, stream: str) -> random.Random:
    return random.Random(f"{seed}:{stream}")


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str  # "deliver", "drop" or "slot_boundary"
    msg: BroadcastMessage | None = None
    to: int | None = None
    slot: int | None = None


class Medium:
    """Applies loss, delay and sender-side adversary behaviour to broadcasts."""

    def __init__(self, config: SimConfig, keyring: Keyring):
        self.config = config
        self.keyring = keyring
        self.n = config.n
        self.loss_rng = _rng(config.seed, "loss")
        self.delay_rng = _rng(config.seed, "delay")
        self.transmissions = 0
        self.drops = 0
        self.drops_by_slot: dict[int, int] = {}
        self._variants: dict = {}
        self._budget_drops: set[int] | None = None
        self.grid_size = 0
        if config.loss.mode == "budget":
            self._plan_budget()

    def _live_slots(self, i: int) -> int:
        crash = self.config.crash_slot(i)
        horizon = self.config.r_max
        return horizon if crash is None else min(crash, horizon)

    def _plan_budget(self):
        cfg = self.config
        n = self.n
        # grid index = ((slot * n) + sender) * (n - 1) + receiver rank
        cells = [((k * n) + i) * (n - 1) + j
                 for i in range(n) for k in range(self._live_slots(i)) for j in range(n - 1)]
        self.grid_size = len(cells)
        k = math.floor(cfg.loss.rho * len(cells) + 1e-9)
        if cfg.loss.greedy:
            early = [c for c in cells if c // (n * (n - 1)) <= cfg.history_depth]
            late = [c for c in cells if c // (n * (n - 1)) > cfg.history_depth]
            take = self.loss_rng.sample(early, min(k, len(early)))
            take += self.loss_rng.sample(late, k - len(take))
        else:
            take = self.loss_rng.sample(cells, k)
        self._budget_drops = set(take)

    def _lost(self, slot: int, sender: int, receiver: int) -> bool:
        loss = self.config.loss
        if loss.mode == "bernoulli":
            return loss.p > 0 and self.loss_rng.random() < loss.p
        if loss.mode == "scripted":
            return (slot, sender, receiver) in loss.drops
        rank = receiver if receiver < sender else receiver - 1
        return (((slot * self.n) + sender) * (self.n - 1) + rank) in self._budget_drops

    def _delay(self, slot: int, sender: int, receiver: int) -> float:
        d = self.config.delay
        t = d.base + (self.delay_rng.uniform(0.0, d.jitter) if d.jitter else 0.0)
        if d.straggler_prob and self.delay_rng.random() < d.straggler_prob:
            t += d.straggler_extra
        extra = self.config.loss.late.get((slot, sender, receiver))
        if extra:
            t += extra * self.config.slot_ms
        return t

    def _variant(self, v: Vertex) -> Vertex:
        """The digest-distinct twin an equivocator shows its second partition."""
        twin = self._variants.get(v.ref)
        if twin is None:
            payload = (v.payload or b"") + b"|equivocation"
            twin = make_vertex(self.keyring, v.ref.origin, v.ref.round, payload, v.parents)
            self._variants[v.ref] = twin
        return twin

    def broadcast(self, msg: BroadcastMessage, sender: int, slot: int, now: float
                  ) -> list[SimEvent]:
        adv = self.config.adversary(sender)
        crash = self.config.crash_slot(sender)
        if crash is not None and slot >= crash:
            return []
        out = []
        for j in range(self.n):
            if j == sender:
                continue
            m = msg
            if adv.kind == EQUIVOCATOR and j not in adv.partition:
                m = BroadcastMessage(msg.sender, msg.round, self._variant(msg.new_vertex),
                                     msg.delta, msg.kind, msg.request)
            self.transmissions += 1
            if self._lost(slot, sender, j):
                self.drops += 1
                self.drops_by_slot[slot] = self.drops_by_slot.get(slot, 0) + 1
                out.append(SimEvent(now, "drop", m, j, slot))
            else:
                out.append(SimEvent(now + self._delay(slot, sender, j), "deliver", m, j, slot))
        return out


@dataclass
class RunResult:
    config: SimConfig
    status: dict[int, Status]
    rounds: dict[int, int]
    byzantine: dict[int, list[int]]
    flagged: dict[int, dict[int, int]]
    complete_at: dict[int, float | None]
    complete_round: dict[int, int | None]
    transmissions: int
    drops: int
    drops_by_slot: dict[int, int]
    grid_size: int
    trace: list[tuple]
    participants: dict[int, Participant] = field(repr=False, default_factory=dict)

    @property
    def honest(self) -> list[int]:
        return self.config.honest

    @property
    def success(self) -> bool:
        return all(self.status[i] is Status.COMPLETE for i in self.honest)

    @property
    def latency_last(self) -> float | None:
        if not self.success:
            return None
        return max(self.complete_at[i] for i in self.honest)

    @property
    def latency_mean(self) -> float | None:
        if not self.success:
            return None
        hs = self.honest
        return sum(self.complete_at[i] for i in hs) / len(hs)

    def trace_csv(self) -> str:
        return trace_to_csv(self.trace)

    def trace_hash(self) -> str:
        return hashlib.sha256(self.trace_csv().encode()).hexdigest()

    def record(self) -> dict:
        return {
            "seed": self.config.seed,
            "n": self.config.n,
            "f": self.config.f,
            "success": self.success,
            "latency_last_ms": self.latency_last,
            "latency_mean_ms": self.latency_mean,
            "transmissions": self.transmissions,
            "drops": self.drops,
            "status": {str(i): s.value for i, s in sorted(self.status.items())},
            "byzantine": {str(i): b for i, b in sorted(self.byzantine.items())},
        }


def default_payloads(n: int) -> dict[int, bytes]:
    return {i: f"v{i}".encode() for i in range(n)}


def run(config: SimConfig, payloads: Mapping[int, bytes] | None = None) -> RunResult:
    """Execute one dissemination instance to its terminal state."""
    n = config.n
    params = config.params
    keyring = Keyring(n, config.seed)
    medium = Medium(config, keyring)
    trace: list[tuple] = []

    def sink(t, pid, event, ref, detail):
        trace.append(trace_row(t, pid, event, ref, detail))

    payloads = dict(payloads or default_payloads(n))
    for i in range(n):
        if config.adversary(i).kind == WRONG_VALUE and i in payloads:
            payloads[i] = b"wrong:" + payloads[i][::-1]
    parts = {i: Participant(i, params, keyring, e_max=config.e_max,
                            rng=_rng(config.seed, f"backoff{i}"), trace=sink)
             for i in range(n)}
    honest = config.honest
    stop_early = config.stop_early
    if stop_early is None:
        stop_early = config.loss.mode != "budget"

    queue: list = []
    seq = 0

    def push(ev: SimEvent):
        nonlocal seq
        order = 1 if ev.kind == "slot_boundary" else 0
        heapq.heappush(queue, (ev.time, order, seq, ev))
        seq += 1

    slot_ms = config.slot_ms
    for k in range(config.r_max + 1):
        push(SimEvent((k + 1) * slot_ms, "slot_boundary", slot=k))

    while queue:
        now, _, _, ev = heapq.heappop(queue)
        if ev.kind == "deliver":
            msg = ev.msg
            trace.append(trace_row(now, ev.to, "deliver", msg.new_vertex.ref,
                                   f"from={msg.sender};kind={msg.kind.value};items={len(msg.delta) + 1}"))
            crash = config.crash_slot(ev.to)
            if crash is not None and ev.slot >= crash:
                continue
            parts[ev.to].on_receive(msg, now)
            continue
        k = ev.slot
        final = k == config.r_max
        for i in range(n):
            p = parts[i]
            crash = config.crash_slot(i)
            if crash is not None and k >= crash:
                continue
            if k == 0:
                msg = p.start_round0(payloads[i], now)
            else:
                p.try_advance(now)
                if final:
                    p.finish(now)
                    continue
                msg = p.outgoing(now, k)
            sent = now + config.send_offset(i)
            for out in medium.broadcast(msg, i, k, sent):
                if out.kind == "drop":
                    trace.append(trace_row(sent, out.to, "drop", out.msg.new_vertex.ref,
                                           f"from={i};kind={out.msg.kind.value}"))
                else:
                    push(out)
        if final:
            break
        if stop_early and k >= 1 and all(parts[i].status is Status.COMPLETE for i in honest):
            break

    return RunResult(
        config=config,
        status={i: p.status for i, p in parts.items()},
        rounds={i: p.current_round for i, p in parts.items()},
        byzantine={i: sorted(p.dag.byzantine) for i, p in parts.items()},
        flagged={i: dict(p.flagged) for i, p in parts.items()},
        complete_at={i: p.complete_at for i, p in parts.items()},
        complete_round={i: p.complete_round for i, p in parts.items()},
        transmissions=medium.transmissions,
        drops=medium.drops,
        drops_by_slot=dict(medium.drops_by_slot),
        grid_size=medium.grid_size,
        trace=trace,
        participants=parts,
    )
