"""Two-dimensional ordering on top of per-step dissemination instances.

Each step ``t`` runs one dissemination instance whose round-0 payloads are
the participants' step-``t`` horizontal vertices.  A vertex at step ``t + 1``
lists, as back edges, the step-``t`` vertices its owner authenticated.  Every
second step elects an anchor with a seeded coin; an anchor with back edges
from at least ``f + 1`` distinct step-``t + 1`` owners commits, together with
any earlier skipped anchors it reaches.  Blocks are the anchors' causal
histories minus what earlier blocks covered; a topological sort flattens them
into a total order.
"""
from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from . import equivocation, kernels, netsim
from .dag import DagError, Keyring, ProtocolParams, VertexRef, completeness, sort_key
from .dissemination import Participant, Status

GENESIS = -2  # "no anchor committed yet"


def ref_str(r: VertexRef) -> str:
    return f"{r.origin}:{r.round}:{r.digest.hex()}"


def ref_parse(s: str) -> VertexRef:
    o, t, d = s.split(":")
    return VertexRef(int(o), int(t), bytes.fromhex(d))


def quorum(params: ProtocolParams) -> int:
    """Authentications needed to advance a step: ``n - f`` (= 2f+1 at n = 3f+1)."""
    return params.n - params.f


@dataclass(frozen=True)
class EvidenceRecord:
    """Two authenticated digests for one (offender, round) slot of an instance."""
    offender: int
    step: int
    round: int
    digest_a: bytes
    digest_b: bytes
    tag_a: bytes
    tag_b: bytes

    @classmethod
    def from_evidence(cls, step: int, ev: equivocation.EquivocationEvidence) -> EvidenceRecord:
        a, b = ev.variant_a, ev.variant_b
        return cls(ev.offender, step, ev.round, a.ref.digest, b.ref.digest, a.tag, b.tag)

    def verify(self, keyring: Keyring) -> bool:
        if self.digest_a == self.digest_b:
            return False
        ra = VertexRef(self.offender, self.round, self.digest_a)
        rb = VertexRef(self.offender, self.round, self.digest_b)
        return keyring.verify(ra, self.tag_a) and keyring.verify(rb, self.tag_b)

    def to_list(self) -> list:
        return [self.offender, self.step, self.round, self.digest_a.hex(),
                self.digest_b.hex(), self.tag_a.hex(), self.tag_b.hex()]

    @classmethod
    def from_list(cls, x) -> EvidenceRecord:
        o, t, r, da, db, ta, tb = x
        return cls(int(o), int(t), int(r), *(bytes.fromhex(v) for v in (da, db, ta, tb)))


@dataclass(frozen=True)
class HVertex:
    owner: int
    step: int
    tx_batch: tuple[bytes, ...] = ()
    back_edges: frozenset[VertexRef] = frozenset()
    evidence: tuple[EvidenceRecord, ...] = ()

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("step must be non-negative")
        for e in self.back_edges:
            if e.round != self.step - 1:
                raise ValueError(f"back edge {e.short()} is not at step {self.step - 1}")
        if len({e.origin for e in self.back_edges}) != len(self.back_edges):
            raise ValueError("back edges must name distinct owners")

    def core(self) -> dict:
        return {"owner": self.owner, "step": self.step,
                "txs": [t.hex() for t in self.tx_batch],
                "edges": sorted(ref_str(e) for e in self.back_edges),
                "evidence": [e.to_list() for e in self.evidence]}

    @classmethod
    def from_core(cls, d: dict) -> HVertex:
        return cls(int(d["owner"]), int(d["step"]),
                   tuple(bytes.fromhex(t) for t in d["txs"]),
                   frozenset(ref_parse(e) for e in d["edges"]),
                   tuple(EvidenceRecord.from_list(e) for e in d.get("evidence", ())))

    @property
    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.core(), sort_keys=True,
                                         separators=(",", ":")).encode()).digest()

    @property
    def ref(self) -> VertexRef:
        return VertexRef(self.owner, self.step, self.digest)


def encode_payload(v: HVertex, carried: Iterable[HVertex] = ()) -> bytes:
    """Round-0 payload of an instance: the vertex plus the bodies of its
    back-edge targets, so a receiver can fill causal gaps one level down."""
    body = {"v": v.core(), "carry": [c.core() for c in sorted(carried, key=lambda c: sort_key(c.ref))]}
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def decode_payload(data: bytes) -> tuple[HVertex, list[HVertex]]:
    """Inverse of :func:`encode_payload`.  Trailing bytes after the JSON body
    become one extra transaction, so a tampered twin decodes to a distinct
    vertex with the same back edges.  Raises ValueError on garbage."""
    try:
        text = data.decode()
        body, end = json.JSONDecoder().raw_decode(text)
        v = HVertex.from_core(body["v"])
        carried = [HVertex.from_core(c) for c in body.get("carry", ())]
    except (UnicodeDecodeError, KeyError, TypeError, AttributeError, json.JSONDecodeError) as e:
        raise ValueError(f"undecodable payload: {e}") from None
    if end < len(text):
        v = HVertex(v.owner, v.step, v.tx_batch + (text[end:].encode(),), v.back_edges, v.evidence)
    refs = v.back_edges
    return v, [c for c in carried if c.ref in refs]


@dataclass(frozen=True)
class AuthCertificate:
    subject: VertexRef
    signers: frozenset[int]

    def __post_init__(self):
        if not self.signers:
            raise ValueError("certificate without signers")

    def valid(self, params: ProtocolParams) -> bool:
        return len(self.signers) >= quorum(params)


@dataclass(frozen=True)
class Anchor:
    step: int
    owner: int
    ref: VertexRef | None
    support: int
    committed: bool

    def __post_init__(self):
        if self.committed and self.ref is None:
            raise ValueError("a committed anchor needs a vertex")


@dataclass(frozen=True)
class Block:
    anchor: VertexRef
    order: tuple[VertexRef, ...]
    excluded: tuple[int, ...] = ()

    @property
    def digest(self) -> bytes:
        h = hashlib.sha256(ref_str(self.anchor).encode())
        for r in self.order:
            h.update(b"|" + ref_str(r).encode())
        return h.digest()


@dataclass(frozen=True)
class CommitRecord:
    sequence: tuple[Anchor, ...]
    bundles: tuple[frozenset[VertexRef], ...]
    total_order: tuple[VertexRef, ...] | None = None


class HView:
    """One participant's horizontal DAG.

    A vertex is admitted only once every back-edge target is admitted, so the
    causal history of any admitted vertex is fully present.  Vertices waiting
    on a missing target are parked.
    """

    def __init__(self, params: ProtocolParams,
                 evidence_ok: Callable[[EvidenceRecord], bool] | None = None):
        self.params = params
        self._evidence_ok = evidence_ok
        self._v: dict[VertexRef, HVertex] = {}
        self._slots: dict[tuple[int, int], list[VertexRef]] = {}
        self._support: dict[VertexRef, set[int]] = {}
        self._parked: dict[VertexRef, HVertex] = {}
        self._waiting: dict[VertexRef, set[VertexRef]] = {}
        self._index = kernels.DagIndex()
        self.max_step = -1

    def __contains__(self, ref) -> bool:
        return ref in self._v

    def __len__(self) -> int:
        return len(self._v)

    def __getitem__(self, ref: VertexRef) -> HVertex:
        return self._v[ref]

    def vertices(self) -> list[HVertex]:
        return [self._v[r] for r in sorted(self._v, key=sort_key)]

    def parked(self) -> list[HVertex]:
        return [self._parked[r] for r in sorted(self._parked, key=sort_key)]

    def well_formed(self, v: HVertex) -> bool:
        if v.step > 0 and len(v.back_edges) < quorum(self.params):
            return False
        if not 0 <= v.owner < self.params.n:
            return False
        if self._evidence_ok is not None and not all(map(self._evidence_ok, v.evidence)):
            return False
        return True

    def offer(self, v: HVertex) -> list[HVertex]:
        """Add ``v`` (or park it).  Returns the vertices admitted as a result."""
        ref = v.ref
        if ref in self._v or ref in self._parked or not self.well_formed(v):
            return []
        missing = [e for e in v.back_edges if e not in self._v]
        if missing:
            self._parked[ref] = v
            for e in missing:
                self._waiting.setdefault(e, set()).add(ref)
            return []
        out = []
        ready = [v]
        while ready:
            w = ready.pop()
            self._admit(w)
            out.append(w)
            for child in sorted(self._waiting.pop(w.ref, ()), key=sort_key):
                c = self._parked.get(child)
                if c is not None and all(e in self._v for e in c.back_edges):
                    del self._parked[child]
                    ready.append(c)
        return out

    def _admit(self, v: HVertex):
        ref = v.ref
        self._v[ref] = v
        self._slots.setdefault((v.owner, v.step), []).append(ref)
        self._index.add(ref, v.back_edges)
        for e in v.back_edges:
            self._support.setdefault(e, set()).add(v.owner)
        self.max_step = max(self.max_step, v.step)

    def variants(self, owner: int, step: int) -> list[VertexRef]:
        return sorted(self._slots.get((owner, step), ()), key=sort_key)

    def at_step(self, step: int) -> list[VertexRef]:
        return sorted((r for (o, s), refs in self._slots.items() if s == step for r in refs),
                      key=sort_key)

    def support(self, ref: VertexRef) -> frozenset[int]:
        """Distinct owners whose next-step vertices carry a back edge to ``ref``."""
        return frozenset(self._support.get(ref, ()))

    def certificate(self, ref: VertexRef) -> AuthCertificate | None:
        s = self.support(ref)
        return AuthCertificate(ref, s) if s else None

    def reaches(self, src: VertexRef, dst: VertexRef) -> bool:
        return self._index.reaches(src, dst)

    def history(self, ref: VertexRef) -> set[VertexRef]:
        return self._index.closure([ref])


def coin(seed: int, t: int) -> int:
    """Shared seeded coin standing in for distributed randomness."""
    return int.from_bytes(hashlib.sha256(f"coin:{seed}:{t}".encode()).digest()[:8], "big")


def elect_anchor(t: int, seed: int, n: int) -> int:
    if t < 0 or t % 2:
        raise ValueError(f"step {t} is not an anchor step")
    return coin(seed, t) % n


def supported(view: HView, ref: VertexRef, f: int) -> bool:
    return len(view.support(ref)) >= f + 1


class Orderer:
    """Commit state over a growing :class:`HView`; the log is append-only."""

    def __init__(self, view: HView, seed: int):
        self.view = view
        self.params = view.params
        self.seed = seed
        self.last_step = GENESIS
        self.anchors: list[Anchor] = []
        self.blocks: list[Block] = []
        self._covered: set[VertexRef] = set()

    def anchor_at(self, t: int) -> Anchor:
        owner = elect_anchor(t, self.seed, self.params.n)
        best, sup = None, 0
        for r in self.view.variants(owner, t):
            s = len(self.view.support(r))
            if s > sup:
                best, sup = r, s
        committed = any(a.step == t for a in self.anchors)
        return Anchor(t, owner, best, sup, committed)

    def try_commit(self, t: int) -> bool:
        """Commit the step-``t`` anchor if it has ``f + 1`` supporters, first
        committing skipped anchors it reaches.  Steps at or below the last
        committed anchor are final and return False."""
        if t % 2 or t <= self.last_step:
            return False
        f = self.params.f
        owner = elect_anchor(t, self.seed, self.params.n)
        hits = [r for r in self.view.variants(owner, t) if supported(self.view, r, f)]
        if not hits:
            return False
        cur = hits[0]
        chain = [cur]
        for s in range(t - 2, self.last_step, -2):
            o = elect_anchor(s, self.seed, self.params.n)
            back = [r for r in self.view.variants(o, s) if self.view.reaches(cur, r)]
            if back:
                cur = back[0]
                chain.append(cur)
        for r in reversed(chain):
            self._commit(r)
        return True

    def evaluate(self) -> int:
        """Try every anchor step with next-step vertices in view."""
        before = len(self.anchors)
        t = self.last_step + 2
        while t + 1 <= self.view.max_step:
            self.try_commit(t)
            t = max(t + 2, self.last_step + 2)
        return len(self.anchors) - before

    def _commit(self, ref: VertexRef):
        hist = self.view.history(ref)
        offenders = sorted({e.offender for r in hist for e in self.view[r].evidence})
        bad = set(offenders)
        fresh = [r for r in hist - self._covered if r.origin not in bad]
        self._covered |= hist
        order = topo_sort(self.view, fresh)
        self.blocks.append(Block(ref, tuple(order), tuple(offenders)))
        self.anchors.append(Anchor(ref.round, ref.origin, ref, len(self.view.support(ref)), True))
        self.last_step = ref.round

    def record(self) -> CommitRecord:
        return CommitRecord(tuple(self.anchors),
                            tuple(frozenset(b.order) for b in self.blocks),
                            tuple(total_order(self.blocks)))

    def log_lines(self) -> list[str]:
        out = []
        for i, b in enumerate(self.blocks):
            out.append(json.dumps({
                "seq": i,
                "step": b.anchor.round,
                "anchor_owner": b.anchor.origin,
                "anchor_digest": b.anchor.digest.hex(),
                "block_digest": b.digest.hex(),
                "vertices": sorted(ref_str(r) for r in b.order),
                "order": [ref_str(r) for r in b.order],
                "excluded": list(b.excluded),
            }, sort_keys=True, separators=(",", ":")))
        return out

    def log_jsonl(self) -> str:
        return "".join(line + "\n" for line in self.log_lines())


def topo_sort(view: HView, refs: Iterable[VertexRef]) -> list[VertexRef]:
    """Kahn's algorithm on the induced subgraph, targets before referrers,
    ties broken by (step, owner, digest)."""
    nodes = set(refs)
    indeg = {r: 0 for r in nodes}
    users: dict[VertexRef, list[VertexRef]] = {r: [] for r in nodes}
    for r in nodes:
        for e in view[r].back_edges:
            if e in nodes:
                indeg[r] += 1
                users[e].append(r)
    heap = [sort_key(r) + (r,) for r in nodes if indeg[r] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        r = heapq.heappop(heap)[-1]
        out.append(r)
        for u in users[r]:
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(heap, sort_key(u) + (u,))
    return out


def partial_order(blocks: Iterable[Block]) -> list[frozenset[VertexRef]]:
    return [frozenset(b.order) for b in blocks]


def total_order(blocks: Iterable[Block]) -> list[VertexRef]:
    return [r for b in blocks for r in b.order]


# -- per-participant step logic --------------------------------------------


class Waiting(DagError):
    """Fewer than ``n - f`` authentications for the previous step."""


class OrderingNode:
    def __init__(self, pid: int, params: ProtocolParams, seed: int,
                 evidence_ok: Callable[[EvidenceRecord], bool] | None = None):
        self.id = pid
        self.params = params
        self.view = HView(params, evidence_ok)
        self.orderer = Orderer(self.view, seed)
        self.auths: dict[int, frozenset[VertexRef]] = {}
        self.own: dict[int, HVertex] = {}
        self.degraded_at: int | None = None
        self._reported: set[int] = set()
        self._evidence: list[EvidenceRecord] = []

    def step_advance(self, t: int, txs: Iterable[bytes] = ()) -> HVertex:
        """Create the step-``t`` vertex from the step-``t-1`` authentications."""
        edges = frozenset() if t == 0 else self.auths.get(t - 1, frozenset())
        if t > 0 and len(edges) < quorum(self.params):
            raise Waiting(f"p{self.id} holds {len(edges)} authentications for step {t - 1}")
        v = HVertex(self.id, t, tuple(txs), edges, tuple(self._evidence))
        self._evidence.clear()
        self.own[t] = v
        self.view.offer(v)
        return v

    def payload(self, v: HVertex) -> bytes:
        return encode_payload(v, [self.view[e] for e in v.back_edges])

    def absorb_instance(self, t: int, part: Participant) -> frozenset[VertexRef]:
        """Fold instance ``t``'s local DAG into the horizontal view, then
        authenticate.  Returns the authenticated step-``t`` refs."""
        dag = part.dag
        for o in sorted(dag.byzantine - self._reported):
            ev = next(e for e in equivocation.detect(dag) if e.offender == o)
            self._evidence.append(EvidenceRecord.from_evidence(t, ev))
            self._reported.add(o)
        decoded: dict[int, VertexRef] = {}
        for j in range(self.params.n):
            for r in dag.variants(j, 0):
                v = dag[r]
                if v.payload is None:
                    continue
                try:
                    hv, carried = decode_payload(v.payload)
                except ValueError:
                    continue
                for c in carried:
                    self.view.offer(c)
                self.view.offer(hv)
                if hv.owner == j and hv.step == t and len(dag.variants(j, 0)) == 1:
                    decoded[j] = hv.ref
        auths = frozenset(decoded[j] for j in decoded
                          if decoded[j] in self.view and self._unambiguous(part, j))
        if not self._settled(part):
            auths = frozenset()
        self.auths[t] = auths
        if len(auths) < quorum(self.params) and self.degraded_at is None:
            self.degraded_at = t
        return auths

    def _settled(self, part: Participant) -> bool:
        if part.status is Status.COMPLETE:
            return True
        if part.current_round < 0:
            return False
        p = self.params
        dag = part.dag
        vanished = {j for j in range(p.n)
                    if not any(dag.variants(j, k) for k in range(p.r_max + 1))}
        return completeness(dag, part.frontier.ref, p, exclude=vanished).complete

    @staticmethod
    def _unambiguous(part: Participant, j: int) -> bool:
        dag = part.dag
        if j in dag.byzantine or j in part.flagged:
            return False
        held = set(dag.variants(j, 0))
        if len(held) != 1 or held & dag.invalidated:
            return False
        seen = {p for v in dag for p in v.parents if p.origin == j and p.round == 0}
        return seen <= held


# -- simulation driver -----------------------------------------------------


@dataclass(frozen=True)
class OrderingConfig:
    seed: int
    n: int
    f: int | None = None
    steps: int = 8
    loss_p: float = 0.0
    delay: netsim.DelayModel = field(default_factory=lambda: netsim.DelayModel(2.0, 3.0))
    adversaries: Mapping[int, netsim.Adversary] = field(default_factory=dict)
    r_max: int = 6
    batch_size: int = 2
    airtime: float = 6.25

    def __post_init__(self):
        if self.f is None:
            object.__setattr__(self, "f", (self.n - 1) // 3)
        ProtocolParams(self.n, self.f, self.r_max)
        bad = [i for i, a in self.adversaries.items() if a.kind != netsim.HONEST]
        if len(bad) > self.f:
            raise ValueError(f"{len(bad)} adversaries exceed f={self.f}")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.delay.base + self.delay.jitter + self.delay.straggler_prob * self.delay.straggler_extra >= self.airtime:
            raise ValueError("delays must stay within one transmission turn")

    @property
    def params(self) -> ProtocolParams:
        return ProtocolParams(self.n, self.f, self.r_max)

    @property
    def honest(self) -> list[int]:
        return [i for i in range(self.n)
                if self.adversaries.get(i, netsim.Adversary()).kind == netsim.HONEST]

    def instance_seed(self, t: int) -> int:
        return int.from_bytes(hashlib.sha256(f"inst:{self.seed}:{t}".encode()).digest()[:6], "big")

    def to_dict(self) -> dict:
        return {"seed": self.seed, "n": self.n, "f": self.f, "steps": self.steps,
                "loss_p": self.loss_p, "r_max": self.r_max, "batch_size": self.batch_size,
                "airtime": self.airtime,
                "delay": {"base": self.delay.base, "jitter": self.delay.jitter},
                "adversaries": {str(k): {"kind": a.kind, "at_round": a.at_round,
                                         "partition": sorted(a.partition)}
                                for k, a in sorted(self.adversaries.items())}}


@dataclass
class OrderingResult:
    config: OrderingConfig
    nodes: dict[int, OrderingNode]
    logs: dict[int, str]
    prefix_ok: bool

    @property
    def honest(self) -> list[int]:
        return self.config.honest

    @property
    def agreement(self) -> bool:
        logs = {self.logs[i] for i in self.honest}
        return len(logs) == 1 and self.prefix_ok

    @property
    def committed(self) -> int:
        return len(self.nodes[self.honest[0]].orderer.anchors)

    def flagged(self) -> set[int]:
        """Owners excluded by any honest participant's committed blocks."""
        return {o for i in self.honest for b in self.nodes[i].orderer.blocks for o in b.excluded}

    def record(self) -> dict:
        return {"seed": self.config.seed, "n": self.config.n, "f": self.config.f,
                "agreement": self.agreement, "committed": self.committed,
                "log_sha256": hashlib.sha256(self.logs[self.honest[0]].encode()).hexdigest()}


def _txs(i: int, t: int, k: int) -> list[bytes]:
    return [f"tx:{i}:{t}:{j}".encode() for j in range(k)]


def run_ordering(cfg: OrderingConfig) -> OrderingResult:
    """Drive ``cfg.steps`` dissemination instances and the commit rule, then
    let honest views exchange everything (quiescence) and re-evaluate."""
    params = cfg.params
    keyrings: dict[int, Keyring] = {}

    def keyring(t):
        if t not in keyrings:
            keyrings[t] = Keyring(cfg.n, cfg.instance_seed(t))
        return keyrings[t]

    def evidence_ok(e: EvidenceRecord) -> bool:
        return 0 <= e.step < cfg.steps and e.verify(keyring(e.step))

    nodes = {i: OrderingNode(i, params, cfg.seed, evidence_ok) for i in range(cfg.n)}
    stuck: set[int] = set()
    logs_seen: dict[int, list[str]] = {i: [] for i in range(cfg.n)}
    prefix_ok = True
    for t in range(cfg.steps):
        payloads, silent = {}, set()
        for i, node in nodes.items():
            adv = cfg.adversaries.get(i, netsim.Adversary())
            if (adv.kind == netsim.CRASH and t >= adv.at_round) or i in stuck:
                silent.add(i)
                continue
            try:
                v = node.step_advance(t, _txs(i, t, cfg.batch_size))
            except Waiting:
                stuck.add(i)
                silent.add(i)
                continue
            payloads[i] = node.payload(v)
        if len(silent) == cfg.n:
            break
        sim = netsim.SimConfig(
            seed=cfg.instance_seed(t), n=cfg.n, f=cfg.f, airtime=cfg.airtime,
            loss=netsim.LossModel("bernoulli", p=cfg.loss_p), delay=cfg.delay,
            adversaries={i: a for i, a in cfg.adversaries.items()
                         if a.kind in (netsim.EQUIVOCATOR, netsim.WRONG_VALUE)},
            r_max=cfg.r_max, silent=frozenset(silent))
        res = netsim.run(sim, payloads)
        for i in sorted(payloads):
            nodes[i].absorb_instance(t, res.participants[i])
            nodes[i].orderer.evaluate()
            prefix_ok &= _extends(logs_seen, i, nodes[i])

    honest = cfg.honest
    pool: dict[VertexRef, HVertex] = {}
    for i in honest:
        for v in nodes[i].view.vertices() + nodes[i].view.parked():
            pool.setdefault(v.ref, v)
    everything = [pool[r] for r in sorted(pool, key=sort_key)]
    for i in honest:
        for v in everything:
            nodes[i].view.offer(v)
        nodes[i].orderer.evaluate()
        prefix_ok &= _extends(logs_seen, i, nodes[i])
    logs = {i: nodes[i].orderer.log_jsonl() for i in range(cfg.n)}
    return OrderingResult(cfg, nodes, logs, prefix_ok)


def _extends(seen: dict[int, list[str]], i: int, node: OrderingNode) -> bool:
    now = node.orderer.log_lines()
    ok = now[:len(seen[i])] == seen[i]
    seen[i] = now
    return ok


def random_ordering_config(seed: int, rho_max: float = 0.31) -> OrderingConfig:
    """A randomised agreement scenario: n in {4, 5, 7}, Bernoulli loss up to
    ``rho_max / 2``, random jitter and up to f adversaries of mixed kinds."""
    rng = random.Random(f"ordering:{seed}")
    n = rng.choice((4, 5, 7))
    f = (n - 1) // 3
    k = rng.randint(0, f)
    advs = {}
    for i in rng.sample(range(n), k):
        kind = rng.choice((netsim.CRASH, netsim.WRONG_VALUE, netsim.EQUIVOCATOR))
        if kind == netsim.CRASH:
            advs[i] = netsim.Adversary(kind, at_round=rng.randint(0, 6))
        elif kind == netsim.EQUIVOCATOR:
            others = [j for j in range(n) if j != i]
            side = frozenset(rng.sample(others, rng.randint(1, len(others) - 1)))
            advs[i] = netsim.Adversary(kind, partition=side)
        else:
            advs[i] = netsim.Adversary(kind)
    delay = netsim.DelayModel(base=rng.uniform(0.5, 2.0), jitter=rng.uniform(0.0, 4.0))
    return OrderingConfig(seed=seed, n=n, f=f, steps=8, loss_p=rng.uniform(0.0, rho_max / 2),
                          delay=delay, adversaries=advs)


# -- anchor commit Monte Carlo ---------------------------------------------


@dataclass(frozen=True)
class AnchorMcResult:
    n: int
    f: int
    trials: int
    commits: int
    worst: dict

    @property
    def frequency(self) -> float:
        return self.commits / self.trials

    def to_dict(self) -> dict:
        return {"n": self.n, "f": self.f, "trials": self.trials, "commits": self.commits,
                "frequency": self.frequency, "worst": self.worst}


def _layered_view(params: ProtocolParams, present: Iterable[int],
                  votes: Mapping[int, frozenset[int]]) -> tuple[HView, dict[int, VertexRef]]:
    """Step-0 vertices for ``present`` and step-1 vertices whose back edges
    are ``votes[voter]`` (owner ids of step-0 targets)."""
    view = HView(params)
    step0 = {}
    for i in present:
        v = HVertex(i, 0, (f"b{i}".encode(),))
        view.offer(v)
        step0[i] = v.ref
    for voter, targets in sorted(votes.items()):
        view.offer(HVertex(voter, 1, (), frozenset(step0[j] for j in targets)))
    return view, step0


def _configurations(n: int, f: int):
    """Adversarial layouts for one anchor step.  The Byzantine participants
    (ids ``n-f .. n-1``) may withhold their step-0 vertex and their vote;
    every voter references exactly ``n - f`` of the present step-0 vertices,
    chosen by the adversary."""
    byz = list(range(n - f, n))
    q = n - f
    for hide_v in itertools.product((False, True), repeat=len(byz)):
        present = [i for i in range(n) if i not in byz or not hide_v[byz.index(i)]]
        for mute in itertools.product((False, True), repeat=len(byz)):
            voters = [i for i in range(n) if i not in byz or not mute[byz.index(i)]]
            if len(voters) < q or len(present) < q:
                continue
            choices = list(itertools.combinations(present, q))
            for pick in itertools.product(choices, repeat=len(voters)):
                yield present, dict(zip(voters, map(frozenset, pick)))


def worst_configuration(params: ProtocolParams) -> tuple[list[int], dict[int, frozenset[int]], int]:
    """Exhaustive search for the layout leaving the fewest committable anchors."""
    best = None
    for present, votes in _configurations(params.n, params.f):
        view, step0 = _layered_view(params, present, votes)
        ok = sum(1 for r in step0.values() if supported(view, r, params.f))
        if best is None or ok < best[2]:
            best = (present, votes, ok)
    return best


def anchor_monte_carlo(n: int = 4, f: int | None = None, trials: int = 10_000,
                       seed: int = 0) -> AnchorMcResult:
    """Commit frequency of coin-elected anchors under the worst adversarial
    edge layout, each trial running the real commit rule."""
    f = (n - 1) // 3 if f is None else f
    params = ProtocolParams(n, f, 2)
    if n > 4:
        raise ValueError("exhaustive layout search is limited to n = 4")
    present, votes, _ = worst_configuration(params)
    view, _ = _layered_view(params, present, votes)
    commits = 0
    for k in range(trials):
        orderer = Orderer(view, seed * 1_000_003 + k)
        commits += orderer.try_commit(0)
    worst = {"present": present, "votes": {str(v): sorted(t) for v, t in sorted(votes.items())}}
    return AnchorMcResult(n, f, trials, commits, worst)
