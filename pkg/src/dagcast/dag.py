"""Communication-history DAG: vertices, authenticators, merge and reachability.

A vertex is one participant's state at one round.  Its header (reference,
parent references and authenticator) always travels with it; the payload may
be absent, in which case the vertex is *digest-only* and is upgraded as soon
as a full copy is merged in.  Edges are not stored separately: they are the
parent links of known vertices whose parent is also known.
"""
from __future__ import annotations

import hashlib
import hmac
import json
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

from . import kernels

DIGEST_SIZE = 32


class DagError(Exception):
    """Base class for DAG errors."""


class ForgeryError(DagError):
    """A vertex carried an authenticator its origin did not create."""


class QueryError(DagError):
    """A query referenced a vertex the DAG does not hold."""


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    f: int
    r_max: int = 12
    history_depth: int = 1  # completeness covers rounds 0..history_depth

    def __post_init__(self):
        if self.f < 0 or self.n < 3 * self.f + 1:
            raise ValueError(f"need n >= 3f+1, got n={self.n}, f={self.f}")
        if self.r_max < 2:
            raise ValueError("r_max must be at least 2")
        if self.history_depth < 0 or self.history_depth >= self.r_max:
            raise ValueError("history_depth must lie in [0, r_max)")

    @classmethod
    def for_n(cls, n: int, **kw) -> ProtocolParams:
        return cls(n=n, f=(n - 1) // 3, **kw)

    @property
    def quorum(self) -> int:
        """Number of originals needed to advance a round (2f+1)."""
        return 2 * self.f + 1


class VertexRef(NamedTuple):
    origin: int
    round: int
    digest: bytes

    def short(self) -> str:
        return f"p{self.origin}[{self.round}]:{self.digest[:4].hex()}"


def sort_key(ref: VertexRef):
    return (ref.round, ref.origin, ref.digest)


def payload_digest(origin: int, round_: int, payload: bytes) -> bytes:
    h = hashlib.sha256()
    h.update(struct.pack(">II", origin, round_))
    h.update(payload)
    return h.digest()


class Keyring:
    """Per-participant MAC keys standing in for unforgeable signatures.

    Only code holding the keyring can mint tags, and the simulator mints a
    tag for participant ``i`` only on behalf of ``i``.  Verification results
    are memoised since the same header is checked many times per run.
    """

    def __init__(self, n: int, secret: bytes | int = b"dagcast"):
        if isinstance(secret, int):
            secret = secret.to_bytes(8, "big", signed=True)
        self.n = n
        self._keys = [hashlib.sha256(b"key|" + secret + i.to_bytes(4, "big")).digest()
                      for i in range(n)]
        self._ok: set[tuple[VertexRef, bytes]] = set()

    def _mac(self, ref: VertexRef) -> bytes:
        msg = struct.pack(">II", ref.origin, ref.round) + ref.digest
        return hmac.new(self._keys[ref.origin], msg, hashlib.sha256).digest()

    def sign(self, signer: int, ref: VertexRef) -> bytes:
        if signer != ref.origin:
            raise ForgeryError(f"participant {signer} cannot sign for {ref.short()}")
        return self._mac(ref)

    def verify(self, ref: VertexRef, tag: bytes) -> bool:
        if (ref, tag) in self._ok:
            return True
        if not 0 <= ref.origin < self.n:
            return False
        if hmac.compare_digest(self._mac(ref), tag):
            self._ok.add((ref, tag))
            return True
        return False


@dataclass(frozen=True)
class Vertex:
    ref: VertexRef
    payload: bytes | None
    parents: frozenset[VertexRef]
    tag: bytes = field(repr=False)

    def __post_init__(self):
        for p in self.parents:
            if p.round >= self.ref.round:
                raise DagError(f"parent {p.short()} not below {self.ref.short()}")

    @property
    def full(self) -> bool:
        return self.payload is not None

    def digest_only(self) -> Vertex:
        if self.payload is None:
            return self
        return Vertex(self.ref, None, self.parents, self.tag)

    def check(self, keyring: Keyring) -> bool:
        """True iff the tag verifies and a present payload matches the digest."""
        if not keyring.verify(self.ref, self.tag):
            return False
        if self.payload is not None:
            r = self.ref
            return payload_digest(r.origin, r.round, self.payload) == r.digest
        return True


def make_vertex(keyring: Keyring, origin: int, round_: int, payload: bytes,
                parents: Iterable[VertexRef] = ()) -> Vertex:
    ref = VertexRef(origin, round_, payload_digest(origin, round_, payload))
    return Vertex(ref, payload, frozenset(parents), keyring.sign(origin, ref))


class LocalDag:
    """A participant's grow-only view of the communication history.

    The module-level functions (:func:`merge`, :func:`reachable`, ...) treat
    DAGs as values.  :meth:`absorb` and :meth:`mark` mutate in place and are
    meant for the single owner of a participant state.
    """

    __slots__ = ("keyring", "_v", "_slots", "byzantine", "invalidated", "_index")

    def __init__(self, keyring: Keyring, vertices: Iterable[Vertex] = ()):
        self.keyring = keyring
        self._v: dict[VertexRef, Vertex] = {}
        self._slots: dict[tuple[int, int], set[VertexRef]] = {}
        self.byzantine: set[int] = set()
        self.invalidated: set[VertexRef] = set()
        self._index: kernels.DagIndex | None = None
        self.absorb(vertices)

    def copy(self) -> LocalDag:
        d = LocalDag(self.keyring)
        d._v = dict(self._v)
        d._slots = {k: set(s) for k, s in self._slots.items()}
        d.byzantine = set(self.byzantine)
        d.invalidated = set(self.invalidated)
        return d

    # -- mutation ---------------------------------------------------------

    def absorb(self, vertices: Iterable[Vertex]) -> list[Vertex]:
        """Insert vertices; returns those that were new or upgraded to full.

        Raises :class:`ForgeryError` before inserting anything if any vertex
        fails verification.
        """
        vertices = list(vertices)
        for v in vertices:
            if not v.check(self.keyring):
                raise ForgeryError(f"bad authenticator on {v.ref.short()}")
        changed = []
        for v in vertices:
            old = self._v.get(v.ref)
            if old is None:
                self._v[v.ref] = v
                self._slots.setdefault((v.ref.origin, v.ref.round), set()).add(v.ref)
                if self._index is not None:
                    self._index.add(v.ref, v.parents)
                changed.append(v)
            elif old.payload is None and v.payload is not None:
                self._v[v.ref] = v
                changed.append(v)
        return changed

    def mark(self, byzantine: Iterable[int] = (), invalidated: Iterable[VertexRef] = ()):
        self.byzantine.update(byzantine)
        self.invalidated.update(invalidated)

    # -- queries ----------------------------------------------------------

    def __contains__(self, ref) -> bool:
        return ref in self._v

    def __len__(self) -> int:
        return len(self._v)

    def __iter__(self) -> Iterator[Vertex]:
        return iter(self._v.values())

    def __getitem__(self, ref: VertexRef) -> Vertex:
        return self._v[ref]

    def get(self, ref: VertexRef) -> Vertex | None:
        return self._v.get(ref)

    @property
    def refs(self) -> frozenset[VertexRef]:
        return frozenset(self._v)

    @property
    def edges(self) -> frozenset[tuple[VertexRef, VertexRef]]:
        return frozenset((p, v.ref) for v in self._v.values()
                         for p in v.parents if p in self._v)

    def variants(self, origin: int, round_: int) -> set[VertexRef]:
        return self._slots.get((origin, round_), set())

    def slots(self):
        return self._slots.items()

    def dangling(self) -> set[VertexRef]:
        """Parent references whose headers are not held."""
        return {p for v in self._v.values() for p in v.parents if p not in self._v}

    def index(self) -> kernels.DagIndex:
        if self._index is None:
            idx = kernels.DagIndex()
            for ref in sorted(self._v, key=sort_key):
                idx.add(ref, self._v[ref].parents)
            self._index = idx
        return self._index

    def ancestors(self, roots: Iterable[VertexRef]) -> set[VertexRef]:
        """All held vertices reachable from ``roots`` (roots included)."""
        roots = [r for r in roots if r in self._v]
        return self.index().closure(roots)

    def tips_below(self, round_: int) -> set[VertexRef]:
        """Maximal held vertices with round < ``round_``."""
        below = [v for v in self._v.values() if v.ref.round < round_]
        covered = {p for v in below for p in v.parents}
        return {v.ref for v in below if v.ref not in covered}

    def __eq__(self, other) -> bool:
        if not isinstance(other, LocalDag):
            return NotImplemented
        return (self._v == other._v and self.byzantine == other.byzantine
                and self.invalidated == other.invalidated)

    def __repr__(self) -> str:
        return (f"LocalDag({len(self._v)} vertices, byzantine={sorted(self.byzantine)}, "
                f"invalidated={len(self.invalidated)})")

    # -- serialization ----------------------------------------------------

    def sorted_vertices(self) -> list[Vertex]:
        return [self._v[r] for r in sorted(self._v, key=sort_key)]

    def to_json(self) -> str:
        def ref_j(r):
            return [r.origin, r.round, r.digest.hex()]

        doc = {
            "vertices": [
                {
                    "origin": v.ref.origin,
                    "round": v.ref.round,
                    "digest": v.ref.digest.hex(),
                    "payload": None if v.payload is None else v.payload.hex(),
                    "parents": [ref_j(p) for p in sorted(v.parents, key=sort_key)],
                    "tag": v.tag.hex(),
                }
                for v in self.sorted_vertices()
            ],
            "byzantine": sorted(self.byzantine),
            "invalidated": [ref_j(r) for r in sorted(self.invalidated, key=sort_key)],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, keyring: Keyring) -> LocalDag:
        doc = json.loads(text)

        def ref_of(x):
            return VertexRef(x[0], x[1], bytes.fromhex(x[2]))

        vs = []
        for e in doc["vertices"]:
            ref = VertexRef(e["origin"], e["round"], bytes.fromhex(e["digest"]))
            payload = None if e["payload"] is None else bytes.fromhex(e["payload"])
            vs.append(Vertex(ref, payload, frozenset(map(ref_of, e["parents"])),
                             bytes.fromhex(e["tag"])))
        d = cls(keyring, vs)
        d.mark(doc["byzantine"], map(ref_of, doc["invalidated"]))
        return d

    def to_bytes(self) -> bytes:
        """Length-prefixed canonical binary form."""
        out = [b"DAG1"]
        vs = self.sorted_vertices()
        out.append(struct.pack(">I", len(vs)))
        for v in vs:
            out.append(_pack_ref(v.ref))
            if v.payload is None:
                out.append(struct.pack(">i", -1))
            else:
                out.append(struct.pack(">i", len(v.payload)) + v.payload)
            ps = sorted(v.parents, key=sort_key)
            out.append(struct.pack(">I", len(ps)))
            out.extend(_pack_ref(p) for p in ps)
            out.append(struct.pack(">H", len(v.tag)) + v.tag)
        byz = sorted(self.byzantine)
        out.append(struct.pack(">I", len(byz)) + b"".join(struct.pack(">I", b) for b in byz))
        inv = sorted(self.invalidated, key=sort_key)
        out.append(struct.pack(">I", len(inv)))
        out.extend(_pack_ref(r) for r in inv)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes, keyring: Keyring) -> LocalDag:
        if data[:4] != b"DAG1":
            raise ValueError("not a serialized LocalDag")
        pos = 4

        def take(fmt):
            nonlocal pos
            vals = struct.unpack_from(fmt, data, pos)
            pos += struct.calcsize(fmt)
            return vals

        def take_ref():
            nonlocal pos
            o, r = take(">II")
            d = data[pos:pos + DIGEST_SIZE]
            pos += DIGEST_SIZE
            return VertexRef(o, r, d)

        vs = []
        (count,) = take(">I")
        for _ in range(count):
            ref = take_ref()
            (plen,) = take(">i")
            payload = None
            if plen >= 0:
                payload = data[pos:pos + plen]
                pos += plen
            (np_,) = take(">I")
            parents = frozenset(take_ref() for _ in range(np_))
            (tlen,) = take(">H")
            tag = data[pos:pos + tlen]
            pos += tlen
            vs.append(Vertex(ref, payload, parents, tag))
        d = cls(keyring, vs)
        (nb,) = take(">I")
        d.byzantine.update(take(">I")[0] for _ in range(nb))
        (ni,) = take(">I")
        d.invalidated.update(take_ref() for _ in range(ni))
        return d


def _pack_ref(r: VertexRef) -> bytes:
    return struct.pack(">II", r.origin, r.round) + r.digest


# -- value-level operations -------------------------------------------------


def merge(a: LocalDag, b: LocalDag) -> LocalDag:
    """Join of two views: union of vertices and of byzantine/invalidated marks."""
    out = a.copy()
    out.absorb(b)
    out.mark(b.byzantine, b.invalidated)
    return out


def reachable(dag: LocalDag, src: VertexRef, dst: VertexRef) -> bool:
    """True iff ``src`` transitively references ``dst`` through parent links."""
    if src not in dag:
        raise QueryError(f"unknown vertex {src.short()}")
    if dst not in dag:
        return False
    return dag.index().reaches(src, dst)


@dataclass(frozen=True)
class CompletenessReport:
    complete: bool
    missing: frozenset[tuple[int, int]]

    def __bool__(self):
        return self.complete


def completeness(dag: LocalDag, own: VertexRef, params: ProtocolParams,
                 exclude: Iterable[int] = ()) -> CompletenessReport:
    """Whether ``own`` reaches a vertex of every (participant, round) slot in
    rounds ``0..params.history_depth``.  Participants in ``exclude`` are left
    out of the target."""
    if own not in dag:
        raise QueryError(f"unknown vertex {own.short()}")
    seen = {(r.origin, r.round) for r in dag.ancestors([own])}
    skip = set(exclude)
    missing = frozenset(
        (j, k) for j in range(params.n) if j not in skip
        for k in range(params.history_depth + 1) if (j, k) not in seen
    )
    return CompletenessReport(not missing, missing)


def extract_originals(dag: LocalDag, own: VertexRef) -> set[Vertex]:
    """Full-payload, non-invalidated round-0 vertices reachable from ``own``."""
    if own not in dag:
        raise QueryError(f"unknown vertex {own.short()}")
    out = set()
    for r in dag.ancestors([own]):
        if r.round == 0 and r not in dag.invalidated and r.origin not in dag.byzantine:
            v = dag[r]
            if v.payload is not None:
                out.add(v)
    return out
