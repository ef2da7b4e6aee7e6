"""Equivocation detection and invalidation over a local DAG."""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .dag import DagError, Keyring, LocalDag, Vertex, sort_key


class InvalidEvidence(DagError):
    pass


@dataclass(frozen=True)
class EquivocationEvidence:
    offender: int
    round: int
    variant_a: Vertex
    variant_b: Vertex

    def verify(self, keyring: Keyring) -> bool:
        a, b = self.variant_a.ref, self.variant_b.ref
        return (a.origin == b.origin == self.offender
                and a.round == b.round == self.round
                and a.digest != b.digest
                and self.variant_a.check(keyring)
                and self.variant_b.check(keyring))

    def to_record(self) -> dict:
        return {
            "offender": self.offender,
            "round": self.round,
            "digest_a": self.variant_a.ref.digest.hex(),
            "digest_b": self.variant_b.ref.digest.hex(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _evidence_for(dag: LocalDag, refs) -> list[EquivocationEvidence]:
    ordered = sorted(refs, key=sort_key)
    return [EquivocationEvidence(a.origin, a.round, dag[a], dag[b])
            for a, b in combinations(ordered, 2)]


def detect(dag: LocalDag, slots: Iterable[tuple[int, int]] | None = None
           ) -> list[EquivocationEvidence]:
    """Every pair of digest-distinct authenticated vertices sharing
    (origin, round), ordered by (round, origin, digests).

    ``slots`` restricts the scan to the given (origin, round) pairs, which is
    how the protocol re-checks only what a merge touched.
    """
    if slots is None:
        items = [(k, refs) for k, refs in dag.slots() if len(refs) > 1]
    else:
        items = [(k, dag.variants(*k)) for k in set(slots)]
        items = [(k, refs) for k, refs in items if len(refs) > 1]
    items.sort(key=lambda kv: (kv[0][1], kv[0][0]))
    out = []
    for _, refs in items:
        out.extend(_evidence_for(dag, refs))
    return out


def invalidate_in_place(dag: LocalDag, ev: EquivocationEvidence) -> bool:
    """Mark the offender Byzantine and all its held vertices invalid.

    Returns True if the DAG changed.
    """
    if not ev.verify(dag.keyring):
        raise InvalidEvidence(f"evidence against p{ev.offender} does not verify")
    new_refs = {v.ref for v in dag if v.ref.origin == ev.offender} - dag.invalidated
    changed = ev.offender not in dag.byzantine or bool(new_refs)
    dag.mark([ev.offender], new_refs)
    return changed


def invalidate(dag: LocalDag, ev: EquivocationEvidence) -> LocalDag:
    out = dag.copy()
    invalidate_in_place(out, ev)
    return out


def refresh(dag: LocalDag, new: Iterable[Vertex]) -> list[EquivocationEvidence]:
    """Re-derive marks after vertices ``new`` were merged: detect on the slots
    they touch, invalidate, and extend invalidation to fresh vertices of
    already-flagged offenders.

    Returns only evidence against offenders that were not flagged before.
    """
    new = list(new)
    fresh = []
    for ev in detect(dag, {(v.ref.origin, v.ref.round) for v in new}):
        if ev.offender not in dag.byzantine:
            fresh.append(ev)
            invalidate_in_place(dag, ev)
    if dag.byzantine:
        dag.mark((), [v.ref for v in new if v.ref.origin in dag.byzantine])
    return fresh
