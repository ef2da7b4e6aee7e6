import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_vertices
from dagcast.dag import Keyring, LocalDag, make_vertex
from dagcast.equivocation import (
    EquivocationEvidence,
    InvalidEvidence,
    detect,
    invalidate,
    invalidate_in_place,
    refresh,
)


def two_variants(kr, origin=3, rnd=0):
    return make_vertex(kr, origin, rnd, b"A"), make_vertex(kr, origin, rnd, b"B")


def test_detect_pair(keyring):
    a, b = two_variants(keyring)
    d = LocalDag(keyring, [a, b, make_vertex(keyring, 0, 0, b"x")])
    evs = detect(d)
    assert len(evs) == 1
    ev = evs[0]
    assert ev.offender == 3 and ev.round == 0
    assert ev.verify(keyring)
    assert {ev.variant_a.ref, ev.variant_b.ref} == {a.ref, b.ref}
    assert '"offender": 3' in ev.to_json()


def test_detect_three_variants_gives_all_pairs(keyring):
    vs = [make_vertex(keyring, 2, 1, bytes([i])) for i in range(3)]
    assert len(detect(LocalDag(keyring, vs))) == 3


def test_detect_restricted_to_slots(keyring):
    a, b = two_variants(keyring, 3, 0)
    c, e = two_variants(keyring, 2, 0)
    d = LocalDag(keyring, [a, b, c, e])
    assert {ev.offender for ev in detect(d, [(2, 0)])} == {2}
    assert [ev.offender for ev in detect(d)] == [2, 3]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_detect_soundness_no_variants_no_evidence(seed):
    kr = Keyring(5, seed)
    d = LocalDag(kr, random_vertices(random.Random(seed), kr, 5, 4, p_digest_only=0.3))
    assert detect(d) == []


def test_invalidate_marks_offender_and_keeps_input(keyring):
    a, b = two_variants(keyring)
    later = make_vertex(keyring, 3, 1, b"", [a.ref])
    honest = make_vertex(keyring, 0, 0, b"h")
    d = LocalDag(keyring, [a, b, later, honest])
    ev = detect(d)[0]
    out = invalidate(d, ev)
    assert out.byzantine == {3}
    assert out.invalidated == {a.ref, b.ref, later.ref}
    assert d.byzantine == set() and d.invalidated == set()
    assert invalidate_in_place(out, ev) is False


def test_invalid_evidence_rejected(keyring):
    a, _ = two_variants(keyring)
    other = make_vertex(keyring, 2, 0, b"A")
    d = LocalDag(keyring, [a, other])
    with pytest.raises(InvalidEvidence):
        invalidate(d, EquivocationEvidence(3, 0, a, a))
    with pytest.raises(InvalidEvidence):
        invalidate(d, EquivocationEvidence(3, 0, a, other))
    foreign = Keyring(4, b"foreign")
    x, y = two_variants(foreign)
    with pytest.raises(InvalidEvidence):
        invalidate(d, EquivocationEvidence(3, 0, x, y))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), chunks=st.integers(1, 6))
def test_incremental_refresh_equals_full_detection(seed, chunks):
    kr = Keyring(4, seed)
    rng = random.Random(seed)
    vs = random_vertices(rng, kr, 4, 4, p_variant=0.15)
    rng.shuffle(vs)
    d = LocalDag(kr)
    flagged = []
    for i in range(chunks):
        new = d.absorb(vs[i::chunks])
        flagged += [ev.offender for ev in refresh(d, new)]
    full = {ev.offender for ev in detect(d)}
    assert set(flagged) == full == d.byzantine
    assert len(flagged) == len(set(flagged))
    assert d.invalidated == {r for r in d.refs if r.origin in full}
