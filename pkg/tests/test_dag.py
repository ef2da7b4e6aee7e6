import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import honest_dag, random_vertices
from dagcast.dag import (
    DagError,
    ForgeryError,
    Keyring,
    LocalDag,
    ProtocolParams,
    QueryError,
    Vertex,
    VertexRef,
    completeness,
    extract_originals,
    make_vertex,
    merge,
    payload_digest,
    reachable,
)


# -- oracles ------------------------------------------------------------------


def oracle_union(*dags):
    """Set-union semantics: refs, parent edges among held refs, full wins."""
    held = {}
    for d in dags:
        for v in d:
            if v.ref not in held or (held[v.ref].payload is None and v.payload is not None):
                held[v.ref] = v
    edges = {(p, v.ref) for v in held.values() for p in v.parents if p in held}
    return held, edges


def oracle_reach(dag, src, dst):
    """Plain recursive DFS over parent links."""
    seen = set()

    def go(r):
        if r == dst:
            return True
        if r in seen or r not in dag:
            return False
        seen.add(r)
        return any(go(p) for p in dag[r].parents)

    return go(src)


def oracle_paths_to_slots(dag, own):
    """Enumerate every parent path from ``own``; collect the (origin, round)
    slots of held vertices it visits."""
    slots = set()
    stack = [(own,)]
    while stack:
        path = stack.pop()
        r = path[-1]
        if r not in dag:
            continue
        slots.add((r.origin, r.round))
        for p in dag[r].parents:
            if p not in path:
                stack.append(path + (p,))
    return slots


dag_seeds = st.integers(0, 10_000)


# -- params -------------------------------------------------------------------


def test_params_validation():
    assert ProtocolParams(4, 1).quorum == 3
    assert ProtocolParams.for_n(10).f == 3
    with pytest.raises(ValueError):
        ProtocolParams(3, 1)
    with pytest.raises(ValueError):
        ProtocolParams(4, 1, r_max=1)
    with pytest.raises(ValueError):
        ProtocolParams(4, 1, r_max=2, history_depth=2)


# -- vertices and authenticators ---------------------------------------------


def test_digest_is_pure_function_of_origin_round_payload():
    assert payload_digest(1, 2, b"x") == payload_digest(1, 2, b"x")
    assert payload_digest(1, 2, b"x") != payload_digest(1, 3, b"x")
    assert payload_digest(1, 2, b"x") != payload_digest(2, 2, b"x")


def test_only_origin_can_sign(keyring):
    v = make_vertex(keyring, 1, 0, b"a")
    assert v.check(keyring)
    with pytest.raises(ForgeryError):
        keyring.sign(2, v.ref)
    other = Keyring(4, b"other")
    assert not v.check(other)


def test_parent_round_must_be_lower(keyring):
    a = make_vertex(keyring, 0, 1, b"a")
    with pytest.raises(DagError):
        make_vertex(keyring, 1, 1, b"b", [a.ref])


def test_absorb_rejects_forgery_atomically(keyring):
    good = make_vertex(keyring, 0, 0, b"a")
    forged = Vertex(VertexRef(1, 0, payload_digest(1, 0, b"b")), b"b", frozenset(), b"\0" * 32)
    d = LocalDag(keyring)
    with pytest.raises(ForgeryError):
        d.absorb([good, forged])
    assert len(d) == 0
    tampered = Vertex(good.ref, b"other", good.parents, good.tag)
    with pytest.raises(ForgeryError):
        d.absorb([tampered])


def test_digest_only_upgrades_to_full(keyring):
    v = make_vertex(keyring, 0, 0, b"a")
    d = LocalDag(keyring, [v.digest_only()])
    assert d[v.ref].payload is None
    assert d.absorb([v]) == [v]
    assert d[v.ref].payload == b"a"
    assert d.absorb([v.digest_only()]) == []
    assert d[v.ref].payload == b"a"


# -- merge --------------------------------------------------------------------


def test_merge_idempotent_and_identity():
    d = honest_dag(1)
    assert merge(d, d) == d
    assert merge(d, LocalDag(d.keyring)) == d
    assert merge(LocalDag(d.keyring), d) == d


@settings(max_examples=200, deadline=None)
@given(seed=dag_seeds, split=st.integers(0, 2**30))
def test_merge_semilattice_against_union_oracle(seed, split):
    rng = random.Random(seed)
    kr = Keyring(4, seed)
    pool = random_vertices(rng, kr, 4, 4, p_variant=0.2, p_digest_only=0.3)
    # let some refs appear full in one input and digest-only in another
    pool += [v.digest_only() for v in rng.sample(pool, len(pool) // 4)]
    srng = random.Random(split)
    parts = [[v for v in pool if srng.random() < 0.5] for _ in range(3)]
    a, b, c = (LocalDag(kr, p) for p in parts)
    a.mark([1], [v.ref for v in parts[0][:1] if v.ref.origin == 1])
    b.mark([2], [])
    ab, ba = merge(a, b), merge(b, a)
    assert ab == ba
    assert merge(ab, c) == merge(a, merge(b, c))
    held, edges = oracle_union(a, b)
    assert ab.refs == frozenset(held)
    assert ab.edges == frozenset(edges)
    assert all(ab[r].payload == held[r].payload for r in held)
    assert ab.byzantine == a.byzantine | b.byzantine
    assert ab.invalidated == a.invalidated | b.invalidated


def test_merge_rejects_forged_input(keyring):
    a = LocalDag(keyring, [make_vertex(keyring, 0, 0, b"a")])
    b = LocalDag(Keyring(4, b"elsewhere"))
    b.absorb([make_vertex(b.keyring, 1, 0, b"b")])
    with pytest.raises(ForgeryError):
        merge(a, b)


# -- reachable ------------------------------------------------------------------


def test_reachable_chain(keyring):
    v0 = make_vertex(keyring, 0, 0, b"a")
    v1 = make_vertex(keyring, 0, 1, b"", [v0.ref])
    v2 = make_vertex(keyring, 0, 2, b"", [v1.ref])
    d = LocalDag(keyring, [v0, v1, v2])
    assert reachable(d, v2.ref, v0.ref)
    assert not reachable(d, v0.ref, v2.ref)
    assert reachable(d, v1.ref, v1.ref)


def test_reachable_unknown_source_raises(keyring):
    d = LocalDag(keyring)
    with pytest.raises(QueryError):
        reachable(d, VertexRef(0, 0, b"x"), VertexRef(0, 0, b"x"))


@settings(max_examples=40, deadline=None)
@given(seed=dag_seeds)
def test_reachable_matches_dfs_oracle(seed):
    d = LocalDag(Keyring(5, seed),
                 random_vertices(random.Random(seed), Keyring(5, seed), 5, 5, p_variant=0.2))
    refs = sorted(d.refs)
    rng = random.Random(seed + 1)
    for _ in range(100):
        s, t = rng.choice(refs), rng.choice(refs)
        assert reachable(d, s, t) == oracle_reach(d, s, t)


def test_reachable_with_late_parents(keyring):
    v0 = make_vertex(keyring, 0, 0, b"a")
    v1 = make_vertex(keyring, 1, 1, b"", [v0.ref])
    d = LocalDag(keyring, [v1])
    d.index()
    assert not reachable(d, v1.ref, v0.ref)
    d.absorb([v0])
    assert reachable(d, v1.ref, v0.ref)


# -- completeness -----------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(seed=dag_seeds, depth=st.integers(0, 2))
def test_completeness_matches_path_enumeration(seed, depth):
    kr = Keyring(4, seed)
    d = LocalDag(kr, random_vertices(random.Random(seed), kr, 4, 4))
    params = ProtocolParams(4, 1, r_max=4, history_depth=depth)
    for own in d.refs:
        slots = oracle_paths_to_slots(d, own)
        want = {(j, k) for j in range(4) for k in range(depth + 1)} - slots
        rep = completeness(d, own, params)
        assert rep.missing == want
        assert rep.complete == (not want)


def test_completeness_exclude_and_unknown(keyring):
    vs = [make_vertex(keyring, i, 0, b"x") for i in range(3)]
    tops = [make_vertex(keyring, i, 1, b"", [v.ref for v in vs]) for i in range(3)]
    own = make_vertex(keyring, 0, 2, b"", [t.ref for t in tops])
    d = LocalDag(keyring, vs + tops + [own])
    p = ProtocolParams(4, 1)
    assert completeness(d, own.ref, p).missing == {(3, 0), (3, 1)}
    assert completeness(d, own.ref, p, exclude=[3]).complete
    with pytest.raises(QueryError):
        completeness(d, VertexRef(3, 3, b"?"), p)


# -- extract_originals ------------------------------------------------------------


def test_extract_originals_filters(keyring):
    vs = [make_vertex(keyring, i, 0, f"v{i}".encode()) for i in range(4)]
    own = make_vertex(keyring, 0, 1, b"", [v.ref for v in vs[:3]] + [vs[3].ref])
    d = LocalDag(keyring, vs[:2] + [vs[2].digest_only(), vs[3], own])
    got = {v.ref.origin for v in extract_originals(d, own.ref)}
    assert got == {0, 1, 3}  # p2 is digest-only
    d.mark([3], [vs[3].ref])
    assert {v.ref.origin for v in extract_originals(d, own.ref)} == {0, 1}
    d.mark([1])
    assert {v.ref.origin for v in extract_originals(d, own.ref)} == {0}


def test_extract_originals_needs_reachability(keyring):
    a = make_vertex(keyring, 0, 0, b"a")
    b = make_vertex(keyring, 1, 0, b"b")
    own = make_vertex(keyring, 0, 1, b"", [a.ref])
    d = LocalDag(keyring, [a, b, own])
    assert extract_originals(d, own.ref) == {a}


# -- serialization ------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(seed=dag_seeds)
def test_serialization_round_trip(seed):
    kr = Keyring(4, seed)
    d = LocalDag(kr, random_vertices(random.Random(seed), kr, 4, 3,
                                     p_variant=0.2, p_digest_only=0.3))
    d.mark([1], [r for r in d.refs if r.origin == 1][:2])
    assert LocalDag.from_json(d.to_json(), kr) == d
    assert LocalDag.from_bytes(d.to_bytes(), kr) == d
    assert d.to_bytes() == LocalDag.from_bytes(d.to_bytes(), kr).to_bytes()


def test_from_bytes_rejects_garbage(keyring):
    with pytest.raises(Exception):
        LocalDag.from_bytes(b"NOPE", keyring)


def test_tips_below(keyring):
    a = make_vertex(keyring, 0, 0, b"a")
    b = make_vertex(keyring, 1, 0, b"b")
    c = make_vertex(keyring, 0, 1, b"", [a.ref])
    d = LocalDag(keyring, [a, b, c])
    assert d.tips_below(2) == {b.ref, c.ref}
    assert d.tips_below(1) == {a.ref, b.ref}
