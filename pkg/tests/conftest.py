import random

import pytest

from dagcast.dag import Keyring, LocalDag, make_vertex

ACCEPTANCE_LINES: list[str] = []


def random_vertices(rng: random.Random, keyring: Keyring, n: int, rounds: int,
                    p_variant: float = 0.0, p_digest_only: float = 0.0):
    """Layered random vertices.  Parents are drawn from all lower rounds."""
    out = []
    for r in range(rounds):
        below = [v.ref for v in out]
        for o in range(n):
            copies = 2 if rng.random() < p_variant else 1
            for c in range(copies):
                k = rng.randint(0, min(len(below), 4)) if r else 0
                parents = rng.sample(below, k) if r else []
                v = make_vertex(keyring, o, r, f"p{o}r{r}c{c}".encode(), parents)
                if rng.random() < p_digest_only:
                    v = v.digest_only()
                out.append(v)
    return out


def honest_dag(seed: int, n: int = 4, rounds: int = 4, keyring=None) -> LocalDag:
    keyring = keyring or Keyring(n, seed)
    return LocalDag(keyring, random_vertices(random.Random(seed), keyring, n, rounds))


@pytest.fixture
def keyring():
    return Keyring(4, b"test")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
