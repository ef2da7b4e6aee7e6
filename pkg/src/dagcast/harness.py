"""Experiment driver: tolerable-loss search, latency sweeps and scripted replays."""
from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field

from .dag import LocalDag, QueryError, completeness, extract_originals, reachable
from .dissemination import Status
from .netsim import EQUIVOCATOR, Adversary, DelayModel, LossModel, SimConfig, run
from .ordering import random_ordering_config, run_ordering

SCENARIOS = ("loss_sweep", "max_loss_search", "fig2_replay", "fig3_replay",
             "ordering_agreement", "anchor_monte_carlo")


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    n_values: list[int] = field(default_factory=lambda: [4, 8, 12, 16, 20])
    f_rule: str = "floor"  # f = floor((n - 1) / 3)
    seeds: int = 20
    base_seed: int = 0
    success_threshold: float = 0.95
    rho_lo: float = 0.0
    rho_hi: float = 1.0
    resolution: float = 0.01
    t_slot: float | None = None  # None: n * airtime
    airtime: float = 6.25
    r_max: int = 12
    e_max: int = 2
    delay: DelayModel = field(default_factory=DelayModel)
    scenario: str = "max_loss_search"

    def __post_init__(self):
        if self.seeds < 1:
            raise ConfigError("need at least one seed")
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")
        if not 0 <= self.rho_lo <= self.rho_hi <= 1:
            raise ConfigError("rho bounds must satisfy 0 <= lo <= hi <= 1")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if isinstance(self.delay, dict):
            self.delay = DelayModel(**self.delay)

    def f_for(self, n: int) -> int:
        if self.f_rule == "floor":
            return (n - 1) // 3
        return int(self.f_rule)

    def sim(self, n: int, seed: int, loss: LossModel) -> SimConfig:
        return SimConfig(seed=seed, n=n, f=self.f_for(n), t_slot=self.t_slot,
                         airtime=self.airtime, loss=loss, delay=self.delay,
                         r_max=self.r_max, e_max=self.e_max)

    def slot_ms(self, n: int) -> float:
        return self.t_slot if self.t_slot else n * self.airtime

    def seed_list(self) -> list[int]:
        return list(range(self.base_seed, self.base_seed + self.seeds))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RhoTrial:
    n: int
    rho: float
    successes: int
    seeds: int
    latencies_last: list[float]
    latencies_mean: list[float]

    @property
    def rate(self) -> float:
        return self.successes / self.seeds


def trial(cfg: ExperimentConfig, n: int, rho: float) -> RhoTrial:
    last, mean, ok = [], [], 0
    for s in cfg.seed_list():
        res = run(cfg.sim(n, s, LossModel.budget(rho)))
        if res.success:
            ok += 1
            last.append(res.latency_last)
            mean.append(res.latency_mean)
    return RhoTrial(n, rho, ok, cfg.seeds, last, mean)


@dataclass
class SearchResult:
    n: int
    f: int
    rho_max: float
    at_max: RhoTrial
    trials: list[RhoTrial]
    monotone_ok: bool


def max_loss_search(n: int, cfg: ExperimentConfig) -> SearchResult:
    """Largest rho on the resolution grid at which enough seeds complete."""
    res = cfg.resolution
    lo_k = round(cfg.rho_lo / res)
    hi_k = int(cfg.rho_hi / res + 1e-9)
    trials: dict[int, RhoTrial] = {}

    def passes(k: int) -> bool:
        if k not in trials:
            trials[k] = trial(cfg, n, round(k * res, 10))
        return trials[k].rate >= cfg.success_threshold

    if not passes(lo_k):
        if lo_k == 0:
            raise ConfigError(f"n={n} fails without loss")
        raise ConfigError(f"n={n} fails at the lower bound rho={cfg.rho_lo}")
    if passes(hi_k):
        lo_k = hi_k
    else:
        while hi_k - lo_k > 1:
            mid = (lo_k + hi_k) // 2
            if passes(mid):
                lo_k = mid
            else:
                hi_k = mid
    # spot re-check one step below: a failure there means the predicate is
    # not monotone at this resolution
    monotone_ok = lo_k == 0 or passes(lo_k - 1)
    ordered = [trials[k] for k in sorted(trials)]
    return SearchResult(n, cfg.f_for(n), round(lo_k * res, 10), trials[lo_k], ordered, monotone_ok)


def latency_at(rho: float, n: int, cfg: ExperimentConfig) -> float:
    """Mean (over completing seeds) of the last honest completion time, in ms."""
    t = trial(cfg, n, rho)
    if not t.latencies_last:
        raise ConfigError(f"no seed completed at n={n}, rho={rho}")
    return statistics.fmean(t.latencies_last)


def lossless_latency(cfg: ExperimentConfig, n: int) -> tuple[float, float]:
    """Bounds on the zero-loss completion time.  Round-1 vertices go out at
    the second boundary; the last sender's turn is ``(n-1)/n`` of a slot in,
    and its message lands ``base`` to ``base + jitter`` later."""
    slot = cfg.slot_ms(n)
    lo = 2 * slot + (n - 1) * slot / n + cfg.delay.base
    return lo, lo + cfg.delay.jitter


@dataclass
class Row:
    n: int
    f: int
    tolerable_loss: float
    latency_last_ms: float
    latency_mean_ms: float
    success_rate: float
    seeds: int
    monotone_ok: bool


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[Row]
    records: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "f", "tolerable_loss_proportion", "latency_last_ms",
                    "latency_mean_ms", "success_rate", "seeds", "slot_ms", "monotone_ok"])
        for r in sorted(self.rows, key=lambda r: r.n):
            w.writerow([r.n, r.f, f"{r.tolerable_loss:.2f}", f"{r.latency_last_ms:.3f}",
                        f"{r.latency_mean_ms:.3f}", f"{r.success_rate:.3f}", r.seeds,
                        f"{self.config.slot_ms(r.n):g}", int(r.monotone_ok)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"config": self.config.to_dict(),
                           "rows": [asdict(r) for r in sorted(self.rows, key=lambda r: r.n)],
                           "records": self.records}, indent=1, sort_keys=True)

    def table(self) -> str:
        rows = sorted(self.rows, key=lambda r: r.n)
        head = ["Number of participants"] + [str(r.n) for r in rows]
        loss = ["Tolerable loss proportion"] + [f"{r.tolerable_loss:.2f}" for r in rows]
        slot = (f"t_slot={self.config.t_slot:g}" if self.config.t_slot
                else f"airtime={self.config.airtime:g}")
        lat = [f"Average latency (ms, {slot})"] + \
              [f"{r.latency_last_ms:.0f}" for r in rows]
        width = [max(len(a), len(b), len(c)) for a, b, c in zip(head, loss, lat)]
        return "\n".join("  ".join(c.rjust(w) if i else c.ljust(w)
                                   for i, (c, w) in enumerate(zip(line, width)))
                         for line in (head, loss, lat))


def table1(cfg: ExperimentConfig) -> ExperimentResult:
    rows, records = [], []
    for n in sorted(cfg.n_values):
        sr = max_loss_search(n, cfg)
        t = sr.at_max
        rows.append(Row(n, sr.f, sr.rho_max, statistics.fmean(t.latencies_last),
                        statistics.fmean(t.latencies_mean), t.rate, t.seeds, sr.monotone_ok))
        for tr in sr.trials:
            records.append({"n": n, "rho": tr.rho, "successes": tr.successes,
                            "seeds": tr.seeds})
    records.sort(key=lambda r: (r["n"], r["rho"]))
    return ExperimentResult(cfg, rows, records)


def loss_sweep(cfg: ExperimentConfig, rhos: list[float]) -> list[dict]:
    out = []
    for n in sorted(cfg.n_values):
        for rho in sorted(rhos):
            t = trial(cfg, n, rho)
            out.append({"n": n, "rho": rho, "success_rate": t.rate,
                        "latency_last_ms": statistics.fmean(t.latencies_last)
                        if t.latencies_last else None})
    return out


# -- scripted replays --------------------------------------------------------


@dataclass
class ReplayReport:
    scenario: str
    checks: list[tuple[str, bool, str]]

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def lines(self) -> list[str]:
        return [f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}" for name, ok, detail in self.checks]


def fig2_config(seed: int = 0) -> SimConfig:
    """p_2's round-0 message misses p_0 (and p_3); p_0 also loses the round-1
    messages of p_1 and p_2, so nothing it holds at round 2 leads to p_2[0]."""
    drops = {(0, 2, 0), (0, 2, 3), (1, 1, 0), (1, 2, 0)}
    return SimConfig(seed=seed, n=4, f=1, loss=LossModel.scripted(drops),
                     delay=DelayModel(base=2.0, jitter=0.0), r_max=6, stop_early=False)


def fig3_config(seed: int = 0) -> SimConfig:
    """p_3 shows one original to p_0, p_1 and another to p_2; p_2[1] -> p_1
    is lost, so p_1 only learns the second variant a round later."""
    adv = {3: Adversary(EQUIVOCATOR, partition=frozenset({0, 1}))}
    return SimConfig(seed=seed, n=4, f=1, loss=LossModel.scripted({(1, 2, 1)}),
                     delay=DelayModel(base=2.0, jitter=0.0), adversaries=adv,
                     r_max=6, stop_early=False)


def replay_fig2(seed: int = 0) -> ReplayReport:
    res = run(fig2_config(seed))
    p0 = res.participants[0]
    checks = []
    v2 = p0.own.get(2)
    target = res.participants[2].own[0].ref
    if v2 is None:
        checks.append(("p0 reaches round 2", False, "no round-2 vertex"))
        return ReplayReport("fig2_replay", checks)
    # evaluate p_0[2] against the DAG exactly as it stood when p_0[2] was made
    snapshot = _dag_at(p0, v2.ref)
    rep = completeness(snapshot, v2.ref, p0.params)
    try:
        path = reachable(snapshot, v2.ref, target)
    except QueryError:
        path = False
    checks.append(("p0[2] has no path to p2[0]", not path, f"reachable={path}"))
    checks.append(("p0[2] incomplete, (2,0) missing", (not rep.complete) and (2, 0) in rep.missing,
                   f"missing={sorted(rep.missing)}"))
    checks.append(("p0 complete at round 3", p0.complete_round == 3,
                   f"complete_round={p0.complete_round}"))
    enquiries = [row for row in res.trace if row[2] == "enquiry"]
    checks.append(("no enquiry issued", not enquiries, f"{len(enquiries)} enquiries"))
    checks.append(("all participants complete", res.success,
                   str({i: s.value for i, s in res.status.items()})))
    return ReplayReport("fig2_replay", checks)


def replay_fig3(seed: int = 0) -> ReplayReport:
    res = run(fig3_config(seed))
    p = res.participants
    checks = [
        ("p2 flags p3 at round 2", p[2].flagged.get(3) == 2, f"p2 flagged={p[2].flagged}"),
        ("p1 flags p3 at round 3", p[1].flagged.get(3) == 3, f"p1 flagged={p[1].flagged}"),
    ]
    honest = [0, 1, 2]
    checks.append(("every honest participant flags p3", all(3 in p[i].dag.byzantine for i in honest),
                   str({i: sorted(p[i].dag.byzantine) for i in honest})))
    checks.append(("no honest participant flagged",
                   not any(set(p[i].dag.byzantine) & set(honest) for i in range(4)),
                   str({i: sorted(p[i].dag.byzantine) for i in range(4)})))
    excluded = all(
        all(v.ref.origin != 3 for v in extract_originals(p[i].dag, p[i].frontier.ref))
        for i in honest)
    checks.append(("offender excluded from originals", excluded, ""))
    return ReplayReport("fig3_replay", checks)


def _dag_at(part, ref):
    """The participant's DAG restricted to vertices held when ``ref`` was made."""
    cutoff = part.arrival[ref]
    keep = [v for v in part.dag if part.arrival.get(v.ref, float("inf")) <= cutoff]
    return LocalDag(part.keyring, keep)


# -- ordering ---------------------------------------------------------------


@dataclass
class AgreementReport:
    runs: int
    divergent: list[int]
    committed: list[int]
    records: list[dict]

    @property
    def passed(self) -> bool:
        return not self.divergent


def ordering_agreement(runs: int = 1000, base_seed: int = 0, rho_max: float = 0.31
                       ) -> AgreementReport:
    """Randomised ordering runs; a run diverges if any two honest commit
    logs differ or a log was ever rewritten."""
    divergent, committed, records = [], [], []
    for s in range(base_seed, base_seed + runs):
        res = run_ordering(random_ordering_config(s, rho_max))
        rec = res.record()
        records.append(rec)
        committed.append(res.committed)
        if not res.agreement:
            divergent.append(s)
    return AgreementReport(runs, divergent, committed, records)


def heavy_loss_config(n: int, seed: int = 0, r_max: int = 12) -> SimConfig:
    """Every receiver loses ``floor(n/3) + 1`` (> n/3) of its incoming
    messages in every slot, from a sender set that rotates each slot."""
    k = n // 3 + 1
    drops = set()
    for slot in range(r_max):
        for j in range(n):
            senders = [(j + 1 + slot + m) % n for m in range(n)]
            senders = [s for s in senders if s != j][:k]
            drops.update((slot, s, j) for s in senders)
    return SimConfig(seed=seed, n=n, loss=LossModel.scripted(drops), r_max=r_max,
                     stop_early=False)


def heavy_loss_contrast(n: int, seed: int = 0) -> tuple[bool, dict[int, int]]:
    """Run :func:`heavy_loss_config`.  Returns (all complete, drops per slot)."""
    res = run(heavy_loss_config(n, seed))
    return res.success, dict(res.drops_by_slot)
