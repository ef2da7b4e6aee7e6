import json

import pytest

from dagcast import cli, harness
from dagcast.harness import ConfigError, ExperimentConfig


def tiny(**kw):
    base = dict(n_values=[4], seeds=3, resolution=0.05)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(resolution=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(rho_lo=0.5, rho_hi=0.2)
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario="nope")
    assert ExperimentConfig(delay={"base": 1.0, "jitter": 0.0}).delay.base == 1.0
    assert ExperimentConfig().f_for(20) == 6
    assert ExperimentConfig(f_rule="2").f_for(20) == 2


def test_max_loss_search_on_grid():
    cfg = tiny()
    sr = harness.max_loss_search(4, cfg)
    assert round(sr.rho_max / 0.05) * 0.05 == pytest.approx(sr.rho_max)
    assert sr.at_max.rate >= cfg.success_threshold
    above = [t for t in sr.trials if t.rho > sr.rho_max]
    assert all(t.rate < cfg.success_threshold for t in above if t.rho == round(sr.rho_max + 0.05, 10))


def test_lossless_failure_is_config_error():
    with pytest.raises(ConfigError):
        harness.max_loss_search(4, tiny(success_threshold=1.01))


def test_latency_at_zero_loss_is_closed_form():
    cfg = tiny()
    lo, hi = harness.lossless_latency(cfg, 4)
    assert lo <= harness.latency_at(0.0, 4, cfg) <= hi
    assert lo == 2 * 25 + 3 * 25 / 4 + cfg.delay.base


def test_table_outputs_reproducible():
    cfg = tiny(n_values=[4, 5])
    a, b = harness.table1(cfg), harness.table1(cfg)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    lines = a.to_csv().splitlines()
    assert lines[0].startswith("n,f,tolerable_loss_proportion")
    assert len(lines) == 3
    assert "Tolerable loss proportion" in a.table()
    rec = json.loads(a.to_json())
    assert [r["n"] for r in rec["rows"]] == [4, 5]


def test_heavy_loss_pattern_exceeds_a_third_everywhere():
    n = 12
    cfg = harness.heavy_loss_config(n)
    for slot in range(cfg.r_max):
        for j in range(n):
            lost = sum((slot, s, j) in cfg.loss.drops for s in range(n) if s != j)
            assert lost > n / 3


def test_replays_pass():
    assert harness.replay_fig2().passed
    assert harness.replay_fig3().passed


def test_ordering_agreement_small():
    rep = harness.ordering_agreement(runs=5)
    assert rep.passed and len(rep.records) == 5


# -- CLI ------------------------------------------------------------------------


def test_cli_replay_writes_outputs(tmp_path, capsys):
    assert cli.main(["replay", "--out", str(tmp_path)]) == 0
    for ext in ("csv", "json", "txt"):
        assert (tmp_path / f"replay.{ext}").exists()
    assert (tmp_path / "fig2_trace.csv").read_text().startswith("time_ms,participant,event")
    assert "PASS" in capsys.readouterr().out


def test_cli_config_overrides_flags(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"n": [4], "seeds": 2, "rhos": [0.0]}))
    assert cli.main(["sweep", "--n", "4,8", "--config", str(conf), "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "sweep.json").read_text())
    assert [r["n"] for r in data["rows"]] == [4]
    assert data["config"]["seeds"] == 2


def test_cli_failed_check_exits_nonzero(tmp_path):
    code = cli.main(["anchor-mc", "--trials", "200", "--min-frequency", "0.99",
                     "--out", str(tmp_path)])
    assert code == 1


def test_cli_bad_config_exits_two(tmp_path):
    assert cli.main(["max-loss", "--seeds", "0", "--out", str(tmp_path)]) == 2


def test_cli_order_writes_commit_log(tmp_path):
    assert cli.main(["order", "--runs", "3", "--out", str(tmp_path)]) == 0
    log = (tmp_path / "commit_log.jsonl").read_text().splitlines()
    assert log and all(json.loads(line)["seq"] == i for i, line in enumerate(log))


def test_cli_max_loss_small(tmp_path):
    code = cli.main(["max-loss", "--n", "4,5", "--seeds", "3", "--resolution", "0.05",
                     "--out", str(tmp_path)])
    text = (tmp_path / "max_loss.txt").read_text()
    assert "Tolerable loss proportion" in text
    assert code in (0, 1)
    assert (code == 0) == ("FAIL" not in text)
