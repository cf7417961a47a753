import json
import math

import numpy as np
import pytest

from qmb import harness
from qmb.harness import ConfigError, dump_config, parse_config, read_timeseries, run_experiment, summarize
from qmb.simulator import RunMetrics

MINIMAL = '{"instance": {"N": 4, "K": 2, "L": 2, "d": 2, "epsilon": 0.1, "seed": 7}, "T": 50, "seeds": [3]}'


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.thin == 1 and cfg.T == 50 and cfg.seeds == [3]
    assert [p.kind.value for p in cfg.policies] == ["oracle", "ucb-qmb", "ts-qmb", "random"]
    p = cfg.policies[1].params
    assert p.c1 == 1.0 and p.lambda_reg == 1.0 and p.exact_cap == 10**6


@pytest.mark.parametrize(
    "patch,key",
    [({"T": -5}, "T"), ({"bogus": 1}, "bogus"), ({"thin": 0}, "thin"), ({"seeds": []}, "seeds"),
     ({"policies": [{"kind": "ucb-qmb", "c2": 1}]}, "policies[0].c2"),
     ({"policies": ["greedy"]}, "policies[0].kind")],
)
def test_config_errors_name_the_key(patch, key):
    doc = json.loads(MINIMAL)
    doc.update(patch)
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(doc))
    assert info.value.key == key
    assert key in str(info.value)


def test_malformed_document():
    with pytest.raises(ConfigError):
        parse_config("{not json")


def test_round_trip():
    doc = json.loads(MINIMAL)
    doc["policies"] = [{"kind": "ts-qmb", "ts_m": 3, "c1": 0.5, "label": "ts3"}, "oracle"]
    cfg = parse_config(json.dumps(doc))
    assert parse_config(dump_config(cfg)) == cfg
    assert dump_config(parse_config(dump_config(cfg))) == dump_config(cfg)


def _metrics(T):
    rng = np.random.default_rng(0)
    est = np.full(T, np.nan)
    est[::2] = rng.uniform(size=len(est[::2]))
    return RunMetrics(rng.integers(0, 9, T).astype(float), np.cumsum(rng.uniform(size=T) / 3), est, 4)


def test_timeseries_rows(tmp_path):
    path = tmp_path / "a.csv"
    harness.write_timeseries(_metrics(3), path, 1)
    lines = path.read_text().split("\n")
    assert lines[0] == "t,total_queue,cum_regret,est_error" and len(lines) == 5 and lines[-1] == ""
    harness.write_timeseries(_metrics(7), path, 7)
    assert [int(l.split(",")[0]) for l in path.read_text().splitlines()[1:]] == [1, 7]
    harness.write_timeseries(_metrics(10), path, 4)
    assert [int(l.split(",")[0]) for l in path.read_text().splitlines()[1:]] == [1, 5, 9, 10]


def test_timeseries_float_round_trip(tmp_path):
    m = _metrics(50)
    path = tmp_path / "a.csv"
    harness.write_timeseries(m, path, 1)
    back = read_timeseries(path)
    assert np.array_equal(back["cum_regret"], m.cum_regret)
    assert np.array_equal(back["est_error"], m.est_error, equal_nan=True)
    assert ",," not in path.read_text().splitlines()[1] or math.isnan(m.est_error[0])


def _experiment(tmp_path, name, **extra):
    doc = json.loads(MINIMAL)
    doc.update({"T": 120, "seeds": [1, 2], "output_dir": str(tmp_path / name), **extra})
    return parse_config(json.dumps(doc))


def test_experiment_outputs(tmp_path):
    cfg = _experiment(tmp_path, "a")
    summary = run_experiment(cfg)
    out = tmp_path / "a"
    for r in summary.runs:
        cols = read_timeseries(out / f"{r['policy']}__seed{r['seed']}.csv")
        # independent recomputation of the headline statistic
        assert r["avg_queue"] == pytest.approx(sum(cols["total_queue"]) / len(cols["total_queue"]), abs=1e-9)
        if r["policy"] == "oracle":
            assert np.all(cols["cum_regret"] == 0) and r["regret_slope"] == 0.0
    again = summarize(out)
    assert again.dumps() == (out / "summary.json").read_text()


def test_experiment_is_deterministic(tmp_path):
    a = run_experiment(_experiment(tmp_path, "a"))
    b = run_experiment(_experiment(tmp_path, "b"), parallel=2)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
    assert a.dumps() == b.dumps()


def test_thinned_summary_recomputes(tmp_path):
    cfg = _experiment(tmp_path, "thin", thin=7)
    s = run_experiment(cfg)
    assert summarize(tmp_path / "thin").dumps() == s.dumps()


def test_instance_path_config(tmp_path):
    from qmb.model import InstanceConfig, generate_instance

    inst = generate_instance(InstanceConfig(seed=9))
    (tmp_path / "inst.json").write_text(inst.dumps())
    cfg = parse_config('{"instance": "inst.json", "T": 5, "seeds": [0]}', base_dir=str(tmp_path))
    assert harness.load_instance(cfg) == inst


def test_cli(tmp_path, capsys):
    (tmp_path / "inst.json").write_text('{"N": 4, "K": 2, "L": 2, "d": 2, "epsilon": 0.1, "seed": 7}')
    assert harness.main(["gen", "--config", str(tmp_path / "inst.json"), "--out", str(tmp_path / "g")]) == 0
    assert json.loads((tmp_path / "g" / "instance.json").read_text())["n"] == 4

    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({**json.loads(MINIMAL), "T": 60, "policies": ["oracle", "ucb-qmb"]}))
    out = tmp_path / "run"
    assert harness.main(["run", "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    assert sorted(p.name for p in out.glob("*.csv")) == ["oracle__seed5.csv", "ucb-qmb__seed5.csv"]
    capsys.readouterr()
    assert harness.main(["summarize", "--out", str(out)]) == 0
    assert capsys.readouterr().out == (out / "summary.json").read_text()

    assert harness.main(["run", "--config", str(cfg), "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"instance": {"seed": 1}, "T": -1, "seeds": [0]}')
    assert harness.main(["run", "--config", str(bad)]) == 1
    assert "T" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text('{"instance": "missing.json", "T": 3, "seeds": [0]}')
    assert harness.main(["run", "--config", str(broken)]) in (1, 2)
