import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randgreen import SchemaError, emit_config, parse_config, run_experiment
from randgreen.cli import main
from randgreen.config import EXPERIMENTS, parse_config_dict
from randgreen.errors import EmptySelection
from randgreen.harness import FIELDS, emit_plotdata, plotdata_csv, read_records, records_csv

MINIMAL = {"experiment": "lyapunov", "k": 1, "d": 2, "driver": {"kind": "iid", "radius": 0.2}}


def errors_of(doc):
    with pytest.raises(SchemaError) as info:
        parse_config_dict(doc)
    return info.value.errors


def test_defaults_filled():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.depth == 20 and cfg.steps == 1000 and cfg.seed == 0
    assert cfg.output_path == "lyapunov.csv"


def test_degree_one_rejected():
    [(path, reason)] = errors_of({**MINIMAL, "d": 1})
    assert path == "d" and "out of range" in reason


def test_unknown_key_named():
    [(path, reason)] = errors_of({**MINIMAL, "epsilonn": 0.1})
    assert path == "epsilonn" and reason == "unknown key"
    [(path, _)] = errors_of({**MINIMAL, "driver": {"kind": "iid", "radiuss": 1}})
    assert path == "driver.radiuss"


def test_wrong_type_and_cross_field_errors():
    [(path, reason)] = errors_of({**MINIMAL, "samples": "many"})
    assert path == "samples" and "wrong type" in reason
    [(path, _)] = errors_of({**MINIMAL, "n_min": 5, "n_max": 3})
    assert path == "n_min"
    [(path, _)] = errors_of({**MINIMAL, "driver": {"kind": "cycle"}})
    assert path == "driver.params"
    assert errors_of({**MINIMAL, "samples": 0})[0][0] == "samples"


def test_invalid_json():
    with pytest.raises(SchemaError):
        parse_config("{not json")


complexes = st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False)
drivers = st.one_of(
    st.builds(lambda c, r: {"kind": "iid", "center": {"re": c.real, "im": c.imag}, "radius": r},
              complexes, st.floats(0, 0.3)),
    st.builds(lambda ps: {"kind": "cycle", "params": [[str(p)] for p in ps]},
              st.lists(complexes, min_size=1, max_size=3)),
    st.builds(lambda a, b: {"kind": "parameter_map", "poly": [a, 0, 1], "direction": b,
                            "project_circle": True},
              st.floats(-0.1, 0.1), st.floats(0.01, 0.2)),
)


@settings(max_examples=50)
@given(st.sampled_from(EXPERIMENTS), drivers, st.integers(0, 2**64 - 1),
       st.integers(4, 30), st.floats(1e-3, 1.0))
def test_round_trip(exp, driver, seed, nmax, eps):
    cfg = parse_config_dict({"experiment": exp, "k": 1, "d": 2, "driver": driver,
                             "seed": seed, "n_max": nmax, "epsilon": eps})
    again = parse_config(emit_config(cfg))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_hash_ignores_output_path():
    cfg = parse_config_dict(MINIMAL)
    assert cfg.with_overrides(output_path="x.csv").config_hash() == cfg.config_hash()
    assert cfg.with_overrides(seed=3).config_hash() != cfg.config_hash()


# -- harness and CLI ----------------------------------------------------------------

def small(exp, **kw):
    doc = {"experiment": exp, "k": 1, "d": 2, "driver": {"kind": "cycle", "params": [[0]]},
           "depth": 8, "samples": 2000, "orbits": 20, "steps": 20, "candidates": 2000,
           "centers": 50, "probes": 100, "n_max": 4}
    doc.update(kw)
    return doc


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_lyapunov_records_cycle():
    recs, status, _ = run_experiment(parse_config_dict(small("lyapunov")), write=False)
    [ex] = [r for r in recs if r.estimator == "exponent"]
    assert status == 0 and ex.value == pytest.approx(0.6931, abs=0.01)
    assert all(r.seed == 0 and r.config_hash == recs[0].config_hash for r in recs)


def test_separated_records_and_slope():
    cfg = parse_config_dict(small("entropy-separated", n_min=2, n_max=5, epsilon=0.1))
    recs, _, _ = run_experiment(cfg, write=False)
    counts = [r for r in recs if r.estimator == "separated_count"]
    assert [r.index for r in counts] == [2, 3, 4, 5]
    [slope] = [r for r in recs if r.estimator == "slope_log_count"]
    assert abs(slope.value - 0.6931) < 0.2


@pytest.mark.parametrize("exp", EXPERIMENTS)
def test_every_experiment_runs_and_reruns_identically(tmp_path, exp):
    extra = {"n_max": 2, "n_min": 1} if exp == "alpha-ergodic" else {}
    cfg = write_cfg(tmp_path, small(exp, **extra))
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    s1 = main([exp, "--config", str(cfg), "--out", str(out1)])
    s2 = main([exp, "--config", str(cfg), "--out", str(out2)])
    assert s1 == s2 and s1 in (0, 2)
    assert out1.read_bytes() == out2.read_bytes()
    text = out1.read_bytes().decode()
    assert text.split("\r\n")[0] == ",".join(FIELDS)
    side = json.loads((tmp_path / "a.csv.json").read_text())
    assert side["config"]["experiment"] == exp and "wall_time_s" in side


def test_reruns_independent_of_threads(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, small("invariance", driver={"kind": "iid", "radius": 0.1},
                                    samples=9000))
    monkeypatch.setenv("RANDGREEN_THREADS", "1")
    main(["invariance", "--config", str(cfg), "--out", str(tmp_path / "a.csv")])
    monkeypatch.setenv("RANDGREEN_THREADS", "4")
    main(["invariance", "--config", str(cfg), "--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_seed_flag_overrides(tmp_path):
    cfg = write_cfg(tmp_path, small("birkhoff", driver={"kind": "iid", "radius": 0.2}))
    main(["birkhoff", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o.csv")])
    assert {r.seed for r in read_records(tmp_path / "o.csv")} == {9}


def test_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["no-such-experiment"]) == 1
    bad = write_cfg(tmp_path, {**MINIMAL, "d": 1})
    assert main(["lyapunov", "--config", str(bad)]) == 1
    assert "out of range" in capsys.readouterr().err
    good = write_cfg(tmp_path, small("lyapunov"), "good.json")
    assert main(["mixing", "--config", str(good)]) == 1
    assert main(["lyapunov", "--config", str(tmp_path / "missing.json")]) == 1
    # a degenerate cycle is a hard error carrying the step index
    deg = write_cfg(tmp_path, small("birkhoff", driver={
        "kind": "cycle", "family": "diagonal",
        "params": [[0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 1, -1]]}), "deg.json")
    assert main(["birkhoff", "--config", str(deg), "--out", str(tmp_path / "d.csv")]) == 1
    assert "step 1" in capsys.readouterr().err


def test_undersampled_exit_two(tmp_path):
    cfg = write_cfg(tmp_path, small("entropy-partition", samples=200, sectors=16, n_max=6))
    assert main(["entropy-partition", "--config", str(cfg),
                 "--out", str(tmp_path / "u.csv")]) == 2


def test_records_round_trip(tmp_path):
    recs, _, _ = run_experiment(parse_config_dict(small("green-converge")), write=False)
    p = tmp_path / "r.csv"
    p.write_text(records_csv(recs), newline="")
    again = read_records(p)
    assert len(again) == len(recs)
    for a, b in zip(again, recs):
        da, db = a.__dict__, b.__dict__
        assert {k: v for k, v in da.items() if k != "stderr"} == {k: v for k, v in db.items() if k != "stderr"}
        assert a.stderr == b.stderr or (math.isnan(a.stderr) and math.isnan(b.stderr))


def test_plotdata_green_slope(tmp_path):
    cfg = parse_config_dict(small("green-converge", n_max=20, probes=500,
                                  driver={"kind": "iid", "radius": 0.1}))
    recs, _, _ = run_experiment(cfg, write=False)
    rows = emit_plotdata(recs, {"estimator": "increment"})
    [fit] = [r for r in rows if r.series.endswith("fit_slope")]
    assert fit.y == pytest.approx(-0.6931, abs=0.1)
    assert len(rows) == 21
    assert plotdata_csv(rows).startswith("x,y,yerr,series\r\n")


def test_plotdata_mixing_columns():
    cfg = parse_config_dict(small("mixing", driver={"kind": "iid", "radius": 0.1},
                                  samples=20_000, n_max=3, observables=["poisson"]))
    recs, _, _ = run_experiment(cfg, write=False)
    rows = emit_plotdata(recs, {"experiment": "mixing", "estimator": "corr"})
    pts = [r for r in rows if r.series == "mixing:corr:log"]
    assert [r.x for r in pts] == [1.0, 2.0, 3.0]
    with pytest.raises(EmptySelection):
        emit_plotdata(recs, {"estimator": "nothing"})


def test_plotdata_cli(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small("green-converge"))
    out = tmp_path / "g.csv"
    main(["green-converge", "--config", str(cfg), "--out", str(out)])
    capsys.readouterr()
    assert main(["plotdata", str(out), "--estimator", "increment"]) == 0
    assert capsys.readouterr().out.startswith("x,y,yerr,series")
    assert main(["plotdata", str(out), "--estimator", "nothing"]) == 1
