import json
import math

import pytest

from tips import cli
from tips.config import ConfigError, effective, load_config, parse_config, set_override

FLIP = {"model": {"kind": "finite", "generator": [[0, 1], [1, 0]]},
        "query": {"start": 0, "target": 1, "horizon": 1.0},
        "estimator": {"method": "exact"}}
TWO_STATE_EXACT = 0.5 * (1 - math.exp(-2.0))


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def run(tmp_path, command, cfg, *extra, name="out.json"):
    out = tmp_path / name
    code = cli.main([command, write(tmp_path, cfg, "in-" + name), "--out", str(out), *extra])
    return code, out


def deep(base, **sections):
    cfg = json.loads(json.dumps(base))
    for sec, values in sections.items():
        cfg.setdefault(sec, {}).update(values)
    return cfg


# config

def test_unknown_key_is_named(tmp_path, capsys):
    bad = deep(FLIP, estimator={"particels": 10})
    assert cli.main(["estimate", write(tmp_path, bad)]) == 2
    assert "estimator.particels" in capsys.readouterr().err


def test_unknown_top_level_and_model_keys():
    with pytest.raises(ConfigError, match="extra"):
        parse_config({**FLIP, "extra": {}})
    with pytest.raises(ConfigError, match="model.rate"):
        parse_config({"model": {"kind": "finite", "rate": 1}})
    with pytest.raises(ConfigError, match="model.kind"):
        parse_config({"model": {"kind": "lattice"}})


def test_type_checks():
    with pytest.raises(ConfigError, match="integer"):
        parse_config(deep(FLIP, estimator={"particles": 1.5}))
    with pytest.raises(ConfigError, match="true/false"):
        parse_config(deep(FLIP, output={"timing": 1}))


def test_defaults_recorded_in_effective_config():
    eff = effective(parse_config(FLIP))
    assert eff["estimator"]["alpha"] == 2 / 3 and eff["execution"]["seed"] == 0
    assert "workers" not in eff["execution"] and "path" not in eff["output"]


def test_override():
    cfg = parse_config(FLIP)
    set_override(cfg, "estimator.particles=77")
    assert cfg.estimator.particles == 77
    for bad in ("estimator.nothing=1", "nosection.x=1", "estimator.particles"):
        with pytest.raises(ConfigError):
            set_override(cfg, bad)


def test_missing_file_and_bad_json(tmp_path, capsys):
    assert cli.main(["estimate", str(tmp_path / "nope.json")]) == 2
    p = tmp_path / "broken.json"
    p.write_text("{")
    assert cli.main(["estimate", str(p)]) == 2
    assert "invalid JSON" in capsys.readouterr().err


# estimate

def test_estimate_exact(tmp_path):
    code, out = run(tmp_path, "estimate", FLIP)
    res = json.loads(out.read_text())
    assert code == 0 and math.isclose(res["estimate"], TWO_STATE_EXACT, rel_tol=1e-12)
    assert round(res["estimate"], 5) == 0.43233
    assert res["provenance"]["config"]["query"]["horizon"] == 1.0


def test_estimate_tips_within_4se(tmp_path):
    cfg = deep(FLIP, estimator={"method": "tips", "particles": 10_000, "beta": 0.5})
    code, out = run(tmp_path, "estimate", cfg)
    res = json.loads(out.read_text())
    assert code == 0
    assert abs(res["estimate"] - TWO_STATE_EXACT) < 4 * res["standard_error"]
    assert set(res) >= {"estimate", "log_estimate", "ess", "weight_variance", "particles", "cpu_ms",
                        "seed", "provenance"}
    assert res["cpu_ms"] is None


def test_estimate_to_stdout(capsys, tmp_path):
    assert cli.main(["estimate", write(tmp_path, FLIP)]) == 0
    assert json.loads(capsys.readouterr().out)["estimate"] > 0


def test_timing_opt_in(tmp_path):
    code, out = run(tmp_path, "estimate", deep(FLIP, output={"timing": True}))
    assert code == 0 and json.loads(out.read_text())["cpu_ms"] >= 0


def test_oracle_required_but_unavailable(tmp_path):
    strings = {"model": {"kind": "string"}, "query": {"start": "ACG", "target": "AC", "horizon": 0.5},
               "estimator": {"method": "exact"}}
    assert run(tmp_path, "estimate", strings)[0] == 4
    sweep = deep(strings, query={"horizons": [0.5]},
                 estimator={"method": "tips", "particle_counts": [5], "oracle": "required"})
    assert run(tmp_path, "sweep", sweep, name="s.csv")[0] == 4


def test_step_cap_is_runtime_failure(tmp_path, capsys):
    walk = {"model": {"kind": "finite", "generator": [[0, 1, 0], [1, 0, 1], [0, 1, 0]]},
            "query": {"start": 0, "target": 2, "horizon": 1.0},
            "estimator": {"method": "tips", "particles": 10, "step_cap": 1}}
    assert run(tmp_path, "estimate", walk)[0] == 3
    assert "runtime failure" in capsys.readouterr().err


def test_bad_states_are_config_errors(tmp_path):
    assert run(tmp_path, "estimate", deep(FLIP, query={"target": 5}))[0] == 2
    assert run(tmp_path, "estimate", deep(FLIP, query={"start": None}))[0] == 2
    rna = {"model": {"kind": "rna", "sequence": "GGAAC"},
           "query": {"start": "(...", "target": "mfe", "horizon": 1.0}}
    assert run(tmp_path, "estimate", rna)[0] == 2


def test_rna_and_string_estimates_run(tmp_path):
    rna = {"model": {"kind": "rna", "sequence": "GGGAAACCC"},
           "query": {"start": ".........", "target": "mfe", "horizon": 1.0},
           "estimator": {"method": "tips", "schedule": "rna", "particles": 200}}
    code, out = run(tmp_path, "estimate", rna)
    assert code == 0 and json.loads(out.read_text())["estimate"] > 0
    s = {"model": {"kind": "string"}, "query": {"start": "ACG", "target": "AG", "horizon": 0.5},
         "estimator": {"method": "tips", "particles": 100, "beta": 0.9}}
    code, out = run(tmp_path, "estimate", s, name="s.json")
    assert code == 0 and json.loads(out.read_text())["estimate"] > 0


def test_named_parameters_and_auto_stationary(tmp_path):
    cfg = {"model": {"kind": "finite", "generator": [[0, "a"], ["b", 0]],
                     "parameters": {"a": 1.0, "b": 3.0}, "stationary": "auto"},
           "query": {"start": 0, "target": 1, "horizon": 50.0}, "estimator": {"method": "exact"}}
    code, out = run(tmp_path, "estimate", cfg)
    assert code == 0 and math.isclose(json.loads(out.read_text())["estimate"], 0.25, rel_tol=1e-9)
    cfg["model"]["generator"][0][1] = "c"
    assert run(tmp_path, "estimate", cfg)[0] == 2


# sweep

SWEEP = deep(FLIP, query={"horizons": [0.5, 1.0]},
             estimator={"method": "tips", "particle_counts": [5, 25], "beta": 0.5},
             execution={"replicates": 2})


def test_sweep_csv(tmp_path):
    code, out = run(tmp_path, "sweep", SWEEP, name="s.csv")
    lines = out.read_text().splitlines()
    assert code == 0 and lines[0].startswith("# {")
    assert lines[1].startswith("method,horizon,particles,replicate,seed,estimate,abs_log_error,"
                               "weight_variance,ess,cpu_ms")
    assert len(lines) == 2 + 2 * 2 * 2 * 2


def test_sweep_single_cell(tmp_path):
    one = deep(FLIP, query={"horizons": [1.0]},
               estimator={"method": "tips", "methods": ["tips"], "particle_counts": [10]})
    code, out = run(tmp_path, "sweep", one, name="s.csv")
    assert code == 0 and len(out.read_text().splitlines()) == 3


def test_sweep_all_rows_failed(tmp_path):
    cfg = deep(SWEEP, estimator={"methods": ["tips"], "step_cap": 1})
    cfg["model"]["generator"] = [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
    cfg["query"]["target"] = 2
    code, out = run(tmp_path, "sweep", cfg, name="s.csv")
    assert code == 3 and "error" in out.read_text()


def test_sweep_rejects_unknown_method(tmp_path):
    assert run(tmp_path, "sweep", deep(SWEEP, estimator={"methods": ["mcmc"]}), name="s.csv")[0] == 2


# gimh

GIMH = {"model": {"kind": "finite", "generator": [[0, "rate"], ["rate", 0]],
                  "parameters": {"rate": 1.0}, "stationary": [0.5, 0.5]},
        "query": {"dataset": [{"start": 0, "end": 1, "horizon": 1.0},
                              {"start": 1, "end": 1, "horizon": 1.0}]},
        "estimator": {"particles": 8, "beta": 0.5},
        "gimh": {"iterations": 30, "parameters": {"rate": {"init": 1.0}}}}


def test_gimh_chain_and_diagnostics(tmp_path):
    code, out = run(tmp_path, "gimh", GIMH, name="chain.csv")
    lines = out.read_text().splitlines()
    assert code == 0 and lines[1] == "iter,accepted,log_z,rate" and len(lines) == 32
    diag = json.loads((tmp_path / "chain.diagnostics.json").read_text())
    assert set(diag["parameters"]["rate"]) >= {"ess", "prefix_quantiles"}
    assert 0 <= diag["acceptance_rate"] <= 1


def test_gimh_zero_iterations(tmp_path):
    code, out = run(tmp_path, "gimh", deep(GIMH, gimh={"iterations": 0}), name="chain.csv")
    lines = out.read_text().splitlines()
    assert code == 0 and len(lines) == 2 and lines[1] == "iter,accepted,log_z,rate"


def test_gimh_dataset_from_simulate_output(tmp_path):
    sim = deep(GIMH, simulate={"count": 5, "horizon": 1.0})
    code, data = run(tmp_path, "simulate", sim, name="data.json")
    assert code == 0
    code, _ = run(tmp_path, "gimh", deep(GIMH, query={"dataset": str(data)}), name="chain.csv")
    assert code == 0


def test_gimh_startup_failure(tmp_path):
    cfg = deep(GIMH, estimator={"method": "fs"}, gimh={"init_retries": 1})
    cfg["model"] = {"kind": "finite", "generator": [[0, "rate"], [0, 0]], "parameters": {"rate": 1.0}}
    cfg["query"]["dataset"] = [{"start": 1, "end": 0, "horizon": 1.0}]
    assert run(tmp_path, "gimh", cfg, name="chain.csv")[0] == 3


@pytest.mark.parametrize("patch", [
    {"query": {"dataset": []}},
    {"gimh": {"parameters": {}}},
    {"gimh": {"parameters": {"speed": {"init": 1.0}}}},
    {"gimh": {"iterations": -1}},
    {"query": {"dataset": [{"start": 0, "end": 1}]}},
])
def test_gimh_config_errors(tmp_path, patch):
    assert run(tmp_path, "gimh", deep(GIMH, **patch), name="chain.csv")[0] == 2


# smc

SMC = {"model": {"kind": "finite", "generator": [[0, 1, 0], [1, 0, 1], [0, 1, 0]],
                 "potential": "absolute"},
       "query": {"start": 0, "observations": [{"set": [1, 2], "horizon": 0.5},
                                              {"set": [0], "horizon": 1.0}]},
       "estimator": {"particles": 64, "beta": 0.5}}


def test_smc_result(tmp_path):
    code, out = run(tmp_path, "smc", SMC)
    res = json.loads(out.read_text())
    assert code == 0 and math.isfinite(res["log_marginal"]) and len(res["generations"]) == 2


def test_smc_empty_observations(tmp_path):
    assert run(tmp_path, "smc", deep(SMC, query={"observations": []}))[0] == 2


def test_smc_weight_collapse(tmp_path, capsys):
    # an absorbing state the second observation cannot leave
    cfg = deep(SMC, query={"observations": [{"set": [2], "horizon": 1.0}, {"set": [0], "horizon": 1.0}]})
    cfg["model"]["generator"] = [[0, 1, 0], [0, 0, 1], [0, 0, 0]]
    assert run(tmp_path, "smc", cfg)[0] == 3
    assert "runtime failure" in capsys.readouterr().err


# simulate

def test_simulate_zero(tmp_path):
    code, out = run(tmp_path, "simulate", deep(GIMH, simulate={"count": 0}))
    res = json.loads(out.read_text())
    assert code == 0 and res["records"] == [] and res["provenance"]["command"] == "simulate"


def test_simulate_needs_start_without_stationary(tmp_path):
    cfg = deep(FLIP, simulate={"count": 3})
    assert run(tmp_path, "simulate", cfg)[0] == 2
    cfg["simulate"]["start"] = 0
    assert run(tmp_path, "simulate", cfg)[0] == 0


def test_simulate_strings(tmp_path):
    cfg = {"model": {"kind": "string", "lambda_pt": 2.0, "mu_pt": 0.5, "lambda_ssm": 0.0, "mu_ssm": 0.0},
           "simulate": {"count": 20, "horizon": 0.3}}
    code, out = run(tmp_path, "simulate", cfg)
    recs = json.loads(out.read_text())["records"]
    assert code == 0 and len(recs) == 20 and all(set(r["end"]) <= set("ACGT") for r in recs)


# validate-potential

def test_validate_potential(tmp_path):
    rna = {"model": {"kind": "rna", "sequence": "GGGAAACCC"}, "query": {"target": "mfe"}}
    code, out = run(tmp_path, "validate-potential", rna)
    res = json.loads(out.read_text())
    assert code == 0 and res["ok"] and res["closed"]


# provenance replay

CASES = {
    "estimate": deep(FLIP, estimator={"method": "tips", "particles": 700, "beta": 0.5}),
    "sweep": SWEEP,
    "gimh": GIMH,
    "smc": SMC,
    "simulate": deep(GIMH, simulate={"count": 10}),
    "validate-potential": {"model": {"kind": "rna", "sequence": "GGGAAACCC"}, "query": {"target": "mfe"}},
}


@pytest.mark.parametrize("command", sorted(CASES))
def test_replay_from_provenance(tmp_path, command):
    first = tmp_path / "a.out"
    assert cli.main([command, write(tmp_path, CASES[command]), "--out", str(first), "--workers", "1"]) == 0
    second = tmp_path / "b.out"
    assert cli.main([command, str(first), "--out", str(second), "--workers", "2"]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_loading_provenance_reproduces_config(tmp_path):
    code, out = run(tmp_path, "estimate", FLIP)
    assert effective(load_config(str(out))) == effective(parse_config(FLIP))
