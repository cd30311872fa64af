import json
import os

import numpy as np
import pytest

from gradmaplab.cli import load_config, main, run
from gradmaplab.errors import SchemaError


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "schema_version": 1,
        "task": "validate",
        "scenario": {"name": "p1_toy"},
        "params": {"n_samples": 5},
        "seed": 3,
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=1))
    return str(path)


def test_load_config_defaults(tmp_path):
    cfg = load_config(write_config(tmp_path))
    assert cfg.task == "validate"
    assert cfg.scenario.name == "p1_toy"
    assert cfg.params["n_samples"] == 5
    assert cfg.params["tol_f"] == 1e-8
    assert cfg.seed == 3


def test_load_config_missing_key(tmp_path):
    path = write_config(tmp_path)
    raw = json.loads(open(path).read())
    del raw["seed"]
    open(path, "w").write(json.dumps(raw))
    with pytest.raises(SchemaError, match="seed"):
        load_config(path)


def test_load_config_unknown_task(tmp_path):
    with pytest.raises(SchemaError, match="task"):
        load_config(write_config(tmp_path, task="fly"))


def test_load_config_bad_param(tmp_path):
    with pytest.raises(SchemaError, match="params"):
        load_config(write_config(tmp_path, params={"n_samples": 5, "bogus": 1}))


def test_load_config_nonpositive_tolerance(tmp_path):
    with pytest.raises(SchemaError, match="tol_f"):
        load_config(write_config(tmp_path, params={"tol_f": 0.0}))


def test_cli_exit_code_schema_violation(tmp_path, capsys):
    path = write_config(tmp_path, task="fly")
    code = main(["validate", "--config", path])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_task_mismatch(tmp_path, capsys):
    path = write_config(tmp_path, task="flow",
                        params={"n_samples": 2})
    code = main(["validate", "--config", path])
    assert code == 2


def test_seed_and_out_override(tmp_path):
    cfg = load_config(write_config(tmp_path), seed_override=99,
                      out_override=str(tmp_path / "elsewhere"))
    assert cfg.seed == 99
    assert cfg.output_dir.endswith("elsewhere")


def test_threads_env_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("GRADMAP_THREADS", "1")
    cfg = load_config(write_config(tmp_path, params={"n_samples": 2, "threads": 8}))
    assert cfg.threads == 1


def test_b_matrix_roundtrip(tmp_path):
    from gradmaplab.grassmann import default_graph_parameter

    b = default_graph_parameter(4)
    raw = [[[float(c.real), float(c.imag)] for c in row] for row in b]
    cfg = load_config(write_config(
        tmp_path, task="validate",
        scenario={"name": "paper_graph_example", "b_matrix": raw},
        params={"n_samples": 2},
    ))
    assert np.allclose(cfg.scenario.b_matrix, b)


def test_validate_run_and_manifest(tmp_path):
    cfg = load_config(write_config(tmp_path, params={"n_samples": 6}))
    manifest = run(cfg)
    assert manifest.summary["max_symplectic_residual"] <= 1e-6
    assert manifest.summary["max_gradient_residual"] <= 1e-6
    out = cfg.output_dir
    assert os.path.exists(os.path.join(out, "validate_report.json"))
    mpath = os.path.join(out, "manifest.json")
    assert os.path.exists(mpath)
    data = json.loads(open(mpath).read())
    assert data["outputs"]["validate_report.json"]
    assert data["config"]["seed"] == 3
    assert not data["failures"]


def test_flow_run_outputs(tmp_path):
    cfg = load_config(write_config(
        tmp_path, task="flow", params={"n_samples": 5},
        output_dir=str(tmp_path / "flowout"),
    ))
    manifest = run(cfg)
    assert manifest.summary["n_converged"] == 5
    out = cfg.output_dir
    assert os.path.exists(os.path.join(out, "flow_trace.csv"))
    assert os.path.exists(os.path.join(out, "flow_trace.png"))
    header = open(os.path.join(out, "flow_trace.csv")).readline().strip()
    assert header == "t,f_p,residual"
    ts = [float(line.split(",")[0])
          for line in open(os.path.join(out, "flow_trace.csv")).readlines()[1:]]
    assert all(b > a for a, b in zip(ts, ts[1:]))


def test_determinism_byte_identical(tmp_path):
    cfg1 = load_config(write_config(tmp_path, params={"n_samples": 4},
                                    output_dir=str(tmp_path / "run1")))
    cfg2 = load_config(write_config(tmp_path, name="cfg2.json",
                                    params={"n_samples": 4},
                                    output_dir=str(tmp_path / "run2")))
    m1 = run(cfg1)
    m2 = run(cfg2)
    assert m1.outputs == m2.outputs


def test_determinism_independent_of_threads(tmp_path, monkeypatch):
    cfg1 = load_config(write_config(tmp_path, params={"n_samples": 4, "threads": 1},
                                    output_dir=str(tmp_path / "t1")))
    cfg2 = load_config(write_config(tmp_path, name="cfg2.json",
                                    params={"n_samples": 4, "threads": 2},
                                    output_dir=str(tmp_path / "t2")))
    m1 = run(cfg1)
    m2 = run(cfg2)
    assert m1.outputs == m2.outputs


def test_polytope_run_emits_figures(tmp_path):
    cfg = load_config(write_config(
        tmp_path, task="polytope",
        scenario={"name": "real_grassmannian", "n": 4, "k": 2},
        params={"n_samples": 30, "n_pairs": 10},
        output_dir=str(tmp_path / "poly"),
    ))
    manifest = run(cfg)
    out = cfg.output_dir
    for fname in ("chamber_report.json", "chamber_cloud.csv", "deficit_curve.csv",
                  "chamber_cloud.png", "deficit_curve.png", "manifest.json"):
        assert os.path.exists(os.path.join(out, fname)), fname
    assert manifest.summary["hull_diameter"] <= 1e-8


def test_checked_in_configs_parse():
    import glob

    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    paths = sorted(glob.glob(os.path.join(here, "configs", "*.json")))
    assert len(paths) >= 10
    for p in paths:
        cfg = load_config(p)
        assert cfg.task in ("validate", "flow", "weight", "classify",
                            "strata", "polytope", "density")


def test_exit_code_3_on_sample_failures(tmp_path, monkeypatch, capsys):
    import gradmaplab.cli as cli

    def failing_runner(cfg, outdir, failures):
        failures.extend([f"sample {i}: NumericalError: synthetic" for i in range(3)])
        from gradmaplab.reporting import write_json
        path = os.path.join(outdir, "validate_report.json")
        write_json(path, {"n_checked": 0})
        return {"n_checked": 0}, {"validate_report.json": path}

    monkeypatch.setitem(cli._RUNNERS, "validate", failing_runner)
    path = write_config(tmp_path, params={"n_samples": 5})
    code = cli.main(["validate", "--config", path])
    assert code == 3
    assert "failure: sample 0" in capsys.readouterr().err
