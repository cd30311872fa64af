"""Batch experiment runner.

One subcommand per task (validate, flow, weight, classify, strata,
polytope, density), driven by a JSON config with an explicit schema
version.  Outputs are a pure function of (config, seed, artifact
version): every CSV/JSON data file is hashed into the run manifest, and
re-running the same config reproduces the hashes byte for byte.

Exit codes: 0 success, 2 config schema violation, 3 when at least 1% of
samples failed numerically.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .errors import SchemaError
from .grassmann import Scenario, sample_scenario, scenario_by_name
from .seeding import rng_for

TASKS = ("validate", "flow", "weight", "classify", "strata", "polytope", "density")

_SCHEMA = {
    "schema_version": (int,),
    "task": (str,),
    "scenario": (dict,),
    "seed": (int,),
    "output_dir": (str,),
}

_PARAM_TYPES = {
    "n_samples": int,
    "n_directions": int,
    "n_pairs": int,
    "k_neighbors": int,
    "trials": int,
    "threads": int,
    "pilot": int,
    "tol_f": float,
    "tol_lambda": float,
    "flow_tol": float,
    "t_max": float,
    "weight_tol": float,
    "merge_radius": float,
}

_DEFAULT_PARAMS = {
    "n_samples": 100,
    "n_directions": 16,
    "n_pairs": 200,
    "k_neighbors": 10,
    "trials": 50,
    "pilot": 50,
    "tol_f": 1e-8,
    "tol_lambda": 1e-6,
    "flow_tol": 1e-6,
    "t_max": 1e4,
    "weight_tol": 1e-8,
    "merge_radius": 1e-4,
}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    scenario: Scenario
    seed: int
    output_dir: str
    params: dict
    threads: int
    schema_version: int = 1

    @property
    def scenario_name(self) -> str:
        return self.scenario.name


@dataclass
class RunManifest:
    config_echo: dict
    artifact_version: str
    started_at: str
    finished_at: str = ""
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)  # path -> sha256

    def to_dict(self) -> dict:
        return {
            "config": self.config_echo,
            "artifact_version": self.artifact_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "summary": self.summary,
            "failures": self.failures,
            "outputs": self.outputs,
        }


def _line_of_key(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return i
    return 0


def _complex_matrix(raw, keypath: str, text: str) -> np.ndarray:
    try:
        arr = np.array([[complex(c[0], c[1]) for c in row] for row in raw])
    except (TypeError, IndexError) as exc:
        raise SchemaError(
            f"{keypath} (line {_line_of_key(text, keypath.split('.')[-1])}): "
            f"expected nested [re, im] pairs: {exc}"
        ) from exc
    return arr


def load_config(path: str, seed_override: Optional[int] = None,
                out_override: Optional[str] = None) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc

    def fail(key, msg):
        raise SchemaError(f"{path}:{_line_of_key(text, key)}: {key}: {msg}")

    for key, types in _SCHEMA.items():
        if key not in raw:
            fail(key, "missing required key")
        if not isinstance(raw[key], types):
            fail(key, f"expected {types[0].__name__}, got {type(raw[key]).__name__}")
    if raw["schema_version"] != 1:
        fail("schema_version", f"unsupported version {raw['schema_version']}")
    if raw["task"] not in TASKS:
        fail("task", f"unknown task {raw['task']!r}; expected one of {TASKS}")

    sc = raw["scenario"]
    if "name" not in sc:
        fail("scenario", "missing scenario.name")
    kwargs = {}
    if "n" in sc:
        kwargs["n"] = int(sc["n"])
    if "k" in sc:
        kwargs["k"] = int(sc["k"])
    if sc.get("b_matrix") is not None:
        kwargs["b_matrix"] = _complex_matrix(sc["b_matrix"], "scenario.b_matrix", text)
    try:
        scenario = scenario_by_name(sc["name"], **kwargs)
    except Exception as exc:
        fail("scenario", str(exc))

    params = dict(_DEFAULT_PARAMS)
    for key, val in raw.get("params", {}).items():
        if key not in _PARAM_TYPES:
            fail("params", f"unknown parameter {key!r}")
        params[key] = _PARAM_TYPES[key](val)
    for key in ("tol_f", "tol_lambda", "flow_tol", "weight_tol", "merge_radius"):
        if params[key] <= 0:
            fail("params", f"{key} must be positive")

    threads = int(params.pop("threads", 0)) or (os.cpu_count() or 1)
    env_cap = os.environ.get("GRADMAP_THREADS")
    if env_cap:
        threads = max(1, min(threads, int(env_cap)))

    seed = seed_override if seed_override is not None else raw["seed"]
    out = out_override if out_override is not None else raw["output_dir"]
    return ExperimentConfig(
        task=raw["task"],
        scenario=scenario,
        seed=int(seed),
        output_dir=out,
        params=params,
        threads=threads,
        schema_version=1,
    )


def _map_samples(fn: Callable[[int], dict], count: int, threads: int,
                 failures: list) -> list[Optional[dict]]:
    """Apply fn to sample indices; per-index seeding keeps results
    independent of the degree of parallelism."""
    results: list[Optional[dict]] = [None] * count

    def safe(i: int) -> tuple[int, Optional[dict], Optional[str]]:
        try:
            return i, fn(i), None
        except Exception as exc:
            return i, None, f"sample {i}: {type(exc).__name__}: {exc}"

    if threads <= 1 or count <= 1:
        iterator = map(safe, range(count))
    else:
        pool = concurrent.futures.ThreadPoolExecutor(max_workers=threads)
        iterator = pool.map(safe, range(count))
    for i, value, err in iterator:
        if err is not None:
            failures.append(err)
        else:
            results[i] = value
    if threads > 1 and count > 1:
        pool.shutdown()
    return results


# -- task runners ---------------------------------------------------------------


def _task_validate(cfg: ExperimentConfig, outdir: str, failures: list) -> tuple[dict, dict]:
    from .grassmann import haar_tangent, sample_ambient
    from .groups import LieVector
    from .moment_maps import equivariance_residual, identity_check
    from .reporting import write_json

    count = cfg.params["n_samples"]
    xs = sample_ambient(cfg.scenario, count, cfg.seed)
    spec = cfg.scenario.group

    def one(i: int) -> dict:
        rng = rng_for(cfg.seed, i, 0x7A)
        x = xs[i]
        n = spec.n
        z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        m = 0.5 * (z - z.conj().T)
        m -= (np.trace(m) / n) * np.eye(n)
        xi = LieVector(m, "u")
        v = haar_tangent(x, rng)
        res = identity_check(x, xi, v, spec)
        k = spec.haar_k(rng)
        res["equivariance"] = equivariance_residual(x, k, spec)
        return res

    rows = _map_samples(one, count, cfg.threads, failures)
    ok = [r for r in rows if r is not None]
    summary = {
        "max_symplectic_residual": max(r["symplectic"] for r in ok),
        "max_gradient_residual": max(r["gradient"] for r in ok),
        "max_equivariance_residual": max(r["equivariance"] for r in ok),
        "n_checked": len(ok),
    }
    path = os.path.join(outdir, "validate_report.json")
    write_json(path, summary)
    return summary, {"validate_report.json": path}


def _task_flow(cfg: ExperimentConfig, outdir: str, failures: list) -> tuple[dict, dict]:
    from .flows import group_tracking, negative_flow
    from .reporting import emit_flow_trace, render_flow_figure, write_json

    count = cfg.params["n_samples"]
    xs = sample_scenario(cfg.scenario, count, cfg.seed)
    spec = cfg.scenario.group

    def one(i: int) -> dict:
        res = negative_flow(xs[i], spec, tol=cfg.params["flow_tol"],
                            t_max=cfg.params["t_max"])
        cert = group_tracking(xs[i], res, spec)
        fs = [f for _, f in res.f_history]
        monotone = all(b <= a + 1e-9 for a, b in zip(fs, fs[1:]))
        return {
            "status": res.status,
            "residual": res.residual,
            "f_limit": res.f_limit,
            "t_end": res.t_end,
            "rate": res.empirical_rate,
            "certificate": cert["certificate"],
            "monotone": monotone,
            "history": res.f_history,
        }

    rows = _map_samples(one, count, cfg.threads, failures)
    ok = [r for r in rows if r is not None]
    converged = sum(1 for r in ok if r["status"] == "converged")
    summary = {
        "n_flows": len(ok),
        "n_converged": converged,
        "max_residual": max(r["residual"] for r in ok),
        "max_certificate": max(r["certificate"] for r in ok),
        "all_monotone": all(r["monotone"] for r in ok),
        "median_rate": float(np.median([r["rate"] for r in ok])),
    }
    outputs = {}
    path = os.path.join(outdir, "flow_summary.json")
    write_json(path, summary)
    outputs["flow_summary.json"] = path
    trace_path = os.path.join(outdir, "flow_trace.csv")
    emit_flow_trace(trace_path, ok[0]["history"])
    outputs["flow_trace.csv"] = trace_path
    fig_path = os.path.join(outdir, "flow_trace.png")
    render_flow_figure(fig_path, [r["history"] for r in ok[:20]])
    outputs["flow_trace.png"] = fig_path
    return summary, outputs


def _task_weight(cfg: ExperimentConfig, outdir: str, failures: list) -> tuple[dict, dict]:
    from .flows import maximal_weight
    from .reporting import emit_weight_table, write_json

    count = cfg.params["n_samples"]
    ndir = cfg.params["n_directions"]
    xs = sample_scenario(cfg.scenario, count, cfg.seed)
    spec = cfg.scenario.group

    def one(i: int) -> dict:
        rng = rng_for(cfg.seed, i, 0xE0)
        entries = []
        for d in range(ndir):
            beta = spec.random_p(rng)
            ws = maximal_weight(xs[i], beta, spec, tol=cfg.params["weight_tol"],
                                with_quadrature=True)
            entries.append({
                "sample_id": i,
                "direction_id": d,
                "lambda_0": ws.lambda_0,
                "lambda_limit": ws.lambda_limit,
                "energy": ws.energy,
                "t_reached": ws.t_reached,
                "converged": ws.converged,
                "energy_gap": abs(ws.energy - ws.quadrature_energy),
            })
        return {"entries": entries}

    rows = _map_samples(one, count, cfg.threads, failures)
    entries = [e for r in rows if r is not None for e in r["entries"]]
    conv = [e for e in entries if e["converged"]]
    summary = {
        "n_weights": len(entries),
        "n_converged": len(conv),
        "max_energy_identity_gap": max(e["energy_gap"] for e in conv),
        "min_lambda": min(e["lambda_limit"] for e in entries),
    }
    outputs = {}
    path = os.path.join(outdir, "weights.csv")
    emit_weight_table(path, entries)
    outputs["weights.csv"] = path
    spath = os.path.join(outdir, "weight_summary.json")
    write_json(spath, summary)
    outputs["weight_summary.json"] = spath
    return summary, outputs


def _task_classify(cfg: ExperimentConfig, outdir: str, failures: list) -> tuple[dict, dict]:
    from .reporting import emit_verdicts, write_json
    from .stability import classify

    count = cfg.params["n_samples"]
    xs = sample_scenario(cfg.scenario, count, cfg.seed)
    spec = cfg.scenario.group

    def one(i: int) -> dict:
        v = classify(xs[i], spec, tol_f=cfg.params["tol_f"],
                     tol_lambda=cfg.params["tol_lambda"],
                     n_directions=cfg.params["n_directions"],
                     seed=cfg.seed + i, point_id=i)
        return {"verdict": v}

    rows = _map_samples(one, count, cfg.threads, failures)
    verdicts = [r["verdict"] for r in rows if r is not None]
    counts = {}
    for v in verdicts:
        counts[v.verdict] = counts.get(v.verdict, 0) + 1
    summary = {
        "counts": counts,
        "semistable_fraction": sum(1 for v in verdicts if v.is_semistable()) / max(1, len(verdicts)),
        "n_undetermined": counts.get("undetermined", 0),
    }
    outputs = {}
    vpath = os.path.join(outdir, "verdicts.csv")
    emit_verdicts(vpath, verdicts)
    outputs["verdicts.csv"] = vpath
    jpath = os.path.join(outdir, "verdicts.json")
    write_json(jpath, {
        "records": [
            {
                "sample_id": v.point_id,
                "seed": cfg.seed + v.point_id,
                "verdict": v.verdict,
                "f_p_limit": v.f_p_limit,
                "min_lambda_sampled": v.min_lambda_sampled,
                "stabilizer_p_dim": v.stabilizer_p_dim,
            }
            for v in verdicts
        ],
        "summary": summary,
    })
    outputs["verdicts.json"] = jpath
    return summary, outputs


def _task_strata(cfg: ExperimentConfig, outdir: str, failures: list) -> tuple[dict, dict]:
    from .reporting import emit_chamber_scatter, render_chamber_figure, write_json
    from .stability import strata_survey

    count = cfg.params["n_samples"]
    census = strata_survey(cfg.scenario, count, cfg.seed,
                           merge_radius=cfg.params["merge_radius"])
    summary = {
        "n_strata": len(census.labels),
        "minimal_fraction": census.minimal_fraction,
        "unlabeled": census.unlabeled,
        "labels": [
            {"beta_plus": e.beta_plus.tolist(), "norm": e.norm, "count": e.member_count}
            for e in census.labels
        ],
        "order_consistency": census.order_consistency,
    }
    outputs = {}
    jpath = os.path.join(outdir, "strata_census.json")
    write_json(jpath, summary)
    outputs["strata_census.json"] = jpath
    rows = [(img, lab) for img, lab in zip(census.sample_images, census.sample_labels)
            if img is not None]
    images = np.array([r[0] for r in rows])
    labels = [f"stratum_{r[1]}" for r in rows]
    cpath = os.path.join(outdir, "chamber_scatter.csv")
    emit_chamber_scatter(cpath, images, labels=labels)
    outputs["chamber_scatter.csv"] = cpath
    fpath = os.path.join(outdir, "chamber_scatter.png")
    render_chamber_figure(fpath, images)
    outputs["chamber_scatter.png"] = fpath
    return summary, outputs


def _task_polytope(cfg: ExperimentConfig, outdir: str, failures: list) -> tuple[dict, dict]:
    from .polytope import convexity_audit
    from .reporting import (
        emit_chamber_scatter,
        emit_deficit_curve,
        render_chamber_figure,
        render_deficit_figure,
        write_json,
    )

    rep = convexity_audit(cfg.scenario, cfg.params["n_samples"],
                          n_pairs=cfg.params["n_pairs"], seed=cfg.seed)
    summary = rep.to_dict()
    outputs = {}
    jpath = os.path.join(outdir, "chamber_report.json")
    write_json(jpath, summary)
    outputs["chamber_report.json"] = jpath
    cpath = os.path.join(outdir, "chamber_cloud.csv")
    emit_chamber_scatter(cpath, rep.points)
    outputs["chamber_cloud.csv"] = cpath
    dpath = os.path.join(outdir, "deficit_curve.csv")
    emit_deficit_curve(dpath, rep.deficits_by_size)
    outputs["deficit_curve.csv"] = dpath
    fpath = os.path.join(outdir, "chamber_cloud.png")
    render_chamber_figure(fpath, rep.points, rep.hull_vertices)
    outputs["chamber_cloud.png"] = fpath
    gpath = os.path.join(outdir, "deficit_curve.png")
    render_deficit_figure(gpath, rep.deficits_by_size)
    outputs["deficit_curve.png"] = gpath
    return summary, outputs


def _task_density(cfg: ExperimentConfig, outdir: str, failures: list) -> tuple[dict, dict]:
    from .polytope import density_connectivity_scan
    from .reporting import render_density_figure, write_json

    rep = density_connectivity_scan(
        cfg.scenario, cfg.params["n_samples"],
        k_neighbors=cfg.params["k_neighbors"], seed=cfg.seed,
        n_directions=cfg.params["n_directions"], pilot=cfg.params["pilot"],
    )
    summary = rep.to_dict()
    outputs = {}
    jpath = os.path.join(outdir, "density_report.json")
    write_json(jpath, summary)
    outputs["density_report.json"] = jpath
    fpath = os.path.join(outdir, "density_report.png")
    render_density_figure(fpath, rep)
    outputs["density_report.png"] = fpath
    return summary, outputs


_RUNNERS = {
    "validate": _task_validate,
    "flow": _task_flow,
    "weight": _task_weight,
    "classify": _task_classify,
    "strata": _task_strata,
    "polytope": _task_polytope,
    "density": _task_density,
}


def _config_echo(cfg: ExperimentConfig) -> dict:
    sc = {"name": cfg.scenario.name, "n": cfg.scenario.n, "k": cfg.scenario.k}
    if cfg.scenario.b_matrix is not None:
        b = cfg.scenario.b_matrix
        sc["b_matrix"] = [[[float(c.real), float(c.imag)] for c in row] for row in b]
    return {
        "schema_version": cfg.schema_version,
        "task": cfg.task,
        "scenario": sc,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "params": cfg.params,
        "threads": cfg.threads,
    }


def run(cfg: ExperimentConfig) -> RunManifest:
    """Execute one task over one scenario and persist results plus the
    manifest.  Numeric outputs are a pure function of (config, seed,
    artifact version); the manifest records a content hash per file."""
    from .reporting import sha256_of, write_json

    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    manifest = RunManifest(
        config_echo=_config_echo(cfg),
        artifact_version=__version__,
        started_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )
    failures: list = []
    summary, outputs = _RUNNERS[cfg.task](cfg, outdir, failures)
    manifest.summary = summary
    manifest.failures = failures
    manifest.outputs = {name: sha256_of(path) for name, path in sorted(outputs.items())}
    manifest.finished_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    write_json(os.path.join(outdir, "manifest.json"), manifest.to_dict())
    return manifest


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gradmaplab",
        description="gradient-map laboratory: flows, weights, stability, "
                    "strata and chamber convexity on Grassmannian scenarios",
    )
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} task from a config file")
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg.task != args.task:
        print(f"config error: config task {cfg.task!r} does not match "
              f"subcommand {args.task!r}", file=sys.stderr)
        return 2

    manifest = run(cfg)
    n_failed = len(manifest.failures)
    n_total = max(1, cfg.params.get("n_samples", 1))
    for failure in manifest.failures:
        print(f"failure: {failure}", file=sys.stderr)
    print(json.dumps(manifest.summary, indent=2, sort_keys=True, default=str))
    if n_failed / n_total >= 0.01:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
