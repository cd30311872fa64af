import os

import numpy as np

from gradmaplab.flows import negative_flow
from gradmaplab.grassmann import make_point, real_grassmannian
from gradmaplab.groups import sl_real_form
from gradmaplab.polytope import convexity_audit, density_connectivity_scan
from gradmaplab.reporting import (
    emit_plotdata,
    render_chamber_figure,
    render_deficit_figure,
    render_flow_figure,
    sha256_of,
    write_csv,
)


def test_write_csv_deterministic_formatting(tmp_path):
    path = str(tmp_path / "x.csv")
    write_csv(path, ["a", "b"], [(1, 0.5), (2, 1.0 / 3.0)])
    text = open(path).read()
    assert text.splitlines()[0] == "a,b"
    assert "3.33333333333333315e-01" in text
    h1 = sha256_of(path)
    write_csv(path, ["a", "b"], [(1, 0.5), (2, 1.0 / 3.0)])
    assert sha256_of(path) == h1


def test_emit_plotdata_flow(tmp_path):
    spec = sl_real_form(2)
    res = negative_flow(make_point(np.array([1.0, 0.4 + 0.2j])), spec, tol=1e-6)
    paths = emit_plotdata(res, str(tmp_path))
    assert paths and paths[0].endswith("flow_trace.csv")
    lines = open(paths[0]).read().splitlines()
    assert lines[0] == "t,f_p,residual"
    ts = [float(l.split(",")[0]) for l in lines[1:]]
    assert all(b > a for a, b in zip(ts, ts[1:]))


def test_emit_plotdata_chamber_and_density(tmp_path):
    s = real_grassmannian(4, 2)
    rep = convexity_audit(s, n_samples=20, n_pairs=10, seed=1)
    paths = emit_plotdata(rep, str(tmp_path / "c"))
    names = {os.path.basename(p) for p in paths}
    assert names == {"chamber_cloud.csv", "deficit_curve.csv"}
    scatter = open(os.path.join(tmp_path, "c", "chamber_cloud.csv")).read().splitlines()
    assert len(scatter) == 21  # header + one row per sample
    curve = open(os.path.join(tmp_path, "c", "deficit_curve.csv")).read().splitlines()
    assert len(curve) == 3  # header + one row per sample-size level

    drep = density_connectivity_scan(s, 10, k_neighbors=3, seed=2, pilot=2)
    dpaths = emit_plotdata(drep, str(tmp_path / "d"))
    assert os.path.basename(dpaths[0]) == "density_report.csv"


def test_figures_render(tmp_path):
    spec = sl_real_form(2)
    res = negative_flow(make_point(np.array([1.0, 0.3 + 0.5j])), spec, tol=1e-6)
    p1 = render_flow_figure(str(tmp_path / "flow.png"), [res.f_history])
    s = real_grassmannian(4, 2)
    rep = convexity_audit(s, n_samples=15, n_pairs=5, seed=3)
    p2 = render_chamber_figure(str(tmp_path / "cloud.png"), rep.points, rep.hull_vertices)
    p3 = render_deficit_figure(str(tmp_path / "deficit.png"), rep.deficits_by_size)
    for p in (p1, p2, p3):
        assert os.path.getsize(p) > 1000
