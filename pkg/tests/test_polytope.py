import numpy as np
import pytest

from gradmaplab import InvalidInputError
from gradmaplab.grassmann import (
    act,
    haar_point,
    make_point,
    paper_graph_example,
    p1_toy,
    real_grassmannian,
    sample_scenario,
)
from gradmaplab.groups import sl_real_form
from gradmaplab.moment_maps import f_p, mu_p
from gradmaplab.polytope import (
    build_hull,
    chamber_image,
    convexity_audit,
    density_connectivity_scan,
    shifted_distance,
    shifted_distance_bruteforce,
)
from gradmaplab.seeding import rng_for


# -- chamber images ------------------------------------------------------------

def test_chamber_image_real_grassmannian_constant():
    s = real_grassmannian(4, 2)
    for x in sample_scenario(s, 5, seed=0):
        assert np.allclose(chamber_image(x, s.group), [0.5, 0.5, -0.5, -0.5], atol=1e-10)


def test_chamber_image_zero_level():
    spec = sl_real_form(2)
    x = make_point(np.array([1.0, 1j]))
    assert np.allclose(chamber_image(x, spec), 0.0, atol=1e-12)


def test_chamber_image_k_invariant():
    spec = sl_real_form(4)
    rng = rng_for(1)
    for i in range(20):
        x = haar_point(4, 2, rng)
        k = spec.haar_k(rng)
        a = chamber_image(x, spec)
        b = chamber_image(act(spec.embed_group(k.matrix), x), spec)
        assert np.allclose(a, b, atol=1e-9)


# -- hulls ----------------------------------------------------------------------

def test_hull_single_point():
    h = build_hull([np.array([1.0, 2.0])])
    assert h.hull_dim == 0
    assert h.contains(np.array([1.0, 2.0]))
    assert not h.contains(np.array([1.1, 2.0]))


def test_hull_square_plus_center():
    pts = [np.array(p, dtype=float) for p in
           [(0, 0), (1, 0), (0, 1), (1, 1), (0.5, 0.5)]]
    h = build_hull(pts)
    assert h.hull_dim == 2
    assert len(h.vertices) == 4
    assert h.contains(np.array([0.5, 0.25]))
    assert not h.contains(np.array([1.5, 0.5]))


def test_hull_permutation_invariant():
    rng = rng_for(2)
    pts = [rng.standard_normal(3) for _ in range(40)]
    h1 = build_hull(pts)
    h2 = build_hull(pts[::-1])
    assert np.allclose(h1.vertices, h2.vertices)
    assert h1.hull_dim == h2.hull_dim


def test_hull_simplex_oracle():
    # rejection-sampled points in a simplex: vertices approach the corners,
    # all samples inside
    rng = rng_for(3)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    pts = []
    while len(pts) < 1000:
        p = rng.uniform(0, 1, size=2)
        if p.sum() <= 1.0:
            pts.append(p)
    pts.extend(corners)
    h = build_hull(pts)
    assert h.hull_dim == 2
    for p in pts:
        assert h.contains(np.asarray(p), tol=1e-9)
    for v in h.vertices:
        assert min(np.linalg.norm(v - c) for c in corners) < 0.2


def test_hull_degenerate_line():
    pts = [np.array([t, 2 * t, 0.0]) for t in np.linspace(-1, 1, 9)]
    h = build_hull(pts)
    assert h.hull_dim == 1
    assert len(h.vertices) == 2
    assert h.contains(np.array([0.5, 1.0, 0.0]))
    assert not h.contains(np.array([0.5, 1.0, 0.3]))


# -- audits ----------------------------------------------------------------------

def test_audit_real_grassmannian_single_point():
    s = real_grassmannian(4, 2)
    rep = convexity_audit(s, n_samples=50, n_pairs=40, seed=4)
    assert rep.hull_dim == 0
    assert rep.hull_diameter <= 1e-8
    assert rep.max_midpoint_deficit <= 1e-8


def test_audit_graph_small():
    s = paper_graph_example()
    rep = convexity_audit(s, n_samples=300, n_pairs=60, seed=5)
    assert rep.hull_dim >= 2
    assert rep.hull_diameter > 0.1
    assert rep.max_midpoint_deficit < rep.hull_diameter
    assert len(rep.deficits_by_size) == 2


def test_audit_rejects_bad_chamber_rows():
    s = real_grassmannian(4, 2)
    bad = np.array([[0.1, 0.5, -0.3, -0.3]])
    with pytest.raises(InvalidInputError):
        convexity_audit(s, n_samples=1, images=bad)


# -- shifted distance -------------------------------------------------------------

def test_shifted_distance_own_image():
    spec = sl_real_form(4)
    rng = rng_for(6)
    x = haar_point(4, 2, rng)
    b = chamber_image(x, spec)
    assert shifted_distance(x, b, spec) < 1e-12


def test_shifted_distance_zero_beta():
    spec = sl_real_form(4)
    rng = rng_for(7)
    x = haar_point(4, 2, rng)
    d = shifted_distance(x, np.zeros(4), spec)
    assert abs(d - np.sqrt(2 * f_p(x, spec))) < 1e-12


def test_shifted_distance_requires_sorted():
    spec = sl_real_form(4)
    rng = rng_for(8)
    x = haar_point(4, 2, rng)
    with pytest.raises(InvalidInputError):
        shifted_distance(x, np.array([-0.5, 0.5, 0.0, 0.0]), spec)


def test_shifted_distance_triangle_bound():
    spec = sl_real_form(4)
    rng = rng_for(9)
    for i in range(20):
        x = haar_point(4, 2, rng)
        b = np.sort(rng.standard_normal(4))[::-1]
        b -= b.mean()
        d = shifted_distance(x, b, spec)
        assert d <= np.linalg.norm(mu_p(x, spec).entries) + np.linalg.norm(b) + 1e-12


def test_shifted_distance_bruteforce_oracle():
    spec = sl_real_form(4)
    rng = rng_for(10)
    for i in range(6):
        x = haar_point(4, 2, rng)
        b = np.sort(rng.standard_normal(4))[::-1]
        b -= b.mean()
        fast = shifted_distance(x, b, spec)
        slow = shifted_distance_bruteforce(x, b, spec, n_starts=2000, seed=i)
        assert slow >= fast - 1e-9
        assert abs(slow - fast) < 1e-3


# -- density ------------------------------------------------------------------------

def test_density_scan_p1():
    s = p1_toy()
    rep = density_connectivity_scan(s, n_samples=150, k_neighbors=10, seed=11, pilot=10)
    assert rep.semistable_fraction >= 0.99
    assert rep.knn_graph_connected
    assert rep.largest_component_fraction == 1.0
    # the full-group hypothesis genuinely fails on a single Grassmannian
    # with the traceless normalization: the pilot reports it
    assert rep.pilot_full_group_fraction == 0.0
    assert rep.hypothesis_certified is False
