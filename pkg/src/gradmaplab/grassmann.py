"""Grassmannian geometry: points, tangent vectors, metric / symplectic
form / complex structure, group action, induced vector fields, signed
products, and the scenario catalog.

Conventions (fixed once, validated by the convention oracle in
``moment_maps.identity_check``):

* a point of Gr(k, C^n) is an orthonormal frame F with cached projection
  P = F F*; tangent vectors are Hermitian matrices that are purely
  off-diagonal with respect to P;
* metric  (v, w) = Re trace(v w);
* complex structure  J v = i (v P - P v); under the identification of the
  tangent space with Hom(plane, complement) this is honest multiplication
  by i;
* symplectic form  omega(v, w) = (J v, w), so that (v, w) = omega(v, J w).

A product carries (omega, -omega) with (J, -J) on the factors, which
keeps the product metric positive.  The holomorphic one-parameter moves
on the second factor then go through the conjugated matrix, which agrees
with the plain diagonal action for every real group element -- in
particular on all of SL(n, R), its maximal compact and its torus.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .errors import InvalidFrameError, InvalidInputError
from .groups import CompatibleGroupSpec, GroupElement, LieVector, sl_real_form
from .seeding import rng_for

SCENARIO_NAMES = ("p1_toy", "real_grassmannian", "paper_graph_example")


def _orthonormalize(frame: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(frame)
    d = np.diagonal(r)
    phase = np.where(np.abs(d) > 0, d / np.abs(np.where(np.abs(d) > 0, d, 1.0)), 1.0)
    return q * np.conj(phase)


@dataclass(frozen=True)
class GrassPoint:
    """A point of Gr(k, C^n) stored as an orthonormal frame."""

    frame: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frame, dtype=complex)
        object.__setattr__(self, "frame", f)
        if f.ndim != 2 or f.shape[0] < f.shape[1]:
            raise InvalidFrameError(f"frame must be n x k with n >= k, got {f.shape}")
        gram = f.conj().T @ f
        if np.linalg.norm(gram - np.eye(f.shape[1])) > 1e-12 * max(1.0, np.linalg.norm(gram)):
            raise InvalidFrameError("frame columns are not orthonormal; use make_point")

    @property
    def n(self) -> int:
        return self.frame.shape[0]

    @property
    def k(self) -> int:
        return self.frame.shape[1]

    @cached_property
    def projection(self) -> np.ndarray:
        return self.frame @ self.frame.conj().T


@dataclass(frozen=True)
class ProductPoint:
    """A point of Gr(k, C^n) x Gr(k, C^n) with the sign -1 on the second
    symplectic factor."""

    first: GrassPoint
    second: GrassPoint
    sign_second: int = -1

    def __post_init__(self):
        if self.sign_second != -1:
            raise InvalidInputError("the second factor carries the fixed sign -1")
        if self.first.n != self.second.n:
            raise InvalidInputError("product factors must share the ambient dimension")

    @property
    def n(self) -> int:
        return self.first.n

    @property
    def factors(self) -> tuple[GrassPoint, GrassPoint]:
        return (self.first, self.second)


Point = Union[GrassPoint, ProductPoint]


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector at a GrassPoint: Hermitian and off-diagonal w.r.t. P."""

    base: GrassPoint
    value: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.value, dtype=complex)
        object.__setattr__(self, "value", v)
        p = self.base.projection
        scale = max(np.linalg.norm(v), 1.0)
        if np.linalg.norm(v - v.conj().T) > 1e-10 * scale:
            raise InvalidInputError("tangent value must be Hermitian")
        q = np.eye(self.base.n) - p
        if np.linalg.norm(p @ v @ p) > 1e-10 * scale or np.linalg.norm(q @ v @ q) > 1e-10 * scale:
            raise InvalidInputError("tangent value must be off-diagonal w.r.t. the projection")


@dataclass(frozen=True)
class ProductTangent:
    first: TangentVector
    second: TangentVector


Tangent = Union[TangentVector, ProductTangent]


def make_point(raw_frame: np.ndarray) -> GrassPoint:
    """Orthonormalize a full-column-rank frame, preserving its span."""
    f = np.asarray(raw_frame, dtype=complex)
    if f.ndim == 1:
        f = f[:, None]
    sv = np.linalg.svd(f, compute_uv=False)
    if f.shape[1] == 0 or sv[-1] <= 1e-10:
        raise InvalidFrameError(
            f"rank-deficient frame: smallest singular value {sv[-1] if len(sv) else 0.0:.3g}"
        )
    return GrassPoint(_orthonormalize(f))


def point_distance(x: Point, y: Point) -> float:
    """Chordal distance ||P - Q||_F, summed in quadrature over factors."""
    if isinstance(x, ProductPoint) and isinstance(y, ProductPoint):
        return float(np.sqrt(
            np.linalg.norm(x.first.projection - y.first.projection) ** 2
            + np.linalg.norm(x.second.projection - y.second.projection) ** 2
        ))
    if isinstance(x, GrassPoint) and isinstance(y, GrassPoint):
        return float(np.linalg.norm(x.projection - y.projection))
    raise InvalidInputError("cannot compare a product point with a plain point")


# -- group action ------------------------------------------------------------


def act(g: Union[GroupElement, np.ndarray], x: Point) -> Point:
    """Move a point by an ambient group element.

    On a single Grassmannian the new plane is g (plane of x); the frame
    is re-orthonormalized by QR so non-unitary g and long one-parameter
    words stay numerically stable.  On a product, the second factor moves
    by the conjugated matrix (the holomorphic action for the (-omega, -J)
    factor); for real g both factors move diagonally.
    """
    m = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=complex)
    if isinstance(x, ProductPoint):
        return ProductPoint(
            make_point(m @ x.first.frame),
            make_point(np.conj(m) @ x.second.frame),
        )
    return make_point(m @ x.frame)


def act_diagonal(g: Union[GroupElement, np.ndarray], x: ProductPoint) -> ProductPoint:
    """Plain diagonal action g (x1, x2) = (g x1, g x2) on a product, used
    for set-level invariance checks."""
    m = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=complex)
    return ProductPoint(make_point(m @ x.first.frame), make_point(m @ x.second.frame))


def _field_single(eta_skew: Optional[np.ndarray], eta_herm: Optional[np.ndarray],
                  x: GrassPoint) -> TangentVector:
    p = x.projection
    n = x.n
    v = np.zeros((n, n), dtype=complex)
    if eta_skew is not None:
        v = v + eta_skew @ p - p @ eta_skew
    if eta_herm is not None:
        q = np.eye(n) - p
        v = v + q @ eta_herm @ p + p @ eta_herm @ q
    return TangentVector(x, v)


def induced_field(eta_skew: Optional[LieVector], eta_herm: Optional[LieVector],
                  x: Point) -> Tangent:
    """Value at x of the vector field induced by an ambient algebra
    element eta = eta_skew + eta_herm (skew part in u, Hermitian part in
    iu; either may be None).

    For a single point: [eta_skew, P] + (I-P) eta_herm P + P eta_herm (I-P).
    On a product the second factor receives the conjugated coefficients.
    """
    es = None if eta_skew is None else eta_skew.entries
    eh = None if eta_herm is None else eta_herm.entries
    if isinstance(x, ProductPoint):
        return ProductTangent(
            _field_single(es, eh, x.first),
            _field_single(None if es is None else np.conj(es),
                          None if eh is None else np.conj(eh), x.second),
        )
    return _field_single(es, eh, x)


# -- Kaehler package ----------------------------------------------------------


def _j_single(v: TangentVector) -> TangentVector:
    p = v.base.projection
    return TangentVector(v.base, 1j * (v.value @ p - p @ v.value))


def _same_base(x: Point, v: Tangent) -> bool:
    if isinstance(x, ProductPoint) != isinstance(v, ProductTangent):
        return False
    if isinstance(x, ProductPoint):
        return (np.linalg.norm(x.first.projection - v.first.base.projection) < 1e-10
                and np.linalg.norm(x.second.projection - v.second.base.projection) < 1e-10)
    return np.linalg.norm(x.projection - v.base.projection) < 1e-10


def kahler_eval(x: Point, v: Tangent, w: Tangent) -> tuple[float, float, Tangent]:
    """Evaluate (metric, omega, J v) at x.

    metric(v, w) = Re trace(v w) summed over factors; J is negated on the
    second factor of a product and omega(v, w) = metric(J v, w), so the
    second factor contributes -omega.
    """
    if not (_same_base(x, v) and _same_base(x, w)):
        raise InvalidInputError("tangent vectors are not based at the evaluation point")
    if isinstance(x, ProductPoint):
        assert isinstance(v, ProductTangent) and isinstance(w, ProductTangent)
        jv = ProductTangent(
            _j_single(v.first),
            TangentVector(v.second.base, -_j_single(v.second).value),
        )
        metric = float(np.real(np.trace(v.first.value @ w.first.value)
                               + np.trace(v.second.value @ w.second.value)))
        omega = float(np.real(np.trace(jv.first.value @ w.first.value)
                              + np.trace(jv.second.value @ w.second.value)))
        return metric, omega, jv
    assert isinstance(v, TangentVector) and isinstance(w, TangentVector)
    jv = _j_single(v)
    metric = float(np.real(np.trace(v.value @ w.value)))
    omega = float(np.real(np.trace(jv.value @ w.value)))
    return metric, omega, jv


def tangent_norm(v: Tangent) -> float:
    if isinstance(v, ProductTangent):
        return float(np.sqrt(np.linalg.norm(v.first.value) ** 2
                             + np.linalg.norm(v.second.value) ** 2))
    return float(np.linalg.norm(v.value))


def tangent_basis(x: Point) -> list[Tangent]:
    """Orthonormal real basis of the tangent space at x."""
    if isinstance(x, ProductPoint):
        out: list[Tangent] = []
        z1 = TangentVector(x.first, np.zeros((x.n, x.n), dtype=complex))
        z2 = TangentVector(x.second, np.zeros((x.n, x.n), dtype=complex))
        for b in tangent_basis(x.first):
            out.append(ProductTangent(b, z2))
        for b in tangent_basis(x.second):
            out.append(ProductTangent(z1, b))
        return out
    n, k = x.n, x.k
    f = x.frame
    # complete the frame to a unitary basis [F | F_perp]
    full, _ = np.linalg.qr(np.hstack([f, np.eye(n, dtype=complex)]))
    fperp = full[:, k:n]
    out = []
    for a in range(n - k):
        for b in range(k):
            c = np.zeros((n - k, k), dtype=complex)
            for val in (1.0 / np.sqrt(2.0), 1j / np.sqrt(2.0)):
                c[a, b] = val
                v = fperp @ c @ f.conj().T
                out.append(TangentVector(x, v + v.conj().T))
    return out


def haar_tangent(x: Point, rng: np.random.Generator, unit: bool = True) -> Tangent:
    """Gaussian-random tangent vector at x (unit norm by default)."""
    if isinstance(x, ProductPoint):
        t = ProductTangent(haar_tangent(x.first, rng, unit=False),
                           haar_tangent(x.second, rng, unit=False))
        if unit:
            s = tangent_norm(t)
            t = ProductTangent(TangentVector(x.first, t.first.value / s),
                               TangentVector(x.second, t.second.value / s))
        return t
    n, k = x.n, x.k
    f = x.frame
    full, _ = np.linalg.qr(np.hstack([f, np.eye(n, dtype=complex)]))
    fperp = full[:, k:n]
    c = rng.standard_normal((n - k, k)) + 1j * rng.standard_normal((n - k, k))
    v = fperp @ c @ f.conj().T
    v = v + v.conj().T
    if unit:
        v = v / max(np.linalg.norm(v), 1e-300)
    return TangentVector(x, v)


# -- scenarios ----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A named experiment setting: the acting group model, the manifold
    dimensions, and (for the graph example) the unitary parameter B."""

    name: str
    group: CompatibleGroupSpec
    n: int
    k: int
    b_matrix: Optional[np.ndarray] = None
    description: str = ""

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise InvalidInputError(f"unknown scenario {self.name!r}")
        if self.name == "paper_graph_example":
            b = np.asarray(self.b_matrix, dtype=complex)
            object.__setattr__(self, "b_matrix", b)
            if b.shape != (self.n, self.n):
                raise InvalidInputError("graph parameter must be n x n")
            if np.linalg.norm(b.conj().T @ b - np.eye(self.n)) > 1e-10:
                raise InvalidInputError("graph parameter must be unitary")
            if abs(np.linalg.det(b) - 1.0) > 1e-8:
                raise InvalidInputError("graph parameter must have det 1")
            if np.linalg.norm(np.conj(b) - b) <= 1e-6:
                raise InvalidInputError("graph parameter must differ from its conjugate")

    @property
    def is_product(self) -> bool:
        return self.name == "paper_graph_example"

    @cached_property
    def graph_map(self) -> Optional[np.ndarray]:
        """The ambient unitary A = diag(Id, B) defining the graph."""
        if not self.is_product:
            return None
        n2 = self.group.ambient_n
        a = np.eye(n2, dtype=complex)
        a[self.n:, self.n:] = self.b_matrix
        return a


def p1_toy() -> Scenario:
    """SL(2, R) acting on the projective line Gr(1, C^2)."""
    return Scenario("p1_toy", sl_real_form(2), n=2, k=1,
                    description="SL(2,R) on the projective line")


def real_grassmannian(n: int = 4, k: int = 2) -> Scenario:
    """SL(n, R) acting on Gr(k, C^n) with X the real points Gr(k, R^n)."""
    if not (0 < k < n):
        raise InvalidInputError("need 0 < k < n")
    return Scenario("real_grassmannian", sl_real_form(n), n=n, k=k,
                    description=f"SL({n},R) on Gr({k},C^{n}); X = real planes")


def default_graph_parameter(n: int = 4) -> np.ndarray:
    """A fixed SU(n) matrix with conj(B) != B for the graph example."""
    h = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        h[i, i + 1] = h[i + 1, i] = 0.7 + 0.3 * i
    h[0, 0] = 0.9
    h[n - 1, n - 1] = -0.9
    h -= (np.trace(h) / n) * np.eye(n)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(1j * w)) @ v.conj().T


def paper_graph_example(b_matrix: Optional[np.ndarray] = None) -> Scenario:
    """SL(4, R) block-embedded in GL(8, C), acting on the Lagrangian graph
    of the twisted isometry inside Gr(4, C^8) x Gr(4, C^8)."""
    b = default_graph_parameter(4) if b_matrix is None else b_matrix
    return Scenario("paper_graph_example", sl_real_form(4, 8), n=4, k=4,
                    b_matrix=b, description="Lagrangian graph in Gr(4,C^8)^2")


def scenario_by_name(name: str, **kwargs) -> Scenario:
    if name == "p1_toy":
        return p1_toy()
    if name == "real_grassmannian":
        return real_grassmannian(kwargs.get("n", 4), kwargs.get("k", 2))
    if name == "paper_graph_example":
        return paper_graph_example(kwargs.get("b_matrix"))
    raise InvalidInputError(f"unknown scenario {name!r}")


def _ambient_nk(s: Scenario) -> tuple[int, int]:
    if s.is_product:
        return s.group.ambient_n, s.k
    return s.n, s.k


def haar_point(n: int, k: int, rng: np.random.Generator) -> GrassPoint:
    """Haar-uniform point of Gr(k, C^n): QR of a complex Gaussian frame
    with the R-diagonal phase fix."""
    z = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    return GrassPoint(_orthonormalize(z))


def graph_point(s: Scenario, pi: GrassPoint) -> ProductPoint:
    """The graph point (pi, A(pi)) of the graph scenario."""
    a = s.graph_map
    return ProductPoint(pi, make_point(a @ pi.frame))


def sample_scenario(s: Scenario, count: int, seed: int) -> list[Point]:
    """Sample ``count`` points of the scenario's submanifold X.

    p1_toy: Haar-uniform points of the projective line; real_grassmannian:
    real frames (points of Gr(k, R^n)); paper_graph_example: pairs
    (pi, A(pi)) with pi Haar-uniform.  Deterministic given the seed, with
    per-sample derived streams.
    """
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    out: list[Point] = []
    for i in range(count):
        rng = rng_for(seed, i)
        if s.name == "p1_toy":
            out.append(haar_point(2, 1, rng))
        elif s.name == "real_grassmannian":
            f = rng.standard_normal((s.n, s.k))
            out.append(make_point(f))
        elif s.name == "paper_graph_example":
            pi = haar_point(s.group.ambient_n, s.k, rng)
            out.append(graph_point(s, pi))
        else:  # pragma: no cover
            raise InvalidInputError(s.name)
    return out


def sample_ambient(s: Scenario, count: int, seed: int) -> list[Point]:
    """Haar-uniform points of the ambient manifold Z (products sample the
    factors independently)."""
    n, k = _ambient_nk(s)
    out: list[Point] = []
    for i in range(count):
        rng = rng_for(seed, i, 0xA)
        if s.is_product:
            out.append(ProductPoint(haar_point(n, k, rng), haar_point(n, k, rng)))
        else:
            out.append(haar_point(n, k, rng))
    return out


def x_tangent(s: Scenario, x: Point, rng: np.random.Generator) -> Tangent:
    """A random tangent direction to the scenario submanifold X at x."""
    if s.name == "p1_toy":
        return haar_tangent(x, rng)
    if s.name == "real_grassmannian":
        assert isinstance(x, GrassPoint)
        n, k = x.n, x.k
        f = np.real(x.frame)
        full, _ = np.linalg.qr(np.hstack([f, np.eye(n)]))
        fperp = full[:, k:n]
        c = rng.standard_normal((n - k, k))
        v = fperp @ c @ f.T
        v = (v + v.T).astype(complex)
        v = v / max(np.linalg.norm(v), 1e-300)
        return TangentVector(x, v)
    if s.name == "paper_graph_example":
        assert isinstance(x, ProductPoint)
        v1 = haar_tangent(x.first, rng)
        a = s.graph_map
        v2 = a @ v1.value @ a.conj().T  # exact differential of the graph map
        t = ProductTangent(v1, TangentVector(x.second, v2))
        s_norm = tangent_norm(t)
        return ProductTangent(TangentVector(x.first, v1.value / s_norm),
                              TangentVector(x.second, v2 / s_norm))
    raise InvalidInputError(s.name)


def x_dimension(s: Scenario) -> int:
    """Real dimension of the scenario submanifold X."""
    if s.name == "p1_toy":
        return 2 * s.k * (s.n - s.k)
    if s.name == "real_grassmannian":
        return s.k * (s.n - s.k)
    n = s.group.ambient_n
    return 2 * s.k * (n - s.k)


def z_dimension(s: Scenario) -> int:
    """Real dimension of the ambient manifold Z."""
    n, k = _ambient_nk(s)
    d = 2 * k * (n - k)
    return 2 * d if s.is_product else d


def verify_lagrangian(s: Scenario, x: Point, trials: int, seed: int = 0) -> dict:
    """Max |omega| over sampled tangent pairs to X at x, with the
    half-dimension bookkeeping recorded."""
    rng = rng_for(seed, 0x1A)
    worst = 0.0
    for _ in range(trials):
        v = x_tangent(s, x, rng)
        w = x_tangent(s, x, rng)
        _, om, _ = kahler_eval(x, v, w)
        worst = max(worst, abs(om))
    return {
        "max_abs_omega": worst,
        "dim_x": x_dimension(s),
        "dim_z": z_dimension(s),
        "half_dimensional": x_dimension(s) * 2 == z_dimension(s),
    }


def verify_invariance(s: Scenario, g: GroupElement, x: ProductPoint) -> float:
    """Residual distance between the moved graph point and the graph point
    over the moved first component; <= 1e-10 certifies invariance.

    ``g`` must be block-embedded (the acting block in the top-left corner
    and the identity elsewhere); the set-level identity uses the plain
    diagonal action, under which the embedded block centralizes the graph
    map.
    """
    if s.name != "paper_graph_example":
        raise InvalidInputError("invariance check is defined for the graph scenario")
    m = g.matrix
    nn = s.group.ambient_n
    n = s.n
    if m.shape != (nn, nn):
        raise InvalidInputError("expected an ambient-sized element")
    off = np.linalg.norm(m[:n, n:]) + np.linalg.norm(m[n:, :n])
    corner = np.linalg.norm(m[n:, n:] - np.eye(nn - n))
    if off > 1e-10 or corner > 1e-10:
        raise InvalidInputError("element is not block-embedded in the acting subgroup")
    moved = act_diagonal(g, x)
    expected = graph_point(s, moved.first)
    return point_distance(moved, expected)
