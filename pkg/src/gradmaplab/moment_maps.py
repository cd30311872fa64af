"""Momentum map, gradient maps, norm squares, and the oracles that pin
the sign/scale conventions.

For a single Grassmannian the (traceless-normalized) momentum map is

    mu(P) = -i (P - (k/n) I),

pulled back to the embedded model algebra by block extraction plus
traceless projection.  On a signed product the Hermitian part sums the
first projection with the conjugate of the second,

    i mu(x) = pullback( P_1 + conj(P_2) - (k_1 + k_2)/N I ),

which is the momentum map of the holomorphic action that moves the
second factor through the conjugated matrix.  With these choices the
defining identities

    d mu^xi = iota_{xi_Z} omega      and      grad mu_p^beta = beta_X

hold to machine precision on single Grassmannians and products alike;
`identity_check` certifies them by central finite differences, so any
convention drift is caught by the oracle rather than trusted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .grassmann import (
    Point,
    ProductPoint,
    ProductTangent,
    Tangent,
    TangentVector,
    act,
    induced_field,
    kahler_eval,
    tangent_basis,
)
from .groups import CompatibleGroupSpec, GroupElement, LieVector, ad_conjugate, inner


def _hermitian_part_ambient(x: Point) -> np.ndarray:
    """The ambient Hermitian matrix H with mu_ambient = -i H."""
    if isinstance(x, ProductPoint):
        h = x.first.projection + np.conj(x.second.projection)
        tr = x.first.k + x.second.k
        n = x.n
    else:
        h = x.projection.copy()
        tr = x.k
        n = x.n
    return h - (tr / n) * np.eye(n)


def mu(x: Point, spec: CompatibleGroupSpec) -> LieVector:
    """Momentum map value at x, pulled back to the embedded model algebra."""
    h_model = spec.extract(_hermitian_part_ambient(x))
    return LieVector(-1j * h_model, "u")


def mu_p(x: Point, spec: CompatibleGroupSpec) -> LieVector:
    """Gradient map: orthogonal projection of i mu(x) onto p."""
    h_model = spec.extract(_hermitian_part_ambient(x))
    return LieVector(spec.proj_p(h_model), "p")


def mu_k(x: Point, spec: CompatibleGroupSpec) -> LieVector:
    """Projection of mu(x) onto the maximal compact subalgebra k."""
    value = mu(x, spec)
    return LieVector(spec.proj_k(value.entries), "k")


def mu_a(x: Point, spec: CompatibleGroupSpec) -> LieVector:
    """Abelian gradient map: orthogonal projection of mu_p onto a."""
    return LieVector(spec.proj_a(mu_p(x, spec).entries), "a")


def f_p(x: Point, spec: CompatibleGroupSpec) -> float:
    """Norm square of the gradient map, f_p = 1/2 ||mu_p||^2."""
    v = mu_p(x, spec).entries
    return 0.5 * inner(v, v)


def grad_f_p(x: Point, spec: CompatibleGroupSpec) -> Tangent:
    """Gradient of f_p at x: the vector field induced by beta = mu_p(x).
    Vanishes exactly at the critical points."""
    beta = mu_p(x, spec)
    beta_amb = LieVector(spec.embed_alg(beta.entries), "iu")
    return induced_field(None, beta_amb, x)


@dataclass(frozen=True)
class MomentValue:
    """Bundle of the momentum data at a point."""

    mu: LieVector
    mu_p: LieVector
    mu_k: LieVector
    f_p: float

    @classmethod
    def at(cls, x: Point, spec: CompatibleGroupSpec) -> "MomentValue":
        m = mu(x, spec)
        p = mu_p(x, spec)
        k = mu_k(x, spec)
        return cls(m, p, k, 0.5 * inner(p.entries, p.entries))


# -- finite-difference oracles -------------------------------------------------


def _move_along(x: Point, v: Tangent, h: float) -> Point:
    """Second-order retraction of x along v: frame -> orth((I + h v) F),
    whose derivative at h = 0 is exactly v."""
    from .grassmann import make_point  # local import to keep module load light

    if isinstance(x, ProductPoint):
        assert isinstance(v, ProductTangent)
        return ProductPoint(
            _move_along(x.first, v.first, h),
            _move_along(x.second, v.second, h),
        )
    assert isinstance(v, TangentVector)
    n = x.n
    return make_point((np.eye(n) + h * v.value) @ x.frame)


def _mu_xi(x: Point, xi: LieVector, spec: CompatibleGroupSpec) -> float:
    return inner(mu(x, spec).entries, xi.entries)


def _fd_mu_xi(x: Point, xi: LieVector, v: Tangent, spec: CompatibleGroupSpec,
              h: float) -> float:
    """Central difference of mu^xi along v with one Richardson refinement."""
    def central(step):
        return (_mu_xi(_move_along(x, v, step), xi, spec)
                - _mu_xi(_move_along(x, v, -step), xi, spec)) / (2 * step)

    d1 = central(h)
    d2 = central(h / 2)
    return (4 * d2 - d1) / 3.0


def identity_check(x: Point, xi: LieVector, v: Tangent,
                   spec: CompatibleGroupSpec, h: float = 1e-4) -> dict:
    """Residuals of the defining identities at (x, xi, v):

    * ``symplectic``: |d mu^xi [v] - omega(xi_Z, v)|
    * ``gradient``:   ||grad mu^xi - J xi_Z||

    with d mu^xi and grad mu^xi taken by central finite differences.
    Both residuals <= 1e-6 certifies the sign/scale conventions; with
    xi = -i beta for beta in p, the gradient residual is exactly
    ||grad mu_p^beta - beta_X||.
    """
    if xi.tag not in ("u", "k"):
        raise InvalidInputError("identity_check expects xi in u")
    xi_amb = LieVector(spec.embed_alg(xi.entries), "u")
    field = induced_field(xi_amb, None, x)
    _, om, _ = kahler_eval(x, field, v)
    d_mu = _fd_mu_xi(x, xi, v, spec, h)
    residual_symplectic = abs(d_mu - om)

    # gradient of mu^xi over an orthonormal tangent basis vs J xi_Z
    basis = tangent_basis(x)
    coeffs = [_fd_mu_xi(x, xi, b, spec, h) for b in basis]
    _, _, j_field = kahler_eval(x, field, field)
    if isinstance(x, ProductPoint):
        grad1 = sum(c * b.first.value for c, b in zip(coeffs, basis))
        grad2 = sum(c * b.second.value for c, b in zip(coeffs, basis))
        residual_gradient = float(np.sqrt(
            np.linalg.norm(grad1 - j_field.first.value) ** 2
            + np.linalg.norm(grad2 - j_field.second.value) ** 2
        ))
    else:
        grad = sum(c * b.value for c, b in zip(coeffs, basis))
        residual_gradient = float(np.linalg.norm(grad - j_field.value))
    return {"symplectic": residual_symplectic, "gradient": residual_gradient}


def gradient_identity_residual(x: Point, beta: LieVector,
                               spec: CompatibleGroupSpec, h: float = 1e-4) -> float:
    """||grad mu_p^beta - beta_X|| by finite differences, for beta in p."""
    if beta.tag not in ("p", "a"):
        raise InvalidInputError("expected beta in p")
    res = identity_check(x, LieVector(-1j * beta.entries, "u"), _zero_tangent(x), spec, h)
    return res["gradient"]


def _zero_tangent(x: Point) -> Tangent:
    if isinstance(x, ProductPoint):
        return ProductTangent(
            TangentVector(x.first, np.zeros((x.n, x.n), dtype=complex)),
            TangentVector(x.second, np.zeros((x.n, x.n), dtype=complex)),
        )
    return TangentVector(x, np.zeros((x.n, x.n), dtype=complex))


def equivariance_residual(x: Point, k: GroupElement, spec: CompatibleGroupSpec) -> float:
    """|| mu_p(k x) - Ad(k) mu_p(x) ||."""
    k_amb = GroupElement(spec.embed_group(k.matrix), "ambient")
    lhs = mu_p(act(k_amb, x), spec).entries
    rhs = ad_conjugate(k, mu_p(x, spec)).entries
    return float(np.linalg.norm(lhs - rhs))


def abelian_equivariance_check(spec: CompatibleGroupSpec, k: GroupElement,
                               samples: list[Point]) -> float:
    """Max residual of the conjugated-torus identity

        mu_{a'} = Ad(k) o mu_a o k^{-1},     a' = Ad(k)(a),

    where mu_{a'} is the orthogonal projection of mu_p onto Ad(k)(a).
    """
    worst = 0.0
    k_amb = GroupElement(spec.embed_group(k.matrix), "ambient")
    k_inv_amb = GroupElement(spec.embed_group(k.matrix.conj().T), "ambient")
    basis_conj = [ad_conjugate(k, LieVector(b, "a")).entries for b in spec.a_basis()]
    for x in samples:
        mp = mu_p(x, spec).entries
        lhs = sum(inner(mp, b) * b for b in basis_conj)
        shifted = mu_a(act(k_inv_amb, x), spec)
        rhs = ad_conjugate(k, shifted).entries
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
        # consequence: Ad(k) is an isometry
        worst = max(worst, abs(float(np.linalg.norm(lhs)) - shifted.norm()))
    del k_amb
    return worst
