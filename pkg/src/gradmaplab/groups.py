"""Matrix models of compatible subgroups of SL(n, C).

The lab works with a fixed menu of matrix groups G = K exp(p) inside the
complexification of a compact unitary group:

* ``sl_n_real_form`` -- G = SL(n, R): K = SO(n), p = real symmetric
  traceless, a = real diagonal traceless.
* ``sl_n_complex``  -- G = SL(n, C) itself: K = SU(n), p = Hermitian
  traceless.
* ``torus_a``       -- G = A = exp(a), the positive diagonal torus.
* ``custom_block``  -- real-form projections with the acting block at an
  arbitrary offset inside the ambient matrix.

The inner product on every algebra is <A, B> = Re trace(A* B), so that
multiplication by i is an isometry between u and iu.  All values are
plain complex128 numpy arrays; the tagged wrapper `LieVector` carries the
subspace bookkeeping and validates its invariants on construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericalError, ScaleCapError

MODEL_NAMES = ("sl_n_real_form", "sl_n_complex", "torus_a", "custom_block")

# exp() beyond this spectral scale overflows double precision headroom
EXP_SCALE_CAP = 500.0


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """<A, B> = Re trace(A* B), the fixed Ad(U)-invariant pairing."""
    return float(np.real(np.sum(np.conj(a) * b)))


def norm(a: np.ndarray) -> float:
    return float(np.sqrt(max(inner(a, a), 0.0)))


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    scale = max(np.linalg.norm(a), 1.0)
    return bool(np.linalg.norm(a - a.conj().T) <= tol * scale)


def is_skew_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    scale = max(np.linalg.norm(a), 1.0)
    return bool(np.linalg.norm(a + a.conj().T) <= tol * scale)


def _traceless(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    return a - (np.trace(a) / n) * np.eye(n, dtype=complex)


@dataclass(frozen=True)
class LieVector:
    """A tagged Lie-algebra element.

    Tags: "u" (skew-Hermitian traceless), "iu" (Hermitian traceless),
    "k" (subalgebra of u), "p" (subspace of iu), "a" (real diagonal
    traceless).  Construction validates the invariants that do not
    depend on the group model; model-dependent membership (e.g. p =
    real symmetric for SL(n, R)) is guaranteed by the projections that
    produce tagged values.
    """

    entries: np.ndarray
    tag: str

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError(f"LieVector entries must be square, got {a.shape}")
        scale = max(np.linalg.norm(a), 1.0)
        tol = 1e-12 * scale
        if self.tag in ("u", "k"):
            if not is_skew_hermitian(a):
                raise InvalidInputError(f"tag {self.tag!r} requires a skew-Hermitian matrix")
            if abs(np.trace(a)) > tol:
                raise InvalidInputError(f"tag {self.tag!r} requires a traceless matrix")
        elif self.tag in ("iu", "p"):
            if not is_hermitian(a):
                raise InvalidInputError(f"tag {self.tag!r} requires a Hermitian matrix")
            if abs(np.trace(a)) > tol:
                raise InvalidInputError(f"tag {self.tag!r} requires a traceless matrix")
        elif self.tag == "a":
            if np.linalg.norm(a - np.diag(np.diagonal(a))) > tol:
                raise InvalidInputError("tag 'a' requires a diagonal matrix")
            if np.linalg.norm(np.imag(np.diagonal(a))) > tol:
                raise InvalidInputError("tag 'a' requires real diagonal entries")
            if abs(np.trace(a)) > tol:
                raise InvalidInputError("tag 'a' requires a traceless matrix")
        else:
            raise InvalidInputError(f"unknown subspace tag {self.tag!r}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def norm(self) -> float:
        return norm(self.entries)

    def times_i(self) -> "LieVector":
        """Isometry u <-> iu (or back)."""
        if self.tag in ("u", "k"):
            return LieVector(1j * self.entries, "iu")
        if self.tag in ("iu", "p", "a"):
            return LieVector(1j * self.entries, "u")
        raise InvalidInputError(f"cannot multiply tag {self.tag!r} by i")


@dataclass(frozen=True)
class GroupElement:
    """An invertible matrix with a group tag: G, K, A or ambient."""

    matrix: np.ndarray
    group_tag: str = "G"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"GroupElement must be square, got {m.shape}")
        if self.group_tag not in ("G", "K", "A", "ambient"):
            raise InvalidInputError(f"unknown group tag {self.group_tag!r}")
        if self.group_tag in ("G", "K", "A"):
            sign, logdet = np.linalg.slogdet(m)
            # the det of an ill-conditioned SL element is itself ill
            # conditioned; scale the tolerance by sigma_max^n
            cond_proxy = max(1.0, float(np.linalg.norm(m, 2)) ** m.shape[0])
            if abs(sign - 1.0) > 1e-6 or abs(logdet) > 1e-10 * cond_proxy:
                raise InvalidInputError(
                    f"tag {self.group_tag!r} requires det = 1, got sign {sign}, log|det| {logdet}"
                )
        if self.group_tag == "K":
            if np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0])) > 1e-10:
                raise InvalidInputError("tag 'K' requires a unitary matrix")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def inverse(self) -> "GroupElement":
        if self.group_tag == "K":
            return GroupElement(self.matrix.conj().T, "K")
        return GroupElement(np.linalg.inv(self.matrix), self.group_tag)


@dataclass(frozen=True)
class CompatibleGroupSpec:
    """A matrix model of a compatible subgroup G = K exp(p) together with
    its block embedding into the ambient acting group.

    ``n`` is the model size, ``ambient_n`` the size of the matrices that
    act on frames; the embedding places the model block at
    ``block_offset`` (top-left by default) and extends by the identity.
    """

    model_name: str
    n: int
    ambient_n: int
    block_offset: int = 0

    def __post_init__(self):
        if self.model_name not in MODEL_NAMES:
            raise InvalidInputError(f"unknown model {self.model_name!r}")
        if self.block_offset + self.n > self.ambient_n:
            raise InvalidInputError("embedded block exceeds the ambient size")
        if self.model_name != "custom_block" and self.block_offset != 0:
            raise InvalidInputError("nonzero block offset is only for custom_block")

    # -- embedding / pullback -------------------------------------------------

    def embed_alg(self, m: np.ndarray) -> np.ndarray:
        """n x n algebra element -> ambient N x N (zero outside the block)."""
        out = np.zeros((self.ambient_n, self.ambient_n), dtype=complex)
        o = self.block_offset
        out[o:o + self.n, o:o + self.n] = m
        return out

    def embed_group(self, g: np.ndarray) -> np.ndarray:
        """n x n group element -> ambient N x N (identity outside the block)."""
        out = np.eye(self.ambient_n, dtype=complex)
        o = self.block_offset
        out[o:o + self.n, o:o + self.n] = g
        return out

    def extract(self, m_ambient: np.ndarray) -> np.ndarray:
        """Orthogonal projection of an ambient algebra value onto the embedded
        model algebra: pull out the acting block and remove its trace."""
        o = self.block_offset
        blk = np.array(m_ambient[o:o + self.n, o:o + self.n])
        return _traceless(blk)

    # -- Cartan projections ---------------------------------------------------

    def proj_p(self, m: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a Hermitian traceless matrix onto p."""
        if not is_hermitian(m, tol=1e-9):
            raise InvalidInputError("proj_p expects a Hermitian matrix")
        h = 0.5 * (m + m.conj().T)
        if self.model_name in ("sl_n_real_form", "custom_block"):
            out = np.real(h).astype(complex)
        elif self.model_name == "sl_n_complex":
            out = h
        elif self.model_name == "torus_a":
            out = np.diag(np.real(np.diagonal(h))).astype(complex)
        else:  # pragma: no cover
            raise InvalidInputError(self.model_name)
        return _traceless(out)

    def proj_k(self, m: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a skew-Hermitian traceless matrix onto k."""
        if not is_skew_hermitian(m, tol=1e-9):
            raise InvalidInputError("proj_k expects a skew-Hermitian matrix")
        s = 0.5 * (m - m.conj().T)
        if self.model_name in ("sl_n_real_form", "custom_block"):
            out = np.real(s).astype(complex)
        elif self.model_name == "sl_n_complex":
            out = s
        elif self.model_name == "torus_a":
            out = np.zeros_like(s)
        else:  # pragma: no cover
            raise InvalidInputError(self.model_name)
        return _traceless(out)

    def proj_a(self, m: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto a = real diagonal traceless."""
        d = np.real(np.diagonal(m))
        d = d - d.mean()
        return np.diag(d).astype(complex)

    # -- bases and samplers ---------------------------------------------------

    def p_basis(self) -> list[np.ndarray]:
        """Orthonormal basis of p w.r.t. the fixed inner product."""
        n = self.n
        out: list[np.ndarray] = []
        if self.model_name in ("sl_n_real_form", "custom_block", "sl_n_complex"):
            for i in range(n):
                for j in range(i + 1, n):
                    e = np.zeros((n, n), dtype=complex)
                    e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
                    out.append(e)
            if self.model_name == "sl_n_complex":
                for i in range(n):
                    for j in range(i + 1, n):
                        e = np.zeros((n, n), dtype=complex)
                        e[i, j] = 1j / np.sqrt(2.0)
                        e[j, i] = -1j / np.sqrt(2.0)
                        out.append(e)
        out.extend(self._a_basis())
        return out

    def _a_basis(self) -> list[np.ndarray]:
        n = self.n
        out = []
        for l in range(1, n):
            d = np.zeros(n)
            d[:l] = 1.0
            d[l] = -float(l)
            out.append(np.diag(d / np.linalg.norm(d)).astype(complex))
        return out

    def a_basis(self) -> list[np.ndarray]:
        """Orthonormal basis of the maximal Abelian subalgebra a."""
        return self._a_basis()

    def p_dim(self) -> int:
        return len(self.p_basis())

    def random_p(self, rng: np.random.Generator, unit: bool = True) -> LieVector:
        """Haar direction on the unit sphere of p (Gaussian coordinates)."""
        basis = self.p_basis()
        coef = rng.standard_normal(len(basis))
        m = sum(c * b for c, b in zip(coef, basis))
        if unit:
            m = m / max(norm(m), 1e-300)
        return LieVector(m, "p")

    def random_a(self, rng: np.random.Generator, unit: bool = True) -> LieVector:
        basis = self._a_basis()
        coef = rng.standard_normal(len(basis))
        m = sum(c * b for c, b in zip(coef, basis))
        if unit:
            m = m / max(norm(m), 1e-300)
        return LieVector(m, "a")

    def haar_k(self, rng: np.random.Generator) -> GroupElement:
        """Haar-random element of K (SO(n), SU(n) or the trivial group)."""
        n = self.n
        if self.model_name in ("sl_n_real_form", "custom_block"):
            z = rng.standard_normal((n, n))
            q, r = np.linalg.qr(z)
            q = q * np.sign(np.diagonal(r))
            if np.linalg.det(q) < 0:
                q = q.copy()
                q[:, 0] = -q[:, 0]
            return GroupElement(q.astype(complex), "K")
        if self.model_name == "sl_n_complex":
            z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            q, r = np.linalg.qr(z)
            ph = np.diagonal(r) / np.abs(np.diagonal(r))
            q = q * np.conj(ph)
            det = np.linalg.det(q)
            q = q * det ** (-1.0 / n)
            return GroupElement(q, "K")
        return GroupElement(np.eye(n, dtype=complex), "K")

    def random_g(self, rng: np.random.Generator, radius: float = 1.0) -> GroupElement:
        """Random G-element k1 exp(b) k2 with ||b|| <= radius (bounded
        condition number, suitable for residual checks at 1e-10)."""
        k1 = self.haar_k(rng)
        k2 = self.haar_k(rng)
        b = self.random_p(rng, unit=True)
        t = radius * rng.uniform(0.2, 1.0)
        e = exp_lie(b, t)
        return GroupElement(k1.matrix @ e.matrix @ k2.matrix, "G")


def sl_real_form(n: int, ambient_n: Optional[int] = None) -> CompatibleGroupSpec:
    return CompatibleGroupSpec("sl_n_real_form", n, ambient_n or n)


def sl_complex(n: int, ambient_n: Optional[int] = None) -> CompatibleGroupSpec:
    return CompatibleGroupSpec("sl_n_complex", n, ambient_n or n)


def torus_a(n: int, ambient_n: Optional[int] = None) -> CompatibleGroupSpec:
    return CompatibleGroupSpec("torus_a", n, ambient_n or n)


# -- free-standing operations ----------------------------------------------


def proj_p(m: LieVector, spec: CompatibleGroupSpec) -> LieVector:
    """Project a Hermitian traceless value onto p.  The residual m - proj
    is orthogonal to every element of p."""
    if m.tag not in ("iu", "p"):
        raise InvalidInputError(f"proj_p expects tag 'iu', got {m.tag!r}")
    return LieVector(spec.proj_p(m.entries), "p")


def chamber_project(xi: LieVector) -> np.ndarray:
    """Unique representative of the K-orbit of xi in the closed positive
    chamber: eigenvalues sorted in non-increasing order.

    The eigensolver is the deterministic LAPACK symmetric path, so equal
    inputs give bitwise equal outputs; repeated eigenvalues are returned
    as the sorted multiset with no eigenvector canonicalisation.
    """
    if xi.tag not in ("p", "a", "iu"):
        raise InvalidInputError(f"chamber_project expects a p-vector, got tag {xi.tag!r}")
    try:
        ev = np.linalg.eigvalsh(xi.entries)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"eigensolver failed on {xi.entries.shape} matrix: {exc}") from exc
    ev = ev[::-1]
    if abs(ev.sum()) > 1e-10 * max(1.0, np.abs(ev).max()):
        raise NumericalError(f"chamber point does not sum to zero: {ev}")
    return ev


def ad_conjugate(k: GroupElement, xi: LieVector) -> LieVector:
    """Ad(k) xi = k xi k^{-1} for k in K; preserves the subspace tag and
    the norm."""
    if np.linalg.norm(k.matrix.conj().T @ k.matrix - np.eye(k.n)) > 1e-9:
        raise InvalidInputError("ad_conjugate requires a unitary (K) element")
    out = k.matrix @ xi.entries @ k.matrix.conj().T
    if xi.tag == "a":
        # Ad(k) generally leaves a; retag as p (a subset of iu holds it)
        return LieVector(out, "p")
    return LieVector(out, xi.tag)


def exp_lie(xi: LieVector, t: float = 1.0) -> GroupElement:
    """Matrix exponential exp(t xi).

    Diagonal directions are exponentiated entrywise; Hermitian/skew ones
    through an eigendecomposition.  Requests past the scale cap raise
    ScaleCapError: use the filtration limit oracle for one-parameter
    limits instead of huge exponentials.
    """
    scale = abs(t) * np.linalg.norm(xi.entries, 2)
    if scale > EXP_SCALE_CAP:
        raise ScaleCapError(
            f"|t| * ||xi|| = {scale:.3g} exceeds the scale cap {EXP_SCALE_CAP}; "
            "for diagonal directions use flows.weight_filtration_limit"
        )
    a = xi.entries
    if xi.tag == "a":
        m = np.diag(np.exp(t * np.real(np.diagonal(a)))).astype(complex)
    elif xi.tag in ("p", "iu"):
        w, v = np.linalg.eigh(a)
        m = (v * np.exp(t * w)) @ v.conj().T
    elif xi.tag in ("u", "k"):
        w, v = np.linalg.eigh(1j * a)  # Hermitian
        m = (v * np.exp(-1j * t * w)) @ v.conj().T
    else:  # pragma: no cover
        m = scipy.linalg.expm(t * a)
    tag = "A" if xi.tag == "a" else ("K" if xi.tag in ("u", "k") else "G")
    return GroupElement(m, tag)


def parabolic_membership(g: GroupElement, beta: LieVector, tol: float = 1e-9) -> str:
    """Classify g relative to the parabolic subgroup attached to beta.

    In an eigenbasis of beta with eigenvalues grouped in decreasing
    order, exp(t beta) g exp(-t beta) scales the (i, j) block by
    exp(t (w_i - w_j)); the limit t -> -infinity exists exactly when all
    blocks below the diagonal vanish.  Returns "levi" when g commutes
    with beta, "parabolic_only" when only the limit exists, "outside"
    otherwise.
    """
    if beta.tag not in ("p", "a"):
        raise InvalidInputError("parabolic_membership expects beta in p")
    w, v = np.linalg.eigh(beta.entries)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    ghat = v.conj().T @ g.matrix @ v
    scale = max(np.linalg.norm(ghat), 1.0)

    # group eigenvalues into blocks (gap tolerance 1e-8)
    edges = [0]
    for i in range(1, len(w)):
        if w[i - 1] - w[i] > 1e-8:
            edges.append(i)
    edges.append(len(w))

    comm = np.linalg.norm(g.matrix @ beta.entries - beta.entries @ g.matrix)
    if comm <= tol * scale:
        return "levi"
    for bi in range(len(edges) - 1):
        for bj in range(bi):
            block = ghat[edges[bi]:edges[bi + 1], edges[bj]:edges[bj + 1]]
            if np.linalg.norm(block) > tol * scale:
                return "outside"
    return "parabolic_only"
