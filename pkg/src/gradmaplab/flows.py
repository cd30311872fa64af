"""One-parameter orbit curves, maximal weights with the energy identity,
the negative gradient flow of the norm square, and group-tracking
certification.

The flow integrator is an adaptive Bogacki-Shampine 3(2) pair acting on
frames, with QR re-projection onto the manifold after every stage and
accepted step.  Long one-parameter moves are staged so that each factor
``exp(step * beta)`` stays within a safe spectral range; the frame QR
after each stage renormalizes away the exponential growth, which is
exact projectively.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError, NumericalError, OrbitDriftWarning, ScaleCapError
from .grassmann import (
    GrassPoint,
    Point,
    ProductPoint,
    act,
    point_distance,
)
from .groups import CompatibleGroupSpec, LieVector, inner
from .moment_maps import mu_p

ONE_PARAM_SCALE_CAP = 1e6
_STEP_SCALE = 20.0  # max ||step * beta||_2 per staged factor


def _frames_of(x: Point) -> tuple[np.ndarray, ...]:
    if isinstance(x, ProductPoint):
        return (x.first.frame, x.second.frame)
    return (x.frame,)


def _point_from(x_template: Point, frames: tuple[np.ndarray, ...]) -> Point:
    if isinstance(x_template, ProductPoint):
        return ProductPoint(GrassPoint(frames[0]), GrassPoint(frames[1]))
    return GrassPoint(frames[0])


def _orth(frame: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(frame)
    d = np.diagonal(r)
    phase = np.where(np.abs(d) > 0, d / np.abs(np.where(np.abs(d) > 0, d, 1.0)), 1.0)
    return q * np.conj(phase)


class _FrameKernels:
    """Frame-level fast paths for one geometry: the gradient map, its
    induced right-hand side, and staged one-parameter moves, with every
    matrix product at model-block size."""

    def __init__(self, spec: CompatibleGroupSpec, template: Point):
        self.spec = spec
        self.o = spec.block_offset
        self.n = spec.n
        self.nfac = 2 if isinstance(template, ProductPoint) else 1
        self.real_form = spec.model_name in ("sl_n_real_form", "custom_block")
        self.torus = spec.model_name == "torus_a"
        self.eye_n = np.eye(self.n)
        k = _frames_of(template)[0].shape[1]
        self.eye_k15 = 1.5 * np.eye(k)

    def _orth_stage(self, frame: np.ndarray) -> np.ndarray:
        # one polar-Newton sweep F (3I - F*F)/2: squares the
        # orthonormality defect, enough for intermediate stages
        gram = frame.conj().T @ frame
        return frame @ (self.eye_k15 - 0.5 * gram)

    def mu_p_frames(self, frames) -> np.ndarray:
        """mu_p from raw orthonormal frames (model-size matrix)."""
        o, n = self.o, self.n
        s = None
        for idx, f in enumerate(frames):
            top = f[o:o + n, :]
            c = top @ top.conj().T
            c = np.conj(c) if idx == 1 else c
            s = c if s is None else s + c
        if self.real_form:
            s = np.real(s).astype(complex)
        elif self.torus:
            s = np.diag(np.real(np.diagonal(s))).astype(complex)
        else:
            s = 0.5 * (s + s.conj().T)
        return s - (np.trace(s).real / n) * self.eye_n

    def rhs(self, frames) -> tuple[tuple[np.ndarray, ...], float, np.ndarray, float]:
        """(-(I-P) B F per factor, gradient norm, beta, f_p) at the
        orthonormalized frames."""
        qs = tuple(self._orth_stage(f) for f in frames)
        beta = self.mu_p_frames(qs)
        outs = []
        grad_sq = 0.0
        o, n = self.o, self.n
        for idx, f in enumerate(qs):
            b = np.conj(beta) if idx == 1 else beta
            bf = np.zeros_like(f)
            bf[o:o + n, :] = b @ f[o:o + n, :]
            rhs = -(bf - f @ (f.conj().T @ bf))
            outs.append(rhs)
            grad_sq += 2.0 * float(np.vdot(rhs, rhs).real)
        f_val = 0.5 * float(np.vdot(beta, beta).real)
        return tuple(outs), math.sqrt(grad_sq), beta, f_val

    def make_stepper(self, beta: np.ndarray):
        """Returns advance(frames, t) applying exp(t beta) with staging;
        the eigendecomposition is taken once."""
        w, v = np.linalg.eigh(beta)
        o, n = self.o, self.n
        bnorm = float(np.max(np.abs(w))) if w.size else 0.0

        def advance(frames, t: float):
            if t == 0.0 or bnorm == 0.0:
                return frames
            steps = max(1, int(math.ceil(abs(t) * bnorm / _STEP_SCALE)))
            dt = t / steps
            e = (v * np.exp(dt * w)) @ v.conj().T
            es = [e, np.conj(e)]
            out = list(frames)
            for _ in range(steps):
                for idx in range(len(out)):
                    f = out[idx].copy()
                    f[o:o + n, :] = es[idx % 2] @ f[o:o + n, :]
                    out[idx] = _orth(f)
            return tuple(out)

        return advance, bnorm

    def field_norm(self, frames, beta: np.ndarray) -> float:
        o, n = self.o, self.n
        total = 0.0
        for idx, f in enumerate(frames):
            b = np.conj(beta) if idx == 1 else beta
            bf = np.zeros_like(f)
            bf[o:o + n, :] = b @ f[o:o + n, :]
            r = bf - f @ (f.conj().T @ bf)
            total += 2.0 * float(np.linalg.norm(r) ** 2)
        return math.sqrt(total)

    def pairing(self, frames, beta: np.ndarray) -> float:
        return float(np.real(np.sum(np.conj(self.mu_p_frames(frames)) * beta)))


def one_param(x: Point, beta: LieVector, t: float, spec: CompatibleGroupSpec) -> Point:
    """The point exp(t beta) x, computed by staged frame multiplication
    with re-orthonormalization between stages."""
    if beta.tag not in ("p", "a"):
        raise InvalidInputError("one_param expects beta in p")
    bnorm = np.linalg.norm(beta.entries, 2)
    if abs(t) * bnorm > ONE_PARAM_SCALE_CAP:
        raise ScaleCapError(
            f"|t| * ||beta|| = {abs(t) * bnorm:.3g} exceeds {ONE_PARAM_SCALE_CAP}; "
            "use weight_filtration_limit for the limit point"
        )
    geom = _FrameKernels(spec, x)
    advance, _ = geom.make_stepper(beta.entries)
    return _point_from(x, advance(_frames_of(x), t))


def lambda_t(x: Point, beta: LieVector, t: float, spec: CompatibleGroupSpec) -> float:
    """lambda(x, beta, t) = < mu_p(exp(t beta) x), beta >."""
    y = one_param(x, beta, t, spec)
    return inner(mu_p(y, spec).entries, beta.entries)


@dataclass(frozen=True)
class WeightSample:
    """Numerical maximal weight of a point in one direction."""

    direction: LieVector
    lambda_0: float
    lambda_limit: float
    energy: float
    t_reached: float
    converged: bool
    quadrature_energy: Optional[float] = None

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.lambda_limit)


def maximal_weight(x: Point, beta: LieVector, spec: CompatibleGroupSpec,
                   tol: float = 1e-8, t_cap: float = 32768.0,
                   with_quadrature: bool = False) -> WeightSample:
    """lambda(x, beta) = lim_{t -> oo} lambda(x, beta, t), by t-doubling
    with a Cauchy test on the (monotone) weight values.

    On a compact scenario the limit is always finite; the convergence
    flag is never silently wrong: if the cap is reached while the values
    still move, ``converged`` is False.  The reported energy is
    lambda_limit - lambda_0; an independent quadrature of ||beta_X||^2
    along the ray is attached when requested.
    """
    geom = _FrameKernels(spec, x)
    advance, _ = geom.make_stepper(beta.entries)
    frames0 = _frames_of(x)
    lam0 = geom.pairing(frames0, beta.entries)
    t = 1.0
    frames = advance(frames0, t)
    lam = geom.pairing(frames, beta.entries)
    converged = False
    while t < t_cap:
        frames = advance(frames, t)  # advance to 2t
        t *= 2.0
        lam_next = geom.pairing(frames, beta.entries)
        if abs(lam_next - lam) < tol:
            lam = lam_next
            converged = True
            break
        lam = lam_next
    quad = _ray_energy(x, beta, spec, t) if with_quadrature else None
    return WeightSample(
        direction=beta,
        lambda_0=lam0,
        lambda_limit=lam,
        energy=lam - lam0,
        t_reached=t,
        converged=converged,
        quadrature_energy=quad,
    )


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _ray_energy(x: Point, beta: LieVector, spec: CompatibleGroupSpec, t_end: float) -> float:
    """Quadrature of ||beta_X(exp(s beta) x)||^2 over [0, t_end]:
    Gauss-Legendre panels on a doubling subdivision, independent of the
    weight pairing it cross-checks.  The ray is advanced incrementally
    through the sorted node list."""
    edges = [0.0, 1.0]
    while edges[-1] < t_end:
        edges.append(min(2 * edges[-1], t_end))
    nodes: list[tuple[float, float]] = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        for u, w in zip(_GL_NODES, _GL_WEIGHTS):
            nodes.append((mid + half * u, w * half))
    nodes.sort()
    geom = _FrameKernels(spec, x)
    advance, _ = geom.make_stepper(beta.entries)
    total = 0.0
    frames = _frames_of(x)
    s_prev = 0.0
    for s, w in nodes:
        frames = advance(frames, s - s_prev)
        s_prev = s
        total += w * geom.field_norm(frames, beta.entries) ** 2
    return total


def weight_filtration_limit(x: Point, beta: LieVector,
                            spec: CompatibleGroupSpec) -> tuple[Point, float]:
    """Exact limit of exp(t beta) x as t -> +oo for diagonal beta, through
    the eigenvalue filtration of the frame, together with the exact
    maximal weight.

    Coordinates are grouped by descending weight; the limit plane is the
    associated graded of the flag W_j = span(F) cap (coords of weight <=
    w_j), and the weight is sum_j dim(V_j) w_j.
    """
    if beta.tag != "a":
        raise InvalidInputError("the filtration oracle needs a diagonal direction")
    b_amb = spec.embed_alg(beta.entries)
    weights = np.real(np.diagonal(b_amb))

    def limit_frame(frame: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
        n, k = frame.shape
        order = np.argsort(-w, kind="stable")
        w_sorted = w[order]
        groups: list[list[int]] = [[order[0]]]
        for idx in order[1:]:
            if abs(w[idx] - w[groups[-1][0]]) <= 1e-10:
                groups[-1].append(idx)
            else:
                groups.append([idx])
        pieces = []
        lam = 0.0
        for j, grp in enumerate(groups):
            lower = [i for g in groups[j:] for i in g]
            upper = [i for g in groups[:j] for i in g]
            # W_j = span(F) cap {coords in lower}: kernel of the upper rows
            if upper:
                rows = frame[upper, :]
                u_, s_, vh = np.linalg.svd(rows)
                rank = int(np.sum(s_ > 1e-10 * max(1.0, s_[0] if len(s_) else 1.0)))
                kernel = vh[rank:, :].conj().T
            else:
                kernel = np.eye(k, dtype=complex)
            if kernel.shape[1] == 0:
                continue
            wj = frame @ kernel
            block = np.zeros_like(wj)
            block[grp, :] = wj[grp, :]
            u_, s_, vh = np.linalg.svd(block, full_matrices=False)
            rank = int(np.sum(s_ > 1e-10 * max(1.0, s_[0] if len(s_) else 1.0)))
            if rank:
                pieces.append(u_[:, :rank])
                lam += rank * w[grp[0]]
        if not pieces:
            raise NumericalError("filtration produced an empty limit frame")
        out = np.hstack(pieces)
        if out.shape[1] != k:
            raise NumericalError(
                f"filtration lost rank: expected {k} columns, got {out.shape[1]}"
            )
        return _orth(out), lam

    if isinstance(x, ProductPoint):
        f1, l1 = limit_frame(x.first.frame, weights)
        f2, l2 = limit_frame(x.second.frame, weights)  # conj(beta) = beta on a
        limit: Point = ProductPoint(GrassPoint(f1), GrassPoint(f2))
        lam_coords = l1 + l2
        k_tot = x.first.k + x.second.k
        n = x.n
    else:
        f1, lam_coords = limit_frame(x.frame, weights)
        limit = GrassPoint(f1)
        k_tot = x.k
        n = x.n
    # remove the trace part of the momentum normalization (beta is traceless,
    # so only the block-extraction trace correction could contribute; it is
    # proportional to trace(beta) = 0 and drops out)
    lam_exact = lam_coords - (k_tot / n) * float(np.trace(np.real(b_amb)))
    return limit, lam_exact


# -- negative gradient flow -----------------------------------------------------


@dataclass
class FlowResult:
    """Trajectory summary of a negative gradient flow of f_p."""

    start: Point
    limit: Point
    f_history: list[tuple[float, float]]
    residual: float
    status: str  # converged | max_time | diverged_error
    empirical_rate: float
    group_certificate: Optional[float] = None
    diagnostics: str = ""
    checkpoints: list[tuple[float, Point]] = field(default_factory=list)
    checkpoint_mu: list[np.ndarray] = field(default_factory=list)

    @property
    def t_end(self) -> float:
        return self.f_history[-1][0] if self.f_history else 0.0

    @property
    def f_limit(self) -> float:
        return self.f_history[-1][1] if self.f_history else math.nan


def negative_flow(x0: Point, spec: CompatibleGroupSpec, tol: float = 1e-6,
                  t_max: float = 1e4, local_tol: float = 1e-9,
                  checkpoint_dt: float = 0.0) -> FlowResult:
    """Integrate x' = -beta_X(x), beta = mu_p(x), until the gradient
    residual drops below ``tol``.

    Adaptive third-order Runge-Kutta (Bogacki-Shampine pair) on frames
    with QR re-projection each accepted step; convergence is detected on
    the gradient residual, not on an f_p plateau.  Checkpoints (every
    accepted step by default, or at spacing >= ``checkpoint_dt``) carry
    the coefficient mu_p(x(t)) for post-hoc group tracking; the
    integrator refines steps exactly where that coefficient path turns,
    which keeps the tracking quadrature accurate.
    """
    geom = _FrameKernels(spec, x0)
    frames = tuple(_orth(np.array(f)) for f in _frames_of(x0))
    t = 0.0
    k1, res, beta, fval = geom.rhs(frames)
    history: list[tuple[float, float]] = [(t, fval)]
    checkpoints: list[tuple[float, Point]] = [(t, _point_from(x0, frames))]
    cp_mu: list[np.ndarray] = [beta]
    if res <= tol:
        return FlowResult(x0, checkpoints[0][1], history, res, "converged", 0.0,
                          checkpoints=checkpoints, checkpoint_mu=cp_mu)

    h = min(0.1, 0.5 / max(res, 1e-12))
    last_cp = 0.0
    status = "max_time"
    pt = checkpoints[0][1]
    max_steps = 2_000_000
    for _ in range(max_steps):
        if t >= t_max:
            status = "max_time"
            break
        h = min(h, t_max - t)
        y2 = tuple(f + 0.5 * h * k for f, k in zip(frames, k1))
        k2, _, _, _ = geom.rhs(y2)
        y3 = tuple(f + 0.75 * h * k for f, k in zip(frames, k2))
        k3, _, _, _ = geom.rhs(y3)
        ynew = tuple(
            f + h * (2.0 / 9.0 * a + 1.0 / 3.0 * b + 4.0 / 9.0 * c)
            for f, a, b, c in zip(frames, k1, k2, k3)
        )
        k4, _, _, _ = geom.rhs(ynew)
        err = 0.0
        for a, b, c, d in zip(k1, k2, k3, k4):
            e = h * (-5.0 / 72.0 * a + 1.0 / 12.0 * b + 1.0 / 9.0 * c - 1.0 / 8.0 * d)
            err = max(err, float(np.linalg.norm(e)))
        if err <= local_tol:
            frames = tuple(_orth(f) for f in ynew)
            t += h
            k1, res, beta, fval = geom.rhs(frames)
            history.append((t, fval))
            if t - last_cp >= checkpoint_dt:
                pt = _point_from(x0, frames)
                checkpoints.append((t, pt))
                cp_mu.append(beta)
                last_cp = t
            if res <= tol:
                status = "converged"
                break
        factor = 0.9 * (local_tol / max(err, 1e-300)) ** (1.0 / 3.0)
        h *= min(5.0, max(0.2, factor))
        if h < 1e-14:
            return FlowResult(
                x0, pt, history, res, "diverged_error", math.nan,
                diagnostics=f"step-size underflow at t={t:.3g}, err={err:.3g}",
                checkpoints=checkpoints, checkpoint_mu=cp_mu,
            )
    else:  # pragma: no cover
        status = "max_time"

    limit = _point_from(x0, frames)
    if checkpoints[-1][0] < t:
        checkpoints.append((t, limit))
        cp_mu.append(geom.mu_p_frames(frames))
    rate = _fit_rate(history)
    return FlowResult(x0, limit, history, res, status, rate,
                      checkpoints=checkpoints, checkpoint_mu=cp_mu)


def _fit_rate(history: list[tuple[float, float]]) -> float:
    """Fitted exponential decay rate of f_p(x(t)) - f_p(limit)."""
    if len(history) < 4:
        return 0.0
    f_inf = history[-1][1]
    pts = [(t, f - f_inf) for t, f in history[:-1] if f - f_inf > 1e-14]
    if len(pts) < 3:
        return 0.0
    ts = np.array([p[0] for p in pts])
    ls = np.log([p[1] for p in pts])
    a = np.vstack([ts, np.ones_like(ts)]).T
    slope, _ = np.linalg.lstsq(a, ls, rcond=None)[0]
    rate = -float(slope)
    return rate if math.isfinite(rate) else 0.0


def group_tracking(x0: Point, flow: FlowResult, spec: CompatibleGroupSpec,
                   threshold: float = 1e-5) -> dict:
    """Integrate g' = g mu_p(x(t)) along the flow checkpoints (g(0) = e)
    and certify x(t) = g(t)^{-1} x0 at every checkpoint.

    Returns the max checkpoint distance, the max |det g - 1| drift, and
    the integrated g(t).  A certificate above the threshold issues an
    orbit-drift warning (integration too coarse), never a silent pass.
    """
    if point_distance(flow.start, x0) > 1e-12:
        raise InvalidInputError("flow was not produced from this start point")
    n = spec.n
    g = np.eye(n, dtype=complex)
    worst = 0.0
    det_drift = 0.0
    mus = flow.checkpoint_mu
    if len(mus) != len(flow.checkpoints):
        mus = [mu_p(pt, spec).entries for _, pt in flow.checkpoints]
    prev_t = flow.checkpoints[0][0]
    prev_mu = mus[0]
    for (t_i, pt_i), mu_i in zip(flow.checkpoints[1:], mus[1:]):
        dt = t_i - prev_t
        # second-order Magnus step on the sampled coefficient path
        avg = 0.5 * (prev_mu + mu_i)
        w, v = np.linalg.eigh(avg)
        g = g @ ((v * np.exp(dt * w)) @ v.conj().T)
        prev_t, prev_mu = t_i, mu_i
        g_inv_amb = spec.embed_group(np.linalg.inv(g))
        worst = max(worst, point_distance(act(g_inv_amb, x0), pt_i))
        det_drift = max(det_drift, abs(np.linalg.det(g) - 1.0))
    if worst > threshold:
        warnings.warn(
            f"group tracking certificate {worst:.3g} exceeds {threshold:.3g}",
            OrbitDriftWarning,
        )
    flow.group_certificate = worst
    return {"certificate": worst, "det_drift": det_drift, "g_final": g}
