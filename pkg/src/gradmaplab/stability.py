"""Stability classification and empirical stratification.

Two independent routes decide stability:

* the flow route: run the negative gradient flow of f_p (which stays in
  the G-orbit) and look at the limiting value of f_p;
* the analytic route: sample maximal weights lambda(x, beta) over unit
  directions of p -- any negative weight witnesses instability.

The two verdicts are never averaged; a disagreement beyond tolerance is
flagged as ``undetermined``.  For the diagonal torus the semistability
question is decided exactly from the support-weight polytope of the
frame minors, which also yields a separating direction whenever the
point is unstable.

Stratum labels are chamber images of flow limits: label(x) =
sorted spectrum of mu_p(limit).  Labels with norm below tolerance merge
into the single minimal stratum.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidInputError
from .flows import FlowResult, maximal_weight, negative_flow
from .grassmann import Point, ProductPoint, act, induced_field
from .groups import (
    CompatibleGroupSpec,
    GroupElement,
    LieVector,
    chamber_project,
)
from .moment_maps import mu_p
from .seeding import rng_for

TOL_F = 1e-8          # f_p residual separating semistable from unstable limits
TOL_LAMBDA = 1e-6     # negativity threshold on sampled maximal weights
TOL_LABEL = 1e-4      # merge radius for stratum labels
TOL_STABILIZER = 1e-7  # singular-value threshold for the p-stabilizer


@dataclass(frozen=True)
class StabilityVerdict:
    point_id: int
    verdict: str  # stable | semistable_only | unstable | undetermined
    f_p_limit: float
    min_lambda_sampled: float
    n_directions: int
    stabilizer_p_dim: int
    diagnostics: str = ""

    def is_semistable(self) -> bool:
        return self.verdict in ("stable", "semistable_only")


@dataclass
class StratumLabel:
    beta_plus: np.ndarray
    norm: float
    member_count: int = 0
    representative_ids: list[int] = field(default_factory=list)


def stabilizer_p_dim(x: Point, spec: CompatibleGroupSpec,
                     threshold: float = TOL_STABILIZER) -> int:
    """Dimension of {beta in p : beta_X(x) = 0} by singular-value
    thresholding of the linear map beta -> beta_X(x)."""
    basis = spec.p_basis()
    cols = []
    for b in basis:
        b_amb = LieVector(spec.embed_alg(b), "iu")
        v = induced_field(None, b_amb, x)
        if isinstance(x, ProductPoint):
            cols.append(np.concatenate([
                np.asarray(v.first.value).ravel().view(float),
                np.asarray(v.second.value).ravel().view(float),
            ]))
        else:
            cols.append(np.asarray(v.value).ravel().view(float))
    mat = np.column_stack(cols)
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv <= threshold))


def _analytic_directions(x: Point, spec: CompatibleGroupSpec,
                         n_directions: int, seed: int,
                         flow_limit: Optional[Point]) -> list[LieVector]:
    """Antithetic Haar pairs on the unit sphere of p, plus the
    distinguished candidates -mu_p(x) and -mu_p(flow limit)."""
    rng = rng_for(seed, 0xD1)
    dirs: list[LieVector] = []
    n_pairs = max(1, n_directions // 2)
    for _ in range(n_pairs):
        b = spec.random_p(rng)
        dirs.append(b)
        dirs.append(LieVector(-b.entries, "p"))
    for candidate_pt in (x, flow_limit):
        if candidate_pt is None:
            continue
        b = mu_p(candidate_pt, spec).entries
        nb = np.linalg.norm(b)
        if nb > 1e-12:
            dirs.append(LieVector(-b / nb, "p"))
    return dirs


def classify(x: Point, spec: CompatibleGroupSpec, tol_f: float = TOL_F,
             tol_lambda: float = TOL_LAMBDA, n_directions: int = 16,
             seed: int = 0, point_id: int = 0,
             flow_tol: float = 1e-7, t_max: float = 1e4) -> StabilityVerdict:
    """Classify a point as stable / semistable_only / unstable by the
    flow criterion (infimum of ||mu_p|| along the orbit) cross-checked
    against sampled maximal weights."""
    try:
        flow = negative_flow(x, spec, tol=flow_tol, t_max=t_max,
                             checkpoint_dt=float("inf"))
    except Exception as exc:  # pragma: no cover
        return StabilityVerdict(point_id, "undetermined", float("nan"), float("nan"),
                                0, -1, diagnostics=f"flow failure: {exc}")
    if flow.status == "diverged_error":
        return StabilityVerdict(point_id, "undetermined", flow.f_limit, float("nan"),
                                0, -1, diagnostics=flow.diagnostics)
    f_limit = flow.f_limit
    dirs = _analytic_directions(x, spec, n_directions, seed, flow.limit)
    min_lambda = float("inf")
    unconverged = 0
    for b in dirs:
        ws = maximal_weight(x, b, spec)
        if not ws.converged:
            unconverged += 1
            continue
        min_lambda = min(min_lambda, ws.lambda_limit)

    flow_semistable = f_limit <= tol_f
    analytic_semistable = min_lambda >= -tol_lambda
    diag = ""
    if flow_semistable and analytic_semistable:
        sdim = stabilizer_p_dim(x, spec)
        verdict = "stable" if sdim == 0 else "semistable_only"
    elif (not flow_semistable) and (not analytic_semistable):
        verdict = "unstable"
        sdim = stabilizer_p_dim(x, spec)
    else:
        verdict = "undetermined"
        sdim = stabilizer_p_dim(x, spec)
        diag = (f"criteria disagree: f_p_limit={f_limit:.3g}, "
                f"min lambda={min_lambda:.3g}, unconverged={unconverged}")
    return StabilityVerdict(point_id, verdict, f_limit, min_lambda,
                            len(dirs), sdim, diagnostics=diag)


# -- exact torus semistability ----------------------------------------------------


def _support_weight_vectors(frame: np.ndarray, n_model: int, offset: int,
                            minor_floor: float = 1e-12) -> tuple[list[np.ndarray], float]:
    """Support weights of a frame for the embedded diagonal torus: each
    k-subset S of ambient coordinates with a nonvanishing minor
    contributes the traceless diagonal restriction of its indicator.
    Returns the weights and the smallest nonzero |minor| seen."""
    n, k = frame.shape
    weights = []
    closest = float("inf")
    for subset in itertools.combinations(range(n), k):
        minor = abs(np.linalg.det(frame[list(subset), :]))
        if minor > minor_floor:
            closest = min(closest, minor)
            d = np.zeros(n_model)
            for i in subset:
                if offset <= i < offset + n_model:
                    d[i - offset] = 1.0
            weights.append(d - d.sum() / n_model)
        elif minor > 0:
            closest = min(closest, minor)
    return weights, closest


def _dedupe(rows: list[np.ndarray], tol: float = 1e-12) -> np.ndarray:
    out: list[np.ndarray] = []
    for r in rows:
        if not any(np.linalg.norm(r - o) <= tol for o in out):
            out.append(r)
    return np.array(out)


def _zero_in_hull(points: np.ndarray) -> tuple[bool, Optional[np.ndarray]]:
    """Exact membership 0 in conv(points) by a small feasibility LP; when
    infeasible, return a separating direction (max-margin witness)."""
    m = points.shape[0]
    if m == 0:
        return False, None
    # feasibility: points^T c = 0, sum c = 1, c >= 0
    a_eq = np.vstack([points.T, np.ones(m)])
    b_eq = np.zeros(points.shape[1] + 1)
    b_eq[-1] = 1.0
    res = linprog(np.zeros(m), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * m,
                  method="highs")
    if res.success:
        return True, None
    # separating direction: maximize margin t s.t. points @ y <= -t, ||y||_inf <= 1
    d = points.shape[1]
    # variables: y (d), t (1); minimize -t
    a_ub = np.hstack([points, np.ones((m, 1))])
    b_ub = np.zeros(m)
    bounds = [(-1.0, 1.0)] * d + [(None, None)]
    res2 = linprog(np.concatenate([np.zeros(d), [-1.0]]), A_ub=a_ub, b_ub=b_ub,
                   bounds=bounds, method="highs")
    witness = None
    if res2.success and res2.x is not None and res2.x[-1] > 0:
        y = res2.x[:d]
        y = y - y.mean()  # traceless
        nrm = np.linalg.norm(y)
        if nrm > 1e-12:
            witness = y / nrm
    return False, witness


@dataclass(frozen=True)
class AbelianVerdict:
    verdict: str  # semistable | unstable | undetermined
    weights: np.ndarray
    separating_direction: Optional[np.ndarray]
    min_minor: float


def abelian_semistable_exact(x: Point, spec: CompatibleGroupSpec,
                             minor_floor: float = 1e-12) -> AbelianVerdict:
    """Exact semistability for the diagonal torus: the point is
    semistable iff 0 lies in the convex hull of its support weights
    (the k-subsets of coordinates with nonvanishing frame minors).

    This is the exact limiting behavior of the weight function on
    diagonal directions; when unstable, a separating diagonal direction
    with lambda(x, .) < 0 is returned.  Minors within an order of
    magnitude of the floor flag the verdict as undetermined.
    """
    n_model, off = spec.n, spec.block_offset
    if isinstance(x, ProductPoint):
        w1, m1 = _support_weight_vectors(x.first.frame, n_model, off, minor_floor)
        w2, m2 = _support_weight_vectors(np.conj(x.second.frame), n_model, off, minor_floor)
        weights = [a + b for a in w1 for b in w2]
        closest = min(m1, m2)
    else:
        weights, closest = _support_weight_vectors(x.frame, n_model, off, minor_floor)
    pts = _dedupe(weights)
    inside, witness = _zero_in_hull(pts)
    verdict = "semistable" if inside else "unstable"
    if closest < 10 * minor_floor:
        verdict = "undetermined"
    direction = None
    if witness is not None:
        direction = witness
    return AbelianVerdict(verdict, pts, direction, closest)


def intersection_check_semi(x: Point, spec: CompatibleGroupSpec, n_k: int = 50,
                            seed: int = 0, verdict: Optional[StabilityVerdict] = None) -> dict:
    """Check the intersection description of the semistable set: x is
    G-semistable iff every K-translate is torus-semistable.

    For n_k Haar-random k in K, tests torus semistability of k^{-1} x.
    If x classifies semistable, every torus test must pass; if some
    torus test fails, x must classify unstable.
    """
    if verdict is None:
        verdict = classify(x, spec, seed=seed)
    rng = rng_for(seed, 0xCC)
    failures = 0
    tested = 0
    ks = [GroupElement(np.eye(spec.n, dtype=complex), "K")]
    ks += [spec.haar_k(rng) for _ in range(max(0, n_k - 1))]
    for k in ks:
        k_inv_amb = spec.embed_group(k.matrix.conj().T)
        av = abelian_semistable_exact(act(k_inv_amb, x), spec)
        if av.verdict == "undetermined":
            continue
        tested += 1
        if av.verdict == "unstable":
            failures += 1
    consistent = True
    if verdict.is_semistable() and failures > 0:
        consistent = False
    if failures > 0 and verdict.verdict not in ("unstable", "undetermined"):
        consistent = False
    return {
        "verdict": verdict.verdict,
        "n_tested": tested,
        "torus_failures": failures,
        "consistent": consistent,
    }


# -- stratification ----------------------------------------------------------------


def _centralizer_projection(m: np.ndarray, beta_diag: np.ndarray,
                            tol: float = 1e-8) -> np.ndarray:
    """Orthogonal projection of a symmetric/Hermitian matrix onto the
    centralizer of a sorted diagonal matrix (block-diagonal part)."""
    d = np.real(np.diagonal(beta_diag))
    out = np.zeros_like(m)
    n = m.shape[0]
    for i in range(n):
        for j in range(n):
            if abs(d[i] - d[j]) <= tol:
                out[i, j] = m[i, j]
    return out


@dataclass(frozen=True)
class StratumResult:
    label: np.ndarray
    norm: float
    shifted_residual: float
    flow: FlowResult


def stratum_of(x: Point, spec: CompatibleGroupSpec, tol: float = 1e-5,
               flow_tol: float = 1e-7, t_max: float = 1e4) -> StratumResult:
    """Flow-limit stratum label: the chamber image of mu_p at the limit.

    Also reports the shifted-map residual at the normalized limit: the
    limit is rotated by the eigenframe of mu_p(limit) so its gradient map
    is the sorted diagonal beta, and the residual is
    || proj_{centralizer(beta)}(mu_p) - beta || there, which must vanish
    on a genuine critical point of the stratum.
    """
    flow = negative_flow(x, spec, tol=flow_tol, t_max=t_max,
                         checkpoint_dt=float("inf"))
    if flow.status != "converged":
        raise InvalidInputError(
            f"unconverged flow (status {flow.status}); no stratum label assigned"
        )
    b = mu_p(flow.limit, spec)
    label = chamber_project(b)
    _, v = np.linalg.eigh(b.entries)
    v = v[:, ::-1]  # eigenframe sorted to match the chamber order
    if spec.model_name in ("sl_n_real_form", "custom_block"):
        v = np.real(v)
        if np.linalg.det(v) < 0:
            v = v.copy()
            v[:, -1] = -v[:, -1]
    k_inv = v.conj().T.astype(complex)
    det = np.linalg.det(k_inv)
    k_inv = GroupElement(k_inv / det ** (1.0 / spec.n), "K")
    normalized = act(spec.embed_group(k_inv.matrix), flow.limit)
    beta_diag = np.diag(label).astype(complex)
    mp_norm = mu_p(normalized, spec).entries
    shifted = _centralizer_projection(mp_norm, beta_diag) - beta_diag
    residual = float(np.linalg.norm(shifted))
    return StratumResult(label, float(np.linalg.norm(label)), residual, flow)


@dataclass
class StrataCensus:
    labels: list[StratumLabel]
    n_samples: int
    minimal_fraction: float
    unlabeled: int
    order_consistency: dict
    sample_labels: list = field(default_factory=list)  # per-sample census index or None
    sample_images: list = field(default_factory=list)  # per-sample chamber image or None


def _merge_label(census: list[StratumLabel], label: np.ndarray, pid: int,
                 merge_radius: float) -> None:
    nrm = float(np.linalg.norm(label))
    target = label if nrm > TOL_LABEL else np.zeros_like(label)
    for entry in census:
        if np.linalg.norm(entry.beta_plus - target) <= merge_radius:
            entry.member_count += 1
            if len(entry.representative_ids) < 5:
                entry.representative_ids.append(pid)
            return
    census.append(StratumLabel(target, float(np.linalg.norm(target)), 1, [pid]))


def strata_survey(scenario, n_samples: int, seed: int,
                  merge_radius: float = TOL_LABEL,
                  flow_tol: float = 1e-6) -> StrataCensus:
    """Empirical stratum census over scenario samples.

    Clusters flow-limit labels, reports the minimal-norm fraction, and an
    empirical closure-order check: for pairs of nearby samples in
    different strata, the larger-norm label should sit on the
    topologically thin side (fewer same-stratum close neighbors).
    """
    from .grassmann import point_distance, sample_scenario

    xs = sample_scenario(scenario, n_samples, seed)
    census: list[StratumLabel] = []
    labels = []
    unlabeled = 0
    for i, x in enumerate(xs):
        try:
            res = stratum_of(x, scenario.group, flow_tol=flow_tol)
        except InvalidInputError:
            unlabeled += 1
            labels.append(None)
            continue
        labels.append(res.label)
        _merge_label(census, res.label, i, merge_radius)
    census.sort(key=lambda e: e.norm)
    minimal_fraction = census[0].member_count / max(1, n_samples - unlabeled) if census else 0.0

    assign: list = []
    for lab in labels:
        if lab is None:
            assign.append(None)
        else:
            assign.append(min(range(len(census)),
                              key=lambda j: np.linalg.norm(census[j].beta_plus - lab)))

    # closure order: cross-stratum near pairs, counted by which side is thin
    order = {"near_pairs": 0, "consistent_pairs": 0}
    if len(census) > 1:
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                if assign[i] is None or assign[j] is None or assign[i] == assign[j]:
                    continue
                if point_distance(xs[i], xs[j]) < 0.5:
                    order["near_pairs"] += 1
                    hi = max(assign[i], assign[j], key=lambda a: census[a].norm)
                    lo = assign[j] if hi == assign[i] else assign[i]
                    if census[hi].member_count <= census[lo].member_count:
                        order["consistent_pairs"] += 1
    return StrataCensus(census, n_samples, minimal_fraction, unlabeled, order,
                        sample_labels=assign, sample_images=labels)
