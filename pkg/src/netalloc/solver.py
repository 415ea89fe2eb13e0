"""Feasibility-preserving saddle-point iterations and their certification.

The iteration updates both variables from the same iterate (Jacobi style):

    x  <-  x - alpha*beta * (W kron I_n) * grad_x L(x, mu)
    mu <-  max(0, mu + alpha * (g(x) - eps*mu))

Because ``1'W = 0``, the primal update never leaves the affine set
``sum_i x_i = x_tot`` once started on it, and because ``W1 = 0`` the saddle
point of the regularized Lagrangian is a fixed point. Step sizes can be
certified: with ``phi = min(nu, eps)`` and ``F`` a Lipschitz constant of the
stacked gradient map, the conditions

    beta * lambda_max(W) < 1 + phi/F    and    alpha < 2*kappa / (C^2 F^2)

with ``C = max(beta*lambda_max(W), 1)`` and
``kappa = phi - F*(beta*lambda_max(W) - 1)`` guarantee per-iteration
contraction of the squared distance to the saddle point by

    r = 1 - 2*alpha*kappa + alpha^2 C^2 F^2 .

For non-symmetric ``W`` the same role is played by singular values, with
the spectral quantities evaluated on the complement of the consensus
direction (the only subspace the iterates can move in).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BarrierBreakdown,
    DimensionMismatch,
    InfeasibleStart,
    MissingMatrix,
    NoFeasibleBeta,
    OutsideBall,
)
from .graphs import WeightMatrix
from .problem import (
    StackedPoint,
    constraint_values,
    gradient_block,
    gradient_blocks,
    _check_point,
)

__all__ = [
    "StepSizes",
    "Trace",
    "Certificate",
    "LipschitzEstimate",
    "EmpiricalConstants",
    "primal_step",
    "dual_step",
    "run",
    "certify",
    "max_beta_nonsymmetric",
    "estimate_lipschitz",
    "violation_bound",
    "suboptimality_bound",
    "empirical_constants",
    "combine_blocks",
]

BACKTRACK_FLOOR = 1e-12
START_FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class StepSizes:
    """Strictly positive step sizes: ``alpha`` (gradient) and ``beta`` (mixing)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("step sizes must be strictly positive")


def combine_blocks(row_items, blocks):
    """Weighted block sum ``sum_j w_ij * blocks[j]`` in ascending-``j`` order.

    Single source of truth for the per-node mixing arithmetic; both the
    centralized iteration and the per-node simulator programs use it, which
    keeps the two bit-for-bit comparable.
    """
    items = iter(row_items)
    j, w = next(items)
    acc = w * blocks[j]
    for j, w in items:
        acc += w * blocks[j]
    return acc


def dual_update(mu, vals, alpha, epsilon):
    """Projected dual ascent step ``max(0, mu + alpha*(g - eps*mu))``."""
    return np.maximum(0.0, mu + alpha * (vals - epsilon * mu))


def _primal_blocks(p, w, step_scale, X, G):
    out = np.empty_like(X)
    for i in range(p.node_count):
        out[i] = X[i] - step_scale * combine_blocks(w.row_items(i), G)
    return out


def primal_step(p, w, s, z):
    """One resource-preserving primal update; returns the next flat ``x``.

    Node ``i`` only combines gradient blocks of its closed neighborhood,
    so the step is computable from neighbor data alone.
    """
    x, mu = _check_point(p, z)
    X = x.reshape(p.node_count, p.n)
    G = gradient_blocks(p, X, mu)
    return _primal_blocks(p, w, s.alpha * s.beta, X, G).ravel()


def dual_step(p, s, z):
    """One projected dual update; returns the next ``mu``."""
    x, mu = _check_point(p, z)
    X = x.reshape(p.node_count, p.n)
    return dual_update(mu, constraint_values(p, X), s.alpha, p.epsilon)


# ---------------------------------------------------------------------------
# iteration driver


@dataclass
class Trace:
    """Per-iteration records of a solver run.

    ``tau``, ``feasibility``, ``grad_x_norm``, ``grad_mu_norm`` (and
    ``dist_to_reference`` when a reference point was supplied) are aligned
    arrays with one entry per recorded iterate, including the initial one.
    ``snapshots`` holds ``(tau, x, mu)`` copies on the requested schedule.
    """

    tau: np.ndarray
    feasibility: np.ndarray
    grad_x_norm: np.ndarray
    grad_mu_norm: np.ndarray
    dist_to_reference: np.ndarray | None
    snapshots: list
    termination: dict
    backtracks: list = field(default_factory=list)

    @property
    def final_x(self):
        return self.snapshots[-1][1]

    @property
    def final_mu(self):
        return self.snapshots[-1][2]

    @property
    def final_point(self):
        return StackedPoint(x=self.final_x, mu=self.final_mu)

    def snapshot_taus(self):
        return [t for t, _, _ in self.snapshots]

    def to_jsonl(self, path):
        """Write one JSON record per snapshot."""
        idx = {int(t): k for k, t in enumerate(self.tau)}
        with open(path, "w", encoding="utf-8") as fh:
            for t, _, _ in self.snapshots:
                k = idx[int(t)]
                rec = {
                    "tau": int(t),
                    "feasibility_residual": float(self.feasibility[k]),
                    "grad_x_norm": float(self.grad_x_norm[k]),
                    "grad_mu_norm": float(self.grad_mu_norm[k]),
                }
                if self.dist_to_reference is not None:
                    rec["dist_to_reference"] = float(self.dist_to_reference[k])
                fh.write(json.dumps(rec) + "\n")


def _interior_gaps(X, radii):
    return np.asarray(radii) - np.linalg.norm(X, axis=1)


def run(
    p,
    w,
    s,
    max_iter,
    residual_tol=0.0,
    snapshot_every=0,
    barrier=None,
    reference=None,
    x0=None,
    mu0=None,
):
    """Run the saddle-point iteration and record a :class:`Trace`.

    Parameters
    ----------
    p : ProblemInstance
    w : WeightMatrix
    s : StepSizes
    max_iter : int
        Iteration budget (the primary stopping rule).
    residual_tol : float, optional
        Also stop once ``||z_next - z|| <= residual_tol``; ``0`` disables.
    snapshot_every : int, optional
        Keep full ``(x, mu)`` copies every так many iterations (``0`` keeps
        only the initial and final states).
    barrier : BarrierConfig, optional
        Keep every ``x_i`` strictly inside its ball by augmenting the
        Lagrangian with a log barrier and backtracking the primal step
        (halving its scale) whenever the proposal would leave a ball.
    reference : StackedPoint, optional
        Record the distance to this point at every iterate.
    x0, mu0 : array_like, optional
        Start point; defaults to the uniform resource split and zero duals.

    Raises
    ------
    InfeasibleStart
        If ``x0`` violates the resource constraint by more than ``1e-9``.
    OutsideBall
        If a barrier is given and the start is not strictly interior.
    BarrierBreakdown
        If barrier backtracking reaches its floor scale of ``1e-12``.
    """
    N, n = p.node_count, p.n
    X = (
        p.uniform_split() if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    )
    if X.size != p.dim_x:
        raise DimensionMismatch(f"x0 must have {p.dim_x} entries")
    X = X.reshape(N, n)
    mu = np.zeros(p.m) if mu0 is None else np.asarray(mu0, dtype=float).ravel().copy()
    if mu.size != p.m:
        raise DimensionMismatch(f"mu0 must have {p.m} entries")

    start_res = float(np.linalg.norm(X.sum(axis=0) - p.x_tot))
    if start_res > START_FEASIBILITY_TOL:
        raise InfeasibleStart(
            f"initial resource residual {start_res:.3e} exceeds {START_FEASIBILITY_TOL:.0e}"
        )
    radii = None
    if barrier is not None:
        radii = np.asarray(barrier.radii, dtype=float)
        if radii.size != N:
            raise DimensionMismatch("barrier needs one radius per node")
        if np.any(_interior_gaps(X, radii) <= 0.0):
            raise OutsideBall("initial point is not strictly inside the barrier balls")
        margins = BACKTRACK_FLOOR * radii

    if reference is not None:
        z_ref = reference.stacked()

    step_scale = s.alpha * s.beta
    alpha, eps, x_tot = s.alpha, p.epsilon, p.x_tot
    rows = [w.row_items(i) for i in range(N)]
    taus, feas, gxn, gmn = [], [], [], []
    dref = [] if reference is not None else None
    snapshots = []
    backtracks = []
    reason = "max_iter"
    deltas = np.empty_like(X)
    sqrt, dot = math.sqrt, np.dot

    def _barrier_terms(G):
        norms = np.linalg.norm(X, axis=1)
        gaps = radii - norms
        for i in range(N):
            if norms[i] > 0.0:
                G[i] += X[i] / (barrier.t * gaps[i] * norms[i])

    def _record(tau, G, gmu):
        taus.append(tau)
        bal = X.sum(axis=0) - x_tot
        feas.append(sqrt(dot(bal, bal)))
        gf = G.ravel()
        gxn.append(sqrt(dot(gf, gf)))
        gmn.append(sqrt(dot(gmu, gmu)) if gmu.size else 0.0)
        if dref is not None:
            dref.append(
                float(np.linalg.norm(np.concatenate([X.ravel(), mu]) - z_ref))
            )

    def _snapshot(tau):
        snapshots.append((tau, X.ravel().copy(), mu.copy()))

    tau = 0
    _snapshot(0)
    while True:
        G = gradient_blocks(p, X, mu)
        if barrier is not None:
            _barrier_terms(G)
        gmu = constraint_values(p, X) - eps * mu
        _record(tau, G, gmu)
        if tau >= max_iter:
            break

        for i in range(N):
            deltas[i] = combine_blocks(rows[i], G)

        if barrier is None:
            X_new = X - step_scale * deltas
        else:
            gamma = 1.0
            while True:
                X_new = X - (gamma * step_scale) * deltas
                if np.all(_interior_gaps(X_new, radii) >= margins):
                    break
                gamma *= 0.5
                if gamma < BACKTRACK_FLOOR:
                    raise BarrierBreakdown(
                        f"backtrack scale below {BACKTRACK_FLOOR:.0e} at iteration {tau}"
                    )
            if gamma < 1.0:
                backtracks.append((tau, gamma))

        mu_new = np.maximum(0.0, mu + alpha * gmu)
        if residual_tol > 0.0:
            dz = sqrt(
                float(np.sum((X_new - X) ** 2)) + float(np.sum((mu_new - mu) ** 2))
            )
        X, mu = X_new, mu_new
        tau += 1
        if snapshot_every and tau % snapshot_every == 0 and tau < max_iter:
            _snapshot(tau)
        if residual_tol > 0.0 and dz <= residual_tol:
            reason = "residual_tol"
            break

    if snapshots[-1][0] != tau:
        _snapshot(tau)
    if taus[-1] != tau:
        G = gradient_blocks(p, X, mu)
        if barrier is not None:
            _barrier_terms(G)
        _record(tau, G, constraint_values(p, X) - eps * mu)

    return Trace(
        tau=np.asarray(taus),
        feasibility=np.asarray(feas),
        grad_x_norm=np.asarray(gxn),
        grad_mu_norm=np.asarray(gmn),
        dist_to_reference=None if dref is None else np.asarray(dref),
        snapshots=snapshots,
        termination={
            "reason": reason,
            "max_iter": max_iter,
            "residual_tol": residual_tol,
            "barrier_backtrack_floor": BACKTRACK_FLOOR,
        },
        backtracks=backtracks,
    )


# ---------------------------------------------------------------------------
# step-size certification


@dataclass(frozen=True)
class Certificate:
    """Step-size certificate with its constants and verdict.

    ``rate`` is always ``1 - 2*alpha*kappa + alpha^2 * c_const^2 * f_phi^2``
    and is reported even when uncertified. ``reasons`` lists the violated
    conditions (empty when certified).
    """

    phi: float
    f_phi: float
    f_phi_source: str
    alpha: float
    beta: float
    symmetric_path: bool
    c_const: float
    kappa: float
    rate: float
    certified: bool
    reasons: tuple

    def as_dict(self):
        return {
            "phi": self.phi,
            "f_phi": self.f_phi,
            "f_phi_source": self.f_phi_source,
            "alpha": self.alpha,
            "beta": self.beta,
            "symmetric_path": self.symmetric_path,
            "c_const": self.c_const,
            "kappa": self.kappa,
            "rate": self.rate,
            "verdict": "certified" if self.certified else "uncertified",
            "reasons": list(self.reasons),
        }

    def to_json(self, path=None):
        text = json.dumps(self.as_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def _spectral_value(spectral, name):
    if isinstance(spectral, dict):
        return float(spectral[name])
    return float(getattr(spectral, name))


def deflated_sigma_max(m):
    """Largest singular value restricted to the non-consensus subspace.

    For a matrix with zero row and column sums the all-ones direction is a
    structural null direction of both the iteration and the iterate error,
    so spectral conditions are evaluated after deflating it:
    ``sigma_max(M + (1/N)*11')`` (the added rank-one term zeroes the
    consensus direction without touching the rest).
    """
    m = np.asarray(m, dtype=float)
    N = m.shape[0]
    return float(
        np.linalg.svd(m + np.ones((N, N)) / N, compute_uv=False)[0]
    )


def certify(spectral, phi, f_phi, s, w_matrix=None, symmetric=None, f_phi_source="analytic"):
    """Evaluate the step-size conditions and the contraction rate.

    Parameters
    ----------
    spectral : SpectralSummary or dict
        Spectral constants of the weight matrix (``lambda_max``,
        ``sigma_max``).
    phi : float
        Strong-monotonicity constant, ``min(nu, eps)`` for this Lagrangian.
    f_phi : float
        Lipschitz constant of the stacked gradient map (analytic or from
        :func:`estimate_lipschitz`).
    s : StepSizes
    w_matrix : WeightMatrix or array, optional
        Required on the non-symmetric path, where ``beta*W - I`` must be
        formed explicitly.
    symmetric : bool, optional
        Force a path; by default inferred from ``w_matrix`` (symmetric
        path when no matrix is given).
    f_phi_source : str
        Recorded provenance of ``f_phi``: ``"analytic"`` or ``"estimated"``.

    Returns
    -------
    Certificate
    """
    if phi <= 0 or f_phi <= 0:
        raise ValueError("phi and f_phi must be strictly positive")
    entries = None
    if w_matrix is not None:
        entries = (
            w_matrix.entries if isinstance(w_matrix, WeightMatrix) else np.asarray(w_matrix, dtype=float)
        )
    if symmetric is None:
        if w_matrix is None:
            symmetric = True
        elif isinstance(w_matrix, WeightMatrix):
            symmetric = w_matrix.symmetric
        else:
            symmetric = bool(np.allclose(entries, entries.T, rtol=0.0, atol=1e-12))

    reasons = []
    if symmetric:
        lam = _spectral_value(spectral, "lambda_max")
        c_const = max(s.beta * lam, 1.0)
        kappa = phi - f_phi * (s.beta * lam - 1.0)
        if not s.beta * lam < 1.0 + phi / f_phi:
            reasons.append(
                f"beta*lambda_max = {s.beta * lam:.6g} must be < 1 + phi/F = {1.0 + phi / f_phi:.6g}"
            )
    else:
        if entries is None:
            raise MissingMatrix("non-symmetric certification needs the weight matrix")
        N = entries.shape[0]
        sig_shift = deflated_sigma_max(s.beta * entries - np.eye(N))
        sig = _spectral_value(spectral, "sigma_max")
        c_const = max(s.beta * sig, 1.0)
        kappa = phi - f_phi * sig_shift
        if not sig_shift < phi / f_phi:
            reasons.append(
                f"sigma_max(beta*W - I) = {sig_shift:.6g} must be < phi/F = {phi / f_phi:.6g}"
            )

    rate = 1.0 - 2.0 * s.alpha * kappa + s.alpha**2 * c_const**2 * f_phi**2
    alpha_bound = 2.0 * kappa / (c_const**2 * f_phi**2)
    if not (kappa > 0.0 and s.alpha < alpha_bound):
        reasons.append(
            f"alpha = {s.alpha:.6g} must be < 2*kappa/(C^2 F^2) = {alpha_bound:.6g}"
        )

    return Certificate(
        phi=float(phi),
        f_phi=float(f_phi),
        f_phi_source=f_phi_source,
        alpha=s.alpha,
        beta=s.beta,
        symmetric_path=bool(symmetric),
        c_const=float(c_const),
        kappa=float(kappa),
        rate=float(rate),
        certified=not reasons,
        reasons=tuple(reasons),
    )


def max_beta_nonsymmetric(w, phi, f_phi, tol=1e-10):
    """Largest mixing scale satisfying the non-symmetric spectral condition.

    Searches ``(0, 2/sigma_max(W)]`` for the largest ``beta`` with
    ``sigma_max(beta*W - I) < phi/f_phi`` (consensus direction deflated).
    The map ``beta -> sigma_max(beta*W - I)`` is convex, so a golden-section
    pass locates its minimizer and a bisection then finds the upper boundary
    of the feasible interval to within ``tol``.

    Raises
    ------
    NoFeasibleBeta
        If even the minimizing ``beta`` violates the condition.
    """
    if phi <= 0 or f_phi <= 0:
        raise ValueError("phi and f_phi must be strictly positive")
    entries = w.entries if isinstance(w, WeightMatrix) else np.asarray(w, dtype=float)
    N = entries.shape[0]
    eye = np.eye(N)
    ratio = phi / f_phi
    sigma_w = float(np.linalg.svd(entries, compute_uv=False)[0])
    beta_hi = 2.0 / sigma_w

    def s_of(beta):
        return deflated_sigma_max(beta * entries - eye)

    # golden-section minimization of the convex profile
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, beta_hi
    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = s_of(c), s_of(d)
    while hi - lo > max(tol, 1e-13):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = s_of(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = s_of(d)
    beta_min = 0.5 * (lo + hi)
    if not s_of(beta_min) < ratio:
        raise NoFeasibleBeta(
            f"min over beta of sigma_max(beta*W - I) = {s_of(beta_min):.6g} >= phi/F = {ratio:.6g}"
        )
    if s_of(beta_hi) < ratio:
        return beta_hi
    lo, hi = beta_min, beta_hi  # s(lo) < ratio <= s(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if s_of(mid) < ratio:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# constants for the certification and quality bounds


@dataclass(frozen=True)
class LipschitzEstimate:
    """Sampled Lipschitz constant; an estimate, never a certified value."""

    value: float
    samples: int
    seed: int
    source: str = "estimated"


def estimate_lipschitz(p, box, samples, seed, mu_radius=1.0):
    """Estimate the Lipschitz constant of the stacked gradient map by sampling.

    Draws ``samples`` random pairs with each ``x_i`` uniform in the ball of
    the given per-node radius around the uniform resource split and each
    dual component uniform in ``[0, mu_radius]``, takes the largest
    difference quotient of the stacked map, and multiplies by a 1.5 safety
    factor.

    Parameters
    ----------
    p : ProblemInstance
    box : float or sequence
        Per-node sampling radius (scalar broadcasts to every node).
    samples : int
        Number of sampled pairs (at least 2).
    seed : int
        Seed of the sampling stream, recorded in the result.
    mu_radius : float, optional
        Upper end of the dual sampling range.
    """
    if samples < 2:
        raise ValueError("at least 2 samples required")
    rng = np.random.default_rng(seed)
    N, n, m = p.node_count, p.n, p.m
    radii = np.broadcast_to(np.asarray(box, dtype=float), (N,))
    center = p.uniform_split().reshape(N, n)

    def draw():
        u = rng.standard_normal((N, n))
        norms = np.linalg.norm(u, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        radial = rng.random((N, 1)) ** (1.0 / n)
        X = center + radii[:, None] * radial * u / norms
        mu = mu_radius * rng.random(m)
        return X, mu

    def phi_map(X, mu):
        gx = gradient_blocks(p, X, mu).ravel()
        gmu = constraint_values(p, X) - p.epsilon * mu
        return np.concatenate([gx, -gmu])

    best = 0.0
    for _ in range(samples):
        Xa, mua = draw()
        Xb, mub = draw()
        dz = math.sqrt(
            float(np.sum((Xa - Xb) ** 2)) + float(np.sum((mua - mub) ** 2))
        )
        if dz == 0.0:
            continue
        dphi = float(np.linalg.norm(phi_map(Xa, mua) - phi_map(Xb, mub)))
        best = max(best, dphi / dz)
    return LipschitzEstimate(value=1.5 * best, samples=samples, seed=seed)


def violation_bound(md, m_mu, nu, epsilon):
    """Per-constraint cap on the inequality violation of the regularized optimum.

    Each component is ``md_i * m_mu * sqrt(eps / (2*nu))`` where ``md_i``
    bounds that constraint's gradient norm and ``m_mu`` bounds the dual
    norm.
    """
    md = np.atleast_1d(np.asarray(md, dtype=float))
    if np.any(md <= 0) or m_mu <= 0 or nu <= 0 or epsilon <= 0:
        raise ValueError("all bound inputs must be strictly positive")
    return md * m_mu * math.sqrt(epsilon / (2.0 * nu))


def suboptimality_bound(m_f, m_mu, d_const, nu, epsilon):
    """Cap on ``|f(x*) - f_opt|`` between regularized and original optima.

    ``m_f`` bounds the cost gradient norm, ``m_mu`` the dual norm and
    ``d_const`` the primal norm over the relevant region; the bound is
    ``m_f*m_mu*sqrt(eps/(2*nu)) + (nu/2)*d_const^2``.
    """
    if m_f <= 0 or m_mu <= 0 or d_const <= 0 or nu <= 0 or epsilon <= 0:
        raise ValueError("all bound inputs must be strictly positive")
    return m_f * m_mu * math.sqrt(epsilon / (2.0 * nu)) + 0.5 * nu * d_const**2


@dataclass(frozen=True)
class EmpiricalConstants:
    """Sampled bound constants, maxima over an iterate cloud inflated by 10%."""

    m_d: np.ndarray
    m_mu: float
    m_f: float
    d_const: float
    label: str = "empirical"


def empirical_constants(p, snapshots, inflate=1.1):
    """Bound constants sampled over recorded iterates.

    ``snapshots`` is an iterable of ``(tau, x, mu)`` triples (a
    :class:`Trace`'s ``snapshots`` list works directly; oracle points can
    be appended as extra triples). The maxima of the per-constraint
    gradient norms, the dual norm, the cost-gradient norm, and the primal
    norm over the cloud are inflated by the given factor and labeled
    "empirical"; they are not certified set maxima. Constants that come
    out exactly zero (a dual that never left the origin, say) are floored
    at ``1e-9`` so they remain usable in the bound formulas, which only
    grows the bounds.
    """
    floor = 1e-9
    m_d = np.full(p.m, floor)
    m_mu = floor
    m_f = floor
    d_const = floor
    for _, x, mu in snapshots:
        X = np.asarray(x, dtype=float).reshape(p.node_count, p.n)
        for q, (kind, key) in enumerate(p.constraint_index):
            if kind == "edge":
                i, j = key
                gi, gj = p.edge_constraints[key].grad(X[i], X[j])
                norm = math.sqrt(float(gi @ gi) + float(gj @ gj))
            else:
                gi = p.node_constraints[key].grad(X[key])
                norm = float(np.linalg.norm(gi))
            m_d[q] = max(m_d[q], norm)
        m_mu = max(m_mu, float(np.linalg.norm(mu)))
        cost_grad = np.concatenate(
            [p.costs[i].grad(X[i]) for i in range(p.node_count)]
        )
        m_f = max(m_f, float(np.linalg.norm(cost_grad)))
        d_const = max(d_const, float(np.linalg.norm(X)))
    return EmpiricalConstants(
        m_d=inflate * m_d,
        m_mu=inflate * m_mu,
        m_f=inflate * m_f,
        d_const=inflate * d_const,
    )
