"""Separable constrained problems and their regularized Lagrangian.

A problem couples per-node convex costs ``f_i`` with per-edge constraints
``g_ij(x_i, x_j) <= 0``, per-node constraints ``h_i(x_i) <= 0``, and the
resource-allocation equality ``sum_i x_i = x_tot``. The solver works on the
regularized Lagrangian

    L(x, mu) = f(x) + (nu/2)||x||^2 + mu' g(x) - (eps/2)||mu||^2

which is strictly convex in ``x`` and strictly concave in ``mu``.

Cost and constraint functions are closures with analytic gradients; the
quadratic forms needed by the built-in scenarios are provided here. The
inequality constraints are stacked edges first (edges sorted
lexicographically), then node constraints by node index; absent node
constraints (an unbounded limit) are simply omitted from the stack.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, OutsideBall
from .graphs import Graph, graph_from_json

__all__ = [
    "Quadratic",
    "DistanceCap",
    "BallCap",
    "LinearNode",
    "LinearEdge",
    "FunctionPair",
    "EdgeFunctionPair",
    "ProblemInstance",
    "NodeView",
    "StackedPoint",
    "BarrierConfig",
    "uniform_start",
    "eval_cost",
    "eval_constraints",
    "reg_lagrangian",
    "grad_x",
    "grad_mu",
    "gradient_block",
    "node_gradient",
    "barrier_lagrangian",
    "barrier_grad_x",
    "feasibility_residual",
    "quadratic_problem_from_json",
]


# ---------------------------------------------------------------------------
# built-in differentiable functions


class Quadratic:
    """Convex quadratic ``x'Qx + q'x + c`` over a single node variable.

    ``Q`` may be a scalar (meaning ``Q * I``) or an ``(n, n)`` array.
    """

    def __init__(self, Q, q=None, c=0.0, dim=None):
        if np.isscalar(Q):
            if dim is None and q is None:
                raise ValueError("scalar Q needs q or dim to fix the dimension")
            self.dim = dim if dim is not None else len(q)
            self._Q = float(Q)
            self._two_q = 2.0 * self._Q
            self._scalar = True
        else:
            self._Q = np.asarray(Q, dtype=float)
            self.dim = self._Q.shape[0]
            self._QpQT = self._Q + self._Q.T
            self._scalar = False
        self.q = (
            np.zeros(self.dim) if q is None else np.asarray(q, dtype=float)
        )
        self.c = float(c)

    @classmethod
    def shifted(cls, weight, center):
        """``weight * ||x - center||^2`` as a quadratic form."""
        center = np.asarray(center, dtype=float)
        return cls(
            weight,
            q=-2.0 * weight * center,
            c=weight * float(center @ center),
        )

    def value(self, x):
        if self._scalar:
            return self._Q * float(x @ x) + float(self.q @ x) + self.c
        return float(x @ (self._Q @ x)) + float(self.q @ x) + self.c

    def grad(self, x):
        if self._scalar:
            return self._two_q * x + self.q
        return self._QpQT @ x + self.q


class DistanceCap:
    """Edge constraint ``||x_i - x_j||^2 - R^2 <= 0``."""

    def __init__(self, radius):
        self.radius = float(radius)
        self._r2 = self.radius * self.radius

    def value(self, xi, xj):
        d = xi - xj
        return float(d @ d) - self._r2

    def grad(self, xi, xj):
        d = 2.0 * (xi - xj)
        return d, -d


class BallCap:
    """Node constraint ``||x - center||^2 - radius^2 <= 0``."""

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self._r2 = self.radius * self.radius

    def value(self, x):
        d = x - self.center
        return float(d @ d) - self._r2

    def grad(self, x):
        return 2.0 * (x - self.center)


class LinearNode:
    """Node constraint ``a'x - b <= 0``."""

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)

    def value(self, x):
        return float(self.a @ x) - self.b

    def grad(self, x):
        return self.a


class LinearEdge:
    """Edge constraint ``ai'xi + aj'xj - b <= 0``."""

    def __init__(self, ai, aj, b):
        self.ai = np.asarray(ai, dtype=float)
        self.aj = np.asarray(aj, dtype=float)
        self.b = float(b)

    def value(self, xi, xj):
        return float(self.ai @ xi) + float(self.aj @ xj) - self.b

    def grad(self, xi, xj):
        return self.ai, self.aj


class FunctionPair:
    """Wrap arbitrary ``value(x)`` / ``grad(x)`` callables as a node function."""

    def __init__(self, value_fn, grad_fn):
        self._value = value_fn
        self._grad = grad_fn

    def value(self, x):
        return float(self._value(x))

    def grad(self, x):
        return np.asarray(self._grad(x), dtype=float)


class EdgeFunctionPair:
    """Wrap ``value(xi, xj)`` / ``grad(xi, xj) -> (gi, gj)`` callables."""

    def __init__(self, value_fn, grad_fn):
        self._value = value_fn
        self._grad = grad_fn

    def value(self, xi, xj):
        return float(self._value(xi, xj))

    def grad(self, xi, xj):
        gi, gj = self._grad(xi, xj)
        return np.asarray(gi, dtype=float), np.asarray(gj, dtype=float)


# ---------------------------------------------------------------------------
# problem container


@dataclass(frozen=True)
class NodeView:
    """Node-local slice of a problem: exactly the data one node may read.

    Holds the node's own cost and constraint closures, the closures of its
    incident edge constraints with their stacked positions, and the
    regularization weight. The per-node gradient is computed from a view by
    :func:`node_gradient`, both centrally and inside the message-passing
    simulator.
    """

    node: int
    cost: object
    nu: float
    incident: tuple  # ((q, (i, j), edge_fn), ...) in stacked order
    node_q: object  # stacked index of the node constraint, or None
    node_fn: object  # the node constraint, or None


def node_gradient(view, x_of, mu_of, edge_grads=None):
    """Gradient block of the regularized Lagrangian for one node.

    ``x_of`` maps node ids to their current blocks (an ``(N, n)`` array or
    a plain dict both work); ``mu_of`` maps stacked constraint positions to
    dual values. Only ids in the node's closed neighborhood are touched.
    ``edge_grads`` may supply a per-evaluation memo dict so that each edge
    gradient pair is computed once per sweep; the memo only short-circuits
    identical calls, so results are unchanged bit for bit.
    """
    i = view.node
    xi = x_of[i]
    b = view.cost.grad(xi) + view.nu * xi
    for q, key, fn in view.incident:
        a, c = key
        if edge_grads is None:
            ga, gc = fn.grad(x_of[a], x_of[c])
        else:
            pair = edge_grads.get(key)
            if pair is None:
                pair = fn.grad(x_of[a], x_of[c])
                edge_grads[key] = pair
            ga, gc = pair
        b += mu_of[q] * (ga if i == a else gc)
    if view.node_q is not None:
        b += mu_of[view.node_q] * view.node_fn.grad(xi)
    return b


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable problem description.

    Parameters
    ----------
    graph : Graph
        Communication topology; edge constraints must live on its edges.
    n : int
        Per-node variable dimension.
    costs : sequence
        One cost object per node (``value`` / ``grad`` over ``R^n``).
    edge_constraints : dict
        Map from canonical edge ``(i, j)``, ``i < j``, to an edge function
        over ``R^{2n}``. Edges without a constraint are simply absent.
    node_constraints : sequence
        One node function or ``None`` per node.
    x_tot : array_like
        Total resource vector in ``R^n``.
    nu, epsilon : float
        Strictly positive primal/dual regularization weights.
    """

    graph: Graph
    n: int
    costs: tuple
    edge_constraints: dict
    node_constraints: tuple
    x_tot: np.ndarray
    nu: float
    epsilon: float
    # derived, filled in __post_init__
    constraint_index: tuple = field(init=False, repr=False)
    _incident: tuple = field(init=False, repr=False)
    _node_q: tuple = field(init=False, repr=False)
    _views: tuple = field(init=False, repr=False)

    def __post_init__(self):
        N = self.graph.node_count
        if len(self.costs) != N:
            raise DimensionMismatch(f"expected {N} costs, got {len(self.costs)}")
        if len(self.node_constraints) != N:
            raise DimensionMismatch(
                f"expected {N} node-constraint slots, got {len(self.node_constraints)}"
            )
        if self.nu <= 0 or self.epsilon <= 0:
            raise ValueError("nu and epsilon must be strictly positive")
        x_tot = np.asarray(self.x_tot, dtype=float)
        if x_tot.shape != (self.n,):
            raise DimensionMismatch(f"x_tot must have shape ({self.n},)")
        x_tot.setflags(write=False)
        object.__setattr__(self, "x_tot", x_tot)
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "node_constraints", tuple(self.node_constraints))

        edge_set = set(self.graph.edges)
        for key in self.edge_constraints:
            if key not in edge_set:
                raise DimensionMismatch(f"constraint on non-edge {key}")

        index = [("edge", e) for e in sorted(self.edge_constraints)]
        index += [
            ("node", i)
            for i in range(N)
            if self.node_constraints[i] is not None
        ]
        object.__setattr__(self, "constraint_index", tuple(index))

        incident = [[] for _ in range(N)]
        node_q = [None] * N
        for q, (kind, key) in enumerate(index):
            if kind == "edge":
                i, j = key
                incident[i].append((q, key, self.edge_constraints[key]))
                incident[j].append((q, key, self.edge_constraints[key]))
            else:
                node_q[key] = q
        object.__setattr__(self, "_incident", tuple(tuple(t) for t in incident))
        object.__setattr__(self, "_node_q", tuple(node_q))
        views = tuple(
            NodeView(
                node=i,
                cost=self.costs[i],
                nu=self.nu,
                incident=self._incident[i],
                node_q=node_q[i],
                node_fn=self.node_constraints[i],
            )
            for i in range(N)
        )
        object.__setattr__(self, "_views", views)

    @property
    def node_count(self):
        return self.graph.node_count

    @property
    def m(self):
        """Number of stacked inequality-constraint components."""
        return len(self.constraint_index)

    def node_view(self, i):
        """The node-local data slice used by per-node gradient evaluation."""
        return self._views[i]

    @property
    def dim_x(self):
        return self.n * self.graph.node_count

    def uniform_split(self):
        """The always-feasible start ``x_i = x_tot / N`` for every node."""
        return np.tile(self.x_tot / self.graph.node_count, self.graph.node_count)


@dataclass(frozen=True)
class StackedPoint:
    """A primal/dual pair ``(x, mu)`` with ``mu >= 0`` componentwise."""

    x: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        mu = np.asarray(self.mu, dtype=float).ravel()
        if mu.size and float(mu.min()) < 0.0:
            raise ValueError("dual variables must be nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "mu", mu)

    def stacked(self):
        return np.concatenate([self.x, self.mu])


@dataclass(frozen=True)
class BarrierConfig:
    """Log-barrier configuration keeping each ``x_i`` inside a ball.

    ``radii`` holds one positive radius per node; ``t`` is the barrier
    sharpness (larger ``t`` means a thinner boundary layer).
    """

    radii: tuple
    t: float

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        if any(r <= 0 for r in radii):
            raise ValueError("barrier radii must be positive")
        if self.t <= 0:
            raise ValueError("barrier sharpness t must be positive")
        object.__setattr__(self, "radii", radii)


def uniform_start(p):
    """Feasible default start: uniform resource split, zero duals."""
    return StackedPoint(x=p.uniform_split(), mu=np.zeros(p.m))


# ---------------------------------------------------------------------------
# evaluations


def _check_x(p, x):
    x = np.asarray(x, dtype=float).ravel()
    if x.size != p.dim_x:
        raise DimensionMismatch(f"x must have {p.dim_x} entries, got {x.size}")
    return x


def _check_point(p, z):
    x = _check_x(p, z.x)
    if z.mu.size != p.m:
        raise DimensionMismatch(f"mu must have {p.m} entries, got {z.mu.size}")
    return x, z.mu


def eval_cost(p, x):
    """Total separable cost ``sum_i f_i(x_i)``."""
    X = _check_x(p, x).reshape(p.node_count, p.n)
    return float(sum(p.costs[i].value(X[i]) for i in range(p.node_count)))


def constraint_values(p, X):
    """Stacked constraint values from a ``(N, n)`` state array."""
    vals = np.empty(p.m)
    for q, (kind, key) in enumerate(p.constraint_index):
        if kind == "edge":
            i, j = key
            vals[q] = p.edge_constraints[key].value(X[i], X[j])
        else:
            vals[q] = p.node_constraints[key].value(X[key])
    return vals


def eval_constraints(p, x):
    """Stacked inequality-constraint values ``g(x)`` (edges first)."""
    X = _check_x(p, x).reshape(p.node_count, p.n)
    return constraint_values(p, X)


def gradient_block(p, i, x_of, mu):
    """Gradient of the regularized Lagrangian w.r.t. node ``i``'s block.

    Delegates to :func:`node_gradient` on the node's local view; the
    message-passing simulator runs the same routine on the same views, so
    centralized and distributed arithmetic agree term for term.
    """
    return node_gradient(p._views[i], x_of, mu)


def gradient_blocks(p, X, mu):
    """All node gradient blocks as an ``(N, n)`` array."""
    out = np.empty_like(X)
    views = p._views
    memo = {}
    for i in range(p.node_count):
        out[i] = node_gradient(views[i], X, mu, memo)
    return out


def reg_lagrangian(p, z):
    """Regularized Lagrangian value at a stacked point."""
    x, mu = _check_point(p, z)
    g = eval_constraints(p, x)
    return (
        eval_cost(p, x)
        + 0.5 * p.nu * float(x @ x)
        + float(mu @ g)
        - 0.5 * p.epsilon * float(mu @ mu)
    )


def grad_x(p, z):
    """Primal gradient ``∇f(x) + nu x + sum_q mu_q ∇g_q(x)`` (flat)."""
    x, mu = _check_point(p, z)
    X = x.reshape(p.node_count, p.n)
    return gradient_blocks(p, X, mu).ravel()


def grad_mu(p, z):
    """Dual gradient ``g(x) - eps mu``."""
    x, mu = _check_point(p, z)
    return eval_constraints(p, x) - p.epsilon * mu


def feasibility_residual(p, x):
    """Euclidean distance of ``sum_i x_i`` from the resource total."""
    X = _check_x(p, x).reshape(p.node_count, p.n)
    return float(np.linalg.norm(X.sum(axis=0) - p.x_tot))


# ---------------------------------------------------------------------------
# log-barrier variant


def _ball_gaps(p, X, b):
    norms = np.linalg.norm(X, axis=1)
    return np.asarray(b.radii) - norms, norms


def barrier_lagrangian(p, z, b):
    """Barrier-augmented Lagrangian; requires every ``x_i`` strictly inside."""
    x, _ = _check_point(p, z)
    X = x.reshape(p.node_count, p.n)
    gaps, _ = _ball_gaps(p, X, b)
    if np.any(gaps <= 0):
        bad = int(np.argmin(gaps))
        raise OutsideBall(f"node {bad + 1} is outside its barrier ball")
    return reg_lagrangian(p, z) - float(np.log(gaps).sum()) / b.t


def barrier_grad_x(p, z, b):
    """Primal gradient of the barrier-augmented Lagrangian (flat).

    The barrier adds ``(1/t) * x_i / (||x_i|| * (radius_i - ||x_i||))``
    per block; at ``x_i = 0`` the block contribution is zero (the barrier
    is locally flat there).
    """
    x, mu = _check_point(p, z)
    X = x.reshape(p.node_count, p.n)
    gaps, norms = _ball_gaps(p, X, b)
    if np.any(gaps <= 0):
        bad = int(np.argmin(gaps))
        raise OutsideBall(f"node {bad + 1} is outside its barrier ball")
    G = gradient_blocks(p, X, mu)
    for i in range(p.node_count):
        if norms[i] > 0.0:
            G[i] += X[i] / (b.t * gaps[i] * norms[i])
    return G.ravel()


# ---------------------------------------------------------------------------
# JSON ingestion of the built-in quadratic problem family


def quadratic_problem_from_json(doc):
    """Build a quadratic problem from its JSON description.

    The document holds the graph, per-node quadratic costs, an optional
    distance cap per edge, optional per-node ball caps, and the coupling
    data::

        {
          "graph": {"nodes": N, "edges": [[i, j], ...]},   # 1-based
          "nodes": [{"Q": 1.0, "q": [0, 0], "c": 0.0,
                     "v_max": null, "ref": [0, 0]}, ...],
          "range_r": 1.2,            # scalar, or list per sorted edge
          "x_tot": [...], "nu": 1.0, "epsilon": 0.1
        }

    ``v_max: null`` means the node has no constraint; otherwise the node
    gets ``||x_i - ref_i||^2 <= v_max^2`` (``ref`` defaults to the origin).
    """
    if not isinstance(doc, dict):
        s = str(doc)
        if s.lstrip().startswith("{"):
            doc = json.loads(s)
        else:
            with open(doc, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
    g = graph_from_json(doc["graph"])
    x_tot = np.asarray(doc["x_tot"], dtype=float)
    n = x_tot.size

    costs = []
    node_cons = []
    for spec in doc["nodes"]:
        Q = spec.get("Q", 0.0)
        q = spec.get("q")
        c = spec.get("c", 0.0)
        if np.isscalar(Q):
            costs.append(Quadratic(Q, q=q, c=c, dim=n))
        else:
            costs.append(Quadratic(np.asarray(Q, dtype=float), q=q, c=c))
        v = spec.get("v_max")
        if v is None:
            node_cons.append(None)
        else:
            ref = np.asarray(spec.get("ref", np.zeros(n)), dtype=float)
            node_cons.append(BallCap(ref, float(v)))
    if len(costs) != g.node_count:
        raise DimensionMismatch(
            f"{len(costs)} node entries for a {g.node_count}-node graph"
        )

    edge_cons = {}
    r = doc.get("range_r")
    if r is not None:
        if np.isscalar(r):
            radii = [float(r)] * g.edge_count
        else:
            radii = [float(v) for v in r]
            if len(radii) != g.edge_count:
                raise DimensionMismatch("range_r list must match edge count")
        for e, rad in zip(g.edges, radii):
            edge_cons[e] = DistanceCap(rad)

    return ProblemInstance(
        graph=g,
        n=n,
        costs=tuple(costs),
        edge_constraints=edge_cons,
        node_constraints=tuple(node_cons),
        x_tot=x_tot,
        nu=float(doc["nu"]),
        epsilon=float(doc["epsilon"]),
    )
