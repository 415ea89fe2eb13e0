"""Synchronous message-passing execution of the saddle-point iteration.

Every node runs the same two-phase program over the communication graph:

phase 1
    compute the local gradient block from the own state, the cached
    neighbor blocks, and the local/mirrored duals; send it to all
    neighbors;
phase 2
    mix the received gradient blocks with the own one through the local
    weight row, update the own primal block, update the duals this node
    owns (each edge dual lives at the smaller endpoint, node duals at
    their node), and broadcast the new block plus owned edge duals.

One full round equals one centralized iteration exactly: the per-node
arithmetic is shared with the centralized solver (same routines, same term
order), so reassembled states are bit-for-bit comparable. Rounds are
strictly synchronous; a missing neighbor message is a protocol error, not
a tolerated fault.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InfeasibleStart, MissingMessage, ScheduleMismatch
from .problem import constraint_values, gradient_blocks, node_gradient
from .solver import START_FEASIBILITY_TOL, Trace, combine_blocks

__all__ = [
    "NodeProgram",
    "RoundMessage",
    "MessageStats",
    "EquivalenceReport",
    "partition",
    "run_round",
    "run_network",
    "reassemble",
    "equivalence_check",
]


@dataclass
class RoundMessage:
    """A directed message along one graph edge.

    Phase-1 payloads carry ``{"grad_block": vec}``; phase-2 payloads carry
    ``{"x_block": vec, "edge_duals": {edge: value}}``.
    """

    sender: int
    recipient: int
    phase: int
    payload: dict

    @property
    def size(self):
        """Number of scalars on the wire."""
        if self.phase == 1:
            return int(self.payload["grad_block"].size)
        return int(self.payload["x_block"].size) + len(self.payload["edge_duals"])


@dataclass
class NodeProgram:
    """State and local data of one node.

    A node stores only data indexed by itself or an incident edge: its own
    block ``x``, the local cost/constraint closures (via the node view),
    its weight row over the closed neighborhood, the duals it owns (edges
    where it is the smaller endpoint, plus its own node constraint), the
    read-only mirrors of the remaining incident edge duals, and the cached
    neighbor blocks from the last phase 2.
    """

    id: int
    x: np.ndarray
    view: object
    neighbor_weights: list  # [(j, W_ij)] ascending, includes self
    owned_edge_duals: dict  # {(i, j): value}, this node is min(i, j)
    mirrored_edge_duals: dict  # {(i, j): value}, owned by the other endpoint
    node_dual: object  # float or None
    neighbor_x: dict  # {j: block} cache, refreshed every phase 2
    alpha: float
    beta: float
    epsilon: float
    edge_q: dict  # {(i, j): stacked constraint position}
    _grad_block: np.ndarray = field(default=None, repr=False)

    @property
    def neighbors(self):
        return [j for j, _ in self.neighbor_weights if j != self.id]

    def _mu_of(self):
        mu = {self.edge_q[k]: v for k, v in self.mirrored_edge_duals.items()}
        mu.update({self.edge_q[k]: v for k, v in self.owned_edge_duals.items()})
        if self.view.node_q is not None:
            mu[self.view.node_q] = self.node_dual
        return mu

    def phase1(self):
        """Compute the local gradient block and emit it to all neighbors."""
        x_of = dict(self.neighbor_x)
        x_of[self.id] = self.x
        self._grad_block = node_gradient(self.view, x_of, self._mu_of())
        return [
            RoundMessage(self.id, j, 1, {"grad_block": self._grad_block})
            for j in self.neighbors
        ]

    def phase2(self, grad_blocks):
        """Mix gradient blocks, step the own block and owned duals, broadcast.

        ``grad_blocks`` maps neighbor ids to their phase-1 blocks. Dual
        updates read the pre-step positions, matching the simultaneous
        (Jacobi) centralized update.
        """
        blocks = dict(grad_blocks)
        blocks[self.id] = self._grad_block
        for j, _ in self.neighbor_weights:
            if j not in blocks:
                raise MissingMessage(
                    f"node {self.id + 1} lacks a gradient block from node {j + 1}"
                )
        delta = combine_blocks(self.neighbor_weights, blocks)

        x_of = dict(self.neighbor_x)
        x_of[self.id] = self.x
        alpha, eps = self.alpha, self.epsilon
        for key, fn in self._owned_edge_fns():
            a, c = key
            g = fn.value(x_of[a], x_of[c])
            mu = self.owned_edge_duals[key]
            self.owned_edge_duals[key] = max(0.0, mu + alpha * (g - eps * mu))
        if self.view.node_q is not None:
            g = self.view.node_fn.value(self.x)
            mu = self.node_dual
            self.node_dual = max(0.0, mu + alpha * (g - eps * mu))

        self.x = self.x - (self.alpha * self.beta) * delta
        out = []
        for j in self.neighbors:
            key = (min(self.id, j), max(self.id, j))
            duals = (
                {key: self.owned_edge_duals[key]}
                if key in self.owned_edge_duals
                else {}
            )
            out.append(
                RoundMessage(self.id, j, 2, {"x_block": self.x, "edge_duals": duals})
            )
        return out

    def _owned_edge_fns(self):
        for q, key, fn in self.view.incident:
            if key in self.owned_edge_duals:
                yield key, fn

    def apply_phase2(self, msg):
        """Refresh the neighbor cache and dual mirrors from a phase-2 message."""
        self.neighbor_x[msg.sender] = msg.payload["x_block"]
        for key, val in msg.payload["edge_duals"].items():
            self.mirrored_edge_duals[key] = val


@dataclass
class MessageStats:
    """Wire accounting of a network run."""

    rounds: int = 0
    messages_total: int = 0
    scalars_transferred: int = 0
    log: list = None

    def as_dict(self):
        return {
            "rounds": self.rounds,
            "messages_total": self.messages_total,
            "scalars_transferred": self.scalars_transferred,
        }


def partition(p, w, s, x0=None, mu0=None):
    """Split a problem into per-node programs.

    Each edge constraint's dual is owned by its smaller endpoint; node
    constraints stay at their node. Node ``i`` receives row ``i`` of the
    weight matrix restricted to its closed neighborhood, and its neighbor
    caches are seeded from the initial state (setup data, not round
    traffic).
    """
    N, n = p.node_count, p.n
    X = (p.uniform_split() if x0 is None else np.asarray(x0, dtype=float).ravel())
    if X.size != p.dim_x:
        raise DimensionMismatch(f"x0 must have {p.dim_x} entries")
    X = X.reshape(N, n).copy()
    mu = np.zeros(p.m) if mu0 is None else np.asarray(mu0, dtype=float).ravel()
    if mu.size != p.m:
        raise DimensionMismatch(f"mu0 must have {p.m} entries")

    programs = []
    nbrs = p.graph.neighbors
    for i in range(N):
        view = p.node_view(i)
        owned, mirrored, edge_q = {}, {}, {}
        for q, key, _ in view.incident:
            edge_q[key] = q
            if key[0] == i:
                owned[key] = float(mu[q])
            else:
                mirrored[key] = float(mu[q])
        node_dual = float(mu[view.node_q]) if view.node_q is not None else None
        programs.append(
            NodeProgram(
                id=i,
                x=X[i].copy(),
                view=view,
                neighbor_weights=w.row_items(i),
                owned_edge_duals=owned,
                mirrored_edge_duals=mirrored,
                node_dual=node_dual,
                neighbor_x={j: X[j].copy() for j in nbrs[i]},
                alpha=s.alpha,
                beta=s.beta,
                epsilon=p.epsilon,
                edge_q=edge_q,
            )
        )
    return programs


def run_round(nodes, inbox):
    """Execute one synchronous two-phase round.

    ``inbox`` is the previous round's outbox (its phase-2 messages refresh
    the neighbor caches before anything else); pass ``None`` on the first
    round, where the caches still hold their seeds. Returns the mutated
    node list and the full outbox of the round (phase-1 and phase-2
    messages, ``4E`` in total).

    Raises
    ------
    MissingMessage
        If a required neighbor message is absent, which signals a protocol
        bug rather than a tolerated fault.
    """
    by_id = {node.id: node for node in nodes}
    if inbox is not None:
        received = {node.id: set() for node in nodes}
        for msg in inbox:
            if msg.phase != 2:
                continue
            by_id[msg.recipient].apply_phase2(msg)
            received[msg.recipient].add(msg.sender)
        for node in nodes:
            missing = set(node.neighbors) - received[node.id]
            if missing:
                j = min(missing)
                raise MissingMessage(
                    f"node {node.id + 1} got no phase-2 message from node {j + 1}"
                )

    outbox = []
    grad_inbox = {node.id: {} for node in nodes}
    for node in nodes:
        for msg in node.phase1():
            outbox.append(msg)
            grad_inbox[msg.recipient][msg.sender] = msg.payload["grad_block"]
    for node in nodes:
        outbox.extend(node.phase2(grad_inbox[node.id]))
    return nodes, outbox


def reassemble(p, nodes):
    """Stack the per-node states back into global ``(x, mu)`` arrays."""
    X = np.stack([node.x for node in nodes])
    mu = np.empty(p.m)
    for q, (kind, key) in enumerate(p.constraint_index):
        if kind == "edge":
            mu[q] = nodes[key[0]].owned_edge_duals[key]
        else:
            mu[q] = nodes[key].node_dual
    return X, mu


def run_network(
    p,
    w,
    s,
    iters,
    snapshot_every=0,
    x0=None,
    mu0=None,
    reference=None,
    collect_log=False,
):
    """Run ``iters`` synchronous rounds over the graph.

    Returns a :class:`~netalloc.solver.Trace` with the same schema as the
    centralized run (records come from the reassembled global state) and
    the :class:`MessageStats` of the execution. With ``collect_log`` the
    stats carry a per-message ``(from, to, phase, size)`` log, 1-based ids.
    """
    nodes = partition(p, w, s, x0=x0, mu0=mu0)
    X, mu = reassemble(p, nodes)
    start_res = float(np.linalg.norm(X.sum(axis=0) - p.x_tot))
    if start_res > START_FEASIBILITY_TOL:
        raise InfeasibleStart(
            f"initial resource residual {start_res:.3e} exceeds {START_FEASIBILITY_TOL:.0e}"
        )
    if reference is not None:
        z_ref = reference.stacked()

    stats = MessageStats(log=[] if collect_log else None)
    taus, feas, gxn, gmn = [], [], [], []
    dref = [] if reference is not None else None
    snapshots = [(0, X.ravel().copy(), mu.copy())]

    def _record(tau, X, mu):
        taus.append(tau)
        feas.append(float(np.linalg.norm(X.sum(axis=0) - p.x_tot)))
        gxn.append(float(np.linalg.norm(gradient_blocks(p, X, mu))))
        gmn.append(
            float(np.linalg.norm(constraint_values(p, X) - p.epsilon * mu))
        )
        if dref is not None:
            dref.append(
                float(np.linalg.norm(np.concatenate([X.ravel(), mu]) - z_ref))
            )

    _record(0, X, mu)
    inbox = None
    for rnd in range(1, iters + 1):
        nodes, outbox = run_round(nodes, inbox)
        inbox = outbox
        stats.rounds += 1
        stats.messages_total += len(outbox)
        stats.scalars_transferred += sum(m.size for m in outbox)
        if stats.log is not None:
            stats.log.extend(
                (m.sender + 1, m.recipient + 1, m.phase, m.size) for m in outbox
            )
        X, mu = reassemble(p, nodes)
        _record(rnd, X, mu)
        if snapshot_every and rnd % snapshot_every == 0 and rnd < iters:
            snapshots.append((rnd, X.ravel().copy(), mu.copy()))
    if snapshots[-1][0] != stats.rounds:
        snapshots.append((stats.rounds, X.ravel().copy(), mu.copy()))

    trace = Trace(
        tau=np.asarray(taus),
        feasibility=np.asarray(feas),
        grad_x_norm=np.asarray(gxn),
        grad_mu_norm=np.asarray(gmn),
        dist_to_reference=None if dref is None else np.asarray(dref),
        snapshots=snapshots,
        termination={
            "reason": "max_iter",
            "max_iter": iters,
            "residual_tol": 0.0,
            "barrier_backtrack_floor": 0.0,
        },
    )
    return trace, stats


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of comparing two traces snapshot by snapshot."""

    max_deviation: float
    first_divergent_tau: object  # int or None

    def __float__(self):
        return self.max_deviation


def equivalence_check(trace_a, trace_b, atol=0.0):
    """Compare two traces on their common snapshot schedule.

    Returns the max-norm deviation over all snapshots and the first
    snapshot index where the deviation exceeds ``atol``.

    Raises
    ------
    ScheduleMismatch
        If the two traces did not snapshot the same iterations.
    """
    taus_a = trace_a.snapshot_taus()
    taus_b = trace_b.snapshot_taus()
    if taus_a != taus_b:
        raise ScheduleMismatch(f"snapshot schedules differ: {taus_a} vs {taus_b}")
    worst = 0.0
    first = None
    for (t, xa, mua), (_, xb, mub) in zip(trace_a.snapshots, trace_b.snapshots):
        za = np.concatenate([xa, mua])
        zb = np.concatenate([xb, mub])
        dev = float(np.max(np.abs(za - zb))) if za.size else 0.0
        if dev > atol and first is None:
            first = t
        worst = max(worst, dev)
    return EquivalenceReport(max_deviation=worst, first_divergent_tau=first)
