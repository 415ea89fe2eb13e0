"""Barycenter target tracking: per-step problems, warm starts, logs.

A team of planar robots keeps a moving target at the barycenter of their
positions while respecting pairwise range limits on communication edges
and optional per-step movement limits. At each discrete time ``k`` this is
one resource-allocation problem (total ``N * y(k)``) with quadratic
movement costs, solved by the saddle-point iteration warm-started from the
previous configuration shifted by the target displacement — a start that
is feasible by construction.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import oracle as oracle_ref
from .distributed import run_network
from .errors import DimensionMismatch
from .graphs import build_graph, design_weights, graph_from_json, graph_to_json
from .problem import (
    BallCap,
    DistanceCap,
    ProblemInstance,
    Quadratic,
    feasibility_residual,
)
from .solver import StepSizes, run

__all__ = [
    "Scenario",
    "StepRecord",
    "TrajectoryLog",
    "demo_graph",
    "default_scenario",
    "synthetic_path",
    "step_problem",
    "warm_start",
    "auto_positions",
    "run_tracking",
    "export_log",
    "load_trajectory_json",
]

# 7-node demo topology: a ring 1-2-3-4-5-6-7-1 with the extra chord 1-4
DEMO_EDGES_1BASED = [[1, 2], [2, 3], [3, 4], [1, 4], [4, 5], [5, 6], [6, 7], [1, 7]]
ORIGINAL_GAP_MAX_DIM = 6  # in-loop original-problem solves only at this size


def demo_graph():
    """The 7-node demo communication graph."""
    return build_graph(7, [(i - 1, j - 1) for i, j in DEMO_EDGES_1BASED])


def synthetic_path(steps):
    """Smooth default target path ``y(k) = (0.02 k, 0.5 sin(0.04 k))``."""
    k = np.arange(steps + 1, dtype=float)
    return np.stack([0.02 * k, 0.5 * np.sin(0.04 * k)], axis=1)


@dataclass(frozen=True)
class Scenario:
    """Full description of a tracking run.

    ``target_path`` is a ``(K+1, 2)`` array of target positions for
    ``k = 0..K``; ``v_max`` entries are positive floats or ``None`` for
    unbounded nodes; ``initial_positions`` is ``"auto"`` (a regular polygon
    of circumradius 0.6 around ``y(0)``) or an explicit ``(N, 2)`` array.
    """

    graph: object
    q_weights: tuple
    range_r: float
    v_max: tuple
    target_path: np.ndarray
    initial_positions: object
    nu: float
    epsilon: float
    alpha: float
    beta: float
    iters_per_step: int
    weight_strategy: str = "laplacian"
    target_spec: object = field(default=None, repr=False)

    def __post_init__(self):
        N = self.graph.node_count
        if len(self.q_weights) != N or len(self.v_max) != N:
            raise DimensionMismatch("q_weights and v_max must have one entry per node")
        if self.range_r <= 0:
            raise ValueError("range_r must be positive")
        path = np.asarray(self.target_path, dtype=float)
        if path.ndim != 2 or path.shape[1] != 2 or path.shape[0] < 2:
            raise ValueError("target_path needs at least two planar points (K >= 1)")
        path.setflags(write=False)
        object.__setattr__(self, "target_path", path)
        for v in self.v_max:
            if v is not None and v <= 0:
                raise ValueError("v_max entries must be positive or null")
        if not isinstance(self.initial_positions, str):
            pos = np.asarray(self.initial_positions, dtype=float)
            if pos.shape != (N, 2):
                raise DimensionMismatch(f"initial_positions must be ({N}, 2)")
            pos.setflags(write=False)
            object.__setattr__(self, "initial_positions", pos)

    @property
    def steps(self):
        return self.target_path.shape[0] - 1

    @classmethod
    def from_json(cls, doc):
        if not isinstance(doc, dict):
            s = str(doc)
            if s.lstrip().startswith("{"):
                doc = json.loads(s)
            else:
                with open(doc, "r", encoding="utf-8") as fh:
                    doc = json.load(fh)
        g = graph_from_json(doc["graph"])
        spec = doc["target_path"]
        if isinstance(spec, dict):
            path = synthetic_path(int(spec["synthetic"]["steps"]))
        else:
            path = np.asarray(spec, dtype=float)
        solver = doc["solver"]
        return cls(
            graph=g,
            q_weights=tuple(float(q) for q in doc["q_weights"]),
            range_r=float(doc["range_r"]),
            v_max=tuple(None if v is None else float(v) for v in doc["v_max"]),
            target_path=path,
            initial_positions=doc.get("initial_positions", "auto"),
            nu=float(solver["nu"]),
            epsilon=float(solver["epsilon"]),
            alpha=float(solver["alpha"]),
            beta=float(solver["beta"]),
            iters_per_step=int(solver["iters_per_step"]),
            weight_strategy=doc.get("weight_strategy", "laplacian"),
            target_spec=spec,
        )

    def to_json(self):
        if self.target_spec is not None:
            path_doc = self.target_spec
        else:
            path_doc = [[float(a), float(b)] for a, b in self.target_path]
        pos = self.initial_positions
        if not isinstance(pos, str):
            pos = [[float(a), float(b)] for a, b in pos]
        return {
            "graph": graph_to_json(self.graph),
            "q_weights": list(self.q_weights),
            "range_r": self.range_r,
            "v_max": [v for v in self.v_max],
            "target_path": path_doc,
            "initial_positions": pos,
            "solver": {
                "nu": self.nu,
                "epsilon": self.epsilon,
                "alpha": self.alpha,
                "beta": self.beta,
                "iters_per_step": self.iters_per_step,
            },
            "weight_strategy": self.weight_strategy,
        }


def default_scenario(steps=150):
    """The built-in 7-robot demo scenario."""
    return Scenario(
        graph=demo_graph(),
        q_weights=(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0),
        range_r=1.2,
        v_max=(None, None, None, None, None, 0.5, None),
        target_path=synthetic_path(steps),
        initial_positions="auto",
        nu=10.0,
        epsilon=0.01,
        alpha=0.01,
        beta=0.2,
        iters_per_step=2000,
        target_spec={"synthetic": {"steps": steps}},
    )


def auto_positions(s):
    """Regular polygon of circumradius 0.6 around ``y(0)``, barycenter exact."""
    N = s.graph.node_count
    y0 = s.target_path[0]
    if N == 1:
        return y0.reshape(1, 2).copy()
    ang = 2.0 * np.pi * np.arange(N) / N
    pos = y0 + 0.6 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pos += y0 - pos.mean(axis=0)
    return pos


def initial_positions(s):
    if isinstance(s.initial_positions, str):
        if s.initial_positions != "auto":
            raise ValueError(f"unknown initial_positions: {s.initial_positions!r}")
        return auto_positions(s)
    return np.asarray(s.initial_positions, dtype=float).copy()


def step_problem(s, k, prev_positions):
    """Problem instance for time step ``k`` given the step ``k-1`` positions.

    Movement costs ``Q_i ||x_i - x_i(k-1)||^2``, range constraints
    ``||x_i - x_j||^2 <= R^2`` on every edge, movement caps
    ``||x_i - x_i(k-1)||^2 <= v_max_i^2`` where bounded, and the coupling
    total ``sum_i x_i = N * y(k)``.
    """
    if k < 1:
        raise ValueError("step problems are defined for k >= 1")
    prev = np.asarray(prev_positions, dtype=float).reshape(s.graph.node_count, 2)
    costs = tuple(
        Quadratic.shifted(s.q_weights[i], prev[i])
        for i in range(s.graph.node_count)
    )
    edge_cons = {e: DistanceCap(s.range_r) for e in s.graph.edges}
    node_cons = tuple(
        None if s.v_max[i] is None else BallCap(prev[i], s.v_max[i])
        for i in range(s.graph.node_count)
    )
    return ProblemInstance(
        graph=s.graph,
        n=2,
        costs=costs,
        edge_constraints=edge_cons,
        node_constraints=node_cons,
        x_tot=s.graph.node_count * s.target_path[k],
        nu=s.nu,
        epsilon=s.epsilon,
    )


def warm_start(s, k, prev_positions=None):
    """Feasible start for the step-``k`` solve.

    For ``k = 0`` every robot sits on the target. For ``k >= 1`` the
    previous positions are shifted by the target displacement, which keeps
    the barycenter exactly on ``y(k)`` whenever the previous configuration
    was feasible for ``y(k-1)``.
    """
    N = s.graph.node_count
    if k == 0:
        return np.tile(s.target_path[0], (N, 1))
    prev = np.asarray(prev_positions, dtype=float).reshape(N, 2)
    return prev + (s.target_path[k] - s.target_path[k - 1])


@dataclass
class StepRecord:
    """Everything logged about one solved time step."""

    k: int
    target: np.ndarray
    positions: np.ndarray
    feasibility_residual: float
    barycenter_residual: float
    max_edge_distance: float
    iterations: int
    wall_time: float
    oracle_deviation: float = None
    original_gap: float = None


@dataclass
class TrajectoryLog:
    """Initial configuration plus one record per solved step."""

    initial_positions: np.ndarray
    records: list
    summary: dict
    mode: str
    message_stats: dict = None

    def positions_array(self):
        """Positions including the initial ones, shape ``(K+1, N, 2)``."""
        return np.stack([self.initial_positions] + [r.positions for r in self.records])


def _max_edge_distance(g, X):
    if not g.edges:
        return 0.0
    return max(float(np.linalg.norm(X[i] - X[j])) for i, j in g.edges)


def run_tracking(s, mode="centralized", oracle_check=False, oracle_tol=1e-7):
    """Track the whole target path.

    For each ``k`` builds the step problem, warm-starts from the shifted
    previous configuration, runs the configured number of iterations in
    centralized or message-passing mode, and records the step. With
    ``oracle_check`` every step is re-solved from a cold start by the
    reference solver and the deviation logged; on very small instances the
    gap between the regularized and the original optimum is logged too.
    Solver errors abort with the failing step index attached.
    """
    if mode not in ("centralized", "distributed"):
        raise ValueError(f"unknown mode: {mode!r}")
    w = design_weights(s.graph, s.weight_strategy)
    steps = StepSizes(alpha=s.alpha, beta=s.beta)
    X = initial_positions(s)
    records = []
    msg_stats_total = {"rounds": 0, "messages_total": 0, "scalars_transferred": 0}
    t_start = time.perf_counter()
    for k in range(1, s.steps + 1):
        p_k = step_problem(s, k, X)
        x0 = warm_start(s, k, X).ravel()
        t0 = time.perf_counter()
        try:
            if mode == "centralized":
                trace = run(p_k, w, steps, max_iter=s.iters_per_step, x0=x0)
            else:
                trace, mstats = run_network(
                    p_k, w, steps, iters=s.iters_per_step, x0=x0
                )
                for key in msg_stats_total:
                    msg_stats_total[key] += getattr(mstats, key)
        except Exception as exc:
            exc.args = (f"step k={k}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        wall = time.perf_counter() - t0
        X = trace.final_x.reshape(s.graph.node_count, 2)
        feas = feasibility_residual(p_k, trace.final_x)
        rec = StepRecord(
            k=k,
            target=s.target_path[k].copy(),
            positions=X.copy(),
            feasibility_residual=feas,
            barycenter_residual=feas / s.graph.node_count,
            max_edge_distance=_max_edge_distance(s.graph, X),
            iterations=s.iters_per_step,
            wall_time=wall,
        )
        if oracle_check:
            sol = oracle_ref.solve_regularized_centralized(p_k, tol=oracle_tol)
            rec.oracle_deviation = float(
                np.linalg.norm(trace.final_x - sol.x_star)
            )
            if p_k.dim_x <= ORIGINAL_GAP_MAX_DIM:
                x_opt, f_opt = oracle_ref.solve_original_small(p_k)
                rec.original_gap = float(np.linalg.norm(sol.x_star - x_opt))
        records.append(rec)

    summary = {
        "steps": s.steps,
        "max_barycenter_residual": max(r.barycenter_residual for r in records),
        "max_feasibility_residual": max(r.feasibility_residual for r in records),
        "wall_time_total": time.perf_counter() - t_start,
    }
    if oracle_check:
        summary["max_oracle_deviation"] = max(r.oracle_deviation for r in records)
        gaps = [r.original_gap for r in records if r.original_gap is not None]
        if gaps:
            summary["max_original_gap"] = max(gaps)
    return TrajectoryLog(
        initial_positions=initial_positions(s),
        records=records,
        summary=summary,
        mode=mode,
        message_stats=msg_stats_total if mode == "distributed" else None,
    )


# ---------------------------------------------------------------------------
# export / import

FMT = "%.12g"


def _log_to_doc(log):
    summary = {k: v for k, v in log.summary.items() if not k.startswith("wall_time")}
    doc = {
        "mode": log.mode,
        "initial_positions": [[float(a), float(b)] for a, b in log.initial_positions],
        "records": [],
        "summary": summary,
    }
    if log.message_stats is not None:
        doc["message_stats"] = dict(log.message_stats)
    for r in log.records:
        rec = {
            "k": r.k,
            "y": [float(v) for v in r.target],
            "positions": [[float(a), float(b)] for a, b in r.positions],
            "feasibility_residual": r.feasibility_residual,
            "barycenter_residual": r.barycenter_residual,
            "max_edge_distance": r.max_edge_distance,
            "iterations": r.iterations,
        }
        if r.oracle_deviation is not None:
            rec["oracle_deviation"] = r.oracle_deviation
        if r.original_gap is not None:
            rec["original_gap"] = r.original_gap
        doc["records"].append(rec)
    return doc


def export_log(log, out_dir, fmt="csv"):
    """Write a trajectory log to disk; returns the written paths.

    CSV mode writes ``robots.csv`` (``k,robot_id,x1,x2`` for every solved
    step, 1-based robot ids, 12 significant digits) and ``targets.csv``
    (``k,y1,y2``). JSON mode writes the full log document (full float
    precision so that a reload reproduces the log exactly). Wall-clock
    times never leave the process: exports of identical runs are
    bitwise identical.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    if not log.records:
        raise ValueError("refusing to export an empty log")
    if fmt == "json":
        path = os.path.join(out_dir, "trajectory.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_log_to_doc(log), fh, indent=2)
            fh.write("\n")
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown export format: {fmt!r}")
    robots = os.path.join(out_dir, "robots.csv")
    targets = os.path.join(out_dir, "targets.csv")
    with open(robots, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "robot_id", "x1", "x2"])
        for r in log.records:
            for i, row in enumerate(r.positions):
                wr.writerow([r.k, i + 1, FMT % row[0], FMT % row[1]])
    with open(targets, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "y1", "y2"])
        for r in log.records:
            wr.writerow([r.k, FMT % r.target[0], FMT % r.target[1]])
    return [robots, targets]


def load_trajectory_json(path):
    """Reload a JSON trajectory export."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    records = []
    for rec in doc["records"]:
        records.append(
            StepRecord(
                k=int(rec["k"]),
                target=np.asarray(rec["y"], dtype=float),
                positions=np.asarray(rec["positions"], dtype=float),
                feasibility_residual=float(rec["feasibility_residual"]),
                barycenter_residual=float(rec["barycenter_residual"]),
                max_edge_distance=float(rec["max_edge_distance"]),
                iterations=int(rec["iterations"]),
                wall_time=0.0,
                oracle_deviation=rec.get("oracle_deviation"),
                original_gap=rec.get("original_gap"),
            )
        )
    return TrajectoryLog(
        initial_positions=np.asarray(doc["initial_positions"], dtype=float),
        records=records,
        summary=dict(doc["summary"]),
        mode=doc.get("mode", "centralized"),
        message_stats=doc.get("message_stats"),
    )
