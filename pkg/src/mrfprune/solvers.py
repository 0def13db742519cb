"""Energy minimization over pruned label spaces.

Three interchangeable minimizers share one contract: the result is feasible
for the pruning mask, its energy never exceeds the initialization's, and
identical inputs produce identical outputs.

* ``icm`` - iterated conditional modes, sequential sweeps in node order.
* ``alpha_expansion`` - move-making via binary min-cuts; labels whose mask
  bit is off are frozen for that move.
* ``brute_force`` - exact enumeration, the test oracle.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError, InvalidInputError
from .maxflow import FlowGraph, max_flow_min_cut
from .model import Energy, Model, check_pruning_matrix, check_solution, energy, is_feasible

SOLVER_KINDS = ("icm", "alpha_expansion", "brute_force")

BRUTE_FORCE_STATE_GUARD = 10**7
_CHUNK = 1 << 16


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "icm"
    max_sweeps: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ConfigError(f"max_sweeps must be >= 1, got {self.max_sweeps}")


@dataclass
class SolveResult:
    """Outcome of one solve: labeling, energy, and the per-step energy trace.

    ``energy_trace[0]`` is the initialization energy; later entries are
    appended after each sweep (icm), accepted move (alpha_expansion), or
    once for the exact optimum (brute_force). The trace never increases and
    its last entry equals ``energy.total``.
    """

    x: np.ndarray
    energy: Energy
    iterations: int
    wall_time_ms: float
    energy_trace: list[float] = field(default_factory=list)


def _active_labels(a: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(a[i]).astype(np.int64) for i in range(a.shape[0])]


def icm_step(model: Model, a: np.ndarray, x: np.ndarray, active: list[np.ndarray] | None = None):
    """One sweep of iterated conditional modes in node index order.

    Every node moves to its cheapest active label given its neighbors'
    current labels (ties to the smallest label index). Returns the new
    labeling and whether the sweep strictly decreased the energy.
    """
    x = check_solution(model, x).copy()
    a = check_pruning_matrix(model, a)
    if active is None:
        active = _active_labels(a)
    before = energy(model, x).total
    for i in range(model.node_count):
        labels = active[i]
        if len(labels) == 1:
            x[i] = labels[0]
            continue
        costs = model.node_costs(i, labels, x)
        x[i] = labels[int(np.argmin(costs))]
    after = energy(model, x).total
    return x, after < before


def _solve_icm(model: Model, a: np.ndarray, init: np.ndarray, cfg: SolverConfig) -> SolveResult:
    t0 = time.perf_counter()
    x = init.copy()
    active = _active_labels(a)
    trace = [energy(model, x).total]
    sweeps = 0
    for _ in range(cfg.max_sweeps):
        x, improved = icm_step(model, a, x, active)
        sweeps += 1
        trace.append(energy(model, x).total)
        if not improved:
            break
    return SolveResult(
        x=x,
        energy=energy(model, x),
        iterations=sweeps,
        wall_time_ms=(time.perf_counter() - t0) * 1e3,
        energy_trace=trace,
    )


def _expansion_move(model: Model, a: np.ndarray, x: np.ndarray, alpha: int) -> np.ndarray:
    """Best labeling where each node keeps its label or switches to alpha.

    Nodes whose alpha bit is pruned (or that already hold alpha) are frozen
    at their current label. Non-submodular edge terms are repaired by
    clamping the disagreement capacity at zero, which can only overestimate
    the cost of the two endpoints deciding differently; the caller guards
    optimality by accepting the move only if the true energy drops.
    """
    movable = a[:, alpha] & (x != alpha)
    if not movable.any():
        return x
    ids = np.flatnonzero(movable)
    slot = -np.ones(model.node_count, dtype=np.int64)
    slot[ids] = np.arange(len(ids))
    n = len(ids)
    source, sink = n, n + 1
    g = FlowGraph(n + 2)
    # theta[k] = (cost of keeping, cost of switching) for movable node k
    theta0 = model.unary[ids, x[ids]].copy()
    theta1 = model.unary[ids, alpha].copy()
    ei, ej = model.edges[:, 0], model.edges[:, 1]
    cost_keep = model.edge_costs(x)  # phi(x_i, x_j)
    alpha_vec = np.full(model.node_count, alpha, dtype=np.int64)
    cost_i_sw = model.pair_costs(alpha_vec[ei], x[ej])  # phi(alpha, x_j)
    cost_j_sw = model.pair_costs(x[ei], alpha_vec[ej])  # phi(x_i, alpha)
    cost_both = model.pair_costs(alpha_vec[ei], alpha_vec[ej])  # phi(alpha, alpha)
    for e in range(len(model.edges)):
        i, j = ei[e], ej[e]
        mi, mj = movable[i], movable[j]
        if not mi and not mj:
            continue
        if mi and mj:
            va, vb = cost_keep[e], cost_j_sw[e]
            vc, vd = cost_i_sw[e], cost_both[e]
            ki, kj = slot[i], slot[j]
            theta1[ki] += vc - va
            theta1[kj] += vd - vc
            cap = vb + vc - va - vd
            if cap > 0:
                g.add_edge(ki, kj, cap)
        elif mi:
            # j frozen at x_j
            theta0[slot[i]] += cost_keep[e]
            theta1[slot[i]] += cost_i_sw[e]
        else:
            theta0[slot[j]] += cost_keep[e]
            theta1[slot[j]] += cost_j_sw[e]
    base = np.minimum(theta0, theta1)
    to_source = theta1 - base  # cut when node lands on the sink (switch) side
    to_sink = theta0 - base
    for k in range(n):
        if to_source[k] > 0:
            g.add_edge(source, k, to_source[k])
        if to_sink[k] > 0:
            g.add_edge(k, sink, to_sink[k])
    _, side = max_flow_min_cut(g, source, sink)
    x_new = x.copy()
    x_new[ids[~side[:n]]] = alpha
    return x_new


def alpha_expansion(model: Model, a: np.ndarray, x: np.ndarray, cfg: SolverConfig) -> SolveResult:
    """Cycle expansion moves over all labels until no move improves.

    Each accepted move strictly decreases the energy, so the trace is
    strictly decreasing past its first entry.
    """
    t0 = time.perf_counter()
    x = check_solution(model, x).copy()
    a = check_pruning_matrix(model, a)
    if not is_feasible(x, a):
        raise InvalidInputError("initial solution is infeasible for the pruning matrix")
    current = energy(model, x).total
    trace = [current]
    cycles = 0
    for _ in range(cfg.max_sweeps):
        changed = False
        for alpha in range(model.label_count):
            proposal = _expansion_move(model, a, x, alpha)
            if proposal is x:
                continue
            cand = energy(model, proposal).total
            if cand < current:
                x = proposal
                current = cand
                trace.append(cand)
                changed = True
        cycles += 1
        if not changed:
            break
    return SolveResult(
        x=x,
        energy=energy(model, x),
        iterations=cycles,
        wall_time_ms=(time.perf_counter() - t0) * 1e3,
        energy_trace=trace,
    )


def brute_force_solve(model: Model, a: np.ndarray) -> SolveResult:
    """Exact minimum over the active label space, ties to the
    lexicographically smallest labeling. Guarded against state spaces
    beyond ``BRUTE_FORCE_STATE_GUARD``."""
    t0 = time.perf_counter()
    a = check_pruning_matrix(model, a)
    active = _active_labels(a)
    counts = np.array([len(lab) for lab in active], dtype=np.int64)
    total_states = 1
    for c in counts:
        total_states *= int(c)
        if total_states > BRUTE_FORCE_STATE_GUARD:
            raise CapacityError(
                f"active space exceeds {BRUTE_FORCE_STATE_GUARD} states"
            )
    n = model.node_count
    strides = np.ones(n, dtype=np.int64)
    for v in range(n - 2, -1, -1):
        strides[v] = strides[v + 1] * counts[v + 1]
    label_table = np.zeros((n, counts.max()), dtype=np.int64)
    for v, lab in enumerate(active):
        label_table[v, : len(lab)] = lab
    best_val = np.inf
    best_state = -1
    ei, ej = model.edges[:, 0], model.edges[:, 1]
    for start in range(0, total_states, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total_states), dtype=np.int64)
        digits = (idx[:, None] // strides[None, :]) % counts[None, :]
        labels = label_table[np.arange(n)[None, :], digits]
        vals = model.unary[np.arange(n)[None, :], labels].sum(axis=1)
        if len(model.edges):
            vals += model.pair_costs(labels[:, ei], labels[:, ej]).sum(axis=1)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_state = start + k
    digits = (best_state // strides) % counts
    x = label_table[np.arange(n), digits]
    return SolveResult(
        x=x,
        energy=energy(model, x),
        iterations=1,
        wall_time_ms=(time.perf_counter() - t0) * 1e3,
        energy_trace=[energy(model, x).total],
    )


def solve(model: Model, a: np.ndarray, init: np.ndarray, cfg: SolverConfig) -> SolveResult:
    """Minimize the model energy over the active label space from ``init``."""
    a = check_pruning_matrix(model, a)
    init = check_solution(model, init)
    if not is_feasible(init, a):
        raise InvalidInputError("initial solution is infeasible for the pruning matrix")
    if cfg.kind == "icm":
        return _solve_icm(model, a, init, cfg)
    if cfg.kind == "alpha_expansion":
        return alpha_expansion(model, a, init, cfg)
    if cfg.kind == "brute_force":
        res = brute_force_solve(model, a)
        init_total = energy(model, init).total
        res.energy_trace = [init_total] + res.energy_trace
        return res
    raise ConfigError(f"unknown solver kind {cfg.kind!r}")
