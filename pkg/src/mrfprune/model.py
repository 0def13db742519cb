"""Discrete pairwise MRF models: potentials, energies, pruned label spaces.

A model couples a graph (nodes + undirected edges stored as ordered pairs
``i < j``) with per-node unary cost tables and per-edge pairwise potentials.
Solutions are plain integer arrays of shape ``(node_count,)``; pruning
matrices are boolean arrays of shape ``(node_count, label_count)`` where a
True entry marks an active (not pruned) label.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import InvalidInputError, ParseError

KERNEL_KINDS = ("abs_diff", "truncated_abs_diff", "truncated_quadratic", "potts")
DENSE = "dense"


@dataclass(frozen=True)
class PairwisePotential:
    """Pairwise cost, either ``weight * kernel(l0 - l1)`` or a dense table.

    The parametric kernels are symmetric in their arguments; a dense table
    may be asymmetric, so edge orientation matters for it.
    """

    kind: str
    weight: float = 1.0
    trunc: float | None = None
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == DENSE:
            if self.table is None:
                raise InvalidInputError("dense potential requires a table")
            tab = np.asarray(self.table, dtype=np.float64)
            if tab.ndim != 2 or tab.shape[0] != tab.shape[1]:
                raise InvalidInputError(f"dense table must be square, got {tab.shape}")
            if not np.all(np.isfinite(tab)):
                raise InvalidInputError("dense table contains non-finite values")
            object.__setattr__(self, "table", tab)
            return
        if self.kind not in KERNEL_KINDS:
            raise InvalidInputError(f"unknown potential kind {self.kind!r}")
        if not np.isfinite(self.weight) or self.weight < 0:
            raise InvalidInputError(f"kernel weight must be finite and >= 0, got {self.weight}")
        if self.kind.startswith("truncated"):
            if self.trunc is None or not np.isfinite(self.trunc) or self.trunc <= 0:
                raise InvalidInputError(f"{self.kind} requires a positive truncation, got {self.trunc}")

    def value(self, l0: int, l1: int) -> float:
        """Cost of the ordered label pair (l0, l1)."""
        if self.kind == DENSE:
            return float(self.table[l0, l1])
        d = float(l0) - float(l1)
        if self.kind == "abs_diff":
            return self.weight * abs(d)
        if self.kind == "truncated_abs_diff":
            return self.weight * min(abs(d), self.trunc)
        if self.kind == "truncated_quadratic":
            return self.weight * min(d * d, self.trunc)
        return self.weight * (l0 != l1)  # potts

    def against(self, labels: np.ndarray, fixed: int, fixed_is_second: bool = True) -> np.ndarray:
        """Vector of costs with one endpoint fixed.

        Returns ``phi(labels, fixed)`` when ``fixed_is_second`` else
        ``phi(fixed, labels)``. Kernels are symmetric so the flag only
        matters for dense tables.
        """
        if self.kind == DENSE:
            return self.table[labels, fixed] if fixed_is_second else self.table[fixed, labels]
        d = labels.astype(np.float64) - float(fixed)
        if self.kind == "abs_diff":
            return self.weight * np.abs(d)
        if self.kind == "truncated_abs_diff":
            return self.weight * np.minimum(np.abs(d), self.trunc)
        if self.kind == "truncated_quadratic":
            return self.weight * np.minimum(d * d, self.trunc)
        return self.weight * (labels != fixed).astype(np.float64)

    def diagonal(self, label_count: int) -> np.ndarray:
        """Vector of phi(l, l) for l in [0, label_count)."""
        if self.kind == DENSE:
            return np.diag(self.table).astype(np.float64, copy=True)
        return np.zeros(label_count)

    def dense_table(self, label_count: int) -> np.ndarray:
        """Materialize the full label_count x label_count cost table."""
        if self.kind == DENSE:
            return self.table.copy()
        lab = np.arange(label_count, dtype=np.float64)
        d = lab[:, None] - lab[None, :]
        if self.kind == "abs_diff":
            return self.weight * np.abs(d)
        if self.kind == "truncated_abs_diff":
            return self.weight * np.minimum(np.abs(d), self.trunc)
        if self.kind == "truncated_quadratic":
            return self.weight * np.minimum(d * d, self.trunc)
        return self.weight * (d != 0).astype(np.float64)

    def scaled(self, c: float) -> "PairwisePotential":
        if self.kind == DENSE:
            return PairwisePotential(DENSE, table=self.table * c)
        return replace(self, weight=self.weight * c)

    def mean_weight(self, label_count: int) -> float:
        """Scalar edge strength: kernel weight, or mean off-diagonal for dense."""
        if self.kind != DENSE:
            return self.weight
        n = self.table.shape[0]
        if n <= 1:
            return 0.0
        off = self.table.sum() - np.trace(self.table)
        return float(off / (n * n - n))

    def to_json(self) -> dict:
        if self.kind == DENSE:
            return {"kind": DENSE, "table": self.table.tolist()}
        out = {"kind": self.kind, "weight": self.weight}
        if self.trunc is not None:
            out["trunc"] = self.trunc
        return out

    @staticmethod
    def from_json(obj: dict) -> "PairwisePotential":
        kind = obj.get("kind")
        if kind == DENSE:
            return PairwisePotential(DENSE, table=np.asarray(obj["table"], dtype=np.float64))
        return PairwisePotential(kind, weight=float(obj.get("weight", 1.0)), trunc=obj.get("trunc"))


def evaluate_pairwise(p: PairwisePotential, l0: int, l1: int, label_count: int | None = None) -> float:
    """Evaluate phi(l0, l1) with range checks on the label pair."""
    bound = label_count
    if bound is None and p.kind == DENSE:
        bound = p.table.shape[0]
    if l0 < 0 or l1 < 0 or (bound is not None and (l0 >= bound or l1 >= bound)):
        raise InvalidInputError(f"label pair ({l0}, {l1}) out of range for |L|={bound}")
    return p.value(l0, l1)


@dataclass
class Model:
    """Pairwise MRF over ``node_count`` nodes and ``label_count`` labels.

    Treat instances as immutable after construction; all operations in this
    package return new models instead of mutating.
    """

    label_count: int
    unary: np.ndarray
    edges: np.ndarray
    potentials: tuple[PairwisePotential, ...]
    grid_shape: tuple[int, int] | None = None

    def __post_init__(self):
        self.unary = np.ascontiguousarray(np.asarray(self.unary, dtype=np.float64))
        if self.unary.ndim != 2 or self.unary.shape[1] != self.label_count:
            raise InvalidInputError(
                f"unary table must be (nodes, {self.label_count}), got {self.unary.shape}"
            )
        if not np.all(np.isfinite(self.unary)):
            raise InvalidInputError("unary costs must be finite")
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.potentials = tuple(self.potentials)
        if len(self.potentials) != len(self.edges):
            raise InvalidInputError(
                f"{len(self.edges)} edges but {len(self.potentials)} potentials"
            )
        n = self.node_count
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise InvalidInputError("edge references a node outside [0, node_count)")
            if np.any(self.edges[:, 0] >= self.edges[:, 1]):
                raise InvalidInputError("edges must be ordered pairs (i, j) with i < j")
            pairs = set(map(tuple, self.edges.tolist()))
            if len(pairs) != len(self.edges):
                raise InvalidInputError("duplicate edges are not allowed")
        for p in self.potentials:
            if p.kind == DENSE and p.table.shape[0] != self.label_count:
                raise InvalidInputError(
                    f"dense table is {p.table.shape}, model has {self.label_count} labels"
                )
        if self.grid_shape is not None:
            r, c = self.grid_shape
            self.grid_shape = (int(r), int(c))
            if r * c != n:
                raise InvalidInputError(f"grid_shape {self.grid_shape} does not cover {n} nodes")
            expect = grid_edges(r, c)
            got = self.edges[np.lexsort((self.edges[:, 1], self.edges[:, 0]))]
            if expect.shape != got.shape or not np.array_equal(expect, got):
                raise InvalidInputError("grid_shape set but edges are not the 4-connectivity set")

    @property
    def node_count(self) -> int:
        return self.unary.shape[0]

    @cached_property
    def adjacency(self) -> tuple:
        """Per node: list of (edge_id, neighbor, node_is_first_endpoint)."""
        adj = [[] for _ in range(self.node_count)]
        for e, (i, j) in enumerate(self.edges.tolist()):
            adj[i].append((e, j, True))
            adj[j].append((e, i, False))
        return tuple(tuple(a) for a in adj)

    @cached_property
    def _kernel_groups(self) -> dict:
        """Edges grouped by kernel kind for vectorized evaluation."""
        groups: dict = {k: [] for k in KERNEL_KINDS}
        dense = []
        for e, p in enumerate(self.potentials):
            if p.kind == DENSE:
                dense.append(e)
            else:
                groups[p.kind].append(e)
        out = {}
        for kind, idx in groups.items():
            if not idx:
                continue
            ids = np.asarray(idx, dtype=np.int64)
            w = np.asarray([self.potentials[e].weight for e in idx])
            t = np.asarray([self.potentials[e].trunc or 0.0 for e in idx])
            out[kind] = (ids, w, t)
        out[DENSE] = np.asarray(dense, dtype=np.int64)
        return out

    def edge_costs(self, x: np.ndarray) -> np.ndarray:
        """Pairwise cost of every edge under labeling x, in edge order."""
        out = np.zeros(len(self.edges))
        if not len(self.edges):
            return out
        l0 = x[self.edges[:, 0]]
        l1 = x[self.edges[:, 1]]
        groups = self._kernel_groups
        for kind in KERNEL_KINDS:
            if kind not in groups:
                continue
            ids, w, t = groups[kind]
            d = (l0[ids] - l1[ids]).astype(np.float64)
            if kind == "abs_diff":
                out[ids] = w * np.abs(d)
            elif kind == "truncated_abs_diff":
                out[ids] = w * np.minimum(np.abs(d), t)
            elif kind == "truncated_quadratic":
                out[ids] = w * np.minimum(d * d, t)
            else:
                out[ids] = w * (d != 0)
        for e in groups[DENSE]:
            out[e] = self.potentials[e].table[l0[e], l1[e]]
        return out

    def node_costs(self, i: int, labels: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Conditional costs of assigning each of `labels` to node i, neighbors fixed by x."""
        c = self.unary[i, labels].copy()
        for e, j, first in self.adjacency[i]:
            c += self.potentials[e].against(labels, int(x[j]), fixed_is_second=first)
        return c

    def unary_argmin(self) -> np.ndarray:
        """Per-node label minimizing the unary cost alone (ties to lowest index)."""
        return np.argmin(self.unary, axis=1).astype(np.int64)


@dataclass(frozen=True)
class Energy:
    """Energy of a labeling, with the unary/pairwise split preserved."""

    total: float
    unary_part: float
    pairwise_part: float


def grid_edges(rows: int, cols: int) -> np.ndarray:
    """4-connectivity edge list of a rows x cols grid, sorted, row-major node ids."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    edges = np.concatenate([horiz, vert], axis=0)
    return edges[np.lexsort((edges[:, 1], edges[:, 0]))]


def check_solution(model: Model, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (model.node_count,):
        raise InvalidInputError(f"solution shape {x.shape} != ({model.node_count},)")
    if len(x) and (x.min() < 0 or x.max() >= model.label_count):
        raise InvalidInputError("solution contains out-of-range labels")
    return x


def check_pruning_matrix(model: Model, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=bool)
    if a.shape != (model.node_count, model.label_count):
        raise InvalidInputError(
            f"pruning matrix shape {a.shape} != ({model.node_count}, {model.label_count})"
        )
    if not np.all(a.any(axis=1)):
        raise InvalidInputError("pruning matrix leaves some node with no active label")
    return a


def full_pruning_matrix(model: Model) -> np.ndarray:
    """All-ones mask: nothing pruned."""
    return np.ones((model.node_count, model.label_count), dtype=bool)


def energy(model: Model, x: np.ndarray) -> Energy:
    """Total cost of labeling x: sum of unaries plus sum of edge costs.

    Accumulation order is fixed (node index, then edge index) so repeated
    evaluations are bit-identical.
    """
    x = check_solution(model, x)
    unary_part = float(np.sum(model.unary[np.arange(model.node_count), x]))
    pairwise_part = float(np.sum(model.edge_costs(x)))
    return Energy(unary_part + pairwise_part, unary_part, pairwise_part)


def is_feasible(x: np.ndarray, a: np.ndarray) -> bool:
    """True iff every node's label is active in the pruning matrix."""
    x = np.asarray(x, dtype=np.int64)
    a = np.asarray(a, dtype=bool)
    if x.ndim != 1 or a.ndim != 2 or a.shape[0] != x.shape[0]:
        raise InvalidInputError(f"shape mismatch: x {x.shape} vs mask {a.shape}")
    if len(x) and (x.min() < 0 or x.max() >= a.shape[1]):
        raise InvalidInputError("solution contains out-of-range labels")
    return bool(np.all(a[np.arange(len(x)), x]))


def scale_potentials(model: Model, c: float) -> Model:
    """Multiply every unary and pairwise cost by c > 0."""
    if not np.isfinite(c) or c <= 0:
        raise InvalidInputError(f"scale factor must be positive and finite, got {c}")
    return Model(
        label_count=model.label_count,
        unary=model.unary * c,
        edges=model.edges.copy(),
        potentials=tuple(p.scaled(c) for p in model.potentials),
        grid_shape=model.grid_shape,
    )


def model_to_json(model: Model) -> dict:
    return {
        "label_count": model.label_count,
        "grid_shape": list(model.grid_shape) if model.grid_shape else None,
        "unary": model.unary.tolist(),
        "edges": [
            {"i": int(i), "j": int(j), "potential": p.to_json()}
            for (i, j), p in zip(model.edges.tolist(), model.potentials)
        ],
    }


def model_from_json(obj: dict) -> Model:
    try:
        edges = [(e["i"], e["j"]) for e in obj["edges"]]
        pots = tuple(PairwisePotential.from_json(e["potential"]) for e in obj["edges"])
        grid = obj.get("grid_shape")
        return Model(
            label_count=int(obj["label_count"]),
            unary=np.asarray(obj["unary"], dtype=np.float64),
            edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
            potentials=pots,
            grid_shape=tuple(grid) if grid else None,
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed model JSON: {exc}") from exc


def save_model(model: Model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model), fh)


def load_model(path) -> Model:
    with open(path) as fh:
        return model_from_json(json.load(fh))
