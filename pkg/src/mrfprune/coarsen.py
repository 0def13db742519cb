"""Model coarsening: grouping functions, coarse models, pyramids, upsampling.

Coarsening collapses each group of nodes into a single coarse node under the
assumption that grouped nodes share a label. Coarse unaries absorb the
member unaries plus the diagonal of every intra-group edge; coarse pairwise
potentials sum the fine potentials crossing the two groups. This makes the
coarse energy of any labeling equal the fine energy of its upsampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInputError, TopologyError
from .model import DENSE, Model, PairwisePotential


@dataclass
class GroupingFunction:
    """Surjective map from fine nodes onto coarse node indices."""

    parent: np.ndarray
    coarse_count: int

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        if self.parent.ndim != 1 or len(self.parent) == 0:
            raise InvalidInputError("parent map must be a non-empty 1-D sequence")
        if self.parent.min() < 0 or self.parent.max() >= self.coarse_count:
            raise InvalidInputError("parent map references coarse nodes out of range")
        present = np.bincount(self.parent, minlength=self.coarse_count)
        if np.any(present == 0):
            raise InvalidInputError("parent map is not surjective onto the coarse node set")

    @property
    def fine_count(self) -> int:
        return len(self.parent)

    @cached_property
    def children(self) -> tuple:
        """Inverse map: coarse node -> array of its fine nodes (ascending)."""
        order = np.argsort(self.parent, kind="stable")
        bounds = np.searchsorted(self.parent[order], np.arange(self.coarse_count + 1))
        return tuple(order[bounds[k]: bounds[k + 1]] for k in range(self.coarse_count))

    @cached_property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.parent, minlength=self.coarse_count)

    def to_json(self) -> dict:
        return {"parent": self.parent.tolist()}

    @staticmethod
    def from_json(obj: dict) -> "GroupingFunction":
        parent = np.asarray(obj["parent"], dtype=np.int64)
        return GroupingFunction(parent, int(parent.max()) + 1 if len(parent) else 0)

    @staticmethod
    def from_parent(parent) -> "GroupingFunction":
        parent = np.asarray(parent, dtype=np.int64)
        return GroupingFunction(parent, int(parent.max()) + 1)

    @staticmethod
    def identity(n: int) -> "GroupingFunction":
        return GroupingFunction(np.arange(n, dtype=np.int64), n)


def grid_grouping_2x2(grid_shape: tuple[int, int]) -> GroupingFunction:
    """Group 2x2 subgrids; border groups hold 1 or 2 nodes on odd dimensions.

    Fine node (r, c) maps to coarse node (r // 2, c // 2) on the
    ceil(rows/2) x ceil(cols/2) coarse grid.
    """
    rows, cols = int(grid_shape[0]), int(grid_shape[1])
    if rows < 1 or cols < 1:
        raise InvalidInputError(f"invalid grid shape {grid_shape}")
    crows, ccols = (rows + 1) // 2, (cols + 1) // 2
    r, c = np.divmod(np.arange(rows * cols), cols)
    parent = (r // 2) * ccols + (c // 2)
    return GroupingFunction(parent, crows * ccols)


def coarse_grid_shape(grid_shape: tuple[int, int]) -> tuple[int, int]:
    return ((grid_shape[0] + 1) // 2, (grid_shape[1] + 1) // 2)


def partition_edges(g: GroupingFunction, edges: np.ndarray):
    """Split fine edges into cross-group and intra-group sets.

    Returns ``(cross, intra)`` where ``cross`` maps each coarse edge
    ``(ci, cj)`` with ci < cj to the list of fine edge indices crossing the
    two groups, and ``intra`` maps a coarse node to the fine edge indices
    internal to its group. Every fine edge lands in exactly one list.
    """
    cross: dict = {}
    intra: dict = {}
    pi = g.parent[edges[:, 0]]
    pj = g.parent[edges[:, 1]]
    for e in range(len(edges)):
        a, b = int(pi[e]), int(pj[e])
        if a == b:
            intra.setdefault(a, []).append(e)
        else:
            key = (a, b) if a < b else (b, a)
            cross.setdefault(key, []).append(e)
    return cross, intra


def _merge_potentials(pots: list[PairwisePotential], flips: list[bool], label_count: int) -> PairwisePotential:
    """Sum of pairwise potentials on one coarse edge.

    ``flips[k]`` marks fine edges whose orientation is reversed relative to
    the coarse edge; only dense tables are sensitive to it (transpose).
    Same-kernel sums stay parametric with added weights, anything mixed
    falls back to a dense table.
    """
    kinds = {(p.kind, p.trunc) for p in pots}
    if len(kinds) == 1 and pots[0].kind != DENSE:
        kind, trunc = next(iter(kinds))
        return PairwisePotential(kind, weight=sum(p.weight for p in pots), trunc=trunc)
    total = np.zeros((label_count, label_count))
    for p, flip in zip(pots, flips):
        tab = p.dense_table(label_count)
        total += tab.T if flip else tab
    return PairwisePotential(DENSE, table=total)


def coarsen(model: Model, g: GroupingFunction) -> Model:
    """Build the coarse model induced by a grouping function.

    Coarse unary: sum of member unaries plus the diagonal of intra-group
    edges. Coarse pairwise: sum over fine edges crossing the group pair.
    """
    if g.fine_count != model.node_count:
        raise InvalidInputError(
            f"grouping covers {g.fine_count} nodes, model has {model.node_count}"
        )
    L = model.label_count
    unary = np.zeros((g.coarse_count, L))
    np.add.at(unary, g.parent, model.unary)
    cross, intra = partition_edges(g, model.edges)
    for ci, edge_ids in intra.items():
        for e in edge_ids:
            unary[ci] += model.potentials[e].diagonal(L)
    coarse_edges = sorted(cross.keys())
    pots = []
    for ci, cj in coarse_edges:
        edge_ids = cross[(ci, cj)]
        flips = [g.parent[model.edges[e, 0]] != ci for e in edge_ids]
        pots.append(_merge_potentials([model.potentials[e] for e in edge_ids], flips, L))
    grid = None
    if model.grid_shape is not None and _is_grid_grouping(g, model.grid_shape):
        grid = coarse_grid_shape(model.grid_shape)
        if grid[0] * grid[1] != g.coarse_count:
            grid = None
    return Model(
        label_count=L,
        unary=unary,
        edges=np.asarray(coarse_edges, dtype=np.int64).reshape(-1, 2),
        potentials=tuple(pots),
        grid_shape=grid,
    )


def _is_grid_grouping(g: GroupingFunction, grid_shape: tuple[int, int]) -> bool:
    try:
        ref = grid_grouping_2x2(grid_shape)
    except InvalidInputError:
        return False
    return len(ref.parent) == len(g.parent) and np.array_equal(ref.parent, g.parent)


def upsample(x_coarse: np.ndarray, g: GroupingFunction) -> np.ndarray:
    """Broadcast a coarse labeling to the fine nodes: x_i = x'_{g(i)}."""
    x_coarse = np.asarray(x_coarse, dtype=np.int64)
    if x_coarse.shape != (g.coarse_count,):
        raise InvalidInputError(
            f"coarse solution shape {x_coarse.shape} != ({g.coarse_count},)"
        )
    return x_coarse[g.parent]


@dataclass
class Pyramid:
    """Stack of progressively coarser models. ``models[0]`` is the input.

    ``group_sizes[s]`` and ``edge_fine_counts[s]`` (defined for s >= 1)
    count, for each node/edge of scale s, the scale s-1 nodes in its group
    and the scale s-1 edges merged into it.
    """

    models: list[Model]
    groupings: list[GroupingFunction]
    group_sizes: list = field(default_factory=list)
    edge_fine_counts: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.models) != len(self.groupings) + 1:
            raise InvalidInputError("pyramid needs exactly one grouping per coarsening step")
        if not self.group_sizes:
            self.group_sizes = [None] + [g.group_sizes for g in self.groupings]
        if not self.edge_fine_counts:
            self.edge_fine_counts = [None]
            for s, g in enumerate(self.groupings):
                cross, _ = partition_edges(g, self.models[s].edges)
                counts = np.array(
                    [len(cross[tuple(e)]) for e in self.models[s + 1].edges.tolist()],
                    dtype=np.int64,
                )
                self.edge_fine_counts.append(counts)

    @property
    def depth(self) -> int:
        return len(self.models)


def build_pyramid(model: Model, num_scales: int, groupings: list[GroupingFunction] | None = None) -> Pyramid:
    """Coarsen repeatedly, up to ``num_scales`` models in total.

    Grid models use the 2x2 grouping and stop early once the grid reaches
    1x1; non-grid models require caller-supplied groupings.
    """
    if num_scales < 1:
        raise InvalidInputError(f"num_scales must be >= 1, got {num_scales}")
    models = [model]
    used: list[GroupingFunction] = []
    if groupings is not None:
        for g in groupings[: num_scales - 1]:
            models.append(coarsen(models[-1], g))
            used.append(g)
        return Pyramid(models, used)
    if model.grid_shape is None:
        if num_scales == 1:
            return Pyramid(models, [])
        raise TopologyError("non-grid model needs explicit groupings to build a pyramid")
    shape = model.grid_shape
    while len(models) < num_scales and shape != (1, 1):
        g = grid_grouping_2x2(shape)
        models.append(coarsen(models[-1], g))
        used.append(g)
        shape = coarse_grid_shape(shape)
    return Pyramid(models, used)
