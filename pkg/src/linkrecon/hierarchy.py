"""Aggregation trees, their summing/constraint matrices, and linked systems.

A hierarchy is given as an edge list ``(parent, child)`` rooted at ``top``.
Series are ordered ``[top, aggregates..., bottoms...]``. Several hierarchies
sharing the same top series are linked into one zero-constraint system
``U_full @ y = 0`` over the ordering ``[top, a1, b1, a2, b2, ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import yaml

RANK_RTOL = 1e-10


class HierarchyError(ValueError):
    """Invalid hierarchy specification or linked system."""


@dataclass(frozen=True)
class HierarchySpec:
    name: str
    top: str
    edges: tuple[tuple[str, str], ...]
    aggregate_names: tuple[str, ...] = field(init=False)
    bottom_names: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        aggregates, bottoms = _validate_tree(self.top, self.edges)
        object.__setattr__(self, "aggregate_names", aggregates)
        object.__setattr__(self, "bottom_names", bottoms)

    @cached_property
    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for parent, child in self.edges:
            out.setdefault(parent, []).append(child)
        return out

    def to_dict(self) -> dict:
        return {"name": self.name, "top": self.top, "edges": [list(e) for e in self.edges]}


def _validate_tree(top, edges):
    seen = set()
    parent_of: dict[str, str] = {}
    order: list[str] = []
    for edge in edges:
        if len(edge) != 2:
            raise HierarchyError(f"edge must be a [parent, child] pair, got {edge!r}")
        parent, child = edge
        if parent == child:
            raise HierarchyError(f"cycle detected: {parent!r} is its own child")
        if (parent, child) in seen:
            raise HierarchyError(f"duplicate edge {parent!r} -> {child!r}")
        seen.add((parent, child))
        if child in parent_of:
            raise HierarchyError(
                f"series {child!r} has more than one parent ({parent_of[child]!r}, {parent!r})"
            )
        parent_of[child] = parent
        for node in (parent, child):
            if node not in order:
                order.append(node)

    if not edges:
        raise HierarchyError("hierarchy has no edges")

    # walking up from every node must terminate at a root
    for node in order:
        path = {node}
        cur = node
        while cur in parent_of:
            cur = parent_of[cur]
            if cur in path:
                raise HierarchyError(f"cycle detected through {cur!r}")
            path.add(cur)

    roots = [node for node in order if node not in parent_of]
    if top not in order:
        raise HierarchyError(f"unknown top {top!r}: not present in any edge")
    if len(roots) > 1:
        raise HierarchyError(f"multiple roots: {roots}")
    if roots[0] != top:
        raise HierarchyError(f"root is {roots[0]!r}, expected top {top!r}")

    parents = set(parent_of.values())
    aggregates = tuple(n for n in order if n != top and n in parents)
    bottoms = tuple(n for n in order if n not in parents)
    return aggregates, bottoms


def parse_hierarchy_spec(text: str) -> HierarchySpec:
    """Parse a YAML (or JSON) document with keys ``name``, ``top``, ``edges``."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise HierarchyError(f"malformed hierarchy document: {exc}") from None
    if not isinstance(doc, dict):
        raise HierarchyError("hierarchy document must be a mapping")
    missing = {"name", "top", "edges"} - doc.keys()
    if missing:
        raise HierarchyError(f"hierarchy document missing fields: {sorted(missing)}")
    edges = doc["edges"]
    if not isinstance(edges, list):
        raise HierarchyError("'edges' must be a list of [parent, child] pairs")
    pairs = []
    for e in edges:
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise HierarchyError(f"edge must be a [parent, child] pair, got {e!r}")
        pairs.append((str(e[0]), str(e[1])))
    return HierarchySpec(name=str(doc["name"]), top=str(doc["top"]), edges=tuple(pairs))


def load_hierarchy_spec(path) -> HierarchySpec:
    with open(path, encoding="utf-8") as fh:
        return parse_hierarchy_spec(fh.read())


@dataclass(frozen=True, eq=False)
class Hierarchy:
    spec: HierarchySpec
    C: np.ndarray
    S: np.ndarray
    U: np.ndarray

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def top(self) -> str:
        return self.spec.top

    @property
    def aggregate_names(self) -> tuple[str, ...]:
        return self.spec.aggregate_names

    @property
    def bottom_names(self) -> tuple[str, ...]:
        return self.spec.bottom_names

    @property
    def series_names(self) -> tuple[str, ...]:
        return (self.top, *self.aggregate_names, *self.bottom_names)

    @property
    def m_a(self) -> int:
        return len(self.aggregate_names)

    @property
    def m_b(self) -> int:
        return len(self.bottom_names)


def _descendant_bottoms(spec: HierarchySpec, node: str) -> list[str]:
    out, stack = [], [node]
    while stack:
        cur = stack.pop()
        kids = spec.children.get(cur)
        if kids is None:
            out.append(cur)
        else:
            stack.extend(kids)
    return out


def build_matrices(spec: HierarchySpec) -> Hierarchy:
    """Aggregation matrix ``C``, summing matrix ``S`` and constraint matrix ``U``.

    ``S = [1'; C; I]`` maps bottoms to all series, and ``U = [I; -1, -C']``
    has shape ``(1 + m_a + m_b, 1 + m_a)`` with ``U' S = 0``.
    """
    bottoms = spec.bottom_names
    col = {b: j for j, b in enumerate(bottoms)}
    m_a, m_b = len(spec.aggregate_names), len(bottoms)

    C = np.zeros((m_a, m_b), dtype=np.int64)
    for i, agg in enumerate(spec.aggregate_names):
        for b in _descendant_bottoms(spec, agg):
            C[i, col[b]] = 1

    S = np.vstack([np.ones((1, m_b), dtype=np.int64), C, np.eye(m_b, dtype=np.int64)])
    U = np.vstack(
        [
            np.eye(1 + m_a, dtype=np.int64),
            np.hstack([-np.ones((m_b, 1), dtype=np.int64), -C.T]),
        ]
    )
    if np.any(U.T @ S):
        raise HierarchyError(f"internal error: U'S != 0 for hierarchy {spec.name!r}")
    for arr in (C, S, U):
        arr.setflags(write=False)
    return Hierarchy(spec=spec, C=C, S=S, U=U)


@dataclass(frozen=True, eq=False)
class LinkedSystem:
    top_name: str
    hierarchies: tuple[Hierarchy, ...]
    ordering: tuple[str, ...]
    U_full: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ordering)

    @property
    def K(self) -> int:
        return self.U_full.shape[0]

    @property
    def L(self) -> int:
        return len(self.hierarchies)

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.ordering)}

    def side_slices(self) -> list[tuple[slice, slice]]:
        """Column slices ``(aggregates, bottoms)`` of each hierarchy in ``ordering``."""
        out, pos = [], 1
        for h in self.hierarchies:
            agg = slice(pos, pos + h.m_a)
            bot = slice(pos + h.m_a, pos + h.m_a + h.m_b)
            out.append((agg, bot))
            pos += h.m_a + h.m_b
        return out

    def side_columns(self, which: int) -> np.ndarray:
        """Global column indices of ``[top, a, b]`` for hierarchy ``which``."""
        agg, bot = self.side_slices()[which]
        return np.r_[0, np.arange(agg.start, agg.stop), np.arange(bot.start, bot.stop)]

    def subsystem(self, which: int) -> LinkedSystem:
        """The single-hierarchy system for one side."""
        return link_hierarchies([self.hierarchies[which].spec], self.top_name)


def link_hierarchies(specs, top: str | None = None) -> LinkedSystem:
    """Combine hierarchies that share only their top series into one system.

    ``U_full`` has one row per hierarchy tying the top to the sum of that
    hierarchy's bottoms, followed by one ``[I, -C]`` block per hierarchy.
    """
    specs = list(specs)
    if not specs:
        raise HierarchyError("at least one hierarchy is required")
    if top is None:
        top = specs[0].top
    for s in specs:
        if s.top != top:
            raise HierarchyError(f"hierarchy {s.name!r} has top {s.top!r}, expected {top!r}")

    hierarchies = tuple(build_matrices(s) for s in specs)
    ordering = [top]
    for h in hierarchies:
        ordering.extend(h.aggregate_names)
        ordering.extend(h.bottom_names)
    if len(set(ordering)) != len(ordering):
        dupes = sorted({x for x in ordering if ordering.count(x) > 1})
        raise HierarchyError(f"series shared between hierarchies besides the top: {dupes}")

    L = len(hierarchies)
    n = len(ordering)
    K = L + sum(h.m_a for h in hierarchies)
    U = np.zeros((K, n), dtype=np.int64)
    U[:L, 0] = 1
    row, pos = L, 1
    for l, h in enumerate(hierarchies):
        bot = slice(pos + h.m_a, pos + h.m_a + h.m_b)
        U[l, bot] = -1
        U[row : row + h.m_a, pos : pos + h.m_a] = np.eye(h.m_a, dtype=np.int64)
        U[row : row + h.m_a, bot] = -h.C
        row += h.m_a
        pos += h.m_a + h.m_b

    _check_full_rank(U)
    U.setflags(write=False)
    return LinkedSystem(top_name=top, hierarchies=hierarchies, ordering=tuple(ordering), U_full=U)


def _check_full_rank(U: np.ndarray) -> None:
    sv = np.linalg.svd(U.astype(float), compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    if rank < U.shape[0]:
        raise HierarchyError(f"constraint matrix is rank deficient: rank {rank} < K = {U.shape[0]}")


def check_coherence(values, system: LinkedSystem) -> np.ndarray:
    """Scaled constraint violation ``max|U y_t| / max(1, max|y_t|)`` for each row.

    ``values`` is a ``TimeSeriesPanel``, a ``(T, n)`` array or a single
    length-n vector, in the system's ordering.
    """
    names = getattr(values, "series_names", None)
    if names is not None:
        if tuple(names) != system.ordering:
            raise ValueError("panel series ordering does not match the system ordering")
        values = values.values
    y = np.asarray(values, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape[1] != system.n:
        raise ValueError(f"expected {system.n} columns, got {y.shape[1]}")
    resid = np.abs(y @ system.U_full.T.astype(float)).max(axis=1)
    scale = np.maximum(1.0, np.abs(y).max(axis=1))
    out = resid / scale
    return out[0] if single else out
