"""Random hierarchies, coherent panels and covariance matrices for testing."""

from __future__ import annotations

import numpy as np

from .hierarchy import HierarchySpec, LinkedSystem
from .panel import TimeSeriesPanel, shift_period


def random_hierarchy_spec(
    n_aggregates: int, n_bottoms: int, rng: np.random.Generator, name: str = "side", top: str = "Total"
) -> HierarchySpec:
    """A random tree with exactly ``n_aggregates`` internal nodes below ``top``."""
    aggs = [f"{name}_a{i}" for i in range(n_aggregates)]
    bots = [f"{name}_b{j}" for j in range(n_bottoms)]
    edges = []
    has_child = {a: False for a in aggs}
    for i, a in enumerate(aggs):
        parent = top if i == 0 else ([top] + aggs[:i])[rng.integers(0, i + 1)]
        edges.append((parent, a))
        if parent != top:
            has_child[parent] = True
    childless = [a for a in aggs if not has_child[a]]
    if len(childless) > n_bottoms:
        raise ValueError("not enough bottom series to give every aggregate a child")
    order = rng.permutation(n_bottoms)
    for a, j in zip(childless, order):
        edges.append((a, bots[j]))
    for j in order[len(childless) :]:
        parent = ([top] + aggs)[rng.integers(0, n_aggregates + 1)]
        edges.append((parent, bots[j]))
    return HierarchySpec(name=name, top=top, edges=tuple(edges))


def coherent_values(
    system: LinkedSystem, n_rows: int, rng: np.random.Generator, level=100.0, noise=1.0
) -> np.ndarray:
    """Rows satisfying ``U_full y = 0``: random-walk bottoms summed up each side.

    The first hierarchy's total fixes the top; each later hierarchy's bottoms
    are rescaled so that they add up to the same top.
    """
    rows = np.zeros((n_rows, system.n))
    top = None
    for l, h in enumerate(system.hierarchies):
        b = level + np.cumsum(rng.normal(0.0, noise, size=(n_rows, h.m_b)), axis=0)
        b = np.abs(b) + level / 10
        if top is None:
            top = b.sum(axis=1)
        else:
            b = b * (top / b.sum(axis=1))[:, None]
        cols = system.side_columns(l)
        rows[:, cols] = b @ h.S.T.astype(float)
    return rows


def coherent_panel(
    system: LinkedSystem, n_rows: int, rng: np.random.Generator, start: str = "1984Q4", **kw
) -> TimeSeriesPanel:
    values = coherent_values(system, n_rows, rng, **kw)
    times = tuple(shift_period(start, k) for k in range(n_rows))
    return TimeSeriesPanel(system.ordering, times, values)


def random_spd(n: int, rng: np.random.Generator, spread: float = 10.0) -> np.ndarray:
    """Random symmetric positive-definite matrix with eigenvalues in ``[1, spread]``."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = rng.uniform(1.0, spread, size=n)
    A = (Q * eig) @ Q.T
    return (A + A.T) / 2
