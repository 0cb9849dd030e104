"""Ground truth on small state spaces: enumeration and dense exponentials.

The exponential here is scipy's, deliberately independent of the Pade code
used by the estimators.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import CtmcModel

MAX_STATES = 2000


class OracleUnavailable(RuntimeError):
    """The requested quantity has no exact oracle (e.g. infinite space)."""


@dataclass
class EnumeratedSpace:
    states: list
    index: dict = field(repr=False)
    generator: np.ndarray = field(repr=False)
    closed: bool
    leaked_rate: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.states)


def enumerate_reachable(model: CtmcModel, start, bound: int = MAX_STATES) -> EnumeratedSpace:
    """Breadth-first closure of the move relation from ``start``.

    Stops after ``bound`` states. A truncated space keeps the full holding
    rates on the diagonal, so rows of a truncated generator sum to minus the
    rate leaking out of the set.
    """
    if bound < 1:
        raise ValueError("bound must be >= 1")
    states = [start]
    index = {start: 0}
    queue = deque([start])
    closed = True
    while queue:
        x = queue.popleft()
        for y, _ in model.neighbors(x):
            if y not in index:
                if len(states) >= bound:
                    closed = False
                    continue
                index[y] = len(states)
                states.append(y)
                queue.append(y)
    n = len(states)
    q = np.zeros((n, n))
    leaked = np.zeros(n)
    for i, x in enumerate(states):
        lam = model.rate(x)
        q[i, i] = -lam
        for y, p in model.neighbors(x):
            j = index.get(y)
            if j is None:
                leaked[i] += lam * p
            else:
                q[i, j] += lam * p
    return EnumeratedSpace(states, index, q, closed, leaked)


def transition_matrix(space: EnumeratedSpace, horizon: float) -> np.ndarray:
    if len(space) > MAX_STATES:
        raise OracleUnavailable(f"{len(space)} states exceeds the dense cap of {MAX_STATES}")
    return scipy.linalg.expm(horizon * space.generator)


def exact_transition_probability(space: EnumeratedSpace, start, end, horizon: float) -> float:
    """Entry ``(start, end)`` of ``expm(horizon * Q)``; a lower bound on truncated spaces."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    try:
        i, j = space.index[start], space.index[end]
    except KeyError as err:
        raise ValueError(f"state {err.args[0]!r} is not in the enumerated space") from None
    return float(transition_matrix(space, horizon)[i, j])


def two_state_probability(a: float, b: float, horizon: float) -> float:
    """P(X(T) = 1 | X(0) = 0) for the flip chain with rates a (0->1), b (1->0)."""
    s = a + b
    if s == 0:
        return 0.0
    return a / s * (1.0 - math.exp(-s * horizon))


def log_likelihood_exact(model: CtmcModel, dataset, use_stationary: bool = True) -> float:
    """Exact log P(data) for a finite model: sum of log transition probabilities."""
    total = 0.0
    cache = {}
    for start, end, horizon in dataset:
        space = cache.get(start)
        if space is None:
            space = enumerate_reachable(model, start)
            if not space.closed:
                raise OracleUnavailable("state space is not finite within the enumeration bound")
            cache[start] = space
        if end not in space.index:
            return -math.inf
        p = exact_transition_probability(space, start, end, horizon)
        if p <= 0:
            return -math.inf
        total += math.log(p)
        if use_stationary and model.has_stationary:
            total += math.log(model.stationary(start))
    return total


@dataclass
class GridPosterior:
    grid: np.ndarray
    mass: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.dot(self.grid, self.mass))

    def density(self) -> np.ndarray:
        widths = np.gradient(self.grid) if self.grid.size > 1 else np.ones(1)
        return self.mass / widths


def grid_posterior(family, dataset, log_prior, grid) -> GridPosterior:
    """Normalized posterior masses on a 1-d parameter grid.

    ``family(value)`` returns the finite model at a grid point and
    ``log_prior(value)`` its log prior density.
    """
    grid = np.asarray(grid, dtype=float)
    logpost = np.array([log_prior(v) + log_likelihood_exact(family(v), dataset) for v in grid])
    finite = np.isfinite(logpost)
    if not finite.any():
        raise OracleUnavailable("posterior is zero on the whole grid")
    w = np.where(finite, np.exp(logpost - logpost[finite].max()), 0.0)
    return GridPosterior(grid, w / w.sum())


def export_edge_list(space: EnumeratedSpace, render=str) -> str:
    """Lines of ``state<TAB>state<TAB>rate`` for every positive off-diagonal rate."""
    lines = []
    for i, x in enumerate(space.states):
        for j, y in enumerate(space.states):
            if i != j and space.generator[i, j] > 0:
                lines.append(f"{render(x)}\t{render(y)}\t{float(space.generator[i, j])!r}")
    return "\n".join(lines) + ("\n" if lines else "")
