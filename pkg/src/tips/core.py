"""CTMC models, jump-chain paths, forward simulation and the forward-sampling estimator."""
from __future__ import annotations

import math
import time
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import partial
from itertools import accumulate

import numpy as np

from . import rng as rngmod

DEFAULT_STEP_CAP = 10**6
NORMALIZATION_TOL = 1e-9


class StepCapExceeded(RuntimeError):
    """A simulation or proposal exceeded its jump budget."""


class DegenerateWeightsWarning(UserWarning):
    """Every importance weight was zero."""


class TargetSet(frozenset):
    """A finite set of acceptable end states.

    A plain state passed as a target means "exactly this state"; wrapping
    states in a ``TargetSet`` means "any of these".
    """


def in_target(x, target) -> bool:
    if isinstance(target, TargetSet):
        return x in target
    return x == target


class CtmcModel:
    """A CTMC given by holding rates and an enumerable jump kernel.

    Subclasses implement ``rate`` and ``_compute_neighbors``; the latter
    returns ``(state, probability)`` pairs with strictly positive
    probabilities summing to one and no self-loop. Absorbing states have
    rate zero and no neighbors. Neighbor lists are memoized per instance.
    """

    def __init__(self):
        self._neighbor_cache: dict = {}
        self._array_cache: dict = {}

    def rate(self, x) -> float:
        raise NotImplementedError

    def _compute_neighbors(self, x) -> list:
        raise NotImplementedError

    def neighbors(self, x) -> list:
        return self.neighbor_table(x)[0]

    def neighbor_table(self, x):
        """``(pairs, states, cumulative)`` for fast categorical sampling."""
        entry = self._neighbor_cache.get(x)
        if entry is None:
            pairs = list(self._compute_neighbors(x))
            states = [s for s, _ in pairs]
            cumulative = list(accumulate(p for _, p in pairs))
            entry = (pairs, states, cumulative)
            self._neighbor_cache[x] = entry
        return entry

    def neighbor_arrays(self, x):
        """``(states tuple, probability array)``; the form the proposal works with."""
        entry = self._array_cache.get(x)
        if entry is None:
            pairs = self.neighbors(x)
            entry = (tuple(s for s, _ in pairs), np.array([q for _, q in pairs], dtype=float))
            self._array_cache[x] = entry
        return entry

    def jump_probability(self, x, y) -> float:
        for s, p in self.neighbors(x):
            if s == y:
                return p
        return 0.0

    def sample_neighbor(self, x, gen: np.random.Generator):
        _, states, cumulative = self.neighbor_table(x)
        u = gen.random() * cumulative[-1]
        return states[min(bisect_right(cumulative, u), len(states) - 1)]

    has_stationary = False

    def stationary(self, x) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no stationary pmf")

    def log_stationary(self, x) -> float:
        p = self.stationary(x)
        return math.log(p) if p > 0 else -math.inf

    def render(self, x) -> str:
        return str(x)

    def parse(self, text):
        return text

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_neighbor_cache"] = {}
        state["_array_cache"] = {}
        return state


class FiniteCtmc(CtmcModel):
    """CTMC on states ``0..n-1`` given by a dense generator matrix."""

    def __init__(self, generator, stationary=None):
        super().__init__()
        q = np.array(generator, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("generator must be square")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise ValueError("generator off-diagonal entries must be nonnegative")
        q = off - np.diag(off.sum(axis=1))
        self.q = q
        self.n = q.shape[0]
        self._stationary = None if stationary is None else np.asarray(stationary, dtype=float)

    @property
    def states(self):
        return list(range(self.n))

    def rate(self, x) -> float:
        return float(-self.q[x, x])

    def _compute_neighbors(self, x):
        lam = -self.q[x, x]
        if lam <= 0:
            return []
        return [(j, float(self.q[x, j] / lam)) for j in range(self.n) if j != x and self.q[x, j] > 0]

    @property
    def has_stationary(self):
        return self._stationary is not None

    def stationary(self, x) -> float:
        if self._stationary is None:
            return super().stationary(x)
        return float(self._stationary[x])

    def parse(self, text):
        return int(text)


def two_state_model(a: float, b: float) -> FiniteCtmc:
    """Flip chain with rate ``a`` for 0 -> 1 and ``b`` for 1 -> 0."""
    return FiniteCtmc([[-a, a], [b, -b]], stationary=[b / (a + b), a / (a + b)] if a + b > 0 else None)


class BirthDeathModel(CtmcModel):
    """Queue-length chain on ``floor, floor + 1, ...`` (up to ``capacity`` when bounded).

    Up-rate ``birth`` and down-rate ``death`` are state-independent, so away
    from the boundaries the jump kernel is ``birth / (birth + death)`` up.
    ``floor=None`` removes the lower boundary (a walk on the integers).
    """

    def __init__(self, birth: float, death: float, capacity: int | None = None,
                 floor: int | None = 0):
        super().__init__()
        if birth < 0 or death < 0:
            raise ValueError("rates must be nonnegative")
        self.birth, self.death, self.capacity = float(birth), float(death), capacity
        self.floor = floor

    def _moves(self, x):
        out = []
        if self.birth > 0 and (self.capacity is None or x < self.capacity):
            out.append((x + 1, self.birth))
        if self.death > 0 and (self.floor is None or x > self.floor):
            out.append((x - 1, self.death))
        return out

    def rate(self, x) -> float:
        return math.fsum(r for _, r in self._moves(x))

    def _compute_neighbors(self, x):
        moves = self._moves(x)
        lam = math.fsum(r for _, r in moves)
        return sorted((y, r / lam) for y, r in moves)

    def parse(self, text):
        return int(text)


def abs_distance(x, y) -> int:
    return abs(int(x) - int(y))


def indicator_distance(x, y) -> int:
    return int(x != y)


class HopDistance:
    """Fewest jumps from ``x`` to ``y`` in the transition graph of a finite chain.

    Unreachable pairs get ``n``, above every finite hop count.
    """

    def __init__(self, model: FiniteCtmc):
        from scipy.sparse.csgraph import shortest_path

        adj = (model.q > 0) & ~np.eye(model.n, dtype=bool)
        d = shortest_path(adj.astype(float), unweighted=True)
        self.table = np.where(np.isfinite(d), d, model.n).astype(int)

    def __call__(self, x, y) -> int:
        return int(self.table[x, y])


@dataclass(frozen=True)
class JumpChainPath:
    states: tuple
    rates: tuple

    def __post_init__(self):
        if not self.states:
            raise ValueError("a path has at least one state")
        if len(self.states) != len(self.rates):
            raise ValueError("one rate per state")
        for a, b in zip(self.states, self.states[1:]):
            if a == b:
                raise ValueError("consecutive states of a jump chain must differ")

    @classmethod
    def from_states(cls, model: CtmcModel, states) -> "JumpChainPath":
        states = tuple(states)
        return cls(states, tuple(model.rate(s) for s in states))

    def __len__(self):
        return len(self.states)

    @property
    def end(self):
        return self.states[-1]


@dataclass(frozen=True)
class TimedTrajectory:
    """A jump chain plus its holding times.

    The last holding time is the residual occupancy of the final state up
    to the horizon, so the holding times sum to the horizon.
    """

    path: JumpChainPath
    holding_times: tuple

    @property
    def end(self):
        return self.path.end


def forward_simulate(model: CtmcModel, start, horizon: float, gen: np.random.Generator,
                     step_cap: int = DEFAULT_STEP_CAP) -> TimedTrajectory:
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    x = start
    states = [x]
    rates = [model.rate(x)]
    holds = []
    t = 0.0
    while True:
        lam = rates[-1]
        if lam <= 0:
            holds.append(horizon - t)
            break
        h = gen.exponential(1.0 / lam)
        if t + h > horizon:
            holds.append(horizon - t)
            break
        if len(states) > step_cap:
            raise StepCapExceeded(f"forward simulation exceeded {step_cap} jumps")
        t += h
        holds.append(h)
        x = model.sample_neighbor(x, gen)
        states.append(x)
        rates.append(model.rate(x))
    return TimedTrajectory(JumpChainPath(tuple(states), tuple(rates)), tuple(holds))


def jump_chain_probability(model: CtmcModel, path: JumpChainPath) -> float:
    """Log of the product of jump-kernel probabilities along ``path``."""
    total = 0.0
    for a, b in zip(path.states, path.states[1:]):
        p = model.jump_probability(a, b)
        if p <= 0.0:
            return -math.inf
        total += math.log(p)
    return total


@dataclass
class EstimateSummary:
    estimate: float
    log_estimate: float
    log_weights: np.ndarray = field(repr=False)
    weight_variance: float
    ess: float
    particles: int
    wall_clock: float
    seed: int
    zero_weights: int

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.weight_variance / self.particles) if self.particles > 0 else math.inf

    @property
    def log_weight_variance(self) -> float:
        return math.log(self.weight_variance) if self.weight_variance > 0 else -math.inf


def summarize(log_weights, seed: int, wall_clock: float) -> EstimateSummary:
    """Mean, variance and ESS of importance weights given in log space."""
    lw = np.asarray(log_weights, dtype=float)
    k = lw.size
    finite = np.isfinite(lw)
    zero = int(k - finite.sum())
    if not finite.any():
        warnings.warn("all importance weights are zero", DegenerateWeightsWarning, stacklevel=2)
        return EstimateSummary(0.0, -math.inf, lw, 0.0, 0.0, k, wall_clock, seed, zero)
    m = lw[finite].max()
    w = np.exp(lw - m)
    s1 = w.sum()
    log_est = m + math.log(s1) - math.log(k)
    ess = float(s1 * s1 / np.dot(w, w))
    var = float(np.var(w, ddof=1)) * math.exp(2 * m) if k > 1 else 0.0
    return EstimateSummary(math.exp(log_est), log_est, lw, var, ess, k, wall_clock, seed, zero)


def _forward_block(model, start, target, horizon, seed, step_cap, b, lo, hi):
    gen = rngmod.stream(seed, rngmod.FORWARD, b)
    out = []
    for _ in range(lo, hi):
        traj = forward_simulate(model, start, horizon, gen, step_cap)
        out.append(0.0 if in_target(traj.end, target) else -math.inf)
    return out


def forward_sampling_estimate(model: CtmcModel, start, target, horizon: float, particles: int,
                              seed: int = 0, workers: int = 1,
                              step_cap: int = DEFAULT_STEP_CAP) -> EstimateSummary:
    """Fraction of forward-simulated trajectories that end in ``target``."""
    if particles < 1:
        raise ValueError("particles must be >= 1")
    t0 = time.perf_counter()
    fn = partial(_forward_block, model, start, target, horizon, seed, step_cap)
    lw = rngmod.map_blocks(fn, particles, workers)
    return summarize(lw, seed, time.perf_counter() - t0)
