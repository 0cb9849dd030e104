"""Potential-guided jump-chain proposals.

From a non-target state ``x`` the neighbors are split into those that lower
the potential, ``D(x)``, and the rest. With probability
``a_x = max(alpha, nu(x, D(x)))`` the next state is drawn from ``D(x)``
proportionally to the jump kernel, otherwise from the complement. A full
proposal is a first hitting path followed by a geometric number of
excursions from the target back to itself.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .core import DEFAULT_STEP_CAP, CtmcModel, JumpChainPath, StepCapExceeded, TargetSet, in_target


class PotentialError(ValueError):
    """The potential has no decreasing neighbor at a non-target state."""


class Potential:
    """Integer guidance function ``rho(x, target)``.

    ``distance(x, y)`` is the distance to a single state; for a
    :class:`TargetSet` the potential is the minimum distance over the set.
    """

    memo_limit = 1 << 21

    def __init__(self, distance):
        self.distance = distance
        # values do not depend on model parameters, so they survive model rebuilds
        self._memo: dict = {}
        self._masks: dict = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_memo"] = {}
        state["_masks"] = {}
        return state

    def decreasing_mask(self, x, target, states) -> np.ndarray:
        """Boolean mask over ``states`` (neighbors of ``x``) of those with lower potential."""
        key = (x, target)
        hit = self._masks.get(key)
        if hit is not None and (hit[0] is states or hit[0] == states):
            return hit[1]
        rho = self(x, target)
        mask = np.fromiter((self(s, target) < rho for s in states), dtype=bool, count=len(states))
        if len(self._masks) >= self.memo_limit:
            self._masks.clear()
        self._masks[key] = (states, mask)
        return mask

    def __call__(self, x, target) -> int:
        key = (x, target)
        v = self._memo.get(key)
        if v is None:
            if isinstance(target, TargetSet):
                v = min(self.distance(x, y) for y in target)
            else:
                v = self.distance(x, target)
            if len(self._memo) >= self.memo_limit:
                self._memo.clear()
            self._memo[key] = v
        return v


@dataclass(frozen=True)
class ProposalConfig:
    alpha: float = 2.0 / 3.0
    beta: float = 1.0
    step_cap: int = DEFAULT_STEP_CAP

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (1/2, 1)")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.step_cap < 1:
            raise ValueError("step_cap must be positive")


@dataclass(frozen=True)
class NeighborSplit:
    decreasing: list
    others: list
    nu_decreasing: float
    nu_others: float


@dataclass(frozen=True)
class ProposedPath:
    path: JumpChainPath
    log_proposal: float
    log_jump_chain: float
    excursions: int = 1


@dataclass
class _StepTable:
    states: list
    log_step: list
    log_nu: list
    cumulative: list = field(repr=False)


def decreasing_set(model: CtmcModel, potential: Potential, x, target) -> NeighborSplit:
    if in_target(x, target):
        raise ValueError("decreasing set is undefined at the target")
    rho = potential(x, target)
    dec, oth = [], []
    for s, p in model.neighbors(x):
        (dec if potential(s, target) < rho else oth).append((s, p))
    if not dec:
        raise PotentialError(f"no neighbor of {model.render(x)} decreases the potential")
    return NeighborSplit(dec, oth, math.fsum(p for _, p in dec), math.fsum(p for _, p in oth))


class GuidedProposal:
    """Proposal sampler for one ``(model, potential, config)`` triple.

    Step tables are memoized per ``(state, target)``.
    """

    def __init__(self, model: CtmcModel, potential: Potential, config: ProposalConfig):
        self.model = model
        self.potential = potential
        self.config = config
        self._tables: dict = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_tables"] = {}
        return state

    def step_table(self, x, target) -> _StepTable:
        key = (x, target)
        table = self._tables.get(key)
        if table is not None:
            return table
        states, p = self.model.neighbor_arrays(x)
        if in_target(x, target):
            # rho = 0 here so nothing decreases it; excursions leave via nu
            if not states:
                raise PotentialError(f"target {self.model.render(x)} is absorbing; no excursion possible")
            q = p
        else:
            dec = self.potential.decreasing_mask(x, target, states)
            if not dec.any():
                raise PotentialError(f"no neighbor of {self.model.render(x)} decreases the potential")
            nu_d = float(p[dec].sum())
            if dec.all():
                q = p / nu_d
            else:
                nu_o = float(p[~dec].sum())
                a = max(self.config.alpha, nu_d / (nu_d + nu_o))
                q = np.where(dec, (a / nu_d) * p, ((1.0 - a) / nu_o) * p)
        table = _StepTable(states, np.log(q).tolist(), np.log(p).tolist(), np.cumsum(q).tolist())
        self._tables[key] = table
        return table

    def transition(self, x, target, gen: np.random.Generator):
        """One proposal step; returns ``(next, log step prob, log nu)``."""
        t = self.step_table(x, target)
        i = min(bisect_right(t.cumulative, gen.random() * t.cumulative[-1]), len(t.states) - 1)
        return t.states[i], t.log_step[i], t.log_nu[i]

    def hitting_path(self, start, target, require_move: bool, gen: np.random.Generator):
        """States, log proposal and log jump-chain probability of one hitting path."""
        states = [start]
        log_q = 0.0
        log_p = 0.0
        x = start
        cap = self.config.step_cap
        steps = 0
        while not (in_target(x, target) and (not require_move or steps > 0)):
            if steps >= cap:
                raise StepCapExceeded(f"hitting path exceeded {cap} steps")
            t = self.step_table(x, target)
            i = min(bisect_right(t.cumulative, gen.random() * t.cumulative[-1]), len(t.states) - 1)
            log_q += t.log_step[i]
            log_p += t.log_nu[i]
            x = t.states[i]
            states.append(x)
            steps += 1
        return states, log_q, log_p

    def propose(self, start, target, gen: np.random.Generator) -> ProposedPath:
        states, log_q, log_p = self.hitting_path(start, target, False, gen)
        beta = self.config.beta
        if beta < 1.0:
            n = int(gen.geometric(beta))
            log_q += math.log(beta) + (n - 1) * math.log1p(-beta)
        else:
            n = 1
        for _ in range(n - 1):
            more, q2, p2 = self.hitting_path(states[-1], target, True, gen)
            states.extend(more[1:])
            log_q += q2
            log_p += p2
        path = JumpChainPath(tuple(states), tuple(self.model.rate(s) for s in states))
        return ProposedPath(path, log_q, log_p, n)

    def log_proposal_of(self, states, target) -> float:
        """Replay a path through the step tables and return its log proposal mass.

        The excursion count is the number of target visits along the path.
        """
        if not in_target(states[-1], target):
            return -math.inf
        log_q = 0.0
        for a, b in zip(states, states[1:]):
            t = self.step_table(a, target)
            if b not in t.states:
                return -math.inf
            log_q += t.log_step[t.states.index(b)]
        n = sum(1 for s in states if in_target(s, target))
        beta = self.config.beta
        if beta < 1.0:
            log_q += math.log(beta) + (n - 1) * math.log1p(-beta)
        elif n > 1:
            return -math.inf
        return log_q


def proposal_transition(model, potential, config, x, target, gen):
    if in_target(x, target):
        raise ValueError("proposal_transition requires a non-target state")
    nxt, log_step, _ = GuidedProposal(model, potential, config).transition(x, target, gen)
    return nxt, log_step


def propose_hitting_path(model, potential, config, start, target, require_move, gen) -> ProposedPath:
    states, log_q, log_p = GuidedProposal(model, potential, config).hitting_path(
        start, target, require_move, gen)
    return ProposedPath(JumpChainPath.from_states(model, states), log_q, log_p, 1)


def propose(model, potential, config, start, target, gen) -> ProposedPath:
    return GuidedProposal(model, potential, config).propose(start, target, gen)


@dataclass
class PotentialReport:
    rows: list
    errors: list
    warnings: list

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_potential(model: CtmcModel, potential: Potential, target, states) -> PotentialReport:
    """Check the three validity conditions on a finite sample of states.

    Conditions 1 (zero exactly on the target) and 3 (a decreasing neighbor
    exists) are errors; condition 2 (every move changes the potential by
    exactly one) is only a warning.
    """
    rows, errors, warns = [], [], []
    for x in states:
        rho = potential(x, target)
        hit = in_target(x, target)
        deltas = sorted({potential(s, target) - rho for s, _ in model.neighbors(x)})
        has_dec = any(d < 0 for d in deltas)
        rows.append({"state": model.render(x), "rho": rho, "has_decrease": has_dec,
                     "abs_deltas": sorted({abs(d) for d in deltas})})
        if (rho == 0) != hit:
            errors.append(f"condition 1: rho({model.render(x)}) = {rho}")
        if not hit and not has_dec:
            errors.append(f"condition 3: no decreasing neighbor at {model.render(x)}")
        if any(abs(d) != 1 for d in deltas):
            warns.append(f"condition 2: |delta rho| in {sorted({abs(d) for d in deltas})} at {model.render(x)}")
    return PotentialReport(rows, errors, warns)
