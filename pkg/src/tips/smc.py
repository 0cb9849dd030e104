"""Sequential importance sampling over set-valued observations.

Generation ``g`` extends every particle from its current endpoint to the
set ``A_g`` with one guided proposal and multiplies its weight by the usual
``nu * timing / proposal`` factor. Resampling is systematic and triggered by
the effective sample size.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.special import logsumexp

from . import rng as rngmod
from .core import CtmcModel, TargetSet
from .estimator import weight_of_path
from .proposal import GuidedProposal, Potential, ProposalConfig

REPLAY_TOL = 1e-10


class WeightCollapse(RuntimeError):
    """Every particle weight became zero."""

    def __init__(self, generation: int):
        super().__init__(f"all particle weights are zero at generation {generation}")
        self.generation = generation


class SetPotential(Potential):
    """``rho^A(x) = min_{y in A} rho^y(x)`` for a fixed set ``A``."""

    def __init__(self, potential: Potential, states):
        states = TargetSet(states)
        if not states:
            raise ValueError("target set is empty")
        super().__init__(potential.distance)
        self.states = states

    def __call__(self, x, target=None) -> int:
        return super().__call__(x, self.states if target is None else target)


def set_potential(potential: Potential, states) -> SetPotential:
    return SetPotential(potential, states)


@dataclass(frozen=True)
class ObservationSequence:
    """``(A_g, T_g)`` pairs; the duration is the time since the previous observation."""
    sets: tuple
    durations: tuple

    def __post_init__(self):
        if len(self.sets) != len(self.durations):
            raise ValueError("sets and durations differ in length")
        if not self.sets:
            raise ValueError("observation sequence is empty")
        for a, t in zip(self.sets, self.durations):
            if not a:
                raise ValueError("observation sets must be nonempty")
            if not t > 0:
                raise ValueError("observation durations must be positive")

    @classmethod
    def from_pairs(cls, pairs) -> "ObservationSequence":
        pairs = list(pairs)
        return cls(tuple(TargetSet(a) for a, _ in pairs), tuple(float(t) for _, t in pairs))

    def __len__(self):
        return len(self.sets)


def systematic_resample(weights, gen: np.random.Generator) -> np.ndarray:
    """Offspring indices from one uniform offset swept over ``K`` equal strata."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("cannot resample: all weights are zero")
    k = w.size
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    points = (gen.random() + np.arange(k)) / k
    return np.searchsorted(cdf, points, side="right").clip(max=k - 1)


def ess_from_log(log_w: np.ndarray) -> float:
    finite = np.isfinite(log_w)
    if not finite.any():
        return 0.0
    w = np.exp(log_w[finite] - log_w[finite].max())
    return float(w.sum() ** 2 / np.dot(w, w))


@dataclass
class Generation:
    """One SMC generation, stored in enough detail to replay the weights.

    ``parents[k]`` is the particle of the previous generation that particle
    ``k`` extended (after any resampling); ``carried`` is the log weight it
    inherited, zero right after a resampling step.
    """
    index: int
    parents: np.ndarray
    carried: np.ndarray
    endpoints: list
    log_jump_chain: np.ndarray
    log_timing: np.ndarray
    log_proposal: np.ndarray
    log_increment: np.ndarray
    log_weight: np.ndarray
    ess: float
    log_evidence_increment: float
    resampled_after: bool = False


@dataclass
class SmcResult:
    log_marginal: float
    generations: list = field(repr=False)
    particles: int = 0
    seed: int = 0
    wall_clock: float = 0.0

    @property
    def ess_trace(self) -> list:
        return [g.ess for g in self.generations]

    @property
    def resampling_log(self) -> list:
        return [g.index for g in self.generations if g.resampled_after]

    def replay(self, k: int, generation: int | None = None) -> float:
        """Recompute particle ``k``'s cumulative log weight from stored increments."""
        gens = self.generations
        g = len(gens) - 1 if generation is None else generation
        total = 0.0
        while g >= 0:
            gen = gens[g]
            inc = gen.log_jump_chain[k] + gen.log_timing[k] - gen.log_proposal[k]
            total += inc
            if g == 0 or gens[g - 1].resampled_after:
                break
            k = int(gen.parents[k])
            g -= 1
        return total


def _extend_block(sampler: GuidedProposal, starts, target, horizon, seed, b, lo, hi):
    gen = rngmod.stream(seed, rngmod.TIPS, b)
    out = []
    for k in range(lo, hi):
        p = weight_of_path(horizon, sampler.propose(starts[k], target, gen))
        out.append((p.proposed.path.end, p.proposed.log_jump_chain, p.log_timing,
                    p.proposed.log_proposal))
    return out


def generation_seed(seed: int, g: int) -> int:
    """Seed of generation ``g`` (1-based); its particle blocks follow the TIPS stream layout."""
    return rngmod.derive_seed(seed, rngmod.SMC, g)


def smc_run(model: CtmcModel, potential: Potential, config: ProposalConfig, start,
            observations: ObservationSequence, particles: int, ess_threshold: float = 0.5,
            seed: int = 0, workers: int = 1) -> SmcResult:
    """Estimate ``log P(X(t_1) in A_1, ..., X(t_G) in A_G | X(0) = start)``.

    ``config`` may be a callable mapping a duration to a proposal config.
    """
    if particles < 2:
        raise ValueError("particles must be >= 2")
    if not 0.0 < ess_threshold <= 1.0:
        raise ValueError("ess_threshold must lie in (0, 1]")
    t0 = time.perf_counter()
    k = particles
    states = [start] * k
    carried = np.zeros(k)
    parents = np.arange(k)
    log_z = 0.0
    generations = []
    samplers: dict = {}
    for g, (target, horizon) in enumerate(zip(observations.sets, observations.durations), 1):
        cfg = config(horizon) if callable(config) else config
        sampler = samplers.get(cfg)
        if sampler is None:
            sampler = samplers[cfg] = GuidedProposal(model, potential, cfg)
        fn = partial(_extend_block, sampler, states, target, horizon, generation_seed(seed, g))
        rows = rngmod.map_blocks(fn, k, workers)
        endpoints = [r[0] for r in rows]
        lj = np.array([r[1] for r in rows])
        lt = np.array([r[2] for r in rows])
        lq = np.array([r[3] for r in rows])
        with np.errstate(invalid="ignore"):
            inc = np.where(np.isfinite(lj) & np.isfinite(lt), lj + lt - lq, -np.inf)
        log_w = carried + inc
        if not np.isfinite(log_w).any():
            raise WeightCollapse(g)
        # sum_k W_{g-1,k} * incr_{g,k} with W normalized
        dz = float(logsumexp(log_w) - logsumexp(carried))
        log_z += dz
        ess = ess_from_log(log_w)
        rec = Generation(g - 1, parents, carried, endpoints, lj, lt, lq, inc, log_w, ess, dz)
        generations.append(rec)
        if g == len(observations):
            break
        if ess_threshold >= 1.0 or ess < ess_threshold * k:
            gen = rngmod.stream(seed, rngmod.SMC, 0, g)
            parents = systematic_resample(np.exp(log_w - log_w.max()), gen)
            carried = np.zeros(k)
            rec.resampled_after = True
        else:
            parents = np.arange(k)
            carried = log_w
        states = [endpoints[i] for i in parents]
    return SmcResult(log_z, generations, particles, seed, time.perf_counter() - t0)
