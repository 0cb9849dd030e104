"""Time-integrated path sampling: importance sampling over jump chains.

Each particle is a guided proposal ending at the target. Its weight is
``nu(path) * timing(path) / proposal(path)``; the mean weight is an unbiased
estimate of the transition probability.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import rng as rngmod
from .core import (DEFAULT_STEP_CAP, DegenerateWeightsWarning, EstimateSummary, CtmcModel,
                   forward_sampling_estimate, in_target, summarize)
from .integration import log_timing_probability
from .proposal import GuidedProposal, Potential, ProposalConfig, ProposedPath


@dataclass(frozen=True)
class Particle:
    proposed: ProposedPath
    log_timing: float
    log_weight: float

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


def weight_of_path(horizon: float, proposed: ProposedPath) -> Particle:
    log_timing = log_timing_probability(proposed.path.rates, horizon)
    if log_timing == -math.inf or proposed.log_jump_chain == -math.inf:
        lw = -math.inf
    else:
        lw = proposed.log_jump_chain + log_timing - proposed.log_proposal
    return Particle(proposed, log_timing, lw)


def _tips_block(sampler: GuidedProposal, start, target, horizon, seed, keep, b, lo, hi):
    gen = rngmod.stream(seed, rngmod.TIPS, b)
    out = []
    for _ in range(lo, hi):
        particle = weight_of_path(horizon, sampler.propose(start, target, gen))
        out.append(particle if keep else particle.log_weight)
    return out


def tips_particles(model: CtmcModel, potential: Potential, config: ProposalConfig, start, target,
                   horizon: float, particles: int, seed: int = 0, workers: int = 1,
                   sampler: GuidedProposal | None = None) -> list:
    """The weighted particles themselves, in particle order."""
    sampler = sampler or GuidedProposal(model, potential, config)
    fn = partial(_tips_block, sampler, start, target, horizon, seed, True)
    return rngmod.map_blocks(fn, particles, workers)


def tips_estimate(model: CtmcModel, potential: Potential, config: ProposalConfig, start, target,
                  horizon: float, particles: int, seed: int = 0, workers: int = 1,
                  sampler: GuidedProposal | None = None) -> EstimateSummary:
    """Estimate ``P(X(horizon) = target | X(0) = start)``.

    Pass a long-lived ``sampler`` to reuse its step tables across calls.
    """
    if particles < 1:
        raise ValueError("particles must be >= 1")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    t0 = time.perf_counter()
    if horizon == 0:
        lw = [0.0 if in_target(start, target) else -math.inf] * particles
        return summarize(lw, seed, time.perf_counter() - t0)
    sampler = sampler or GuidedProposal(model, potential, config)
    fn = partial(_tips_block, sampler, start, target, horizon, seed, False)
    lw = rngmod.map_blocks(fn, particles, workers)
    return summarize(lw, seed, time.perf_counter() - t0)


SWEEP_COLUMNS = ("method", "horizon", "particles", "replicate", "seed", "estimate",
                 "abs_log_error", "weight_variance", "ess", "cpu_ms", "status")


def abs_log_error(estimate: float, exact: float) -> float:
    if estimate <= 0.0:
        return math.inf
    return abs(math.log(estimate) - math.log(exact))


def estimate_comparison_sweep(model: CtmcModel, potential: Potential, start, target, horizons,
                              particle_counts, replicates: int, methods=("tips", "fs"),
                              config=None, exact=None, seed: int = 0, workers: int = 1,
                              step_cap: int = DEFAULT_STEP_CAP) -> list[dict]:
    """Run every (method, horizon, particles, replicate) cell of a grid.

    ``config`` is a :class:`ProposalConfig` or a callable mapping a horizon
    to one. ``exact`` maps a horizon to the true probability, or is None
    when no oracle is available (error column left empty).
    """
    if config is None:
        config = ProposalConfig()
    rows = []
    for mi, method in enumerate(methods):
        for hi, horizon in enumerate(horizons):
            cfg = config(horizon) if callable(config) else config
            sampler = GuidedProposal(model, potential, cfg) if method == "tips" else None
            truth = exact(horizon) if exact is not None else None
            for ki, k in enumerate(particle_counts):
                for r in range(replicates):
                    cell_seed = rngmod.derive_seed(seed, rngmod.SWEEP, mi, hi, ki, r)
                    row = {"method": method, "horizon": horizon, "particles": k,
                           "replicate": r, "seed": cell_seed}
                    c0 = time.process_time()
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore", DegenerateWeightsWarning)
                            if method == "tips":
                                s = tips_estimate(model, potential, cfg, start, target, horizon, k,
                                                  seed=cell_seed, workers=workers, sampler=sampler)
                            elif method == "fs":
                                s = forward_sampling_estimate(model, start, target, horizon, k,
                                                              seed=cell_seed, workers=workers,
                                                              step_cap=step_cap)
                            else:
                                raise ValueError(f"unknown method {method!r}")
                    except (RuntimeError, ValueError) as err:
                        row.update(estimate=None, abs_log_error=None, weight_variance=None,
                                   ess=None, cpu_ms=None, status=f"error: {err}")
                        rows.append(row)
                        continue
                    row.update(
                        estimate=s.estimate,
                        abs_log_error=abs_log_error(s.estimate, truth) if truth is not None else None,
                        weight_variance=s.weight_variance,
                        ess=s.ess,
                        cpu_ms=1000.0 * (time.process_time() - c0),
                        status="ok" if s.estimate > 0 else "degenerate",
                    )
                    rows.append(row)
    return rows


def min_particles_for_accuracy(rows: list[dict], method: str, horizon: float,
                               threshold: float = 1.0):
    """Smallest particle count whose median absolute log error is below ``threshold``."""
    counts = sorted({r["particles"] for r in rows if r["method"] == method and r["horizon"] == horizon})
    for k in counts:
        errs = [r["abs_log_error"] for r in rows
                if r["method"] == method and r["horizon"] == horizon and r["particles"] == k]
        errs = [math.inf if e is None else e for e in errs]
        if errs and float(np.median(errs)) < threshold:
            return k
    return None
