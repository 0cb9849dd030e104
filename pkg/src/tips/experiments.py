"""Reference instances and drivers shared by the acceptance suite and scripts/."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .core import (BirthDeathModel, FiniteCtmc, abs_distance, forward_simulate, indicator_distance,
                   two_state_model)
from .gimh import ExponentialPrior, gimh_chain, median_drift_ratio
from .oracle import enumerate_reachable, exact_transition_probability, grid_posterior, transition_matrix
from .proposal import Potential, ProposalConfig
from .rna import RnaModel, RnaModelParams, minimum_energy_structures
from .strings import StringModel, StringModelParams, levenshtein_guide, sample_stationary_string

# 12-mer with exactly 70 secondary structures at hairpin_min = 3 and a unique MFE
RNA_12MER = "UCUGUUCCGGGU"
RNA_STATES = 70
RNA_HORIZONS = tuple(0.125 * 2 ** i for i in range(7))
PARTICLE_GRID = tuple(5 ** i for i in range(1, 7))


@dataclass
class RnaInstance:
    model: RnaModel
    start: tuple
    target: tuple
    space: object

    def exact(self, horizon: float) -> float:
        return exact_transition_probability(self.space, self.start, self.target, horizon)


def rna_instance(sequence: str = RNA_12MER, hairpin_min: int = 3) -> RnaInstance:
    """Open chain to the MFE structure on the enumerated 12-mer space."""
    model = RnaModel(sequence, RnaModelParams(hairpin_min=hairpin_min))
    start = ()
    target = minimum_energy_structures(model)[0]
    return RnaInstance(model, start, target, enumerate_reachable(model, start))


def random_generator(gen: np.random.Generator, max_states: int = 10) -> np.ndarray:
    """Irreducible generator: a directed cycle plus random extra edges."""
    n = int(gen.integers(2, max_states + 1))
    q = np.where(gen.random((n, n)) < 0.4, gen.exponential(1.0, (n, n)), 0.0)
    for i in range(n):
        q[i, (i + 1) % n] += gen.exponential(1.0) + 0.1
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


# ---- 2-state unknown-rate problem --------------------------------------------

@dataclass(frozen=True)
class TwoStateProblem:
    rate: float = 1.0
    observations: int = 10
    horizon: float = 1.0
    seed: int = 0

    def model(self, lam: float) -> FiniteCtmc:
        return two_state_model(lam, lam)

    def dataset(self) -> list:
        """Stationary starts, endpoint after ``horizon`` under the true rate."""
        truth = self.model(self.rate)
        out = []
        for i in range(self.observations):
            g = rngmod.stream(self.seed, rngmod.SIMULATE, i)
            x = int(g.integers(2))
            out.append((x, forward_simulate(truth, x, self.horizon, g).end, self.horizon))
        return out

    def posterior(self, grid=None, prior_rate: float = 1.0):
        # 1000 cell midpoints on [0, 5]
        grid = (np.arange(1000) + 0.5) * 0.005 if grid is None else grid
        prior = ExponentialPrior(prior_rate)
        return grid_posterior(self.model, self.dataset(), prior.logpdf, grid)


def histogram_tv(samples, grid_post, bins: int = 50, upper: float = 5.0) -> float:
    """Total variation between a chain histogram and the grid posterior on equal bins."""
    edges = np.linspace(0.0, upper, bins + 1)
    h, _ = np.histogram(np.clip(samples, 0, upper - 1e-12), edges)
    h = h / h.sum()
    ref, _ = np.histogram(np.clip(grid_post.grid, 0, upper - 1e-12), edges, weights=grid_post.mass)
    ref = ref / ref.sum()
    return 0.5 * float(np.abs(h - ref).sum())


# the rate posterior spans about a factor of ten; +-18% steps (the default) mix ~40x slower
TWO_STATE_SCALE = 3.0


def two_state_gimh(problem: TwoStateProblem, particles: int, iterations: int, seed: int = 0,
                   beta: float = 0.5, refresh_current: bool = False,
                   proposal_scale: float = TWO_STATE_SCALE):
    data = problem.dataset()
    return gimh_chain(lambda th: problem.model(th["rate"]), data, {"rate": ExponentialPrior(1.0)},
                      Potential(indicator_distance), ProposalConfig(beta=beta), particles, iterations,
                      {"rate": 1.0}, seed=seed, refresh_current=refresh_current,
                      proposal_scale=proposal_scale)


# ---- two-generation SMC instance ---------------------------------------------

SMC_OBSERVATIONS = (((2, 3), 0.7), ((0, 4), 1.0))


def smc_instance():
    """Birth-death chain on {0..4} started at 1; exact value by matrix exponentials."""
    model = BirthDeathModel(1.0, 1.5, capacity=4)
    space = enumerate_reachable(model, 1)
    v = np.zeros(len(space.states))
    v[space.index[1]] = 1.0
    for states, t in SMC_OBSERVATIONS:
        v = v @ transition_matrix(space, t)
        keep = np.zeros_like(v)
        for s in states:
            keep[space.index[s]] = 1.0
        v = v * keep
    return model, Potential(abs_distance), 1, float(v.sum())


# ---- string-model validation -------------------------------------------------

STRING_TRUTH = {"lambda_pt": 2.0, "mu_pt": 0.5}
STRING_HORIZON = 0.3
STRING_THETA_SUB = 0.03


def string_params(theta: dict) -> StringModelParams:
    return StringModelParams(theta_sub=STRING_THETA_SUB, lambda_pt=theta["lambda_pt"],
                             mu_pt=theta["mu_pt"], lambda_ssm=0.0, mu_ssm=0.0)


def string_dataset(pairs: int = 200, seed: int = 1, horizon: float = STRING_HORIZON) -> list:
    """Stationary ancestors evolved for ``horizon`` under the generating parameters."""
    params = string_params(STRING_TRUTH)
    model = StringModel(params)
    out = []
    for i in range(pairs):
        g = rngmod.stream(seed, rngmod.SIMULATE, i)
        x = sample_stationary_string(params, g)
        out.append((x, forward_simulate(model, x, horizon, g).end, horizon))
    return out


@dataclass
class StringValidation:
    particles: int
    iterations: int
    acceptance_rate: float
    seconds: float
    burn_in: int = 0
    intervals: dict = field(default_factory=dict)
    covered: dict = field(default_factory=dict)
    drift: dict = field(default_factory=dict)
    chain: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(self.covered.values()) and all(d < 0.05 for d in self.drift.values())


def string_validation(particles: int = 128, iterations: int = 600, seed: int = 0, data_seed: int = 1,
                      pairs: int = 200, alpha: float = 0.8, beta: float = 0.95, burn_in: int = 100,
                      init: dict | None = None, progress=None) -> StringValidation:
    """GIMH on simulated pairs; intervals and drift use the chain after ``burn_in``."""
    data = string_dataset(pairs, data_seed)
    priors = {k: ExponentialPrior(1.0) for k in STRING_TRUTH}
    init = init or {"lambda_pt": 1.0, "mu_pt": 1.0}
    pot = levenshtein_guide()
    cfg = ProposalConfig(alpha=alpha, beta=beta)
    t0 = time.perf_counter()
    res = gimh_chain(lambda th: StringModel(string_params(th)), data, priors, pot, cfg, particles,
                     iterations, init, seed=seed, callback=progress)
    out = StringValidation(particles, iterations, res.acceptance_rate, time.perf_counter() - t0,
                           burn_in=burn_in)
    for name, truth in STRING_TRUTH.items():
        v = res.values(name)[burn_in:]
        lo, hi = np.quantile(v, [0.025, 0.975])
        out.intervals[name] = (float(lo), float(hi))
        out.covered[name] = bool(lo <= truth <= hi)
        out.drift[name] = median_drift_ratio(v)
        out.chain[name] = v.tolist()
    return out


__all__ = [
    "RNA_12MER", "RNA_STATES", "RNA_HORIZONS", "PARTICLE_GRID", "RnaInstance", "rna_instance",
    "random_generator", "TwoStateProblem", "histogram_tv", "two_state_gimh", "smc_instance",
    "SMC_OBSERVATIONS", "STRING_TRUTH", "string_dataset", "string_params", "string_validation",
    "StringValidation",
]
