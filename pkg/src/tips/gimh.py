"""Grouped independence Metropolis-Hastings with estimated marginal likelihoods.

The chain stores ``(theta, log Z_hat)`` and never re-estimates ``Z_hat`` for
the current state; that is what makes the pseudo-marginal chain target the
exact posterior whatever the particle count.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .core import DegenerateWeightsWarning, forward_sampling_estimate
from .estimator import tips_estimate
from .proposal import GuidedProposal, Potential

DEFAULT_PROPOSAL_SCALE = 2.0 * math.log(1.2)
QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


class StartupFailure(RuntimeError):
    """The marginal likelihood at the initial parameter never came out finite."""


@dataclass(frozen=True)
class ExponentialPrior:
    rate: float = 1.0

    def logpdf(self, v: float) -> float:
        if v <= 0:
            return -math.inf
        return math.log(self.rate) - self.rate * v


def log_prior(priors: dict, theta: dict) -> float:
    return sum(priors[name].logpdf(theta[name]) for name in priors)


def multiplicative_proposal(theta: dict, scale: float, gen: np.random.Generator,
                            names=None, u: float | None = None, index: int | None = None):
    """Scale one uniformly chosen component by ``exp(scale * (u - 1/2))``.

    Returns the new parameter dict and the log Hastings correction, which
    for this move equals the log of the multiplier. ``scale = 0`` is the
    identity kernel.
    """
    if not scale >= 0:
        raise ValueError("scale must be nonnegative")
    names = list(names if names is not None else theta)
    if index is None:
        index = int(gen.integers(len(names)))
    if u is None:
        u = gen.random()
    log_m = scale * (u - 0.5)
    out = dict(theta)
    out[names[index]] = theta[names[index]] * math.exp(log_m)
    return out, log_m


@dataclass
class MarginalLikelihoodEstimate:
    log_z: float
    per_observation: list
    stationary_used: bool

    def recompute(self) -> float:
        return math.fsum(self.per_observation) if all(map(math.isfinite, self.per_observation)) \
            else -math.inf


def estimate_log_marginal(model, dataset, potential: Potential, config, particles: int,
                          seed: int, method: str = "tips", include_stationary: bool = True,
                          workers: int = 1) -> MarginalLikelihoodEstimate:
    """Sum over observations of log(transition estimate) + log statio(start)."""
    use_statio = include_stationary and model.has_stationary
    parts = []
    samplers: dict = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWeightsWarning)
        for i, (start, end, horizon) in enumerate(dataset):
            s = rngmod.derive_seed(seed, i)
            if method == "tips":
                cfg = config(horizon) if callable(config) else config
                sampler = samplers.get(cfg)
                if sampler is None:
                    sampler = samplers[cfg] = GuidedProposal(model, potential, cfg)
                est = tips_estimate(model, potential, cfg, start, end, horizon, particles,
                                    seed=s, workers=workers, sampler=sampler)
            elif method == "fs":
                est = forward_sampling_estimate(model, start, end, horizon, particles,
                                                seed=s, workers=workers)
            else:
                raise ValueError(f"unknown method {method!r}")
            term = est.log_estimate
            if use_statio:
                term += model.log_stationary(start)
            parts.append(term)
    total = math.fsum(parts) if all(map(math.isfinite, parts)) else -math.inf
    return MarginalLikelihoodEstimate(total, parts, use_statio)


@dataclass
class GimhRecord:
    iteration: int
    theta: dict
    log_z: float
    accepted: bool


@dataclass
class GimhResult:
    names: list
    records: list = field(repr=False)
    stationary_used: bool = False
    initial: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        if not self.records:
            return math.nan
        return sum(r.accepted for r in self.records) / len(self.records)

    def values(self, name) -> np.ndarray:
        return np.array([r.theta[name] for r in self.records])


def gimh_chain(build_model, dataset, priors: dict, potential: Potential, config, particles: int,
               iterations: int, init: dict, seed: int = 0,
               proposal_scale: float = DEFAULT_PROPOSAL_SCALE, method: str = "tips",
               include_stationary: bool = True, refresh_current: bool = False,
               init_retries: int = 10, workers: int = 1, fixed: dict | None = None,
               callback=None) -> GimhResult:
    """Run the pseudo-marginal chain over the parameters named in ``priors``.

    ``build_model(theta)`` turns a full parameter dict (the sampled values
    merged over ``fixed``) into a model. ``refresh_current=True``
    re-estimates the current state's likelihood every iteration; that
    breaks exactness and exists only as a diagnostic contrast.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    names = list(priors)
    fixed = dict(fixed or {})
    theta = {n: float(init[n]) for n in names}
    if not math.isfinite(log_prior(priors, theta)):
        raise ValueError("initial parameter is outside the prior support")
    gen = rngmod.stream(seed, rngmod.GIMH, 0)

    def loglik(th, tag):
        model = build_model({**fixed, **th})
        return estimate_log_marginal(model, dataset, potential, config, particles,
                                     rngmod.derive_seed(seed, rngmod.GIMH, *tag), method,
                                     include_stationary, workers)

    current = None
    for attempt in range(init_retries):
        current = loglik(theta, (1, 0, attempt))
        if math.isfinite(current.log_z):
            break
    else:
        raise StartupFailure(f"log marginal likelihood not finite at {theta} after {init_retries} tries")
    log_z = current.log_z
    result = GimhResult(names, [], current.stationary_used, dict(theta))

    for t in range(1, iterations + 1):
        proposal, log_hastings = multiplicative_proposal(theta, proposal_scale, gen, names)
        lp_new = log_prior(priors, proposal)
        u = gen.random()
        if refresh_current:
            fresh = loglik(theta, (3, t))
            if math.isfinite(fresh.log_z):
                log_z = fresh.log_z
        accepted = False
        new_log_z = -math.inf
        if math.isfinite(lp_new):
            new_log_z = loglik(proposal, (2, t)).log_z
            if math.isfinite(new_log_z):
                log_r = lp_new - log_prior(priors, theta) + new_log_z - log_z + log_hastings
                accepted = math.log(u) < min(0.0, log_r) if u > 0 else True
        if accepted:
            theta, log_z = proposal, new_log_z
        result.records.append(GimhRecord(t, dict(theta), log_z, accepted))
        if callback is not None:
            callback(result.records[-1])
    return result


def initial_positive_sequence_ess(x) -> float:
    """Geyer's initial positive sequence estimate of the effective sample size."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return float(n)
    xc = x - x.mean()
    gamma0 = float(np.dot(xc, xc)) / n
    if gamma0 <= 1e-300 * max(1.0, float(np.max(np.abs(x))) ** 2):
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    rho = acov / acov[0]
    total = 0.0
    prev = math.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)  # initial monotone sequence
        total += pair
        prev = pair
    tau = -1.0 + 2.0 * total
    return float(max(1.0, n / tau)) if tau > 0 else float(n)


def prefix_quantiles(x, points: int = 20, quantiles=QUANTILES) -> list[dict]:
    x = np.asarray(x, dtype=float)
    n = x.size
    out = []
    for length in sorted({max(1, int(round(n * (i + 1) / points))) for i in range(points)}):
        qs = np.quantile(x[:length], quantiles)
        out.append({"prefix": length, **{f"q{100 * q:g}": float(v) for q, v in zip(quantiles, qs)}})
    return out


def chain_diagnostics(result: GimhResult, points: int = 20) -> dict:
    n = len(result.records)
    if n < 10:
        raise ValueError("chain_diagnostics needs at least 10 iterations")
    report = {
        "iterations": n,
        "acceptance_rate": result.acceptance_rate,
        "stationary_used": result.stationary_used,
        "parameters": {},
    }
    for name in result.names:
        v = result.values(name)
        qs = np.quantile(v, QUANTILES)
        report["parameters"][name] = {
            "ess": initial_positive_sequence_ess(v),
            "mean": float(v.mean()),
            "quantiles": {f"q{100 * q:g}": float(x) for q, x in zip(QUANTILES, qs)},
            "prefix_quantiles": prefix_quantiles(v, points),
        }
    return report


def median_drift_ratio(values, points: int = 40) -> float:
    """Spread of prefix medians over the last quarter, relative to the full-chain IQR."""
    v = np.asarray(values, dtype=float)
    n = v.size
    lengths = np.unique(np.linspace(int(0.75 * n), n, points).astype(int))
    meds = [np.median(v[:k]) for k in lengths if k > 0]
    iqr = float(np.subtract(*np.quantile(v, [0.75, 0.25])))
    if iqr <= 0:
        return 0.0 if max(meds) == min(meds) else math.inf
    return (max(meds) - min(meds)) / iqr
