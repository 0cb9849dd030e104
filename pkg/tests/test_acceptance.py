"""Acceptance criteria 1-9 at full size.

Each test records a PASS/FAIL line (printed in the terminal summary) and
then asserts. Tolerances are the contract values; nothing is loosened.
"""
import json
import math
import itertools

import numpy as np
import pytest
from scipy.stats import poisson

from tips import cli
from tips import rng as rngmod
from tips.core import FiniteCtmc, HopDistance
from tips.estimator import estimate_comparison_sweep, min_particles_for_accuracy, tips_estimate
from tips.experiments import (PARTICLE_GRID, RNA_HORIZONS, RNA_STATES, SMC_OBSERVATIONS, STRING_TRUTH,
                              TwoStateProblem, histogram_tv, random_generator, rna_instance,
                              smc_instance, string_validation, two_state_gimh)
from tips.integration import hypoexponential_band_oracle, timing_probability
from tips.oracle import enumerate_reachable, exact_transition_probability
from tips.proposal import GuidedProposal, Potential, ProposalConfig
from tips.rna import hamming, rna_tuning_schedule
from tips.smc import ObservationSequence, smc_run
from tips.strings import (StringModel, StringModelParams, levenshtein, levenshtein_guide,
                          sample_stationary_string)

from conftest import record

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def rna():
    inst = rna_instance()
    assert len(inst.space) == RNA_STATES
    return inst


def rna_schedule(horizon):
    return ProposalConfig(*rna_tuning_schedule(horizon))


# 1

def test_criterion_1_timing_probability():
    g = rngmod.stream(1, 101)
    worst_band = 0.0
    for _ in range(1000):
        n = int(g.integers(1, 51))
        rates = np.exp(g.uniform(math.log(0.05), math.log(20.0), n))
        horizon = float(np.exp(g.uniform(math.log(0.01), math.log(10.0))))
        worst_band = max(worst_band, abs(timing_probability(rates, horizon)
                                         - hypoexponential_band_oracle(rates, horizon)))
    worst_rel = 0.0
    for n in range(1, 31):
        for _ in range(5):
            lam = float(np.exp(g.uniform(math.log(0.05), math.log(20.0))))
            horizon = float(np.exp(g.uniform(math.log(0.01), math.log(10.0))))
            ref = poisson.pmf(n - 1, lam * horizon)
            if ref < 1e-250:
                continue
            worst_rel = max(worst_rel, abs(timing_probability([lam] * n, horizon) / ref - 1.0))
    ok = worst_band < 1e-8 and worst_rel < 1e-10
    record(1, ok, f"max |band error| {worst_band:.2e}, max equal-rate relative error {worst_rel:.2e}")
    assert ok


# 2

def _criterion_2_cells(rna):
    """(model, potential, start, target, exact, config) for every instance and horizon."""
    g = rngmod.stream(2, 102)
    cells = []
    for _ in range(20):
        m = FiniteCtmc(random_generator(g))
        space = enumerate_reachable(m, 0)
        pot = Potential(HopDistance(m))
        for h in (0.1, 1.0, 5.0):
            cells.append((m, pot, 0, m.n - 1, exact_transition_probability(space, 0, m.n - 1, h), h,
                          ProposalConfig(2 / 3, 0.5)))
    for h in (0.1, 1.0, 5.0):
        cells.append((rna.model, hamming(), rna.start, rna.target, rna.exact(h), h, rna_schedule(h)))
    return cells


def test_criterion_2_oracle_equivalence(rna):
    cells = _criterion_2_cells(rna)
    z_first = []
    for i, (m, pot, a, b, exact, h, cfg) in enumerate(cells):
        s = tips_estimate(m, pot, cfg, a, b, h, 10_000, seed=rngmod.derive_seed(2, i))
        z_first.append((s.estimate - exact) / s.standard_error)
    # coverage: 200 further repetitions cycling through the cells
    hits = 0
    for r in range(200):
        m, pot, a, b, exact, h, cfg = cells[r % len(cells)]
        s = tips_estimate(m, pot, cfg, a, b, h, 10_000, seed=rngmod.derive_seed(2, 1000 + r))
        hits += abs(s.estimate - exact) <= 1.96 * s.standard_error
    worst = max(abs(z) for z in z_first)
    coverage = hits / 200
    ok = worst < 4 and 0.90 <= coverage <= 0.99
    record(2, ok, f"{len(cells)} cells, max |z| {worst:.2f}, 95% interval coverage {coverage:.3f}")
    assert ok


# 3 and 4 share one RNA sweep with 30 replicates per cell

@pytest.fixture(scope="module")
def rna_sweep(rna):
    return estimate_comparison_sweep(rna.model, hamming(), rna.start, rna.target, RNA_HORIZONS,
                                     PARTICLE_GRID, 30, config=rna_schedule, exact=rna.exact, seed=3)


def test_criterion_3_accuracy_level_one(rna_sweep):
    tips_k = {h: min_particles_for_accuracy(rna_sweep, "tips", h) for h in RNA_HORIZONS}
    fs_k = {h: min_particles_for_accuracy(rna_sweep, "fs", h) for h in RNA_HORIZONS}
    reached = all(k is not None for k in tips_k.values())
    fs_quarter = fs_k[0.25] if fs_k[0.25] is not None else math.inf
    ordering = tips_k[0.25] is not None and tips_k[0.25] < fs_quarter
    ok = reached and ordering
    show = ", ".join(f"T={h:g}: {tips_k[h]}/{fs_k[h]}" for h in RNA_HORIZONS)
    record(3, ok, f"min particles for median |log error| < 1, tips/fs: {show}")
    assert ok


def test_criterion_4_variance_ordering(rna_sweep):
    h, k = RNA_HORIZONS[0], PARTICLE_GRID[-1]

    def variances(method):
        rows = sorted((r for r in rna_sweep if r["method"] == method and r["horizon"] == h
                       and r["particles"] == k), key=lambda r: r["replicate"])
        return np.array([r["weight_variance"] for r in rows])

    tv, fv = variances("tips"), variances("fs")
    wins = int(np.sum(tv < fv))
    ratio = float(np.median(fv / tv))
    ok = len(tv) == 30 and wins >= 28
    record(4, ok, f"T={h:g}, K={k}: tips variance lower in {wins}/30 replicates, "
                  f"median fs/tips variance ratio {ratio:.1f}")
    assert ok


# 5

def _four_state_continuity():
    q = np.array([[0, 1, 1, 0], [1, 0, 1, 1], [0, 1, 0, 1], [1, 0, 1, 0]], float)
    sampler = GuidedProposal(FiniteCtmc(q), Potential(lambda x, y: abs(x - y)), ProposalConfig(beta=0.5))
    paths = bad = 0
    for length in range(2, 8):  # up to 6 jumps
        for mid in itertools.product(range(4), repeat=length - 2):
            states = (0, *mid, 3)
            if any(a == b or q[a, b] == 0 for a, b in zip(states, states[1:])):
                continue
            paths += 1
            bad += not sampler.log_proposal_of(states, 3) > -math.inf
    return paths, bad


def _mutate(x, edits, g):
    for _ in range(edits):
        op = int(g.integers(3)) if x else 0
        i = int(g.integers(len(x) + (op == 0)))
        c = "ACGT"[int(g.integers(4))]
        if op == 0:
            x = x[:i] + c + x[i:]
        elif op == 1:
            x = x[:i] + x[i + 1:]
        else:
            x = x[:i] + c + x[i + 1:]
    return x


def _mass_error(sampler):
    return max(abs(math.fsum(math.exp(v) for v in t.log_step) - 1.0) for t in sampler._tables.values())


def test_criterion_5_proposal_soundness(rna):
    g = rngmod.stream(5, 105)
    # RNA 12-mer: 10^5 proposals from the open chain to the MFE, at all schedule settings
    rna_ok = True
    mass_err = 0.0
    per = 100_000 // len(RNA_HORIZONS) + 1
    for h in RNA_HORIZONS:
        sampler = GuidedProposal(rna.model, hamming(), rna_schedule(h))
        for _ in range(per):
            rna_ok &= sampler.propose(rna.start, rna.target, g).path.states[-1] == rna.target
        mass_err = max(mass_err, _mass_error(sampler))
    # strings: stationary starts, targets 0..6 random edits away
    params = StringModelParams(0.03, 0.05, 0.2, 2.0, 2.0)
    model = StringModel(params)
    pot = levenshtein_guide()
    sampler = GuidedProposal(model, pot, ProposalConfig(2 / 3, 0.95))
    str_ok = True
    pairs = 0
    for _ in range(500):
        a = sample_stationary_string(StringModelParams(0.03, 2.0, 0.5, 0.0, 0.0), g)
        b = _mutate(a, int(g.integers(7)), g)
        if levenshtein(a, b) > 6:
            continue
        pairs += 1
        for _ in range(200):
            str_ok &= sampler.propose(a, b, g).path.states[-1] == b
    mass_err = max(mass_err, _mass_error(sampler))
    paths, bad = _four_state_continuity()
    ok = rna_ok and str_ok and pairs * 200 >= 90_000 and mass_err <= 1e-12 and bad == 0
    record(5, ok, f"{per * len(RNA_HORIZONS)} RNA and {pairs * 200} string proposals terminated: "
                  f"{rna_ok and str_ok}; max |step mass - 1| {mass_err:.1e}; "
                  f"{paths - bad}/{paths} four-state paths with positive proposal mass")
    assert ok


# 6

def test_criterion_6_gimh_exactness():
    prob = TwoStateProblem()
    post = prob.posterior()
    tv = {k: histogram_tv(two_state_gimh(prob, k, 50_000, seed=6).values("rate"), post) for k in (8, 64)}
    ok = all(v < 0.05 for v in tv.values())
    record(6, ok, ", ".join(f"K={k}: TV {v:.4f}" for k, v in tv.items()))
    assert ok


# 7

STRING_RUN = {"particles": 256, "iterations": 1500, "burn_in": 100}


def test_criterion_7_string_gimh():
    res = string_validation(**STRING_RUN)
    ok = res.passed
    parts = [f"{n}: 95% CI ({lo:.3f}, {hi:.3f}) truth {STRING_TRUTH[n]}, drift {res.drift[n]:.3f} IQR"
             for n, (lo, hi) in res.intervals.items()]
    record(7, ok, f"K={res.particles}, {res.iterations} iterations, acceptance {res.acceptance_rate:.2f}, "
                  f"{res.seconds / 60:.0f} min; " + "; ".join(parts))
    assert ok


# 8

def test_criterion_8_smc():
    model, pot, start, exact = smc_instance()
    obs = ObservationSequence.from_pairs(SMC_OBSERVATIONS)
    lines, ok = [], True
    for k, reps in ((100, 400), (10_000, 20)):
        for threshold in (0.5, 1.0):
            z = np.array([math.exp(smc_run(model, pot, ProposalConfig(beta=0.5), start, obs, k, threshold,
                                           seed=rngmod.derive_seed(8, k, int(threshold * 10), r)).log_marginal)
                          for r in range(reps)])
            se = z.std(ddof=1) / math.sqrt(reps)
            dev = abs(z.mean() - exact) / se
            ok &= dev < 4
            lines.append(f"K={k} ess {threshold}: log Z {math.log(z.mean()):.5f} vs {math.log(exact):.5f} ({dev:.2f} SE)")
    record(8, ok, "; ".join(lines))
    assert ok


# 9

REPLAY = {
    "estimate": {"model": {"kind": "rna", "sequence": "UCUGUUCCGGGU"},
                 "query": {"start": "............", "target": "mfe", "horizon": 1.0},
                 "estimator": {"method": "tips", "schedule": "rna", "particles": 2000}},
    "sweep": {"model": {"kind": "finite", "generator": [[0, 1, 0], [1, 0, 2], [0, 3, 0]], "potential": "hops"},
              "query": {"start": 0, "target": 2, "horizons": [0.5, 2.0]},
              "estimator": {"methods": ["tips", "fs"], "particle_counts": [300, 700], "beta": 0.5},
              "execution": {"replicates": 2}},
    "gimh": {"model": {"kind": "finite", "generator": [[0, "rate"], ["rate", 0]],
                       "parameters": {"rate": 1.0}, "stationary": [0.5, 0.5]},
             "query": {"dataset": [{"start": 0, "end": 1, "horizon": 1.0}, {"start": 0, "end": 0, "horizon": 1.0}]},
             "estimator": {"particles": 600, "beta": 0.5},
             "gimh": {"iterations": 20, "parameters": {"rate": {}}}},
    "smc": {"model": {"kind": "finite", "generator": [[0, 1, 0, 0, 0], [1.5, 0, 1, 0, 0], [0, 1.5, 0, 1, 0],
                                                      [0, 0, 1.5, 0, 1], [0, 0, 0, 1.5, 0]], "potential": "absolute"},
            "query": {"start": 1, "observations": [{"set": [2, 3], "horizon": 0.7}, {"set": [0, 4], "horizon": 1.0}]},
            "estimator": {"particles": 900, "beta": 0.5, "ess_threshold": 1.0}},
    "simulate": {"model": {"kind": "string", "lambda_pt": 2.0, "mu_pt": 0.5, "lambda_ssm": 0.0, "mu_ssm": 0.0},
                 "simulate": {"count": 50, "horizon": 0.3}},
    "validate-potential": {"model": {"kind": "rna", "sequence": "UCUGUUCCGGGU"}, "query": {"target": "mfe"}},
}


def test_criterion_9_reproducibility(tmp_path):
    failures = []
    for command, cfg in REPLAY.items():
        src = tmp_path / f"{command}.json"
        src.write_text(json.dumps(cfg))
        outputs = []
        for tag, config, workers in (("a", src, 1), ("b", None, 1), ("c", None, 8)):
            out = tmp_path / f"{command}-{tag}.out"
            diag = tmp_path / f"{command}-{tag}.diag"
            config = config or tmp_path / f"{command}-a.out"  # replay from the first run's provenance
            code = cli.main([command, str(config), "--out", str(out), "--diagnostics", str(diag),
                             "--workers", str(workers)])
            if code != 0:
                failures.append(f"{command}/{tag} exit {code}")
                break
            outputs.append((out.read_bytes(), diag.read_bytes() if diag.exists() else b""))
        if len(outputs) == 3 and not outputs[0] == outputs[1] == outputs[2]:
            failures.append(f"{command} differs")
    ok = not failures
    record(9, ok, f"{len(REPLAY)} commands replayed at workers 1 and 8" + (": " + ", ".join(failures) if failures else ""))
    assert ok
