import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from tips.core import FiniteCtmc, two_state_model
from tips.experiments import TwoStateProblem, random_generator
from tips.oracle import (OracleUnavailable, enumerate_reachable, exact_transition_probability,
                         export_edge_list, grid_posterior, log_likelihood_exact, transition_matrix,
                         two_state_probability)
from tips.strings import StringModel, StringModelParams

from conftest import two_state_exact


def test_two_state_space(flip):
    space = enumerate_reachable(flip, 0)
    assert len(space) == 2 and space.closed


def test_rna_space_size(rna12):
    assert len(rna12.space) == 70 and rna12.space.closed


def test_string_space_is_truncated():
    space = enumerate_reachable(StringModel(StringModelParams()), "AC", bound=200)
    assert not space.closed and len(space) == 200
    assert np.all(space.leaked_rate >= 0) and space.leaked_rate.sum() > 0


def test_exact_zero_horizon_is_indicator(flip):
    space = enumerate_reachable(flip, 0)
    assert exact_transition_probability(space, 0, 0, 0.0) == 1.0
    assert exact_transition_probability(space, 0, 1, 0.0) == 0.0


def test_exact_two_state(flip):
    space = enumerate_reachable(flip, 0)
    assert math.isclose(exact_transition_probability(space, 0, 1, 1.0), two_state_exact(), rel_tol=1e-12)
    assert math.isclose(two_state_probability(1, 1, 1), 0.43233235838169365, rel_tol=1e-12)


def test_rows_are_stochastic():
    g = np.random.default_rng(0)
    for _ in range(10):
        q = random_generator(g)
        space = enumerate_reachable(FiniteCtmc(q), 0)
        p = transition_matrix(space, 1.3)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_unknown_state_rejected(flip):
    with pytest.raises(ValueError):
        exact_transition_probability(enumerate_reachable(flip, 0), 0, 7, 1.0)


def test_log_likelihood_needs_finite_space():
    with pytest.raises(OracleUnavailable):
        log_likelihood_exact(StringModel(StringModelParams(lambda_ssm=0, mu_ssm=0)), [("A", "C", 1.0)])


def test_log_likelihood_includes_stationary():
    m = two_state_model(1.0, 3.0)
    data = [(0, 1, 0.5)]
    with_pi = log_likelihood_exact(m, data)
    without = log_likelihood_exact(m, data, use_stationary=False)
    assert math.isclose(with_pi - without, math.log(0.75))


def test_grid_posterior_single_point():
    post = grid_posterior(lambda v: two_state_model(v, v), [(0, 1, 1.0)], lambda v: 0.0, [1.0])
    assert post.mass.tolist() == [1.0]


def test_grid_posterior_two_state_against_fine_quadrature():
    prob = TwoStateProblem()
    post = prob.posterior()
    assert math.isclose(post.mass.sum(), 1.0)
    # independent trapezoid integration on a 10x finer grid
    fine = np.linspace(0.0, 5.0, 10_001)[1:]  # density vanishes at 0
    data = prob.dataset()

    def loglik(v):
        p_move = 0.5 * (1 - math.exp(-2 * v))
        return sum(math.log(0.5) + math.log(p_move if a != b else 1 - p_move) for a, b, _ in data) - v

    dens = np.exp(np.array([loglik(v) for v in fine]) - max(loglik(v) for v in fine))
    mean = trapezoid(fine * dens, fine) / trapezoid(dens, fine)
    assert abs(post.mean - mean) < 1e-6


def test_edge_list(flip):
    text = export_edge_list(enumerate_reachable(flip, 0))
    assert text.splitlines() == ["0\t1\t1.0", "1\t0\t1.0"]
