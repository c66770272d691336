"""Core SDE container, generator, reference integrator and clock tools."""

import numpy as np
import pytest

from stochsym.errors import DomainError, RangeError
from stochsym.fields import ScalarField
from stochsym.rng import substream
from stochsym.sde import (DiscretePath, Sde, evaluate_at, generator_apply,
                          simulate_em, time_change_forward,
                          time_change_inverse)


def make_ou(a=-1.0, b=0.5):
    return Sde(n=1, m=1,
               mu=lambda x: np.array([a * x[0] + b]),
               sigma=np.array([[1.0]]))


def test_constant_coefficients_are_coerced():
    sde = Sde(n=2, m=1, mu=np.array([0.0, 1.0]), sigma=np.array([[1.0], [0.0]]))
    x = np.array([0.3, 0.7])
    assert np.allclose(sde.mu(x), [0.0, 1.0])
    assert sde.sigma(x).shape == (2, 1)
    assert np.allclose(sde.diffusion_matrix(x), [[1.0, 0.0], [0.0, 0.0]])


def test_domain_guard():
    sde = Sde(n=1, m=1, mu=lambda x: np.array([1.0 / x[0]]),
              sigma=np.array([[1.0]]), domain=lambda x: x[0] > 0)
    with pytest.raises(DomainError):
        sde.check_point(np.array([-1.0]))
    assert sde.check_point(np.array([2.0]))[0] == 2.0


def test_generator_on_quadratic():
    # L(x^2) = 2 mu x + sigma^2; radial drift a/x with a=1 gives 2a + 1 = 3
    sde = Sde(n=1, m=1, mu=lambda x: np.array([1.0 / x[0]]),
              sigma=np.array([[1.0]]), domain=lambda x: x[0] > 0)
    f = ScalarField(lambda x: x[0] ** 2,
                    grad=lambda x: np.array([2 * x[0]]),
                    hess=lambda x: np.array([[2.0]]))
    val = generator_apply(sde, f, np.array([1.7]))
    assert abs(val - 3.0) < 1e-12
    val_fd = generator_apply(sde, f, np.array([1.7]), use_analytic=False)
    assert abs(val_fd - 3.0) < 1e-6


def test_simulate_em_grid_and_mean():
    sde = make_ou()
    n = 400
    ends = np.empty(n)
    for p in range(n):
        path = simulate_em(sde, np.array([1.0]), horizon=1.0, dt=1e-2,
                           stream=substream(5, 3, p))
        assert path.times[0] == 0.0
        assert abs(path.times[-1] - 1.0) < 1e-12
        assert path.states.shape == (101, 1)
        assert np.all(path.log_weight == 0.0)
        assert np.allclose(path.clock, path.times)
        ends[p] = path.states[-1, 0]
    # a = -1, b = 1/2, x0 = 1: mean at t=1 from tools/make_oracles.py
    se = ends.std() / np.sqrt(n)
    assert abs(ends.mean() - 0.6839397205857212) < 4 * se


def test_simulate_em_fractional_final_step():
    sde = make_ou()
    path = simulate_em(sde, np.array([1.0]), horizon=0.25, dt=0.1,
                       stream=substream(1, 3, 0))
    assert np.allclose(path.times, [0.0, 0.1, 0.2, 0.25])
    assert path.dw.shape == (3, 1)


def test_rejection_truncates_path():
    sde = Sde(n=1, m=1, mu=np.array([-50.0]), sigma=np.array([[0.1]]),
              domain=lambda x: x[0] > 0)
    path = simulate_em(sde, np.array([1.0]), horizon=1.0, dt=0.01,
                       stream=substream(2, 3, 0))
    assert path.rejected
    assert path.times[-1] < 1.0
    assert not sde.domain(path.states[-1])


def test_evaluate_at_left_node_semantics():
    path = DiscretePath(times=[0.0, 0.1, 0.2, 0.3],
                        states=[[0.0], [1.0], [2.0], [3.0]],
                        dw=np.zeros((3, 1)),
                        log_weight=np.zeros(4),
                        clock=[0.0, 0.1, 0.2, 0.3])
    assert evaluate_at(path, 0.15)[0] == 1.0
    assert evaluate_at(path, 0.2)[0] == 2.0  # exact node hits the node
    assert evaluate_at(path, 0.3)[0] == 3.0
    with pytest.raises(RangeError):
        evaluate_at(path, 0.31)


def test_time_change_round_trip():
    sde = make_ou()
    path = simulate_em(sde, np.array([1.0]), horizon=1.0, dt=0.01,
                       stream=substream(7, 3, 1))
    eta = ScalarField(lambda x: 1.0 + x[0] ** 2)
    changed = time_change_forward(path, eta)
    assert changed.clock[0] == 0.0
    assert np.all(np.diff(changed.clock) > 0)
    # round trip through the generalized inverse at interior clock values
    for t_prime in (0.1, 0.5, changed.clock[-1] * 0.9):
        alpha = time_change_inverse(changed, t_prime)
        assert 0.0 <= alpha <= 1.0
    # the clock integrand: first increment equals eta(x0) * dt
    assert abs(changed.clock[1] - eta(path.states[0]) * 0.01) < 1e-15
    with pytest.raises(RangeError):
        time_change_inverse(changed, changed.clock[-1] + 1.0)


def test_discrete_path_validation():
    with pytest.raises(Exception):
        DiscretePath(times=[0.0, 0.0], states=[[1.0], [1.0]],
                     dw=np.zeros((1, 1)), log_weight=np.zeros(2),
                     clock=[0.0, 0.0])
