"""Derivative machinery: analytic paths vs finite differences."""

import numpy as np

from stochsym.fields import (FdConfig, MatrixField, ScalarField, VectorField,
                             as_matrix_field, as_scalar_field, as_vector_field)


def test_scalar_gradient_and_hessian_fd():
    f = ScalarField(lambda x: x[0] ** 2 * np.sin(x[1]))
    x = np.array([1.3, 0.4])
    grad = f.gradient(x)
    expect = np.array([2 * 1.3 * np.sin(0.4), 1.3 ** 2 * np.cos(0.4)])
    assert np.allclose(grad, expect, atol=1e-7)
    hess = f.hessian(x)
    assert np.allclose(hess, hess.T, atol=1e-6)
    assert abs(hess[0, 0] - 2 * np.sin(0.4)) < 1e-5


def test_scalar_analytic_wins_over_fd():
    calls = {"grad": 0}

    def grad(x):
        calls["grad"] += 1
        return np.array([2 * x[0], 0.0])

    f = ScalarField(lambda x: x[0] ** 2, grad=grad)
    g = f.gradient(np.array([3.0, 1.0]))
    assert calls["grad"] == 1
    assert np.allclose(g, [6.0, 0.0], atol=0)
    # forcing finite differences must bypass the analytic closure
    g_fd = f.gradient(np.array([3.0, 1.0]), use_analytic=False)
    assert calls["grad"] == 1
    assert abs(g_fd[0] - 6.0) < 1e-8


def test_vector_field_jacobian_and_hessian():
    v = VectorField(lambda x: np.array([x[0] * x[1], x[1] ** 3]))
    x = np.array([2.0, 0.5])
    jac = v.jacobian(x)
    assert jac.shape == (2, 2)
    assert np.allclose(jac, [[0.5, 2.0], [0.0, 3 * 0.25]], atol=1e-6)
    hess = v.hessian(x)
    assert hess.shape == (2, 2, 2)
    assert abs(hess[0, 0, 1] - 1.0) < 2e-4
    assert abs(hess[1, 1, 1] - 3.0) < 2e-4


def test_vector_component_inherits_derivatives():
    v = VectorField(lambda x: np.array([x[0] ** 2, x[0] + x[1]]),
                    jac=lambda x: np.array([[2 * x[0], 0.0], [1.0, 1.0]]))
    comp = v.component(0)
    assert np.allclose(comp.gradient(np.array([1.5, 0.0])), [3.0, 0.0], atol=0)
    assert comp(np.array([1.5, 0.0])) == 2.25


def test_matrix_field_jacobian_and_directional():
    s = MatrixField(lambda x: np.array([[x[0] * x[1]], [x[1]]]))
    x = np.array([1.5, 2.5])
    jac = s.jacobian(x)
    assert jac.shape == (2, 1, 2)
    assert abs(jac[0, 0, 0] - 2.5) < 1e-6
    assert abs(jac[0, 0, 1] - 1.5) < 1e-6
    assert abs(jac[1, 0, 0]) < 1e-6
    d = s.directional(x, np.array([1.0, 2.0]))
    assert abs(d[0, 0] - (2.5 + 2 * 1.5)) < 1e-5
    assert abs(d[1, 0] - 2.0) < 1e-5


def test_fd_config_step_effect():
    # a much coarser first-derivative step shows the truncation error
    fine = ScalarField(lambda x: np.sin(x[0]))
    coarse = ScalarField(lambda x: np.sin(x[0]), fd=FdConfig(step1=1e-2))
    x = np.array([1.0])
    err_fine = abs(fine.gradient(x)[0] - np.cos(1.0))
    err_coarse = abs(coarse.gradient(x)[0] - np.cos(1.0))
    assert err_fine < err_coarse < 1e-4


def test_as_field_wrappers_accept_constants():
    f = as_scalar_field(2.5)
    assert f(np.zeros(3)) == 2.5
    assert np.allclose(f.gradient(np.zeros(3)), 0.0, atol=0)
    v = as_vector_field(np.array([1.0, -1.0]), dim=2)
    assert np.allclose(v(np.zeros(2)), [1.0, -1.0])
    assert np.allclose(v.jacobian(np.zeros(2)), 0.0, atol=0)
    m = as_matrix_field(np.eye(2), shape=(2, 2))
    assert np.allclose(m(np.zeros(2)), np.eye(2))


def test_wrappers_pass_through_existing_fields():
    v = VectorField(lambda x: x)
    assert as_vector_field(v, dim=2) is v
