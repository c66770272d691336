"""Scalar, vector and matrix fields with analytic or finite-difference derivatives.

Every geometric object in the library (drift components, diffusion matrices,
vector fields, rotation fields, time-change densities, measure-change fields,
potentials) is wrapped in one of the three field classes below.  A field is a
deterministic evaluator plus optional analytic derivative callables; when the
analytic ones are absent, central finite differences with per-coordinate
scaled steps are used.

Step sizes follow the usual optimal-order rules for central differences,
scaled by max(1, |x_i|) per coordinate:

    first derivatives   h1 = eps**(1/2)
    second derivatives  h2 = eps**(1/4)
    third derivatives   h3 = eps**(1/6)

The second-derivative exponent 1/4 keeps the roundoff floor of the central
second difference near 1e-7 * |f|; a step of eps**(1/3) would leave a floor of
roughly 2e-5 * |f|, too coarse for the residual tolerances used by the
symmetry checks.  All exponents can be overridden through FdConfig.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class FdConfig:
    """Finite-difference step configuration.

    step1/step2/step3 are the base steps for first/second/third derivatives;
    each is multiplied by max(1, |x_i|) in coordinate i.
    """

    step1: float = _EPS ** 0.5
    step2: float = _EPS ** 0.25
    step3: float = _EPS ** (1.0 / 6.0)


DEFAULT_FD = FdConfig()


def _steps(x: np.ndarray, base: float) -> np.ndarray:
    return base * np.maximum(1.0, np.abs(x))


def fd_jacobian(f: Callable, x: np.ndarray, out_shape: tuple, cfg: FdConfig = DEFAULT_FD) -> np.ndarray:
    """Central-difference Jacobian of f at x.

    f maps R^n to an array of shape out_shape; the result has shape
    out_shape + (n,), the last axis indexing the differentiation coordinate.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    jac = np.empty(out_shape + (n,), dtype=float)
    h = _steps(x, cfg.step1)
    xp = x.copy()
    for i in range(n):
        xp[i] = x[i] + h[i]
        fp = np.asarray(f(xp), dtype=float)
        xp[i] = x[i] - h[i]
        fm = np.asarray(f(xp), dtype=float)
        xp[i] = x[i]
        jac[..., i] = (fp - fm) / (2.0 * h[i])
    return jac


def fd_hessian(f: Callable, x: np.ndarray, cfg: FdConfig = DEFAULT_FD) -> np.ndarray:
    """Central-difference Hessian of a scalar function f at x, shape (n, n)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.empty((n, n), dtype=float)
    h = _steps(x, cfg.step2)
    fc = float(f(x))
    xp = x.copy()
    for i in range(n):
        xp[i] = x[i] + h[i]
        fp = float(f(xp))
        xp[i] = x[i] - h[i]
        fm = float(f(xp))
        xp[i] = x[i]
        hess[i, i] = (fp - 2.0 * fc + fm) / (h[i] * h[i])
        for j in range(i + 1, n):
            xp[i] = x[i] + h[i]
            xp[j] = x[j] + h[j]
            fpp = float(f(xp))
            xp[j] = x[j] - h[j]
            fpm = float(f(xp))
            xp[i] = x[i] - h[i]
            fmm = float(f(xp))
            xp[j] = x[j] + h[j]
            fmp = float(f(xp))
            xp[i] = x[i]
            xp[j] = x[j]
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return hess


def fd_third(f: Callable, x: np.ndarray, cfg: FdConfig = DEFAULT_FD) -> np.ndarray:
    """All third partials of a scalar f at x, shape (n, n, n), symmetric.

    Pure thirds use the 4-point antisymmetric stencil; mixed ones combine a
    second difference in one coordinate with first differences in the others.
    Accuracy is second order with a roundoff floor well below 1e-5 for
    O(1)-scaled fields, sufficient for the identities that consume them.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.empty((n, n, n), dtype=float)
    h = _steps(x, cfg.step3)

    def d3_iii(i):
        xp = x.copy()
        xp[i] = x[i] + 2.0 * h[i]
        f2p = float(f(xp))
        xp[i] = x[i] + h[i]
        f1p = float(f(xp))
        xp[i] = x[i] - h[i]
        f1m = float(f(xp))
        xp[i] = x[i] - 2.0 * h[i]
        f2m = float(f(xp))
        return (f2p - 2.0 * f1p + 2.0 * f1m - f2m) / (2.0 * h[i] ** 3)

    def d3_iij(i, j):
        # d^2/di^2 of (central difference in j)
        xp = x.copy()
        vals = []
        for sj in (+1.0, -1.0):
            xp[j] = x[j] + sj * h[j]
            xp[i] = x[i] + h[i]
            fp = float(f(xp))
            xp[i] = x[i]
            fc = float(f(xp))
            xp[i] = x[i] - h[i]
            fm = float(f(xp))
            xp[i] = x[i]
            vals.append((fp - 2.0 * fc + fm) / (h[i] * h[i]))
        xp[j] = x[j]
        return (vals[0] - vals[1]) / (2.0 * h[j])

    def d3_ijk(i, j, k):
        xp = x.copy()
        total = 0.0
        for si in (+1.0, -1.0):
            for sj in (+1.0, -1.0):
                for sk in (+1.0, -1.0):
                    xp[i] = x[i] + si * h[i]
                    xp[j] = x[j] + sj * h[j]
                    xp[k] = x[k] + sk * h[k]
                    total += si * sj * sk * float(f(xp))
        xp[i] = x[i]
        xp[j] = x[j]
        xp[k] = x[k]
        return total / (8.0 * h[i] * h[j] * h[k])

    for i in range(n):
        out[i, i, i] = d3_iii(i)
        for j in range(n):
            if j == i:
                continue
            v = d3_iij(i, j)
            out[i, i, j] = out[i, j, i] = out[j, i, i] = v
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                v = d3_ijk(i, j, k)
                out[i, j, k] = out[i, k, j] = out[j, i, k] = v
                out[j, k, i] = out[k, i, j] = out[k, j, i] = v
    return out


class ScalarField:
    """A deterministic map R^n -> R with optional analytic derivatives.

    Parameters
    ----------
    func : callable
        Evaluator; must be deterministic.
    grad : callable, optional
        Analytic gradient, returning shape (n,).
    hess : callable, optional
        Analytic Hessian, returning shape (n, n).
    fd : FdConfig, optional
        Finite-difference steps used when analytic callables are missing.
    """

    def __init__(self, func, grad=None, hess=None, fd: FdConfig = DEFAULT_FD, name: str = ""):
        self.func = func
        self._grad = grad
        self._hess = hess
        self.fd = fd
        self.name = name

    def __call__(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=float)))

    def gradient(self, x, use_analytic: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if use_analytic and self._grad is not None:
            return np.asarray(self._grad(x), dtype=float)
        return fd_jacobian(lambda p: self.func(p), x, (), self.fd)

    def hessian(self, x, use_analytic: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if use_analytic and self._hess is not None:
            return np.asarray(self._hess(x), dtype=float)
        return fd_hessian(lambda p: float(self.func(p)), x, self.fd)

    def third(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return fd_third(lambda p: float(self.func(p)), x, self.fd)


class VectorField:
    """A deterministic map R^n -> R^p with optional analytic derivatives.

    Used for drift vectors, symmetry generators Y, measure-change fields and
    gradients of potentials alike.  jac returns shape (p, n); hess returns
    all second derivatives, shape (p, n, n).
    """

    def __init__(self, func, jac=None, hess=None, fd: FdConfig = DEFAULT_FD, name: str = ""):
        self.func = func
        self._jac = jac
        self._hess = hess
        self.fd = fd
        self.name = name

    def __call__(self, x) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float))

    def jacobian(self, x, use_analytic: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if use_analytic and self._jac is not None:
            return np.asarray(self._jac(x), dtype=float)
        p = self(x).shape[0]
        return fd_jacobian(lambda q: self(q), x, (p,), self.fd)

    def hessian(self, x, use_analytic: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if use_analytic and self._hess is not None:
            return np.asarray(self._hess(x), dtype=float)
        p = self(x).shape[0]
        return np.stack([fd_hessian(lambda q, i=i: float(self(q)[i]), x, self.fd)
                         for i in range(p)])

    def component(self, i: int) -> "ScalarField":
        """The i-th component as a ScalarField (inherits the FD config)."""
        grad = None
        hess = None
        if self._jac is not None:
            grad = lambda x, i=i: np.asarray(self._jac(x), dtype=float)[i]
        if self._hess is not None:
            hess = lambda x, i=i: np.asarray(self._hess(x), dtype=float)[i]
        return ScalarField(lambda x, i=i: self(x)[i], grad=grad, hess=hess, fd=self.fd)


class MatrixField:
    """A deterministic map R^n -> Mat(p, q) with optional analytic Jacobian.

    jacobian returns shape (p, q, n); directional(x, v) is the derivative of
    the matrix along the direction v.
    """

    def __init__(self, func, jac=None, fd: FdConfig = DEFAULT_FD, name: str = ""):
        self.func = func
        self._jac = jac
        self.fd = fd
        self.name = name

    def __call__(self, x) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float))

    def jacobian(self, x, use_analytic: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if use_analytic and self._jac is not None:
            return np.asarray(self._jac(x), dtype=float)
        p, q = self(x).shape
        return fd_jacobian(lambda s: self(s), x, (p, q), self.fd)

    def directional(self, x, v, use_analytic: bool = True) -> np.ndarray:
        """Derivative of the matrix along direction v: sum_k v^k d_k F."""
        jac = self.jacobian(x, use_analytic=use_analytic)
        return jac @ np.asarray(v, dtype=float)


def as_scalar_field(obj, fd: FdConfig = DEFAULT_FD) -> ScalarField:
    """Wrap a constant or callable as a ScalarField (fields pass through)."""
    if isinstance(obj, ScalarField):
        return obj
    if callable(obj):
        return ScalarField(obj, fd=fd)
    val = float(obj)
    return ScalarField(lambda x: val, grad=lambda x: np.zeros(np.asarray(x).size),
                       hess=lambda x: np.zeros((np.asarray(x).size,) * 2), fd=fd)


def as_vector_field(obj, dim: int, fd: FdConfig = DEFAULT_FD) -> VectorField:
    """Wrap a constant vector or callable as a VectorField of output size dim."""
    if isinstance(obj, VectorField):
        return obj
    if callable(obj):
        return VectorField(obj, fd=fd)
    vec = np.asarray(obj, dtype=float).reshape(dim)
    return VectorField(lambda x: vec, jac=lambda x: np.zeros((dim, np.asarray(x).size)),
                       hess=lambda x: np.zeros((dim,) + (np.asarray(x).size,) * 2), fd=fd)


def as_matrix_field(obj, shape: tuple, fd: FdConfig = DEFAULT_FD) -> MatrixField:
    """Wrap a constant matrix or callable as a MatrixField of the given shape."""
    if isinstance(obj, MatrixField):
        return obj
    if callable(obj):
        return MatrixField(obj, fd=fd)
    mat = np.asarray(obj, dtype=float).reshape(shape)
    return MatrixField(lambda x: mat,
                       jac=lambda x: np.zeros(shape + (np.asarray(x).size,)), fd=fd)
