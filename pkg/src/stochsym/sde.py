"""Ito SDEs, the infinitesimal generator, Euler-Maruyama paths, time changes.

An Sde is the pair of coefficient fields (mu, sigma) on an open domain
M in R^n driven by an m-dimensional Brownian motion.  The generator is

    L f = 1/2 (sigma sigma^T)^{ij} d_i d_j f + mu^i d_i f.

Paths are discretized with the explicit Euler-Maruyama scheme on uniform
grids; every Ito sum in the library (drift, diffusion, time-change density,
measure-change integrand) evaluates integrands at the left endpoint.
Random time changes are carried as a companion clock array on the original
grid rather than by resampling states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, NumericError, RangeError
from .fields import MatrixField, ScalarField, VectorField, as_matrix_field, as_vector_field


@dataclass
class Sde:
    """An Ito diffusion dX = mu(X) dt + sigma(X) dW on an open set of R^n.

    n is the state dimension, m the driving-noise dimension.  domain is a
    predicate for the open set; coefficients must evaluate finitely wherever
    it holds.
    """

    n: int
    m: int
    mu: VectorField
    sigma: MatrixField
    domain: Callable[[np.ndarray], bool] = lambda x: True

    def __post_init__(self) -> None:
        self.mu = as_vector_field(self.mu, self.n)
        self.sigma = as_matrix_field(self.sigma, (self.n, self.m))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        if not self.domain(x):
            raise DomainError(f"point {x.tolist()} outside the SDE domain")
        return x

    def diffusion_matrix(self, x) -> np.ndarray:
        """a(x) = sigma sigma^T, shape (n, n)."""
        s = self.sigma(x)
        return s @ s.T


def generator_apply(sde: Sde, f: ScalarField, x, use_analytic: bool = True) -> float:
    """Apply the generator L to a scalar field f at a domain point x.

    Uses f's analytic gradient/Hessian when present (and use_analytic is
    True), central finite differences otherwise.
    """
    x = sde.check_point(x)
    grad = f.gradient(x, use_analytic=use_analytic)
    hess = f.hessian(x, use_analytic=use_analytic)
    a = sde.diffusion_matrix(x)
    val = 0.5 * float(np.sum(a * hess)) + float(sde.mu(x) @ grad)
    if not np.isfinite(val):
        raise NumericError(f"generator produced a non-finite value at {x.tolist()}")
    return val


@dataclass
class DiscretePath:
    """A discretized trajectory with its increments, weights and clock.

    times   : (K+1,) strictly increasing grid starting at 0
    states  : (K+1, n) path nodes
    dw      : (K, m) Brownian increments used to advance the path
    log_weight : (K+1,) cumulative log Radon-Nikodym values, log_weight[0]=0
    clock   : (K+1,) cumulative transformed time, clock[0]=0
    rejected: True when the path exited the domain and was truncated there
    """

    times: np.ndarray
    states: np.ndarray
    dw: np.ndarray
    log_weight: np.ndarray
    clock: np.ndarray
    rejected: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.dw = np.asarray(self.dw, dtype=float)
        self.log_weight = np.asarray(self.log_weight, dtype=float)
        self.clock = np.asarray(self.clock, dtype=float)
        k = len(self.times)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if len(self.states) != k or len(self.log_weight) != k or len(self.clock) != k:
            raise ValueError("states/log_weight/clock must have one entry per time node")
        if len(self.dw) != k - 1:
            raise ValueError("dw must have one increment per step")
        if self.log_weight[0] != 0.0 or self.clock[0] != 0.0:
            raise ValueError("log_weight[0] and clock[0] must be 0")

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def simulate_em(sde: Sde, x0, horizon: float, dt: float,
                stream: np.random.Generator) -> DiscretePath:
    """Simulate one Euler-Maruyama path X_{k+1} = X_k + mu dt + sigma dW.

    Brownian increments are drawn from `stream` as N(0, dt I_m).  If the path
    leaves the domain it is truncated at the first exit node and marked
    rejected.  The horizon is rounded up to a whole number of steps of size
    dt, with the final step shortened to land exactly on the horizon.

    This is the closure-based reference integrator; the Monte Carlo module
    uses compiled kernels for the catalog models and cross-checks them
    against this implementation.
    """
    x0 = sde.check_point(x0)
    if dt <= 0 or horizon <= 0:
        raise ValueError("dt and horizon must be positive")
    k_full = int(np.floor(horizon / dt + 1e-12))
    steps = [dt] * k_full
    rem = horizon - k_full * dt
    if rem > 1e-12 * max(1.0, horizon):
        steps.append(rem)
    k = len(steps)

    times = np.zeros(k + 1)
    states = np.zeros((k + 1, sde.n))
    dw = stream.standard_normal((k, sde.m))
    states[0] = x0
    rejected = False
    used = k
    for j, h in enumerate(steps):
        dw[j] *= np.sqrt(h)
        x = states[j]
        nxt = x + sde.mu(x) * h + sde.sigma(x) @ dw[j]
        if np.any(~np.isfinite(nxt)):
            raise NumericError(f"non-finite state at step {j + 1}")
        times[j + 1] = times[j] + h
        states[j + 1] = nxt
        if not sde.domain(nxt):
            rejected = True
            used = j + 1
            break
    sl = slice(0, used + 1)
    return DiscretePath(times=times[sl], states=states[sl], dw=dw[:used],
                        log_weight=np.zeros(used + 1), clock=times[sl].copy(),
                        rejected=rejected)


def time_change_forward(path: DiscretePath, eta: ScalarField) -> DiscretePath:
    """Fill the clock with the left-endpoint sum of eta along the path.

    clock[k] = sum_{j<k} eta(X_j) * delta_j, where delta_j are the path's
    intrinsic time increments (its current clock; equal to the time grid for
    freshly simulated paths).  Integrating against the intrinsic clock makes
    repeated transformations compose exactly.  States are unchanged.
    """
    vals = np.array([eta(x) for x in path.states[:-1]], dtype=float)
    if np.any(vals <= 0) or np.any(~np.isfinite(vals)):
        raise DomainError("time-change density must be positive and finite along the path")
    delta = np.diff(path.clock)
    clock = np.concatenate([[0.0], np.cumsum(vals * delta)])
    return DiscretePath(times=path.times.copy(), states=path.states.copy(),
                        dw=path.dw.copy(), log_weight=path.log_weight.copy(),
                        clock=clock, rejected=path.rejected)


def time_change_inverse(path: DiscretePath, t_prime: float) -> float:
    """Generalized inverse of the clock: the time alpha at which clock = t'.

    Piecewise-linear interpolation of the (clock, times) graph; exact at the
    grid nodes.
    """
    clock = path.clock
    if t_prime < -1e-12 or t_prime > clock[-1] + 1e-12:
        raise RangeError(f"clock value {t_prime} outside [0, {clock[-1]}]")
    return float(np.interp(t_prime, clock, path.times))


def evaluate_at(path: DiscretePath, t: float) -> np.ndarray:
    """State at the last grid node with times[k] <= t (left evaluation)."""
    times = path.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise RangeError(f"time {t} outside [{times[0]}, {times[-1]}]")
    idx = int(np.searchsorted(times, t + 1e-15, side="right") - 1)
    idx = min(max(idx, 0), len(times) - 1)
    return path.states[idx]
