"""The group of stochastic transformations and its algebra of generators.

A finite transformation T = (Phi, B, eta, h) acts simultaneously by a space
diffeomorphism Phi, a state-dependent rotation B of the driving noise, a
random time change with density eta, and a Girsanov change of measure with
field h.  This module implements the two actions

    transform_sde   (action on coefficient pairs (mu, sigma))
    transform_path  (action on discretized trajectories)

together with the group structure (compose, invert), the infinitesimal
counterparts V = (Y, C, tau, H) with their Lie bracket and pushforward, flow
integration of one-parameter groups, and the canonical-coordinate map built
from flows of straightened generators.

Everything is a lazily-composed numeric evaluator: composing or inverting
transformations builds closures over the component callables, it never
manipulates expressions.  Analytic Jacobians/Hessians propagate through
composition and inversion by the chain rule when the factors carry them;
otherwise the field classes fall back to finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, NumericError, SingularMapError
from .fields import (DEFAULT_FD, FdConfig, MatrixField, ScalarField,
                     VectorField, as_matrix_field, as_scalar_field,
                     as_vector_field, fd_hessian, fd_jacobian)
from .sde import DiscretePath, Sde, generator_apply, time_change_forward


class Diffeomorphism:
    """Invertible map between open subsets of R^n with optional derivatives.

    forward and inverse are array->array callables.  jac, when given, returns
    the (n, n) Jacobian of forward; hess returns all second derivatives of
    forward with shape (n, n, n), first axis indexing the output component.
    """

    def __init__(self, forward, inverse, jac=None, hess=None,
                 fd: FdConfig = DEFAULT_FD, name: str = ""):
        self.forward = forward
        self.inverse = inverse
        self._jac = jac
        self._hess = hess
        self.fd = fd
        self.name = name

    def __call__(self, x) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.forward(np.asarray(x, dtype=float)), dtype=float))

    def inv(self, xp) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.inverse(np.asarray(xp, dtype=float)), dtype=float))

    def jacobian(self, x, use_analytic: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if use_analytic and self._jac is not None:
            return np.asarray(self._jac(x), dtype=float)
        n_out = self(x).shape[0]
        return fd_jacobian(lambda p: self(p), x, (n_out,), self.fd)

    def hessian(self, x, use_analytic: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if use_analytic and self._hess is not None:
            return np.asarray(self._hess(x), dtype=float)
        n_out = self(x).shape[0]
        return np.stack([fd_hessian(lambda p, i=i: float(self(p)[i]), x, self.fd)
                         for i in range(n_out)])

    def component(self, i: int) -> ScalarField:
        """Component i of the forward map as a ScalarField."""
        grad = None
        hess = None
        if self._jac is not None:
            grad = lambda x, i=i: np.asarray(self._jac(x), dtype=float)[i]
        if self._hess is not None:
            hess = lambda x, i=i: np.asarray(self._hess(x), dtype=float)[i]
        return ScalarField(lambda x, i=i: float(self(x)[i]), grad=grad, hess=hess, fd=self.fd)


def identity_diffeo(n: int) -> Diffeomorphism:
    eye = np.eye(n)
    zeros = np.zeros((n, n, n))
    return Diffeomorphism(lambda x: np.asarray(x, dtype=float),
                          lambda x: np.asarray(x, dtype=float),
                          jac=lambda x: eye, hess=lambda x: zeros, name="id")


@dataclass(frozen=True)
class FiniteTransformation:
    """T = (Phi, B, eta, h) with m the driving-noise dimension.

    B maps into SO(m), eta is positive, h is R^m-valued; all three are
    evaluated on the source domain (before Phi is applied).
    """

    phi: Diffeomorphism
    b: MatrixField
    eta: ScalarField
    h: VectorField
    m: int


def make_transformation(m: int, phi: Optional[Diffeomorphism] = None, b=None,
                        eta=None, h=None, n: Optional[int] = None) -> FiniteTransformation:
    """Build a FiniteTransformation, filling omitted pieces with identities.

    n (state dimension) is only needed when phi is omitted.
    """
    if phi is None:
        if n is None:
            raise ValueError("n is required when phi is omitted")
        phi = identity_diffeo(n)
    b = as_matrix_field(np.eye(m) if b is None else b, (m, m))
    eta = as_scalar_field(1.0 if eta is None else eta)
    h = as_vector_field(np.zeros(m) if h is None else h, m)
    return FiniteTransformation(phi=phi, b=b, eta=eta, h=h, m=m)


def identity_transformation(n: int, m: int) -> FiniteTransformation:
    return make_transformation(m=m, n=n)


@dataclass(frozen=True)
class InfinitesimalTransformation:
    """V = (Y, C, tau, H), the generator of a one-parameter group T_a.

    Y is a vector field on the state space, C maps into so(m), tau is a
    scalar field, H an R^m-valued field.  k, when present, is the potential
    of a quasi-Doob generator with H = sigma^T grad(k); it is carried as
    metadata and checked against H by validate_infinitesimal.
    """

    y: VectorField
    c: MatrixField
    tau: ScalarField
    hh: VectorField
    m: int
    k: Optional[ScalarField] = None


def make_infinitesimal(m: int, y, c=None, tau=None, hh=None, k=None,
                       n: Optional[int] = None) -> InfinitesimalTransformation:
    """Build an InfinitesimalTransformation with identity-algebra defaults."""
    if not isinstance(y, VectorField):
        if n is None:
            raise ValueError("n is required when y is not already a VectorField")
        y = as_vector_field(y, n)
    c = as_matrix_field(np.zeros((m, m)) if c is None else c, (m, m))
    tau = as_scalar_field(0.0 if tau is None else tau)
    hh = as_vector_field(np.zeros(m) if hh is None else hh, m)
    if k is not None:
        k = as_scalar_field(k)
    return InfinitesimalTransformation(y=y, c=c, tau=tau, hh=hh, m=m, k=k)


def validate_transformation(t: FiniteTransformation, points, tol: float = 1e-8) -> dict:
    """Check the defining constraints of T at sample points.

    Returns the max residuals {orthogonality, determinant, round_trip} and
    the minimum of eta; raises DomainError when eta is not positive and
    ValueError when a residual exceeds tol.
    """
    eye = np.eye(t.m)
    orth = det = rt = 0.0
    eta_min = np.inf
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        bmat = t.b(x)
        orth = max(orth, float(np.max(np.abs(bmat.T @ bmat - eye))))
        det = max(det, abs(float(np.linalg.det(bmat)) - 1.0))
        eta_min = min(eta_min, t.eta(x))
        rt = max(rt, float(np.max(np.abs(t.phi.inv(t.phi(x)) - x))))
    if eta_min <= 0.0:
        raise DomainError(f"eta must be positive, found min {eta_min}")
    out = {"orthogonality": orth, "determinant": det, "round_trip": rt,
           "eta_min": eta_min}
    worst = max(orth, det, rt)
    if worst > tol:
        raise ValueError(f"transformation constraint violated: {out}")
    return out


def validate_infinitesimal(v: InfinitesimalTransformation, points,
                           sde: Optional[Sde] = None, tol: float = 1e-10,
                           k_tol: float = 1e-6) -> dict:
    """Check antisymmetry of C and, when k and an SDE are given, H = sigma^T grad(k)."""
    skew = 0.0
    kres = 0.0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        cmat = v.c(x)
        skew = max(skew, float(np.max(np.abs(cmat + cmat.T))))
        if v.k is not None and sde is not None:
            hk = sde.sigma(x).T @ v.k.gradient(x)
            kres = max(kres, float(np.max(np.abs(hk - v.hh(x)))))
    out = {"antisymmetry": skew, "potential": kres}
    if skew > tol or (v.k is not None and sde is not None and kres > k_tol):
        raise ValueError(f"infinitesimal constraint violated: {out}")
    return out


# ---------------------------------------------------------------------------
# actions on SDEs and paths


def transform_sde(t: FiniteTransformation, sde: Sde,
                  domain: Optional[Callable[[np.ndarray], bool]] = None,
                  use_analytic: bool = True) -> Sde:
    """The transformed coefficient pair.

    mu'    = ((1/eta) [L(Phi) + grad(Phi) sigma h]) o Phi^{-1}
    sigma' = ((1/sqrt(eta)) grad(Phi) sigma B^T) o Phi^{-1}

    B^{-1} is always taken as B^T (exact on SO(m)).  The returned SDE's
    domain defaults to the pullback of the source domain through Phi^{-1};
    evaluating at a point whose preimage leaves the source domain raises
    DomainError.
    """
    n, m = sde.n, sde.m
    components = [t.phi.component(i) for i in range(n)]

    def pull_back(xp):
        q = np.asarray(t.phi.inv(xp), dtype=float)
        if not np.all(np.isfinite(q)):
            raise DomainError(f"inverse image of {np.asarray(xp).tolist()} is not finite")
        return sde.check_point(q)

    def mu_new(xp):
        q = pull_back(xp)
        lphi = np.array([generator_apply(sde, f, q, use_analytic=use_analytic)
                         for f in components])
        grad = t.phi.jacobian(q, use_analytic=use_analytic)
        return (lphi + grad @ (sde.sigma(q) @ t.h(q))) / t.eta(q)

    def sigma_new(xp):
        q = pull_back(xp)
        grad = t.phi.jacobian(q, use_analytic=use_analytic)
        return (grad @ sde.sigma(q) @ t.b(q).T) / np.sqrt(t.eta(q))

    if domain is None:
        def domain(xp, _sde=sde, _phi=t.phi):
            try:
                q = np.asarray(_phi.inv(xp), dtype=float)
            except (ArithmeticError, ValueError, FloatingPointError):
                return False
            return bool(np.all(np.isfinite(q))) and _sde.domain(q)

    return Sde(n=n, m=m, mu=as_vector_field(mu_new, n),
               sigma=as_matrix_field(sigma_new, (n, m)), domain=domain)


def transform_path(t: FiniteTransformation, path: DiscretePath, sde: Sde) -> DiscretePath:
    """The transformed trajectory, with weights, rotated noise and clock.

    states'      = Phi(X_k)
    dw'_k        = sqrt(eta(X_k)) B(X_k) (dw_k - h(X_k) delta_k)
    log_weight'  = log_weight + cumsum[h(X_k).dw_k - (1/2)|h(X_k)|^2 delta_k]
    clock'       = cumsum[eta(X_k) delta_k]

    delta_k are the increments of the input path's intrinsic clock, so that
    applying two transformations in sequence reproduces the composed
    transformation exactly at the discrete level (states, noise, weights and
    clock all match compose(t2, t1) to rounding).
    """
    nodes = path.states
    for x in nodes:
        sde.check_point(x)
    k = path.n_steps
    delta = np.diff(path.clock)

    states = np.array([t.phi(x) for x in nodes], dtype=float)
    hvals = np.array([t.h(x) for x in nodes[:-1]], dtype=float).reshape(k, t.m)
    evals = np.array([t.eta(x) for x in nodes[:-1]], dtype=float)
    if np.any(evals <= 0) or not np.all(np.isfinite(hvals)):
        raise DomainError("eta must stay positive and h finite along the path")

    dw = np.empty_like(path.dw)
    for j in range(k):
        bmat = t.b(nodes[j])
        dw[j] = np.sqrt(evals[j]) * (bmat @ (path.dw[j] - hvals[j] * delta[j]))

    incr = np.einsum("kj,kj->k", hvals, path.dw) - 0.5 * np.sum(hvals ** 2, axis=1) * delta
    log_weight = path.log_weight + np.concatenate([[0.0], np.cumsum(incr)])
    clock = np.concatenate([[0.0], np.cumsum(evals * delta)])
    return DiscretePath(times=path.times.copy(), states=states, dw=dw,
                        log_weight=log_weight, clock=clock, rejected=path.rejected)


# ---------------------------------------------------------------------------
# group structure


def compose(t2: FiniteTransformation, t1: FiniteTransformation) -> FiniteTransformation:
    """The composite transformation, t2 after t1.

    (Phi2 o Phi1, (B2 o Phi1) B1, (eta2 o Phi1) eta1,
     sqrt(eta1) B1^T (h2 o Phi1) + h1)
    """
    if t1.m != t2.m:
        raise ValueError("cannot compose transformations with different noise dimensions")
    p1, p2 = t1.phi, t2.phi

    def jac(x):
        y = p1(x)
        return p2.jacobian(y) @ p1.jacobian(x)

    def hess(x):
        y = p1(x)
        j1 = p1.jacobian(x)
        h1 = p1.hessian(x)
        j2 = p2.jacobian(y)
        h2 = p2.hessian(y)
        return (np.einsum("ia,ajk->ijk", j2, h1)
                + np.einsum("iab,aj,bk->ijk", h2, j1, j1))

    phi = Diffeomorphism(lambda x: p2(p1(x)), lambda xp: p1.inv(p2.inv(xp)),
                         jac=jac, hess=hess, fd=p1.fd)

    def b(x):
        return t2.b(p1(x)) @ t1.b(x)

    def eta(x):
        return t2.eta(p1(x)) * t1.eta(x)

    def h(x):
        return np.sqrt(t1.eta(x)) * (t1.b(x).T @ t2.h(p1(x))) + t1.h(x)

    return FiniteTransformation(phi=phi, b=as_matrix_field(b, (t1.m, t1.m)),
                                eta=as_scalar_field(eta),
                                h=as_vector_field(h, t1.m), m=t1.m)


def invert(t: FiniteTransformation) -> FiniteTransformation:
    """The group inverse, with all components evaluated at q = Phi^{-1}(x').

    (Phi^{-1}, B(q)^T, 1/eta(q), -(1/sqrt(eta(q))) B(q) h(q))

    The evaluation points make compose(invert(t), t) and compose(t, invert(t))
    the identity in all four components.
    """
    p = t.phi

    def jac(xp):
        q = p.inv(xp)
        return np.linalg.inv(p.jacobian(q))

    def hess(xp):
        q = p.inv(xp)
        a = np.linalg.inv(p.jacobian(q))
        hf = p.hessian(q)
        return -np.einsum("ia,abc,bj,ck->ijk", a, hf, a, a)

    phi = Diffeomorphism(p.inverse, p.forward, jac=jac, hess=hess, fd=p.fd)

    def b(xp):
        return t.b(p.inv(xp)).T

    def eta(xp):
        return 1.0 / t.eta(p.inv(xp))

    def h(xp):
        q = p.inv(xp)
        return -(t.b(q) @ t.h(q)) / np.sqrt(t.eta(q))

    return FiniteTransformation(phi=phi, b=as_matrix_field(b, (t.m, t.m)),
                                eta=as_scalar_field(eta),
                                h=as_vector_field(h, t.m), m=t.m)


# ---------------------------------------------------------------------------
# algebra structure


def pushforward(t: FiniteTransformation,
                v: InfinitesimalTransformation) -> InfinitesimalTransformation:
    """The generator transported through a finite transformation.

    Y' = (grad(Phi) Y) o Phi^{-1}
    C' = (B C B^T + Y(B) B^T) o Phi^{-1}
    tau' = (tau + Y(eta)/eta) o Phi^{-1}
    H' = ((1/sqrt(eta)) B [H + Y(h) - (-tau/2 + C) h]) o Phi^{-1}

    Directional derivatives Y(B), Y(eta), Y(h) use analytic Jacobians when
    the fields carry them, finite differences otherwise.
    """
    m = v.m

    def y_new(xp):
        q = t.phi.inv(xp)
        return t.phi.jacobian(q) @ v.y(q)

    def c_new(xp):
        q = t.phi.inv(xp)
        bq = t.b(q)
        yb = t.b.directional(q, v.y(q))
        return bq @ v.c(q) @ bq.T + yb @ bq.T

    def tau_new(xp):
        q = t.phi.inv(xp)
        return v.tau(q) + float(t.eta.gradient(q) @ v.y(q)) / t.eta(q)

    def h_new(xp):
        q = t.phi.inv(xp)
        yq = v.y(q)
        yh = t.h.jacobian(q) @ yq
        corr = (-0.5 * v.tau(q) * np.eye(m) + v.c(q)) @ t.h(q)
        return (t.b(q) @ (v.hh(q) + yh - corr)) / np.sqrt(t.eta(q))

    return InfinitesimalTransformation(y=as_vector_field(y_new, None),
                                       c=as_matrix_field(c_new, (m, m)),
                                       tau=as_scalar_field(tau_new),
                                       hh=as_vector_field(h_new, m), m=m)


def lie_bracket(v1: InfinitesimalTransformation,
                v2: InfinitesimalTransformation) -> InfinitesimalTransformation:
    """The bracket [V1, V2] of two generators.

    Y = [Y1, Y2] (Jacobi-Lie bracket of vector fields)
    C = Y1(C2) - Y2(C1) - (C1 C2 - C2 C1)
    tau = Y1(tau2) - Y2(tau1)
    H = Y1(H2) - Y2(H1) - (-tau1/2 + C1) H2 + (-tau2/2 + C2) H1

    When both arguments carry quasi-Doob potentials, the bracket's potential
    is Y1(k2) - Y2(k1).
    """
    if v1.m != v2.m:
        raise ValueError("bracket requires equal noise dimensions")
    m = v1.m
    eye = np.eye(m)

    def y(x):
        return v2.y.jacobian(x) @ v1.y(x) - v1.y.jacobian(x) @ v2.y(x)

    def c(x):
        y1, y2 = v1.y(x), v2.y(x)
        c1, c2 = v1.c(x), v2.c(x)
        return (v2.c.directional(x, y1) - v1.c.directional(x, y2)
                - (c1 @ c2 - c2 @ c1))

    def tau(x):
        return float(v2.tau.gradient(x) @ v1.y(x) - v1.tau.gradient(x) @ v2.y(x))

    def h(x):
        y1, y2 = v1.y(x), v2.y(x)
        t1, t2 = v1.tau(x), v2.tau(x)
        h1, h2 = v1.hh(x), v2.hh(x)
        out = v2.hh.jacobian(x) @ y1 - v1.hh.jacobian(x) @ y2
        out -= (-0.5 * t1 * eye + v1.c(x)) @ h2
        out += (-0.5 * t2 * eye + v2.c(x)) @ h1
        return out

    k = None
    if v1.k is not None and v2.k is not None:
        k1, k2 = v1.k, v2.k

        def k(x, k1=k1, k2=k2):
            return float(k2.gradient(x) @ v1.y(x) - k1.gradient(x) @ v2.y(x))

    return make_infinitesimal(m=m, y=as_vector_field(y, None), c=c, tau=tau,
                              hh=h, k=k)


# ---------------------------------------------------------------------------
# one-parameter groups and flows


@dataclass(frozen=True)
class FlowPoint:
    """State of the four flow ODEs at parameter a, for one starting point."""

    point: np.ndarray
    b: np.ndarray
    eta: float
    h: np.ndarray


def one_parameter_group(v: InfinitesimalTransformation, a: float, x,
                        domain: Optional[Callable] = None,
                        steps_per_unit: int = 64) -> FlowPoint:
    """Integrate the defining ODEs of the group generated by V up to a.

    d/da Phi_a = Y(Phi_a)          Phi_0 = x
    d/da B_a   = C(Phi_a) B_a      B_0  = I
    d/da eta_a = tau(Phi_a) eta_a  eta_0 = 1
    d/da h_a   = eta_a^{-1/2} B_a^T H(Phi_a)   h_0 = 0

    Classical 4th-order one-step integration with a fixed step a/64 per unit
    of parameter (more steps for |a| > 1).  The flow leaving `domain` raises
    DomainError; non-finite values raise NumericError.
    """
    x = np.asarray(x, dtype=float)
    n, m = x.size, v.m
    if a == 0.0:
        return FlowPoint(point=x.copy(), b=np.eye(m), eta=1.0, h=np.zeros(m))

    def rhs(state):
        pos, bmat, eta, h = state
        dpos = v.y(pos)
        db = v.c(pos) @ bmat
        deta = v.tau(pos) * eta
        dh = (bmat.T @ v.hh(pos)) / np.sqrt(eta)
        return dpos, db, deta, dh

    def add(state, scale, deriv):
        pos, bmat, eta, h = state
        dpos, db, deta, dh = deriv
        return (pos + scale * dpos, bmat + scale * db, eta + scale * deta,
                h + scale * dh)

    n_steps = int(steps_per_unit * max(1.0, np.ceil(abs(a))))
    step = a / n_steps
    state = (x.copy(), np.eye(m), 1.0, np.zeros(m))
    for _ in range(n_steps):
        k1 = rhs(state)
        k2 = rhs(add(state, 0.5 * step, k1))
        k3 = rhs(add(state, 0.5 * step, k2))
        k4 = rhs(add(state, step, k3))
        state = tuple(
            s + (step / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            for s, a1, a2, a3, a4 in zip(state, k1, k2, k3, k4))
        pos = state[0]
        if not np.all(np.isfinite(pos)) or not np.isfinite(state[2]):
            raise NumericError("flow integration produced non-finite values")
        if domain is not None and not domain(pos):
            raise DomainError(f"flow left the domain at {pos.tolist()}")
    pos, bmat, eta, h = state
    return FlowPoint(point=pos, b=bmat, eta=float(eta), h=h)


def flow_transformation(v: InfinitesimalTransformation, a: float,
                        domain: Optional[Callable] = None) -> FiniteTransformation:
    """The finite transformation T_a generated by V, as flow-backed evaluators.

    The forward map integrates the flow from each queried point; the inverse
    integrates backwards (parameter -a).  Exactness is limited by the flow
    integrator, so round trips are accurate to roughly 1e-10 for catalog
    fields at |a| of order one.
    """
    phi = Diffeomorphism(
        lambda x: one_parameter_group(v, a, x, domain=domain).point,
        lambda xp: one_parameter_group(v, -a, xp, domain=domain).point)
    return FiniteTransformation(
        phi=phi,
        b=as_matrix_field(lambda x: one_parameter_group(v, a, x, domain=domain).b,
                          (v.m, v.m)),
        eta=as_scalar_field(lambda x: one_parameter_group(v, a, x, domain=domain).eta),
        h=as_vector_field(lambda x: one_parameter_group(v, a, x, domain=domain).h, v.m),
        m=v.m)


# ---------------------------------------------------------------------------
# canonical coordinates from straightened generators


def _flow_position(y: VectorField, a: float, x: np.ndarray,
                   steps_per_unit: int = 64) -> np.ndarray:
    """Position-only flow of a single vector field (RK4, fixed step)."""
    if a == 0.0:
        return np.asarray(x, dtype=float).copy()
    n_steps = int(steps_per_unit * max(1.0, np.ceil(abs(a))))
    step = a / n_steps
    pos = np.asarray(x, dtype=float).copy()
    for _ in range(n_steps):
        k1 = y(pos)
        k2 = y(pos + 0.5 * step * k1)
        k3 = y(pos + 0.5 * step * k2)
        k4 = y(pos + step * k3)
        pos = pos + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(pos)):
            raise NumericError("flow integration produced non-finite values")
    return pos


def _completion_directions(span: np.ndarray, n: int, count: int) -> List[int]:
    """Coordinate axes most transverse to the span, by greedy pivoting.

    At each round, picks the axis e_j with the largest residual after
    projecting out the span of the given columns and the axes already chosen.
    """
    basis = span.copy()
    chosen: List[int] = []
    for _ in range(count):
        q, _ = np.linalg.qr(basis)
        resid = np.eye(n) - q @ q.T
        norms = np.linalg.norm(resid, axis=0)
        for j in chosen:
            norms[j] = -1.0
        pick = int(np.argmax(norms))
        chosen.append(pick)
        basis = np.column_stack([basis, np.eye(n)[:, pick]])
    return chosen


def canonical_map(fields: Sequence[VectorField], base,
                  newton_tol: float = 1e-10, max_iter: int = 50) -> Diffeomorphism:
    """Coordinates in which the given commuting-up-to-triangularity fields flow.

    Builds F(a_1, ..., a_n) = Flow^1_{a_1} o ... o Flow^r_{a_r} applied to the
    point base + sum_{k>r} a_k e_{j_k}, where the completion axes e_{j_k} are
    the most transverse coordinate directions at base.  The forward map of
    the returned diffeomorphism is F; the inverse solves F(a) = x by damped
    Newton iteration (at most `max_iter` steps, SingularMapError on failure).
    The inverse is the canonical-coordinate chart.
    """
    base = np.asarray(base, dtype=float)
    n = base.size
    r = len(fields)
    if r > n:
        raise ValueError("more fields than dimensions")
    span = np.column_stack([f(base) for f in fields])
    if np.linalg.matrix_rank(span, tol=1e-10) < r:
        raise SingularMapError("fields are linearly dependent at the base point")
    extra = _completion_directions(span, n, n - r) if r < n else []

    def forward(a):
        a = np.asarray(a, dtype=float).reshape(n)
        pos = base.copy()
        for k, j in enumerate(extra):
            pos[j] += a[r + k]
        for i in range(r - 1, -1, -1):
            pos = _flow_position(fields[i], a[i], pos)
        return pos

    def inverse(x):
        x = np.asarray(x, dtype=float).reshape(n)
        a = np.zeros(n)
        fa = forward(a)
        err = np.linalg.norm(fa - x)
        for _ in range(max_iter):
            if err <= newton_tol:
                return a
            jac = fd_jacobian(forward, a, (n,))
            try:
                delta = np.linalg.solve(jac, x - fa)
            except np.linalg.LinAlgError as exc:
                raise SingularMapError(f"singular flow Jacobian at {a.tolist()}") from exc
            lam = 1.0
            while lam >= 1.0 / 64.0:
                cand = a + lam * delta
                fc = forward(cand)
                ec = np.linalg.norm(fc - x)
                if ec < err * (1.0 - 0.25 * lam) + 1e-15:
                    a, fa, err = cand, fc, ec
                    break
                lam *= 0.5
            else:
                raise SingularMapError(
                    f"damped Newton stalled at residual {err:.3e} for target {x.tolist()}")
        if err <= newton_tol:
            return a
        raise SingularMapError(
            f"no convergence within {max_iter} iterations (residual {err:.3e})")

    return Diffeomorphism(forward, inverse, name="canonical")
