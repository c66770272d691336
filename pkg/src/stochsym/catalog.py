"""Built-in model catalog.

Four families ship with the package, each bundling an SDE, its symmetry
fields, a closed-form straightening transformation, the expected reduced
SDE, and reference observables:

``bessel``
    Radial Bessel-type drift ``a/x`` on ``x > 0``, autonomized with a unit
    clock coordinate.  Two routes: ``lamperti`` (time rescaling, no measure
    change) and ``doob`` (measure change with a logarithmic potential).
``cir``
    Square-root diffusion ``dx = (a x + b) dt + sigma0 sqrt(x) dW`` with a
    one-parameter family of scaling symmetries indexed by ``k``.
``ou``
    Linear drift ``dx = (a x + b) dt + dW`` with an exponential scaling
    symmetry and a quadratic measure potential (pure Doob at ``b = c = 0``).
``twod``
    A planar model with rotation/dilation symmetries, a genuinely
    non-identity rotation part, and a two-dimensional noise.

All map callables (forward/inverse diffeomorphism components, observables)
accept both single states of shape ``(n,)`` and stacked states ``(..., n)``.
Analytic Jacobians and Hessians are attached wherever a tight tolerance
downstream depends on them; everything else falls back to finite
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .fields import MatrixField, ScalarField, VectorField
from .rng import LEG_CHECKS, substream
from .sde import Sde
from .transform import (
    Diffeomorphism,
    FiniteTransformation,
    InfinitesimalTransformation,
    make_infinitesimal,
    make_transformation,
)

MODEL_IDS = ("bessel", "cir", "ou", "twod")

_ROUTES = {
    "bessel": ("lamperti", "doob"),
    "cir": ("canonical",),
    "ou": ("canonical",),
    "twod": ("canonical",),
}

_DEFAULT_PARAMS = {
    "bessel": {"a": 1.0},
    "cir": {"a": -1.0, "b": 1.0, "sigma0": 0.5, "k": 0.0},
    "ou": {"a": -1.0, "b": 0.5, "c": 0.0},
    "twod": {"alpha": 0.5},
}


@dataclass
class CatalogEntry:
    """One catalog model on one reduction route, fully assembled."""

    model: str
    route: str
    parameters: Dict[str, float]
    sde: Sde
    symmetries: List[InfinitesimalTransformation]
    reduction: FiniteTransformation
    reduced_sde_expected: Sde
    triangular_r: int
    initial_map: Callable[[np.ndarray], np.ndarray]
    default_x0: np.ndarray
    test_box: Tuple[np.ndarray, np.ndarray]
    observables: Dict[str, Callable[[np.ndarray], np.ndarray]]
    oracles: Dict[str, Callable[[float, np.ndarray], float]]
    default_observable: str
    expected_structure: Dict[Tuple[int, int], np.ndarray]
    has_time_change: bool
    potential: Optional[ScalarField] = None
    box_predicate: Optional[Callable[[np.ndarray], bool]] = None
    labels: Dict[str, str] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.sde.n

    @property
    def m(self) -> int:
        return self.sde.m

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        """Draw ``count`` points from the test box, respecting the domain."""
        low, high = self.test_box
        gen = substream(seed, LEG_CHECKS, 0)
        out = np.empty((count, self.n))
        filled = 0
        attempts = 0
        while filled < count:
            attempts += 1
            if attempts > 1000:
                raise ConfigError(
                    f"could not sample {count} points inside the {self.model} box"
                )
            draw = gen.uniform(low, high, size=(count, self.n))
            for row in draw:
                if self.box_predicate is not None and not self.box_predicate(row):
                    continue
                out[filled] = row
                filled += 1
                if filled == count:
                    break
        return out

    def oracle_value(self, observable: str, t: float, x0: Optional[np.ndarray] = None) -> float:
        if observable not in self.oracles:
            raise ConfigError(
                f"no closed-form reference for observable {observable!r} of model {self.model!r}"
            )
        start = self.default_x0 if x0 is None else np.asarray(x0, dtype=float)
        return float(self.oracles[observable](float(t), start))


def model_ids() -> Tuple[str, ...]:
    return MODEL_IDS


def routes_for(model: str) -> Tuple[str, ...]:
    if model not in _ROUTES:
        raise ConfigError(f"unknown model {model!r}; known models: {list(MODEL_IDS)}")
    return _ROUTES[model]


def default_parameters(model: str) -> Dict[str, float]:
    if model not in _DEFAULT_PARAMS:
        raise ConfigError(f"unknown model {model!r}; known models: {list(MODEL_IDS)}")
    return dict(_DEFAULT_PARAMS[model])


# ---------------------------------------------------------------------------
# bessel
# ---------------------------------------------------------------------------


def _bessel_sde(a: float) -> Sde:
    def mu(x):
        x = np.asarray(x, dtype=float)
        return np.stack([a / x[..., 0], np.ones_like(x[..., 0])], axis=-1)

    def mu_jac(x):
        return np.array([[-a / x[0] ** 2, 0.0], [0.0, 0.0]])

    def mu_hess(x):
        h = np.zeros((2, 2, 2))
        h[0, 0, 0] = 2.0 * a / x[0] ** 3
        return h

    sigma = np.array([[1.0], [0.0]])
    return Sde(
        n=2,
        m=1,
        mu=VectorField(mu, jac=mu_jac, hess=mu_hess, name="bessel drift"),
        sigma=sigma,
        domain=lambda x: x[..., 0] > 0.0,
    )


def _bessel_lamperti(a: float) -> Tuple[list, FiniteTransformation, Sde, dict]:
    v1 = make_infinitesimal(m=1, y=np.array([0.0, 1.0]), n=2, k=0.0)

    def y2(x):
        return np.array([0.5 * x[0], x[1]])

    v2 = make_infinitesimal(
        m=1,
        y=VectorField(y2, jac=lambda x: np.array([[0.5, 0.0], [0.0, 1.0]]), name="scaling"),
        tau=1.0,
        n=2,
    )

    def fwd(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 1] - x[..., 0] ** 2, 2.0 * np.log(x[..., 0])], axis=-1)

    def inv(xp):
        xp = np.asarray(xp, dtype=float)
        pos = np.exp(0.5 * xp[..., 1])
        return np.stack([pos, xp[..., 0] + pos**2], axis=-1)

    def fwd_jac(x):
        return np.array([[-2.0 * x[0], 1.0], [2.0 / x[0], 0.0]])

    def fwd_hess(x):
        h = np.zeros((2, 2, 2))
        h[0, 0, 0] = -2.0
        h[1, 0, 0] = -2.0 / x[0] ** 2
        return h

    phi = Diffeomorphism(fwd, inv, jac=fwd_jac, hess=fwd_hess, name="square-log chart")
    eta = ScalarField(
        lambda x: 1.0 / x[0] ** 2,
        grad=lambda x: np.array([-2.0 / x[0] ** 3, 0.0]),
        hess=lambda x: np.array([[6.0 / x[0] ** 4, 0.0], [0.0, 0.0]]),
        name="clock density",
    )
    tr = make_transformation(m=1, phi=phi, eta=eta, n=2)

    def mu_red(xp):
        xp = np.asarray(xp, dtype=float)
        grow = np.exp(xp[..., 1])
        return np.stack([-2.0 * a * grow, np.full_like(grow, 2.0 * a - 1.0)], axis=-1)

    def mu_red_jac(xp):
        return np.array([[0.0, -2.0 * a * math.exp(xp[1])], [0.0, 0.0]])

    def sig_red(xp):
        xp = np.asarray(xp, dtype=float)
        grow = np.exp(xp[..., 1])
        return np.stack([-2.0 * grow, np.full_like(grow, 2.0)], axis=-1)[..., None]

    def sig_red_jac(xp):
        j = np.zeros((2, 1, 2))
        j[0, 0, 1] = -2.0 * math.exp(xp[1])
        return j

    reduced = Sde(
        n=2,
        m=1,
        mu=VectorField(mu_red, jac=mu_red_jac, name="reduced drift"),
        sigma=MatrixField(sig_red, jac=sig_red_jac, name="reduced diffusion"),
        domain=lambda x: np.full(np.shape(np.asarray(x)[..., 0]), True),
    )
    structure = {(0, 1): np.array([1.0, 0.0])}
    return [v1, v2], tr, reduced, structure


def _bessel_doob(a: float) -> Tuple[list, FiniteTransformation, Sde, dict, ScalarField]:
    def h1(x):
        return np.array([a / x[0] ** 2])

    def h1_jac(x):
        return np.array([[-2.0 * a / x[0] ** 3, 0.0]])

    k1 = ScalarField(
        lambda x: -a / x[0],
        grad=lambda x: np.array([a / x[0] ** 2, 0.0]),
        hess=lambda x: np.array([[-2.0 * a / x[0] ** 3, 0.0], [0.0, 0.0]]),
        name="k1",
    )
    v1 = make_infinitesimal(
        m=1,
        y=np.array([-1.0, 0.0]),
        hh=VectorField(h1, jac=h1_jac, name="H1"),
        k=k1,
        n=2,
    )
    v2 = make_infinitesimal(m=1, y=np.array([0.0, 1.0]), n=2, k=0.0)

    def fwd(x):
        x = np.asarray(x, dtype=float)
        return np.stack([-x[..., 0], x[..., 1]], axis=-1)

    def inv(xp):
        xp = np.asarray(xp, dtype=float)
        return np.stack([-xp[..., 0], xp[..., 1]], axis=-1)

    flip = np.array([[-1.0, 0.0], [0.0, 1.0]])
    phi = Diffeomorphism(
        fwd, inv, jac=lambda x: flip, hess=lambda x: np.zeros((2, 2, 2)), name="sign flip"
    )

    def hfield(x):
        return np.array([-a / x[0]])

    def hfield_jac(x):
        return np.array([[a / x[0] ** 2, 0.0]])

    tr = make_transformation(
        m=1, phi=phi, h=VectorField(hfield, jac=hfield_jac, name="drift tilt"), n=2
    )
    potential = ScalarField(
        lambda x: -a * math.log(x[0]),
        grad=lambda x: np.array([-a / x[0], 0.0]),
        hess=lambda x: np.array([[a / x[0] ** 2, 0.0], [0.0, 0.0]]),
        name="log potential",
    )

    reduced = Sde(
        n=2,
        m=1,
        mu=np.array([0.0, 1.0]),
        sigma=np.array([[-1.0], [0.0]]),
        domain=lambda x: np.full(np.shape(np.asarray(x)[..., 0]), True),
    )
    structure = {(0, 1): np.array([0.0, 0.0])}
    return [v1, v2], tr, reduced, structure, potential


def _build_bessel(route: str, params: Dict[str, float]) -> CatalogEntry:
    a = params["a"]
    if a < 0.5:
        raise ConfigError(f"bessel requires a >= 1/2 for a non-exploding model, got a={a}")
    sde = _bessel_sde(a)
    potential = None
    if route == "lamperti":
        symmetries, tr, reduced, structure = _bessel_lamperti(a)
        has_tc = True
    elif route == "doob":
        symmetries, tr, reduced, structure, potential = _bessel_doob(a)
        has_tc = False
    else:
        raise ConfigError(f"unknown bessel route {route!r}; choose lamperti or doob")

    def g_x2(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] ** 2

    oracles = {"x2": lambda t, x0: x0[0] ** 2 + (2.0 * a + 1.0) * t}
    return CatalogEntry(
        model="bessel",
        route=route,
        parameters=dict(params),
        sde=sde,
        symmetries=symmetries,
        reduction=tr,
        reduced_sde_expected=reduced,
        triangular_r=1,
        initial_map=tr.phi,
        default_x0=np.array([1.0, 0.0]),
        test_box=(np.array([0.5, 0.0]), np.array([3.0, 2.0])),
        observables={"x2": g_x2},
        oracles=oracles,
        default_observable="x2",
        expected_structure=structure,
        has_time_change=has_tc,
        potential=potential,
        labels={"drift": "a/x radial drift"},
    )


# ---------------------------------------------------------------------------
# cir
# ---------------------------------------------------------------------------


def _build_cir(params: Dict[str, float]) -> CatalogEntry:
    a, b, s0, k = params["a"], params["b"], params["sigma0"], params["k"]
    if s0 <= 0.0:
        raise ConfigError(f"cir requires sigma0 > 0, got {s0}")
    if 2.0 * b < s0**2:
        raise ConfigError(
            f"cir requires 2 b >= sigma0^2 to keep the state positive, got b={b}, sigma0={s0}"
        )
    beta = s0**2 - 4.0 * b

    def mu(x):
        x = np.asarray(x, dtype=float)
        return np.stack([a * x[..., 0] + b, np.ones_like(x[..., 0])], axis=-1)

    def sigma(x):
        x = np.asarray(x, dtype=float)
        col = s0 * np.sqrt(x[..., 0])
        return np.stack([col, np.zeros_like(col)], axis=-1)[..., None]

    def sigma_jac(x):
        j = np.zeros((2, 1, 2))
        j[0, 0, 0] = 0.5 * s0 / math.sqrt(x[0])
        return j

    sde = Sde(
        n=2,
        m=1,
        mu=VectorField(mu, jac=lambda x: np.array([[a, 0.0], [0.0, 0.0]]), name="cir drift"),
        sigma=MatrixField(sigma, jac=sigma_jac, name="cir diffusion"),
        domain=lambda x: np.asarray(x)[..., 0] > 0.0,
    )

    ap2k = a + 2.0 * k

    def y1(x):
        return np.array([math.exp(-k * x[1]) * math.sqrt(x[0]), 0.0])

    def y1_jac(x):
        e = math.exp(-k * x[1])
        r = math.sqrt(x[0])
        return np.array([[0.5 * e / r, -k * e * r], [0.0, 0.0]])

    def y1_hess(x):
        e = math.exp(-k * x[1])
        r = math.sqrt(x[0])
        h = np.zeros((2, 2, 2))
        h[0, 0, 0] = -0.25 * e / r**3
        h[0, 0, 1] = h[0, 1, 0] = -0.5 * k * e / r
        h[0, 1, 1] = k**2 * e * r
        return h

    def hh1(x):
        e = math.exp(-k * x[1])
        return np.array([e * (ap2k / (2.0 * s0) + beta / (8.0 * s0 * x[0]))])

    def hh1_jac(x):
        e = math.exp(-k * x[1])
        val = ap2k / (2.0 * s0) + beta / (8.0 * s0 * x[0])
        return np.array([[-e * beta / (8.0 * s0 * x[0] ** 2), -k * e * val]])

    def k1f(x):
        e = math.exp(-k * x[1])
        r = math.sqrt(x[0])
        return e * (ap2k * r - beta / (4.0 * r)) / s0**2

    def k1_grad(x):
        e = math.exp(-k * x[1])
        r = math.sqrt(x[0])
        return np.array(
            [
                e * (ap2k / (2.0 * r) + beta / (8.0 * r**3)) / s0**2,
                -k * k1f(x),
            ]
        )

    v1 = make_infinitesimal(
        m=1,
        y=VectorField(y1, jac=y1_jac, hess=y1_hess, name="Y1"),
        hh=VectorField(hh1, jac=hh1_jac, name="H1"),
        k=ScalarField(k1f, grad=k1_grad, name="k1"),
        n=2,
    )
    v2 = make_infinitesimal(m=1, y=np.array([0.0, 1.0]), n=2, k=0.0)

    def fwd(x):
        x = np.asarray(x, dtype=float)
        return np.stack(
            [2.0 * np.sqrt(x[..., 0]) * np.exp(k * x[..., 1]), x[..., 1]], axis=-1
        )

    def inv(xp):
        xp = np.asarray(xp, dtype=float)
        return np.stack(
            [(0.5 * xp[..., 0]) ** 2 * np.exp(-2.0 * k * xp[..., 1]), xp[..., 1]],
            axis=-1,
        )

    def fwd_jac(x):
        e = math.exp(k * x[1])
        r = math.sqrt(x[0])
        return np.array([[e / r, 2.0 * k * r * e], [0.0, 1.0]])

    def fwd_hess(x):
        e = math.exp(k * x[1])
        r = math.sqrt(x[0])
        h = np.zeros((2, 2, 2))
        h[0, 0, 0] = -0.5 * e / r**3
        h[0, 0, 1] = h[0, 1, 0] = k * e / r
        h[0, 1, 1] = 2.0 * k**2 * r * e
        return h

    phi = Diffeomorphism(fwd, inv, jac=fwd_jac, hess=fwd_hess, name="sqrt chart")

    def hfield(x):
        r = math.sqrt(x[0])
        return np.array([-(ap2k / s0) * r + beta / (4.0 * s0 * r)])

    def hfield_jac(x):
        r = math.sqrt(x[0])
        return np.array([[-(ap2k) / (2.0 * s0 * r) - beta / (8.0 * s0 * r**3), 0.0]])

    tr = make_transformation(
        m=1, phi=phi, h=VectorField(hfield, jac=hfield_jac, name="drift tilt"), n=2
    )
    potential = ScalarField(
        lambda x: -ap2k * x[0] / s0**2 + (beta / (4.0 * s0**2)) * math.log(x[0]),
        grad=lambda x: np.array([-ap2k / s0**2 + beta / (4.0 * s0**2 * x[0]), 0.0]),
        hess=lambda x: np.array([[-beta / (4.0 * s0**2 * x[0] ** 2), 0.0], [0.0, 0.0]]),
        name="cir potential",
    )

    def sig_red(xp):
        xp = np.asarray(xp, dtype=float)
        col = s0 * np.exp(k * xp[..., 1])
        return np.stack([col, np.zeros_like(col)], axis=-1)[..., None]

    def sig_red_jac(xp):
        j = np.zeros((2, 1, 2))
        j[0, 0, 1] = k * s0 * math.exp(k * xp[1])
        return j

    reduced = Sde(
        n=2,
        m=1,
        mu=np.array([0.0, 1.0]),
        sigma=MatrixField(sig_red, jac=sig_red_jac, name="reduced diffusion"),
        domain=lambda x: np.full(np.shape(np.asarray(x)[..., 0]), True),
    )

    def g_mean(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0]

    def mean_oracle(t, x0):
        return x0[0] * math.exp(a * t) + (b / a) * (math.exp(a * t) - 1.0)

    return CatalogEntry(
        model="cir",
        route="canonical",
        parameters=dict(params),
        sde=sde,
        symmetries=[v1, v2],
        reduction=tr,
        reduced_sde_expected=reduced,
        triangular_r=1,
        initial_map=tr.phi,
        default_x0=np.array([1.0, 0.0]),
        test_box=(np.array([0.25, 0.0]), np.array([4.0, 2.0])),
        observables={"mean": g_mean},
        oracles={"mean": mean_oracle},
        default_observable="mean",
        expected_structure={(0, 1): np.array([k, 0.0])},
        has_time_change=False,
        potential=potential,
        labels={"drift": "mean-reverting square-root model"},
    )


# ---------------------------------------------------------------------------
# ou
# ---------------------------------------------------------------------------


def _build_ou(params: Dict[str, float]) -> CatalogEntry:
    a, b, c = params["a"], params["b"], params["c"]
    if a == 0.0:
        raise ConfigError("ou requires a != 0 (the scaling symmetry degenerates at a = 0)")

    def mu(x):
        x = np.asarray(x, dtype=float)
        return np.stack([a * x[..., 0] + b, np.ones_like(x[..., 0])], axis=-1)

    sde = Sde(
        n=2,
        m=1,
        mu=VectorField(mu, jac=lambda x: np.array([[a, 0.0], [0.0, 0.0]]), name="ou drift"),
        sigma=np.array([[1.0], [0.0]]),
        domain=lambda x: np.full(np.shape(np.asarray(x)[..., 0]), True),
    )

    def y1(x):
        return np.array([0.5 * math.exp(-a * x[1]), 0.0])

    def y1_jac(x):
        return np.array([[0.0, -0.5 * a * math.exp(-a * x[1])], [0.0, 0.0]])

    def y1_hess(x):
        h = np.zeros((2, 2, 2))
        h[0, 1, 1] = 0.5 * a**2 * math.exp(-a * x[1])
        return h

    def hh1(x):
        return np.array([a * math.exp(-a * x[1])])

    def hh1_jac(x):
        return np.array([[0.0, -(a**2) * math.exp(-a * x[1])]])

    # The symmetry potentials are fixed only up to additions killed by
    # sigma^T grad; the constants below are pinned so that the straightening
    # potential equations hold together with the z-dependent measure
    # potential of the reduction.
    k1 = ScalarField(
        lambda x: (a * x[0] - 0.5 * c) * math.exp(-a * x[1]),
        grad=lambda x: np.array(
            [
                a * math.exp(-a * x[1]),
                -a * (a * x[0] - 0.5 * c) * math.exp(-a * x[1]),
            ]
        ),
        name="k1",
    )
    v1 = make_infinitesimal(
        m=1,
        y=VectorField(y1, jac=y1_jac, hess=y1_hess, name="Y1"),
        hh=VectorField(hh1, jac=hh1_jac, name="H1"),
        k=k1,
        n=2,
    )
    v2 = make_infinitesimal(m=1, y=np.array([0.0, 1.0]), n=2, k=-a)

    def fwd(x):
        x = np.asarray(x, dtype=float)
        return np.stack([2.0 * x[..., 0] * np.exp(a * x[..., 1]), x[..., 1] - 1.0], axis=-1)

    def inv(xp):
        xp = np.asarray(xp, dtype=float)
        return np.stack(
            [0.5 * xp[..., 0] * np.exp(-a * (xp[..., 1] + 1.0)), xp[..., 1] + 1.0],
            axis=-1,
        )

    def fwd_jac(x):
        e = math.exp(a * x[1])
        return np.array([[2.0 * e, 2.0 * a * x[0] * e], [0.0, 1.0]])

    def fwd_hess(x):
        e = math.exp(a * x[1])
        h = np.zeros((2, 2, 2))
        h[0, 0, 1] = h[0, 1, 0] = 2.0 * a * e
        h[0, 1, 1] = 2.0 * a**2 * x[0] * e
        return h

    phi = Diffeomorphism(fwd, inv, jac=fwd_jac, hess=fwd_hess, name="exp chart")

    def hfield(x):
        return np.array([-2.0 * a * x[0] + c])

    tr = make_transformation(
        m=1,
        phi=phi,
        h=VectorField(hfield, jac=lambda x: np.array([[-2.0 * a, 0.0]]), name="drift tilt"),
        n=2,
    )
    potential = ScalarField(
        lambda x: -a * x[0] ** 2 + c * x[0] + a * x[1],
        grad=lambda x: np.array([-2.0 * a * x[0] + c, a]),
        hess=lambda x: np.array([[-2.0 * a, 0.0], [0.0, 0.0]]),
        name="ou potential",
    )

    bc = b + c

    def mu_red(xp):
        xp = np.asarray(xp, dtype=float)
        grow = np.exp(a * (xp[..., 1] + 1.0))
        return np.stack([2.0 * bc * grow, np.ones_like(grow)], axis=-1)

    def mu_red_jac(xp):
        return np.array(
            [[0.0, 2.0 * a * bc * math.exp(a * (xp[1] + 1.0))], [0.0, 0.0]]
        )

    def sig_red(xp):
        xp = np.asarray(xp, dtype=float)
        col = 2.0 * np.exp(a * (xp[..., 1] + 1.0))
        return np.stack([col, np.zeros_like(col)], axis=-1)[..., None]

    def sig_red_jac(xp):
        j = np.zeros((2, 1, 2))
        j[0, 0, 1] = 2.0 * a * math.exp(a * (xp[1] + 1.0))
        return j

    reduced = Sde(
        n=2,
        m=1,
        mu=VectorField(mu_red, jac=mu_red_jac, name="reduced drift"),
        sigma=MatrixField(sig_red, jac=sig_red_jac, name="reduced diffusion"),
        domain=lambda x: np.full(np.shape(np.asarray(x)[..., 0]), True),
    )

    def g_mean(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0]

    def mean_oracle(t, x0):
        return x0[0] * math.exp(a * t) + (b / a) * (math.exp(a * t) - 1.0)

    return CatalogEntry(
        model="ou",
        route="canonical",
        parameters=dict(params),
        sde=sde,
        symmetries=[v1, v2],
        reduction=tr,
        reduced_sde_expected=reduced,
        triangular_r=1,
        initial_map=tr.phi,
        default_x0=np.array([1.0, 0.0]),
        test_box=(np.array([-2.0, 0.0]), np.array([2.0, 2.0])),
        observables={"mean": g_mean},
        oracles={"mean": mean_oracle},
        default_observable="mean",
        expected_structure={(0, 1): np.array([a, 0.0])},
        has_time_change=False,
        potential=potential,
        labels={"drift": "linear mean-reverting model"},
    )


# ---------------------------------------------------------------------------
# twod
# ---------------------------------------------------------------------------


def _build_twod(params: Dict[str, float]) -> CatalogEntry:
    al = params["alpha"]

    def mu(x):
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return np.stack(
            [al * x[..., 0] / r2, -al * x[..., 1] / r2, np.ones_like(r2)], axis=-1
        )

    def mu_jac(x):
        xx, yy = x[0], x[1]
        r2 = xx**2 + yy**2
        d = xx**2 - yy**2
        j = np.zeros((3, 3))
        j[0, 0] = -al * d / r2**2
        j[0, 1] = -2.0 * al * xx * yy / r2**2
        j[1, 0] = 2.0 * al * xx * yy / r2**2
        j[1, 1] = -al * d / r2**2
        return j

    def sigma(x):
        x = np.asarray(x, dtype=float)
        s = (x[..., 0] ** 2 - x[..., 1] ** 2) / np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)
        zero = np.zeros_like(s)
        row0 = np.stack([s, zero], axis=-1)
        row1 = np.stack([zero, s], axis=-1)
        row2 = np.stack([zero, zero], axis=-1)
        return np.stack([row0, row1, row2], axis=-2)

    def sigma_jac(x):
        xx, yy = x[0], x[1]
        r2 = xx**2 + yy**2
        sx = xx * (xx**2 + 3.0 * yy**2) / r2**1.5
        sy = -yy * (3.0 * xx**2 + yy**2) / r2**1.5
        j = np.zeros((3, 2, 3))
        j[0, 0, 0] = j[1, 1, 0] = sx
        j[0, 0, 1] = j[1, 1, 1] = sy
        return j

    sde = Sde(
        n=3,
        m=2,
        mu=VectorField(mu, jac=mu_jac, name="planar drift"),
        sigma=MatrixField(sigma, jac=sigma_jac, name="planar diffusion"),
        domain=lambda x: np.asarray(x)[..., 0] > np.abs(np.asarray(x)[..., 1]),
    )

    def y1(x):
        r2 = x[0] ** 2 + x[1] ** 2
        return np.array([x[1] / r2, x[0] / r2, 0.0])

    def y1_jac(x):
        xx, yy = x[0], x[1]
        r2 = xx**2 + yy**2
        d = xx**2 - yy**2
        j = np.zeros((3, 3))
        j[0, 0] = -2.0 * xx * yy / r2**2
        j[0, 1] = d / r2**2
        j[1, 0] = -d / r2**2
        j[1, 1] = -2.0 * xx * yy / r2**2
        return j

    def y1_hess(x):
        xx, yy = x[0], x[1]
        r2 = xx**2 + yy**2
        p = 2.0 * yy * (3.0 * xx**2 - yy**2) / r2**3
        q = -2.0 * xx * (xx**2 - 3.0 * yy**2) / r2**3
        h = np.zeros((3, 3, 3))
        h[0, 0, 0] = p
        h[0, 0, 1] = h[0, 1, 0] = q
        h[0, 1, 1] = -p
        h[1, 0, 0] = -q
        h[1, 0, 1] = h[1, 1, 0] = p
        h[1, 1, 1] = q
        return h

    def c1(x):
        xx, yy = x[0], x[1]
        cq = (xx**2 - yy**2) / (xx**2 + yy**2) ** 2
        return np.array([[0.0, cq], [-cq, 0.0]])

    v1 = make_infinitesimal(
        m=2,
        y=VectorField(y1, jac=y1_jac, hess=y1_hess, name="Y1"),
        c=MatrixField(c1, name="C1"),
        n=3,
    )

    def y2(x):
        return np.array([x[0], x[1], 0.0])

    def hh2(x):
        xx, yy = x[0], x[1]
        d = xx**2 - yy**2
        r = math.sqrt(xx**2 + yy**2)
        return np.array([-2.0 * al * xx / (d * r), 2.0 * al * yy / (d * r)])

    y2_jac_mat = np.diag([1.0, 1.0, 0.0])
    v2 = make_infinitesimal(
        m=2,
        y=VectorField(y2, jac=lambda x: y2_jac_mat, hess=lambda x: np.zeros((3, 3, 3)), name="Y2"),
        hh=VectorField(hh2, name="H2"),
        n=3,
    )
    v3 = make_infinitesimal(m=2, y=np.array([0.0, 0.0, 1.0]), n=3)

    def fwd(x):
        x = np.asarray(x, dtype=float)
        return np.stack(
            [
                x[..., 0] * x[..., 1],
                0.5 * np.log(x[..., 0] ** 2 - x[..., 1] ** 2),
                x[..., 2],
            ],
            axis=-1,
        )

    def inv(xp):
        xp = np.asarray(xp, dtype=float)
        e2 = np.exp(2.0 * xp[..., 1])
        rho = np.sqrt(e2**2 + 4.0 * xp[..., 0] ** 2)
        xx = np.sqrt(0.5 * (rho + e2))
        return np.stack([xx, xp[..., 0] / xx, xp[..., 2]], axis=-1)

    def fwd_jac(x):
        xx, yy = x[0], x[1]
        d = xx**2 - yy**2
        return np.array(
            [[yy, xx, 0.0], [xx / d, -yy / d, 0.0], [0.0, 0.0, 1.0]]
        )

    def fwd_hess(x):
        xx, yy = x[0], x[1]
        d = xx**2 - yy**2
        r2 = xx**2 + yy**2
        h = np.zeros((3, 3, 3))
        h[0, 0, 1] = h[0, 1, 0] = 1.0
        h[1, 0, 0] = -r2 / d**2
        h[1, 0, 1] = h[1, 1, 0] = 2.0 * xx * yy / d**2
        h[1, 1, 1] = -r2 / d**2
        return h

    phi = Diffeomorphism(fwd, inv, jac=fwd_jac, hess=fwd_hess, name="hyperbolic chart")

    def bmat(x):
        xx, yy = x[0], x[1]
        r = math.sqrt(xx**2 + yy**2)
        return np.array([[yy / r, xx / r], [-xx / r, yy / r]])

    def hfield(x):
        xx, yy = x[0], x[1]
        d = xx**2 - yy**2
        r = math.sqrt(xx**2 + yy**2)
        return np.array([(yy - al * xx / d) / r, (xx + al * yy / d) / r])

    tr = make_transformation(
        m=2,
        phi=phi,
        b=MatrixField(bmat, name="frame rotation"),
        h=VectorField(hfield, name="drift tilt"),
        n=3,
    )

    def mu_red(xp):
        xp = np.asarray(xp, dtype=float)
        e2 = np.exp(2.0 * xp[..., 1])
        return np.stack([e2, -np.ones_like(e2), np.ones_like(e2)], axis=-1)

    def mu_red_jac(xp):
        j = np.zeros((3, 3))
        j[0, 1] = 2.0 * math.exp(2.0 * xp[1])
        return j

    def sig_red(xp):
        xp = np.asarray(xp, dtype=float)
        e2 = np.exp(2.0 * xp[..., 1])
        zero = np.zeros_like(e2)
        row0 = np.stack([e2, zero], axis=-1)
        row1 = np.stack([zero, -np.ones_like(e2)], axis=-1)
        row2 = np.stack([zero, zero], axis=-1)
        return np.stack([row0, row1, row2], axis=-2)

    def sig_red_jac(xp):
        j = np.zeros((3, 2, 3))
        j[0, 0, 1] = 2.0 * math.exp(2.0 * xp[1])
        return j

    reduced = Sde(
        n=3,
        m=2,
        mu=VectorField(mu_red, jac=mu_red_jac, name="reduced drift"),
        sigma=MatrixField(sig_red, jac=sig_red_jac, name="reduced diffusion"),
        domain=lambda x: np.full(np.shape(np.asarray(x)[..., 0]), True),
    )

    def g_mean(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0]

    def g_xy(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] * x[..., 1]

    return CatalogEntry(
        model="twod",
        route="canonical",
        parameters=dict(params),
        sde=sde,
        symmetries=[v1, v2, v3],
        reduction=tr,
        reduced_sde_expected=reduced,
        triangular_r=2,
        initial_map=tr.phi,
        default_x0=np.array([2.0, 0.5, 0.0]),
        test_box=(np.array([0.75, -1.5, 0.0]), np.array([3.0, 1.5, 2.0])),
        observables={"mean": g_mean, "xy": g_xy},
        oracles={},
        default_observable="mean",
        expected_structure={
            (0, 1): np.array([2.0, 0.0, 0.0]),
            (0, 2): np.array([0.0, 0.0, 0.0]),
            (1, 2): np.array([0.0, 0.0, 0.0]),
        },
        has_time_change=False,
        box_predicate=lambda x: x[0] > abs(x[1]) + 0.25,
        labels={"drift": "planar rotation/dilation model"},
    )


# ---------------------------------------------------------------------------
# entry point and self test
# ---------------------------------------------------------------------------


def get_model(
    model: str,
    route: Optional[str] = None,
    self_test: bool = True,
    **params: float,
) -> CatalogEntry:
    """Assemble a catalog entry, checking parameter guards.

    Unknown parameter names raise :class:`ConfigError`.  With
    ``self_test=True`` (the default) a small sanity sweep runs on
    construction: the symmetry fields must satisfy the determining
    equations and the straightening map must reproduce the stored reduced
    SDE on a handful of box points.
    """
    if model not in MODEL_IDS:
        raise ConfigError(f"unknown model {model!r}; known models: {list(MODEL_IDS)}")
    routes = _ROUTES[model]
    if route is None:
        route = routes[0]
    if route not in routes:
        raise ConfigError(f"model {model!r} has routes {list(routes)}, got {route!r}")
    merged = dict(_DEFAULT_PARAMS[model])
    for key, value in params.items():
        if key not in merged:
            raise ConfigError(f"model {model!r} has no parameter {key!r}")
        merged[key] = float(value)

    if model == "bessel":
        entry = _build_bessel(route, merged)
    elif model == "cir":
        entry = _build_cir(merged)
    elif model == "ou":
        entry = _build_ou(merged)
    else:
        entry = _build_twod(merged)

    if self_test:
        verify_entry(entry, points=8, seed=20260818)
    return entry


def verify_entry(entry: CatalogEntry, points: int = 8, seed: int = 0, tol: float = 1e-6) -> None:
    """Entry invariants: symmetries solve the determining equations and the
    straightening map sends the SDE to the stored reduced form."""
    from .checks import check_determining_equations
    from .transform import transform_sde

    pts = entry.sample(points, seed=seed)
    for idx, v in enumerate(entry.symmetries):
        rep = check_determining_equations(
            v, entry.sde, pts, tolerance=tol, model=f"{entry.model}[{idx}]"
        )
        if not rep.passed:
            raise ConfigError(
                f"catalog self-test failed: symmetry {idx} of {entry.model}/{entry.route} "
                f"violates the determining equations (max residual {rep.max_residual:.3e})"
            )
    mapped = transform_sde(entry.reduction, entry.sde)
    worst = 0.0
    for x in pts:
        xp = entry.reduction.phi(x)
        worst = max(worst, float(np.max(np.abs(mapped.mu(xp) - entry.reduced_sde_expected.mu(xp)))))
        worst = max(
            worst,
            float(np.max(np.abs(mapped.sigma(xp) - entry.reduced_sde_expected.sigma(xp)))),
        )
    if not worst <= tol:
        raise ConfigError(
            f"catalog self-test failed: reduced SDE of {entry.model}/{entry.route} "
            f"deviates from the stored closed form (max deviation {worst:.3e})"
        )
