"""Hot simulation kernels with a compiled and a pure-numpy backend.

The compiled backend (numba, default whenever importable) fuses increment
generation into the Euler-Maruyama step loop: each path owns a
counter-based SplitMix64 stream keyed by (master seed, leg id, path index)
whose 64-bit words feed a 128-layer ziggurat normal sampler.  The numpy
backend draws increments from per-path numpy Philox substreams under the
same (seed, leg, path) keying and steps vectorized chunks.  Backends are
selected with the STOCHSYM_BACKEND environment variable ("numba" or
"numpy") or per call; they agree statistically, not bitwise.

Both backends share identical recording semantics: a target time t is
reported at the last grid node whose accumulated clock does not exceed t
(ties resolved within 1e-9), matching ``evaluate_at`` on discrete paths.

Route codes cover the catalog models.  Direct codes simulate the original
SDE and record raw states at requested nodes; reduced codes simulate the
straightened SDE while accumulating the original-time clock and the
log-density of the original measure against the simulating one
(increments  -h_eff . dW - |h_eff|^2 dt / 2  at the left endpoint).
"""

from __future__ import annotations

import math
import os
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError
from .rng import substream

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


DIRECT_ROUTES = {"bessel": 1, "cir": 2, "ou": 3, "twod": 4}
REDUCED_ROUTES = {
    ("bessel", "doob"): 11,
    ("bessel", "lamperti"): 12,
    ("cir", "canonical"): 13,
    ("ou", "canonical"): 14,
    ("twod", "canonical"): 15,
}

CHUNK_PATHS = 8192
CLOCK_TIE_TOL = 1e-9


def backend_name(requested: Optional[str] = None) -> str:
    """Resolve the backend: explicit argument, then env, then best available."""
    name = requested or os.environ.get("STOCHSYM_BACKEND", "")
    if not name:
        name = "numba" if HAVE_NUMBA else "numpy"
    name = name.lower()
    if name not in ("numba", "numpy"):
        raise ConfigError(f"unknown backend {name!r}; choose numba or numpy")
    if name == "numba" and not HAVE_NUMBA:
        raise ConfigError("numba backend requested but numba is not importable")
    return name


def direct_route_code(model: str) -> int:
    try:
        return DIRECT_ROUTES[model]
    except KeyError:
        raise ConfigError(f"no direct kernel for model {model!r}") from None


def reduced_route_code(model: str, route: str) -> int:
    try:
        return REDUCED_ROUTES[(model, route)]
    except KeyError:
        raise ConfigError(f"no reduced kernel for {model!r}/{route!r}") from None


def pack_params(entry) -> np.ndarray:
    """Flatten catalog parameters into the fixed slot layout kernels read."""
    p = np.zeros(6)
    par = entry.parameters
    if entry.model == "bessel":
        p[0] = par["a"]
    elif entry.model == "cir":
        p[0], p[1], p[2], p[3] = par["a"], par["b"], par["sigma0"], par["k"]
    elif entry.model == "ou":
        p[0], p[1], p[2] = par["a"], par["b"], par["c"]
    elif entry.model == "twod":
        p[0] = par["alpha"]
    else:
        raise ConfigError(f"no kernel parameters for model {entry.model!r}")
    return p


def deterministic_coefficient(
    entry, step0: int, n_steps: int, dt: float, z0: float = 0.0
) -> np.ndarray:
    """Per-step coefficient exp(c * z'(t)) for reduced routes whose clock
    coordinate moves deterministically; ones when unused.  ``z0`` is the
    starting value of the original clock coordinate."""
    steps = np.arange(step0, step0 + n_steps, dtype=float)
    if entry.model == "cir":
        k = entry.parameters["k"]
        return np.exp(k * (z0 + steps * dt))
    if entry.model == "ou":
        # the reduced clock coordinate starts at z0 - 1 and the drift and
        # noise coefficients both scale with exp(a (z' + 1)) = exp(a (z0 + t'))
        a = entry.parameters["a"]
        return np.exp(a * (z0 + steps * dt))
    return np.ones(n_steps)


# ---------------------------------------------------------------------------
# counter-based normal stream (compiled backend)
# ---------------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_LEG_SALT = np.uint64(0xA076_1D64_78BD_642F)
_PATH_SALT = np.uint64(0xE703_7ED1_A0B4_28DB)

_ZIG_LAYERS = 128
_ZIG_R = 3.442619855899
_ZIG_V = 9.91256303526217e-3


def _build_ziggurat() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Marsaglia-Tsang tables: int thresholds kn, scales wn, heights fn."""
    m = 2147483648.0  # 2**31
    kn = np.zeros(_ZIG_LAYERS, dtype=np.int64)
    wn = np.zeros(_ZIG_LAYERS)
    fn = np.zeros(_ZIG_LAYERS)
    dn = _ZIG_R
    tn = _ZIG_R
    q = _ZIG_V / math.exp(-0.5 * dn * dn)
    kn[0] = int((dn / q) * m)
    kn[1] = 0
    wn[0] = q / m
    wn[_ZIG_LAYERS - 1] = dn / m
    fn[0] = 1.0
    fn[_ZIG_LAYERS - 1] = math.exp(-0.5 * dn * dn)
    for i in range(_ZIG_LAYERS - 2, 0, -1):
        dn = math.sqrt(-2.0 * math.log(_ZIG_V / dn + math.exp(-0.5 * dn * dn)))
        kn[i + 1] = int((dn / tn) * m)
        tn = dn
        fn[i] = math.exp(-0.5 * dn * dn)
        wn[i] = dn / m
    return kn, wn, fn


_ZIG_KN, _ZIG_WN, _ZIG_FN = _build_ziggurat()
_INV_R = 1.0 / _ZIG_R


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _stream_base(seed, leg, path):
    b = _mix64(np.uint64(seed) + _GOLDEN)
    b = _mix64(b ^ (np.uint64(leg) * _LEG_SALT))
    return _mix64(b ^ (np.uint64(path) * _PATH_SALT))


@njit(cache=True, inline="always")
def _word_at(base, pos):
    return _mix64(base + (pos + np.uint64(1)) * _GOLDEN)


@njit(cache=True)
def _normal_at(base, pos):
    """One standard normal from the stream; returns (value, new position)."""
    while True:
        w = _word_at(base, pos)
        pos += np.uint64(1)
        hz = np.int64(np.int32(w & np.uint64(0xFFFFFFFF)))
        iz = np.int64(hz & np.int64(127))
        if hz < 0:
            ahz = -hz
        else:
            ahz = hz
        if ahz < _ZIG_KN[iz]:
            return hz * _ZIG_WN[iz], pos
        if iz == 0:
            # tail beyond R: Marsaglia's exponential wedge
            while True:
                w1 = _word_at(base, pos)
                pos += np.uint64(1)
                w2 = _word_at(base, pos)
                pos += np.uint64(1)
                u1 = (w1 >> np.uint64(12)) * 2.220446049250313e-16 + 1.1102230246251565e-16
                u2 = (w2 >> np.uint64(12)) * 2.220446049250313e-16 + 1.1102230246251565e-16
                x = -math.log(u1) * _INV_R
                y = -math.log(u2)
                if y + y >= x * x:
                    if hz > 0:
                        return _ZIG_R + x, pos
                    return -(_ZIG_R + x), pos
        else:
            x = hz * _ZIG_WN[iz]
            u3 = ((w >> np.uint64(40)) & np.uint64(0xFFFFFF)) * 5.9604644775390625e-08
            if _ZIG_FN[iz] + u3 * (_ZIG_FN[iz - 1] - _ZIG_FN[iz]) < math.exp(-0.5 * x * x):
                return x, pos
            # rejected wedge sample: draw a fresh word


@njit(cache=True)
def _normal_block(seed, leg, path_lo, out):
    """Fill out[(path - path_lo), k] with each path's first draws (testing)."""
    npaths, count = out.shape
    for p in range(npaths):
        base = _stream_base(seed, leg, np.int64(path_lo) + p)
        pos = np.uint64(0)
        for k in range(count):
            val, pos = _normal_at(base, pos)
            out[p, k] = val


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _direct_chunk_nb(
    route,
    par,
    x0,
    dt,
    n_steps,
    rec_nodes,
    seed,
    leg,
    paths,
    out_states,
    out_rej,
):
    npaths = out_states.shape[0]
    n_rec = rec_nodes.shape[0]
    sq = math.sqrt(dt)
    for p in range(npaths):
        base = _stream_base(seed, leg, paths[p])
        pos = np.uint64(0)
        x = x0[0]
        y = x0[1]
        z = x0[2]
        rej = False
        ri = 0
        while ri < n_rec and rec_nodes[ri] == 0:
            out_states[p, ri, 0] = x
            out_states[p, ri, 1] = y
            out_states[p, ri, 2] = z
            ri += 1
        for k in range(n_steps):
            # unit-clock coordinate: slot 1 for planar-state models, slot 2
            # for the three-dimensional one
            if route == 1:
                w, pos = _normal_at(base, pos)
                x = x + (par[0] / x) * dt + sq * w
                y = y + dt
                ok = x > 0.0
            elif route == 2:
                w, pos = _normal_at(base, pos)
                x = x + (par[0] * x + par[1]) * dt + par[2] * math.sqrt(x) * sq * w
                y = y + dt
                ok = x > 0.0
            elif route == 3:
                w, pos = _normal_at(base, pos)
                x = x + (par[0] * x + par[1]) * dt + sq * w
                y = y + dt
                ok = True
            else:
                w1, pos = _normal_at(base, pos)
                w2, pos = _normal_at(base, pos)
                r2 = x * x + y * y
                s = (x * x - y * y) / math.sqrt(r2)
                xn = x + (par[0] * x / r2) * dt + s * sq * w1
                yn = y - (par[0] * y / r2) * dt + s * sq * w2
                x = xn
                y = yn
                z = z + dt
                ok = x > abs(y)
            if (not ok) or (not math.isfinite(x + y)):
                rej = True
                break
            if ri < n_rec and k + 1 == rec_nodes[ri]:
                out_states[p, ri, 0] = x
                out_states[p, ri, 1] = y
                out_states[p, ri, 2] = z
                ri += 1
        out_rej[p] = 1 if rej else 0


@njit(cache=True, nogil=True)
def _reduced_chunk_nb(
    route,
    par,
    dt,
    n_steps,
    zcoef,
    targets,
    seed,
    leg,
    paths,
    state,
    pos_arr,
    clock,
    logw,
    prog,
    rec_states,
    rec_logw,
    rej,
    final_flush,
):
    npaths = state.shape[0]
    n_t = targets.shape[0]
    sq = math.sqrt(dt)
    for p in range(npaths):
        if rej[p] == 1 or prog[p] >= n_t:
            continue
        base = _stream_base(seed, leg, paths[p])
        pos = pos_arr[p]
        x = state[p, 0]
        y = state[p, 1]
        z = state[p, 2]
        c = clock[p]
        lw = logw[p]
        pr = prog[p]
        for k in range(n_steps):
            # left-endpoint coefficients, clock integrand, effective field
            if route == 11:
                integ = 1.0
                h1 = par[0] / x
                h2 = 0.0
            elif route == 12:
                integ = math.exp(y)
                h1 = 0.0
                h2 = 0.0
            elif route == 13:
                integ = 1.0
                rt = 0.5 * abs(x) / zcoef[k]
                h1 = -((par[0] + 2.0 * par[3]) / par[2]) * rt + (
                    par[2] * par[2] - 4.0 * par[1]
                ) / (4.0 * par[2] * rt)
                h2 = 0.0
            elif route == 14:
                integ = 1.0
                h1 = -par[0] * x / zcoef[k] + par[2]
                h2 = 0.0
            else:
                integ = 1.0
                e2 = math.exp(2.0 * y)
                h1 = 1.0
                h2 = par[0] / e2
            c1 = c + integ * dt
            while pr < n_t and targets[pr] <= c1 - CLOCK_TIE_TOL:
                rec_states[p, pr, 0] = x
                rec_states[p, pr, 1] = y
                rec_states[p, pr, 2] = z
                if pr == n_t - 1:
                    rec_logw[p] = lw
                pr += 1
            if pr >= n_t:
                break
            # advance weight then state
            if route == 11:
                w, pos = _normal_at(base, pos)
                winc = -(h1 * w) * sq - 0.5 * h1 * h1 * dt
                x = x - sq * w
                y = y + dt
            elif route == 12:
                w, pos = _normal_at(base, pos)
                winc = 0.0
                e = integ
                x = x - 2.0 * par[0] * e * dt - 2.0 * e * sq * w
                y = y + (2.0 * par[0] - 1.0) * dt + 2.0 * sq * w
            elif route == 13:
                w, pos = _normal_at(base, pos)
                winc = -(h1 * w) * sq - 0.5 * h1 * h1 * dt
                x = x + par[2] * zcoef[k] * sq * w
                y = y + dt
            elif route == 14:
                w, pos = _normal_at(base, pos)
                winc = -(h1 * w) * sq - 0.5 * h1 * h1 * dt
                co = 2.0 * zcoef[k]
                x = x + (par[1] + par[2]) * co * dt + co * sq * w
                y = y + dt
            else:
                w1, pos = _normal_at(base, pos)
                w2, pos = _normal_at(base, pos)
                winc = -(h1 * w1 + h2 * w2) * sq - 0.5 * (h1 * h1 + h2 * h2) * dt
                e2 = math.exp(2.0 * y)
                x = x + e2 * dt + e2 * sq * w1
                y = y - dt - sq * w2
                z = z + dt
            if math.isfinite(winc):
                lw = lw + winc
            else:
                lw = -np.inf
            c = c1
            if not math.isfinite(x + y + z):
                rej[p] = 1
                break
        if rej[p] == 0 and final_flush == 1:
            while pr < n_t and c >= targets[pr] - CLOCK_TIE_TOL:
                rec_states[p, pr, 0] = x
                rec_states[p, pr, 1] = y
                rec_states[p, pr, 2] = z
                if pr == n_t - 1:
                    rec_logw[p] = lw
                pr += 1
        state[p, 0] = x
        state[p, 1] = y
        state[p, 2] = z
        pos_arr[p] = pos
        clock[p] = c
        logw[p] = lw
        prog[p] = pr


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def _chunk_normals(
    seed: int,
    leg: int,
    paths: np.ndarray,
    count: int,
    m: int,
    skip: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(len(paths), count, m) increments from per-path Philox substreams.

    ``skip`` gives per-path draw counts already consumed in earlier rounds;
    those are replayed and discarded so each path continues its own stream.
    """
    out = np.empty((len(paths), count, m))
    for i in range(len(paths)):
        gen = substream(seed, leg, int(paths[i]))
        if skip is not None and skip[i] > 0:
            gen.standard_normal(size=int(skip[i]))
        gen.standard_normal(out=out[i])
    return out


@np.errstate(divide="ignore", invalid="ignore", over="ignore")
def _direct_chunk_np(route, par, x0, dt, n_steps, rec_nodes, seed, leg, paths, out_states, out_rej):
    npaths = out_states.shape[0]
    m = 2 if route == 4 else 1
    normals = _chunk_normals(seed, leg, paths, n_steps, m)
    sq = math.sqrt(dt)
    x = np.full(npaths, x0[0])
    y = np.full(npaths, x0[1])
    z = np.full(npaths, x0[2])
    alive = np.ones(npaths, dtype=bool)
    ri = 0
    n_rec = rec_nodes.shape[0]
    while ri < n_rec and rec_nodes[ri] == 0:
        out_states[:, ri, 0] = x
        out_states[:, ri, 1] = y
        out_states[:, ri, 2] = z
        ri += 1
    for k in range(n_steps):
        if route == 1:
            x = np.where(alive, x + (par[0] / x) * dt + sq * normals[:, k, 0], x)
            y = np.where(alive, y + dt, y)
            ok = x > 0.0
        elif route == 2:
            x = np.where(
                alive,
                x + (par[0] * x + par[1]) * dt + par[2] * np.sqrt(np.abs(x)) * sq * normals[:, k, 0],
                x,
            )
            y = np.where(alive, y + dt, y)
            ok = x > 0.0
        elif route == 3:
            x = np.where(alive, x + (par[0] * x + par[1]) * dt + sq * normals[:, k, 0], x)
            y = np.where(alive, y + dt, y)
            ok = np.ones(npaths, dtype=bool)
        else:
            r2 = x * x + y * y
            s = (x * x - y * y) / np.sqrt(r2)
            xn = x + (par[0] * x / r2) * dt + s * sq * normals[:, k, 0]
            yn = y - (par[0] * y / r2) * dt + s * sq * normals[:, k, 1]
            x = np.where(alive, xn, x)
            y = np.where(alive, yn, y)
            z = np.where(alive, z + dt, z)
            ok = x > np.abs(y)
        bad = alive & (~ok | ~np.isfinite(x + y))
        alive = alive & ~bad
        if ri < n_rec and k + 1 == rec_nodes[ri]:
            out_states[:, ri, 0] = x
            out_states[:, ri, 1] = y
            out_states[:, ri, 2] = z
            ri += 1
    out_rej[:] = (~alive).astype(np.uint8)


@np.errstate(divide="ignore", invalid="ignore", over="ignore")
def _reduced_chunk_np(
    route,
    par,
    dt,
    n_steps,
    zcoef,
    targets,
    seed,
    leg,
    paths,
    state,
    pos_arr,
    clock,
    logw,
    prog,
    rec_states,
    rec_logw,
    rej,
    final_flush,
):
    npaths = state.shape[0]
    n_t = targets.shape[0]
    m = 2 if route == 15 else 1
    participating = (rej == 0) & (prog < n_t)
    normals = _chunk_normals(seed, leg, paths, n_steps, m, skip=pos_arr)
    sq = math.sqrt(dt)
    x = state[:, 0].copy()
    y = state[:, 1].copy()
    z = state[:, 2].copy()
    c = clock.copy()
    lw = logw.copy()
    pr = prog.copy()
    alive = (rej == 0) & (pr < n_t)
    for k in range(n_steps):
        if not np.any(alive):
            break
        if route == 11:
            integ = np.ones(npaths)
            h1 = par[0] / x
            h2 = np.zeros(npaths)
        elif route == 12:
            integ = np.exp(y)
            h1 = np.zeros(npaths)
            h2 = np.zeros(npaths)
        elif route == 13:
            integ = np.ones(npaths)
            rt = 0.5 * np.abs(x) / zcoef[k]
            h1 = -((par[0] + 2.0 * par[3]) / par[2]) * rt + (
                par[2] ** 2 - 4.0 * par[1]
            ) / (4.0 * par[2] * rt)
            h2 = np.zeros(npaths)
        elif route == 14:
            integ = np.ones(npaths)
            h1 = -par[0] * x / zcoef[k] + par[2]
            h2 = np.zeros(npaths)
        else:
            integ = np.ones(npaths)
            e2y = np.exp(2.0 * y)
            h1 = np.ones(npaths)
            h2 = par[0] / e2y
        c1 = np.where(alive, c + integ * dt, c)
        for ti in range(n_t):
            hit = alive & (pr == ti) & (targets[ti] <= c1 - CLOCK_TIE_TOL)
            if np.any(hit):
                rec_states[hit, ti, 0] = x[hit]
                rec_states[hit, ti, 1] = y[hit]
                rec_states[hit, ti, 2] = z[hit]
                if ti == n_t - 1:
                    rec_logw[hit] = lw[hit]
                pr[hit] += 1
        alive = alive & (pr < n_t) & (rej == 0)
        if not np.any(alive):
            break
        w1 = normals[:, k, 0]
        if route == 11:
            winc = -(h1 * w1) * sq - 0.5 * h1 * h1 * dt
            xn = x - sq * w1
            yn = y + dt
            zn = z
        elif route == 12:
            winc = np.zeros(npaths)
            xn = x - 2.0 * par[0] * integ * dt - 2.0 * integ * sq * w1
            yn = y + (2.0 * par[0] - 1.0) * dt + 2.0 * sq * w1
            zn = z
        elif route == 13:
            winc = -(h1 * w1) * sq - 0.5 * h1 * h1 * dt
            xn = x + par[2] * zcoef[k] * sq * w1
            yn = y + dt
            zn = z
        elif route == 14:
            winc = -(h1 * w1) * sq - 0.5 * h1 * h1 * dt
            co = 2.0 * zcoef[k]
            xn = x + (par[1] + par[2]) * co * dt + co * sq * w1
            yn = y + dt
            zn = z
        else:
            w2 = normals[:, k, 1]
            winc = -(h1 * w1 + h2 * w2) * sq - 0.5 * (h1 * h1 + h2 * h2) * dt
            e2y = np.exp(2.0 * y)
            xn = x + e2y * dt + e2y * sq * w1
            yn = y - dt - sq * w2
            zn = z + dt
        good = np.isfinite(winc)
        lw = np.where(alive & good, lw + winc, lw)
        lw = np.where(alive & ~good, -np.inf, lw)
        x = np.where(alive, xn, x)
        y = np.where(alive, yn, y)
        z = np.where(alive, zn, z)
        c = np.where(alive, c1, c)
        blown = alive & ~np.isfinite(x + y + z)
        rej[blown] = 1
        alive = alive & ~blown
    # every participating path consumed one full round of draws
    pos_arr[participating] += n_steps * m
    if final_flush == 1:
        for ti in range(n_t):
            hit = (rej == 0) & (pr == ti) & (c >= targets[ti] - CLOCK_TIE_TOL)
            if np.any(hit):
                rec_states[hit, ti, 0] = x[hit]
                rec_states[hit, ti, 1] = y[hit]
                rec_states[hit, ti, 2] = z[hit]
                if ti == n_t - 1:
                    rec_logw[hit] = lw[hit]
                pr[hit] += 1
                # flushed targets beyond the first also read the final node
    state[:, 0] = x
    state[:, 1] = y
    state[:, 2] = z
    clock[:] = c
    logw[:] = lw
    prog[:] = pr


def direct_chunk(backend: str, *args) -> None:
    if backend == "numba":
        _direct_chunk_nb(*args)
    else:
        _direct_chunk_np(*args)


def reduced_chunk(backend: str, *args) -> None:
    if backend == "numba":
        _reduced_chunk_nb(*args)
    else:
        _reduced_chunk_np(*args)


def normal_block(seed: int, leg: int, path_lo: int, npaths: int, count: int) -> np.ndarray:
    """First ``count`` compiled-stream normals of ``npaths`` consecutive paths."""
    if not HAVE_NUMBA:
        raise ConfigError("normal_block requires the numba backend")
    out = np.empty((npaths, count))
    _normal_block(seed, leg, path_lo, out)
    return out
