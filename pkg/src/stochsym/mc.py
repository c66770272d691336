"""Monte Carlo validation of the reduction/reconstruction round trip.

Two estimators of ``E[g(X_t)]`` are produced for a catalog model: a *direct*
one that discretizes the original SDE, and a *reconstructed* one that
discretizes the reduced (triangular) SDE, maps recorded nodes back through the
inverse of the reducing diffeomorphism, and corrects the change of drift with
exponential Girsanov weights accumulated along the reduced path.  When the
reduction involves a random time change, the reduced process is simulated in
its own time and sampled where its clock functional crosses the requested
times; the simulation horizon is extended in doubling rounds until every path
has crossed.

Work is split into fixed-size chunks of paths.  Each path owns a counter-based
noise stream keyed by its global index, and chunk partial sums are combined in
chunk order, so reports are byte-identical for any thread count within a
backend.  ``STOCHSYM_THREADS`` sets the default worker count.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .catalog import CatalogEntry
from .errors import ConfigError, DegenerateWeightsWarning, HorizonError, ReliabilityError
from .kernels import CHUNK_PATHS, CLOCK_TIE_TOL
from .rng import LEG_DIRECT, LEG_REDUCED
from .sde import DiscretePath

REJECTION_CAP = 0.05
ESS_WARN_FRACTION = 0.01
HORIZON_FACTOR = 4096.0


# ---------------------------------------------------------------------------
# path-level Girsanov weight (closure route, used by tests and small studies)
# ---------------------------------------------------------------------------


def girsanov_log_weight(path: DiscretePath, h: Callable[[np.ndarray], np.ndarray],
                        direction: str = "p_over_q") -> float:
    """Log Radon-Nikodym derivative along a discrete path for drift shift h.

    With ``direction="q_over_p"`` the path increments are read as coming from
    the base measure P and the result is ``log dQ/dP`` for the measure Q under
    which ``W - int h dt`` is Brownian.  With ``direction="p_over_q"`` the
    increments are read as coming from Q itself and the result is the inverse
    factor ``log dP/dQ``.  Both use the left-endpoint value of ``h``.
    """
    if direction not in ("p_over_q", "q_over_p"):
        raise ConfigError(f"unknown direction {direction!r}")
    dt = np.diff(path.times)
    hv = np.stack([np.atleast_1d(np.asarray(h(x), dtype=float))
                   for x in path.states[:-1]])
    cross = np.sum(hv * path.dw)
    quad = float(np.sum(np.sum(hv * hv, axis=1) * dt))
    if direction == "q_over_p":
        return float(cross) - 0.5 * quad
    return -float(cross) - 0.5 * quad


# ---------------------------------------------------------------------------
# result containers
# ---------------------------------------------------------------------------


@dataclass
class McEstimate:
    """One scalar estimate at one time point."""

    time: float
    value: float
    stderr: float
    n_effective: float
    rejected_frac: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "time": self.time,
            "value": self.value,
            "stderr": self.stderr,
            "n_effective": self.n_effective,
            "rejected_frac": self.rejected_frac,
        }


@dataclass
class LegResult:
    """All estimates produced by one simulation leg."""

    estimator: str
    estimates: List[McEstimate]
    n_paths: int
    elapsed: float
    weight_mean: Optional[float] = None
    weight_stderr: Optional[float] = None

    def at(self, t: float) -> McEstimate:
        for e in self.estimates:
            if abs(e.time - t) <= 1e-12:
                return e
        raise KeyError(f"no estimate at time {t}")

    def to_dict(self) -> Dict[str, object]:
        # wall time stays off the report so identical (config, seed) runs
        # serialize byte-identically regardless of thread count
        out: Dict[str, object] = {
            "estimator": self.estimator,
            "n_paths": self.n_paths,
            "estimates": [e.to_dict() for e in self.estimates],
        }
        if self.weight_mean is not None:
            out["weight_mean"] = self.weight_mean
            out["weight_stderr"] = self.weight_stderr
        return out


@dataclass
class ReconstructionResult:
    """Direct and reconstructed estimates side by side, with comparisons."""

    model: str
    route: str
    observable: str
    times: List[float]
    n_paths: int
    dt: float
    seed: int
    backend: str
    direct: LegResult
    reconstructed: LegResult
    comparisons: List[Dict[str, float]] = field(default_factory=list)
    oracle: List[Dict[str, float]] = field(default_factory=list)

    @property
    def max_abs_z(self) -> float:
        return max(abs(c["z_score"]) for c in self.comparisons)

    def to_dict(self) -> Dict[str, object]:
        return {
            "model": self.model,
            "route": self.route,
            "observable": self.observable,
            "times": list(self.times),
            "n_paths": self.n_paths,
            "dt": self.dt,
            "seed": self.seed,
            "backend": self.backend,
            "direct": self.direct.to_dict(),
            "reconstructed": self.reconstructed.to_dict(),
            "comparisons": self.comparisons,
            "oracle": self.oracle,
        }

    def rows(self) -> List[Dict[str, object]]:
        """Flat per-estimate rows matching the report CSV schema."""
        out = []
        for leg in (self.direct, self.reconstructed):
            for e in leg.estimates:
                out.append({
                    "model": self.model,
                    "route": self.route,
                    "time": e.time,
                    "estimator": leg.estimator,
                    "value": e.value,
                    "stderr": e.stderr,
                    "n_effective": e.n_effective,
                    "rejected_frac": e.rejected_frac,
                })
        return out


# ---------------------------------------------------------------------------
# plan validation and shared helpers
# ---------------------------------------------------------------------------


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is not None:
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        return int(threads)
    env = os.environ.get("STOCHSYM_THREADS")
    if env:
        try:
            val = int(env)
        except ValueError as exc:
            raise ConfigError(f"bad STOCHSYM_THREADS value {env!r}") from exc
        if val < 1:
            raise ConfigError("STOCHSYM_THREADS must be >= 1")
        return val
    return os.cpu_count() or 1


def _validate_plan(times: Sequence[float], n_paths: int, dt: float) -> np.ndarray:
    arr = np.asarray(list(times), dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError("need at least one output time")
    if np.any(arr < 0):
        raise ConfigError("output times must be nonnegative")
    if np.any(np.diff(arr) <= 0):
        raise ConfigError("output times must be strictly increasing")
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError("dt must be positive and finite")
    if n_paths < 2:
        raise ConfigError("n_paths must be >= 2")
    return arr


def _chunk_ranges(n_paths: int) -> List[Tuple[int, int]]:
    return [(lo, min(lo + CHUNK_PATHS, n_paths))
            for lo in range(0, n_paths, CHUNK_PATHS)]


def _run_chunks(worker: Callable[[int, int], tuple], n_paths: int,
                threads: int) -> List[tuple]:
    ranges = _chunk_ranges(n_paths)
    if threads <= 1 or len(ranges) == 1:
        return [worker(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


def _observable_fn(entry: CatalogEntry, observable: Optional[str]) -> Tuple[str, Callable]:
    name = observable or entry.default_observable
    if name not in entry.observables:
        raise ConfigError(
            f"unknown observable {name!r} for model {entry.model!r}; "
            f"have {sorted(entry.observables)}")
    return name, entry.observables[name]


# ---------------------------------------------------------------------------
# direct estimator
# ---------------------------------------------------------------------------


def estimate_direct(entry: CatalogEntry, times: Sequence[float], n_paths: int,
                    dt: float, seed: int, observable: Optional[str] = None,
                    backend: Optional[str] = None,
                    threads: Optional[int] = None) -> LegResult:
    """Estimate E[g(X_t)] by Euler-Maruyama on the original SDE.

    Paths that leave the model domain (or blow up) are discarded; the
    estimate conditions on survival and a rejection fraction above
    ``REJECTION_CAP`` raises :class:`ReliabilityError`.
    """
    times_arr = _validate_plan(times, n_paths, dt)
    backend = kernels.backend_name(backend)
    threads = _resolve_threads(threads)
    _, g = _observable_fn(entry, observable)

    route = kernels.direct_route_code(entry.model)
    par = kernels.pack_params(entry)
    x0 = np.zeros(3)
    x0[: entry.n] = np.asarray(entry.default_x0, dtype=float)
    rec_nodes = np.floor((times_arr + CLOCK_TIE_TOL) / dt).astype(np.int64)
    if np.any(np.diff(rec_nodes) <= 0):
        raise ConfigError("output times closer than one dt step")
    n_steps = int(rec_nodes[-1])
    n_times = times_arr.size

    def worker(lo: int, hi: int):
        count = hi - lo
        paths = np.arange(lo, hi, dtype=np.int64)
        states = np.empty((count, n_times, 3))
        rej = np.empty(count, dtype=np.uint8)
        kernels.direct_chunk(backend, route, par, x0, dt, n_steps, rec_nodes,
                             seed, LEG_DIRECT, paths, states, rej)
        keep = rej == 0
        n_acc = int(keep.sum())
        sums = np.zeros(n_times)
        sums2 = np.zeros(n_times)
        for ti in range(n_times):
            vals = g(states[keep, ti, : entry.n])
            sums[ti] = np.sum(vals)
            sums2[ti] = np.sum(vals * vals)
        return sums, sums2, n_acc, count - n_acc

    t0 = time.time()
    partials = _run_chunks(worker, n_paths, threads)
    elapsed = time.time() - t0

    sums = np.zeros(n_times)
    sums2 = np.zeros(n_times)
    n_acc = 0
    n_rej = 0
    for s, s2, na, nr in partials:
        sums += s
        sums2 += s2
        n_acc += na
        n_rej += nr
    rej_frac = n_rej / n_paths
    if rej_frac > REJECTION_CAP:
        raise ReliabilityError(
            f"{entry.model}: {rej_frac:.1%} of direct paths left the domain "
            f"(cap {REJECTION_CAP:.0%}); decrease dt or move the start point")
    if n_acc == 0:
        raise ReliabilityError(f"{entry.model}: no surviving direct paths")

    estimates = []
    for ti, t in enumerate(times_arr):
        mean = sums[ti] / n_acc
        var = max(sums2[ti] / n_acc - mean * mean, 0.0)
        estimates.append(McEstimate(
            time=float(t), value=float(mean),
            stderr=float(math.sqrt(var / n_acc)),
            n_effective=float(n_acc), rejected_frac=rej_frac))
    return LegResult("direct", estimates, n_paths, elapsed)


# ---------------------------------------------------------------------------
# reconstructed estimator
# ---------------------------------------------------------------------------


def estimate_reconstructed(entry: CatalogEntry, times: Sequence[float],
                           n_paths: int, dt: float, seed: int,
                           observable: Optional[str] = None,
                           backend: Optional[str] = None,
                           threads: Optional[int] = None) -> LegResult:
    """Estimate E[g(X_t)] from the reduced SDE plus weights and inverse map.

    The reduced process is advanced with its own Euler grid; requested times
    are located through the clock functional (trivial for reductions without
    a time change) and each recorded node is pulled back through the inverse
    diffeomorphism before evaluating the observable.  The estimate averages
    ``g * w`` where ``w`` is the exponential weight accumulated up to the
    final requested time.
    """
    times_arr = _validate_plan(times, n_paths, dt)
    if times_arr[0] <= 0:
        raise ConfigError("reconstruction times must be positive")
    backend = kernels.backend_name(backend)
    threads = _resolve_threads(threads)
    _, g = _observable_fn(entry, observable)

    code = kernels.reduced_route_code(entry.model, entry.route)
    par = kernels.pack_params(entry)
    x0 = np.asarray(entry.default_x0, dtype=float)
    x0_reduced = entry.initial_map(x0)
    inv = entry.reduction.phi.inv
    t_max = float(times_arr[-1])
    clock0 = float(x0[-1])
    n_times = times_arr.size

    base_steps = int(math.ceil((t_max - CLOCK_TIE_TOL) / dt))
    max_total_steps = int(HORIZON_FACTOR * max(1.0, t_max) / dt)

    def worker(lo: int, hi: int):
        count = hi - lo
        paths = np.arange(lo, hi, dtype=np.int64)
        state = np.zeros((count, 3))
        state[:, : entry.n] = x0_reduced
        pos = np.zeros(count, dtype=np.uint64 if backend == "numba" else np.int64)
        clock = np.zeros(count)
        logw = np.zeros(count)
        prog = np.zeros(count, dtype=np.int64)
        rej = np.zeros(count, dtype=np.uint8)
        rec_states = np.full((count, n_times, 3), np.nan)
        rec_logw = np.full(count, np.nan)

        if not entry.has_time_change:
            zcoef = kernels.deterministic_coefficient(entry, 0, base_steps, dt, clock0)
            kernels.reduced_chunk(backend, code, par, dt, base_steps, zcoef,
                                  times_arr, seed, LEG_REDUCED, paths, state,
                                  pos, clock, logw, prog, rec_states, rec_logw,
                                  rej, 1)
        else:
            done_steps = 0
            round_steps = base_steps
            while True:
                todo = (rej == 0) & (prog < n_times)
                if not todo.any():
                    break
                if done_steps >= max_total_steps:
                    raise HorizonError(
                        f"{entry.model}-{entry.route}: {int(todo.sum())} paths "
                        f"did not reach clock time {t_max} within "
                        f"{max_total_steps} reduced steps")
                round_steps = min(round_steps, max_total_steps - done_steps)
                ids = paths[todo]
                st = state[todo]
                po = pos[todo]
                cl = clock[todo]
                lo_w = logw[todo]
                pg = prog[todo]
                rj = rej[todo]
                rs = rec_states[todo]
                rl = rec_logw[todo]
                zcoef = kernels.deterministic_coefficient(
                    entry, done_steps, round_steps, dt, clock0)
                kernels.reduced_chunk(backend, code, par, dt, round_steps,
                                      zcoef, times_arr, seed, LEG_REDUCED,
                                      ids, st, po, cl, lo_w, pg, rs, rl, rj, 0)
                state[todo] = st
                pos[todo] = po
                clock[todo] = cl
                logw[todo] = lo_w
                prog[todo] = pg
                rej[todo] = rj
                rec_states[todo] = rs
                rec_logw[todo] = rl
                done_steps += round_steps
                round_steps = min(2 * round_steps, 512 * base_steps)

        keep = (rej == 0) & (prog >= n_times)
        n_acc = int(keep.sum())
        w = np.exp(rec_logw[keep])
        sums = np.zeros(n_times)
        sums2 = np.zeros(n_times)
        for ti in range(n_times):
            orig = inv(rec_states[keep, ti, : entry.n])
            gw = g(orig) * w
            sums[ti] = np.sum(gw)
            sums2[ti] = np.sum(gw * gw)
        return sums, sums2, float(np.sum(w)), float(np.sum(w * w)), n_acc, count - n_acc

    t0 = time.time()
    partials = _run_chunks(worker, n_paths, threads)
    elapsed = time.time() - t0

    sums = np.zeros(n_times)
    sums2 = np.zeros(n_times)
    w_sum = 0.0
    w_sum2 = 0.0
    n_acc = 0
    n_rej = 0
    for s, s2, ws, ws2, na, nr in partials:
        sums += s
        sums2 += s2
        w_sum += ws
        w_sum2 += ws2
        n_acc += na
        n_rej += nr
    rej_frac = n_rej / n_paths
    if rej_frac > REJECTION_CAP:
        raise ReliabilityError(
            f"{entry.model}-{entry.route}: {rej_frac:.1%} of reduced paths "
            f"failed numerically (cap {REJECTION_CAP:.0%})")
    if n_acc == 0:
        raise ReliabilityError(f"{entry.model}-{entry.route}: no completed reduced paths")

    ess = w_sum * w_sum / w_sum2 if w_sum2 > 0 else 0.0
    if ess < ESS_WARN_FRACTION * n_paths:
        warnings.warn(
            f"{entry.model}-{entry.route}: effective sample size {ess:.1f} "
            f"of {n_paths} paths; weights are close to degenerate",
            DegenerateWeightsWarning, stacklevel=2)

    w_mean = w_sum / n_acc
    w_var = max(w_sum2 / n_acc - w_mean * w_mean, 0.0)
    estimates = []
    for ti, t in enumerate(times_arr):
        mean = sums[ti] / n_acc
        var = max(sums2[ti] / n_acc - mean * mean, 0.0)
        estimates.append(McEstimate(
            time=float(t), value=float(mean),
            stderr=float(math.sqrt(var / n_acc)),
            n_effective=float(ess), rejected_frac=rej_frac))
    return LegResult("reconstructed", estimates, n_paths, elapsed,
                     weight_mean=float(w_mean),
                     weight_stderr=float(math.sqrt(w_var / n_acc)))


# ---------------------------------------------------------------------------
# combined run
# ---------------------------------------------------------------------------


def run_reconstruction(entry: CatalogEntry, times: Sequence[float],
                       n_paths: int, dt: float, seed: int,
                       observable: Optional[str] = None,
                       backend: Optional[str] = None,
                       threads: Optional[int] = None,
                       direct_leg: Optional[LegResult] = None) -> ReconstructionResult:
    """Run both legs and compare them per time point.

    ``direct_leg`` lets a caller reuse a previously computed direct leg when
    several transformed routes share the same base process (the z-scores are
    still valid because the legs use disjoint noise streams).
    """
    obs_name, _ = _observable_fn(entry, observable)
    backend = kernels.backend_name(backend)
    if direct_leg is None:
        direct_leg = estimate_direct(entry, times, n_paths, dt, seed,
                                     observable=obs_name, backend=backend,
                                     threads=threads)
    recon_leg = estimate_reconstructed(entry, times, n_paths, dt, seed,
                                       observable=obs_name, backend=backend,
                                       threads=threads)

    comparisons = []
    oracle_rows = []
    x0 = np.asarray(entry.default_x0, dtype=float)
    for t in times:
        d = direct_leg.at(t)
        r = recon_leg.at(t)
        spread = math.hypot(d.stderr, r.stderr)
        z = (d.value - r.value) / spread if spread > 0 else 0.0
        comparisons.append({
            "time": float(t),
            "difference": d.value - r.value,
            "spread": spread,
            "z_score": z,
        })
        if obs_name in entry.oracles:
            ov = entry.oracle_value(obs_name, float(t), x0)
            oracle_rows.append({
                "time": float(t),
                "value": float(ov),
                "z_direct": (d.value - ov) / d.stderr if d.stderr > 0 else 0.0,
                "z_reconstructed": (r.value - ov) / r.stderr if r.stderr > 0 else 0.0,
            })

    return ReconstructionResult(
        model=entry.model, route=entry.route, observable=obs_name,
        times=[float(t) for t in times], n_paths=n_paths, dt=dt, seed=seed,
        backend=backend, direct=direct_leg, reconstructed=recon_leg,
        comparisons=comparisons, oracle=oracle_rows)
