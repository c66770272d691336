"""Acceptance gate: one test and one printed pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the ``[acceptance]`` lines
print unbuffered even under capture.  Criteria 6 to 8 are Monte Carlo heavy
and dominate the runtime (a few minutes on the compiled backend).
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from stochsym.catalog import get_model
from stochsym.checks import (check_algebra_closure,
                             check_determining_equations, check_quasi_doob,
                             check_reduced_form, check_triangular,
                             structure_constants)
from stochsym.mc import estimate_direct, estimate_reconstructed, run_reconstruction
from stochsym.transform import (Diffeomorphism, compose,
                                identity_transformation, invert,
                                make_transformation, transform_sde)

N_PATHS = 100_000
DT = 1e-3
SEEDS = range(1, 21)


def _report(capsys, num: int, slug: str, ok: bool, details: str):
    with capsys.disabled():
        flag = "PASS" if ok else "FAIL"
        print(f"[acceptance] criterion {num} ({slug}): {flag} {details}",
              flush=True)


@pytest.fixture(scope="module")
def entries():
    return {
        ("bessel", "lamperti"): get_model("bessel", route="lamperti"),
        ("bessel", "doob"): get_model("bessel", route="doob"),
        ("cir", "canonical"): get_model("cir"),
        ("ou", "canonical"): get_model("ou"),
        ("twod", "canonical"): get_model("twod"),
    }


def test_criterion_1_determining_equations_fd(entries, capsys):
    # every catalog symmetry solves both determining equations with purely
    # finite-difference derivatives on 200 box points, in under ten seconds
    t0 = time.perf_counter()
    jobs = []
    for key, entry in entries.items():
        if key[0] == "cir":
            continue
        jobs.extend((entry, v) for v in entry.symmetries)
    for k in (-1.0, 0.0, 1.0):
        tilted = get_model("cir", k=k, self_test=False)
        jobs.append((tilted, tilted.symmetries[0]))
    cir = entries[("cir", "canonical")]
    jobs.append((cir, cir.symmetries[1]))

    worst = 0.0
    for entry, v in jobs:
        pts = entry.sample(200, seed=41)
        rep = check_determining_equations(v, entry.sde, pts, tolerance=1e-5,
                                          model=entry.model, use_analytic=False)
        worst = max(worst, rep.max_residual)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 10.0
    _report(capsys, 1, "determining-equations-fd", ok,
            f"max residual {worst:.2e} over {len(jobs)} fields ({elapsed:.1f}s)")
    assert ok, (worst, elapsed)


def _clock_translation(n: int, m: int, a: float):
    shift = np.zeros(n)
    shift[-1] = a
    eye = np.eye(n)
    zero = np.zeros((n, n, n))
    phi = Diffeomorphism(lambda x, s=shift: x + s,
                         lambda xp, s=shift: xp - s,
                         jac=lambda x: eye, hess=lambda x: zero)
    return make_transformation(m=m, phi=phi)


def _transformation_residual(t1, t2, pts) -> float:
    worst = 0.0
    for x in pts:
        worst = max(worst, float(np.max(np.abs(t1.phi(x) - t2.phi(x)))))
        worst = max(worst, float(np.max(np.abs(t1.b(x) - t2.b(x)))))
        worst = max(worst, abs(float(t1.eta(x)) - float(t2.eta(x))))
        worst = max(worst, float(np.max(np.abs(t1.h(x) - t2.h(x)))))
    return worst


def test_criterion_2_group_laws_and_functoriality(entries, capsys):
    # pair per model: the closed-form reduction and the clock translation
    # (the flow of the translation symmetry); all four group laws plus
    # pushing the generator through a composition, pointwise under 1e-7
    t0 = time.perf_counter()
    worst = 0.0
    for entry in entries.values():
        pts = entry.sample(100, seed=42)
        red = entry.reduction
        ident = identity_transformation(entry.n, entry.m)
        shift = _clock_translation(entry.n, entry.m, 0.3)
        shift_red = _clock_translation(entry.n, entry.m, -0.2)

        worst = max(worst, _transformation_residual(compose(red, ident), red, pts))
        worst = max(worst, _transformation_residual(compose(ident, red), red, pts))
        worst = max(worst, _transformation_residual(compose(invert(red), red),
                                                    ident, pts))
        lhs = compose(compose(shift_red, red), shift)
        rhs = compose(shift_red, compose(red, shift))
        worst = max(worst, _transformation_residual(lhs, rhs, pts))

        comp = compose(red, shift)
        direct = transform_sde(comp, entry.sde)
        nested = transform_sde(red, transform_sde(shift, entry.sde))
        for x in pts:
            y = comp.phi(x)
            worst = max(worst, float(np.max(np.abs(direct.mu(y) - nested.mu(y)))))
            worst = max(worst, float(np.max(np.abs(direct.sigma(y) - nested.sigma(y)))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-7 and elapsed < 5.0
    _report(capsys, 2, "group-laws-functoriality", ok,
            f"max residual {worst:.2e} ({elapsed:.1f}s)")
    assert ok, (worst, elapsed)


def test_criterion_3_quasi_doob_certificates(entries, capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for key in (("bessel", "doob"), ("cir", "canonical")):
        entry = entries[key]
        pts = entry.sample(100, seed=43)
        rep = check_quasi_doob(entry.reduction.h, entry.potential, entry.sde,
                               pts, tolerance=1e-6, model=entry.model)
        worst = max(worst, rep.max_residual)
        assert rep.passed
    pure = get_model("ou", b=0.0, c=0.0, self_test=False)
    rep = check_quasi_doob(pure.reduction.h, pure.potential, pure.sde,
                           pure.sample(100, seed=43), tolerance=1e-6)
    worst = max(worst, rep.max_residual)
    elapsed = time.perf_counter() - t0
    ok = (worst < 1e-6 and rep.extra["doob"] is True
          and abs(rep.extra["g_sup"]) < 1e-8 and elapsed < 5.0)
    _report(capsys, 3, "quasi-doob-certificates", ok,
            f"max residual {worst:.2e}, pure-harmonic sup {rep.extra['g_sup']:.2e} "
            f"({elapsed:.1f}s)")
    assert ok, (worst, rep.extra, elapsed)


def test_criterion_4_structure_constants(entries, capsys):
    t0 = time.perf_counter()
    fits = {}
    for key, tol in ((("ou", "canonical"), 1e-4),
                     (("twod", "canonical"), 1e-4),
                     (("bessel", "doob"), 1e-6)):
        entry = entries[key]
        pts = entry.sample(120, seed=44)
        rep = check_algebra_closure(entry.symmetries, entry.sde, pts,
                                    tolerance=1e-5, model=entry.model)
        fits[key] = structure_constants(rep, 0, 1)
    a = entries[("ou", "canonical")].parameters["a"]
    err_ou = max(abs(fits[("ou", "canonical")][0] - a),
                 abs(fits[("ou", "canonical")][1]))
    err_2d = max(abs(fits[("twod", "canonical")][0] - 2.0),
                 float(np.max(np.abs(fits[("twod", "canonical")][1:]))))
    err_bd = float(np.max(np.abs(fits[("bessel", "doob")])))
    elapsed = time.perf_counter() - t0
    ok = err_ou <= 1e-4 and err_2d <= 1e-4 and err_bd <= 1e-6
    _report(capsys, 4, "structure-constants", ok,
            f"scaling/translation fit errors: relaxation {err_ou:.1e}, "
            f"planar {err_2d:.1e}, commuting pair {err_bd:.1e} ({elapsed:.1f}s)")
    assert ok, fits


def test_criterion_5_reduced_form_and_triangularity(entries, capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for entry in entries.values():
        pts = entry.sample(100, seed=45)
        form = check_reduced_form(entry.reduction, entry.sde,
                                  entry.reduced_sde_expected, pts,
                                  tolerance=1e-6, model=entry.model)
        assert form.passed, (entry.model, entry.route, form.breakdown)
        mapped = np.stack([entry.reduction.phi(x) for x in pts])
        tri = check_triangular(entry.reduced_sde_expected, entry.triangular_r,
                               mapped, tolerance=1e-6, model=entry.model)
        assert tri.passed, (entry.model, entry.route, tri.breakdown)
        worst = max(worst, form.max_residual, tri.max_residual)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6
    _report(capsys, 5, "reduced-form-triangularity", ok,
            f"max residual {worst:.2e} over 5 reductions ({elapsed:.1f}s)")
    assert ok, worst


def test_criterion_6_reconstruction_sweep(capsys):
    # five configurations, twenty seeds each: reconstruction agrees with the
    # direct estimate within three combined standard errors, and with the
    # closed-form moments where those exist, in at least 19 of 20 seeds
    t0 = time.perf_counter()
    configs = [
        ("ou-c0", get_model("ou", c=0.0)),
        ("ou-cb", get_model("ou", c=-0.5)),
        ("cir", get_model("cir")),
        ("bessel-doob", get_model("bessel", route="doob")),
        ("twod", get_model("twod")),
    ]
    passes = {name: 0 for name, _ in configs}
    for seed in SEEDS:
        ou_direct = estimate_direct(configs[0][1], [1.0], N_PATHS, DT, seed)
        for name, entry in configs:
            shared = ou_direct if entry.model == "ou" else None
            result = run_reconstruction(entry, [1.0], N_PATHS, DT, seed,
                                        direct_leg=shared)
            zs = [abs(c["z_score"]) for c in result.comparisons]
            zs += [abs(row["z_direct"]) for row in result.oracle]
            zs += [abs(row["z_reconstructed"]) for row in result.oracle]
            if max(zs) <= 3.0:
                passes[name] += 1
    elapsed = time.perf_counter() - t0
    ok = all(v >= 19 for v in passes.values()) and elapsed < 300.0
    detail = ", ".join(f"{k} {v}/20" for k, v in passes.items())
    _report(capsys, 6, "reconstruction-sweep", ok, f"{detail} ({elapsed:.0f}s)")
    assert ok, (passes, elapsed)


def test_criterion_7_weight_martingale(entries, capsys):
    t0 = time.perf_counter()
    worst_z = 0.0
    for entry in entries.values():
        leg = estimate_reconstructed(entry, [1.0], N_PATHS, DT, seed=23)
        if leg.weight_stderr == 0.0:
            assert leg.weight_mean == 1.0
        else:
            worst_z = max(worst_z, abs(leg.weight_mean - 1.0) / leg.weight_stderr)
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 3.0
    _report(capsys, 7, "weight-martingale", ok,
            f"worst |z| of E[w]=1 over 5 routes: {worst_z:.2f} ({elapsed:.0f}s)")
    assert ok, worst_z


def test_criterion_8_lamperti_clock_moments(entries, capsys):
    # the exponentiated reduced coordinate, read off at the random time the
    # intrinsic clock crosses t, reproduces the direct second moments
    t0 = time.perf_counter()
    entry = entries[("bessel", "lamperti")]
    result = run_reconstruction(entry, [0.5, 1.0], N_PATHS, DT, seed=24)
    zs = [abs(c["z_score"]) for c in result.comparisons]
    zs += [abs(row["z_direct"]) for row in result.oracle]
    zs += [abs(row["z_reconstructed"]) for row in result.oracle]
    elapsed = time.perf_counter() - t0
    ok = max(zs) <= 3.0
    _report(capsys, 8, "lamperti-clock-moments", ok,
            f"worst |z| {max(zs):.2f} at t in (0.5, 1.0) ({elapsed:.0f}s)")
    assert ok, (zs, result.comparisons)


def test_criterion_9_thread_byte_identity(tmp_path, capsys):
    t0 = time.perf_counter()
    outputs = []
    for threads in ("1", "3"):
        out = tmp_path / f"threads{threads}.json"
        env = dict(os.environ, STOCHSYM_THREADS=threads)
        proc = subprocess.run(
            [sys.executable, "-m", "stochsym.cli", "reconstruct", "--model",
             "ou", "--t", "1.0", "--paths", "20000", "--dt", "1e-2",
             "--seed", "99", "--out", str(out)],
            capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
        outputs.append(out.read_bytes())
    elapsed = time.perf_counter() - t0
    ok = outputs[0] == outputs[1]
    _report(capsys, 9, "thread-byte-identity", ok,
            f"report bytes equal across worker counts: {ok} ({elapsed:.0f}s)")
    assert ok
