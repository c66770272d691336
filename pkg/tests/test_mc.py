"""Monte Carlo estimators: weights, plan validation, reconstruction results."""

import json
import math

import numpy as np
import pytest

import stochsym.mc as mc
from stochsym.catalog import get_model
from stochsym.errors import (ConfigError, DegenerateWeightsWarning,
                             HorizonError)
from stochsym.mc import (estimate_direct, estimate_reconstructed,
                         girsanov_log_weight, run_reconstruction)
from stochsym.sde import DiscretePath

# Hand-computed on a two-step path with h(x) = -2x:
#   cross = 0.64, quadratic variation term = 1.414
GIRSANOV_Q_OVER_P = -0.067
GIRSANOV_P_OVER_Q = -1.347

ALL_ROUTES = [("bessel", "lamperti"), ("bessel", "doob"),
              ("cir", "canonical"), ("ou", "canonical"), ("twod", "canonical")]


def _hand_path():
    return DiscretePath(times=[0.0, 0.1, 0.25],
                        states=[[1.0], [1.3], [0.9]],
                        dw=[[0.2], [-0.4]],
                        log_weight=[0.0, 0.0, 0.0],
                        clock=[0.0, 0.1, 0.25])


def test_girsanov_log_weight_frozen():
    path = _hand_path()
    h = lambda x: -2.0 * x
    assert girsanov_log_weight(path, h, "q_over_p") == pytest.approx(
        GIRSANOV_Q_OVER_P, abs=1e-15)
    assert girsanov_log_weight(path, h, "p_over_q") == pytest.approx(
        GIRSANOV_P_OVER_Q, abs=1e-15)
    # the two directions differ by the full cross term, not by sign flip
    assert girsanov_log_weight(path, h, "q_over_p") != pytest.approx(
        -girsanov_log_weight(path, h, "p_over_q"))


def test_girsanov_zero_shift_is_neutral():
    assert girsanov_log_weight(_hand_path(), lambda x: 0.0 * x) == 0.0


def test_girsanov_direction_guard():
    with pytest.raises(ConfigError):
        girsanov_log_weight(_hand_path(), lambda x: x, "sideways")


def test_plan_validation():
    entry = get_model("ou", self_test=False)
    with pytest.raises(ConfigError):
        estimate_direct(entry, [1.0], n_paths=1, dt=1e-3, seed=0)
    with pytest.raises(ConfigError):
        estimate_direct(entry, [1.0, 0.5], n_paths=100, dt=1e-3, seed=0)
    with pytest.raises(ConfigError):
        estimate_direct(entry, [-0.5, 1.0], n_paths=100, dt=1e-3, seed=0)
    with pytest.raises(ConfigError):
        estimate_direct(entry, [1.0], n_paths=100, dt=0.0, seed=0)
    with pytest.raises(ConfigError):
        estimate_direct(entry, [], n_paths=100, dt=1e-3, seed=0)
    # reconstruction targets must be strictly positive
    with pytest.raises(ConfigError):
        estimate_reconstructed(entry, [0.0, 1.0], n_paths=100, dt=1e-3, seed=0)
    # two times inside one recording step collapse onto the same node
    with pytest.raises(ConfigError):
        estimate_direct(entry, [0.0004, 0.0006], n_paths=100, dt=1e-3, seed=0)


def test_unknown_observable_rejected():
    entry = get_model("ou", self_test=False)
    with pytest.raises(ConfigError):
        estimate_direct(entry, [1.0], n_paths=100, dt=1e-3, seed=0,
                        observable="skewness")


@pytest.mark.parametrize("model,route", ALL_ROUTES)
def test_weight_mean_is_one(model, route):
    # E[dP/dQ] = 1 under the reduced measure for every catalog drift shift
    entry = get_model(model, route=route, self_test=False)
    leg = estimate_reconstructed(entry, [1.0], n_paths=3000, dt=1e-3, seed=9)
    assert leg.weight_mean is not None
    if leg.weight_stderr == 0.0:
        # no drift shift on this route: every weight is exactly one
        assert leg.weight_mean == 1.0
    else:
        z = (leg.weight_mean - 1.0) / leg.weight_stderr
        assert abs(z) < 4.0, (model, route, leg.weight_mean, leg.weight_stderr)


def test_direct_estimate_matches_oracle():
    entry = get_model("ou", self_test=False)
    leg = estimate_direct(entry, [0.5, 1.0], n_paths=4000, dt=1e-3, seed=12)
    assert [e.time for e in leg.estimates] == [0.5, 1.0]
    for est in leg.estimates:
        want = entry.oracle_value("mean", est.time)
        assert abs(est.value - want) < 4.0 * est.stderr
        assert est.rejected_frac == 0.0
        assert est.n_effective == 4000


def test_reconstructed_estimate_matches_oracle():
    entry = get_model("bessel", route="lamperti", self_test=False)
    leg = estimate_reconstructed(entry, [1.0], n_paths=3000, dt=1e-3, seed=13)
    est = leg.at(1.0)
    assert abs(est.value - 4.0) < 4.0 * est.stderr


def test_degenerate_weights_warn():
    # a large drift shift pushes the effective sample size under the floor
    entry = get_model("ou", c=3.0, self_test=False)
    with pytest.warns(DegenerateWeightsWarning):
        estimate_reconstructed(entry, [1.0], n_paths=1000, dt=1e-3, seed=14)


def test_horizon_guard(monkeypatch):
    # starve the time-changed route of steps so the clock cannot reach t
    monkeypatch.setattr(mc, "HORIZON_FACTOR", 0.5)
    entry = get_model("bessel", route="lamperti", self_test=False)
    with pytest.raises(HorizonError):
        estimate_reconstructed(entry, [1.0], n_paths=50, dt=1e-3, seed=15)


def test_direct_leg_reuse_is_exact():
    # the direct dynamics do not involve c, so one leg serves both models
    base = get_model("ou", c=0.0, self_test=False)
    tilted = get_model("ou", c=0.5, self_test=False)
    times, n, dt, seed = [1.0], 2000, 1e-3, 16
    shared = estimate_direct(base, times, n, dt, seed)
    own = run_reconstruction(tilted, times, n, dt, seed)
    reused = run_reconstruction(tilted, times, n, dt, seed, direct_leg=shared)
    assert reused.direct.at(1.0).value == own.direct.at(1.0).value
    assert reused.reconstructed.at(1.0).value == own.reconstructed.at(1.0).value
    assert reused.comparisons == own.comparisons


def test_multi_time_reconstruction_zscores():
    entry = get_model("cir", b=0.75, self_test=False)
    result = run_reconstruction(entry, [0.5, 1.0], 3000, 1e-3, seed=17)
    assert result.max_abs_z < 4.0
    assert [row["time"] for row in result.oracle] == [0.5, 1.0]
    assert abs(result.oracle[1]["value"] - 0.8419698602928606) < 1e-12
    for row in result.oracle:
        assert abs(row["z_direct"]) < 4.0
        assert abs(row["z_reconstructed"]) < 4.0


def test_result_row_schema():
    entry = get_model("ou", self_test=False)
    result = run_reconstruction(entry, [1.0], 500, 1e-2, seed=18)
    rows = result.rows()
    assert all(list(r) == ["model", "route", "time", "estimator", "value",
                           "stderr", "n_effective", "rejected_frac"]
               for r in rows)
    assert {r["estimator"] for r in rows} == {"direct", "reconstructed"}
    doc = result.to_dict()
    assert doc["model"] == "ou" and doc["route"] == "canonical"
    for leg_key in ("direct", "reconstructed"):
        assert "elapsed" not in json.dumps(doc[leg_key])


def test_thread_count_does_not_change_bytes():
    entry = get_model("ou", self_test=False)
    docs = []
    for threads in (1, 3):
        result = run_reconstruction(entry, [1.0], 9000, 1e-2, seed=19,
                                    threads=threads)
        docs.append(json.dumps(result.to_dict(), sort_keys=True))
    assert docs[0] == docs[1]


def test_thread_argument_validation():
    entry = get_model("ou", self_test=False)
    with pytest.raises(ConfigError):
        estimate_direct(entry, [1.0], 100, 1e-3, seed=0, threads=0)
