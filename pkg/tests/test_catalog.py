"""Model catalog: registry surface, parameter guards, frozen reference values."""

import numpy as np
import pytest

from stochsym.catalog import (default_parameters, get_model, model_ids,
                              routes_for, verify_entry)
from stochsym.errors import ConfigError

# Closed-form reference values, frozen from tools/make_oracles.py.
OU_MEAN_T05 = 0.8032653298563167
OU_MEAN_T1 = 0.6839397205857212
CIR_MEAN_T1 = 0.8419698602928606  # a=-1, b=0.75, x0=1
BESSEL_X2_T05 = 2.5
BESSEL_X2_T1 = 4.0


def test_registry_surface():
    assert model_ids() == ("bessel", "cir", "ou", "twod")
    assert routes_for("bessel") == ("lamperti", "doob")
    for mid in ("cir", "ou", "twod"):
        assert routes_for(mid) == ("canonical",)
    assert default_parameters("cir") == {"a": -1.0, "b": 1.0, "sigma0": 0.5,
                                         "k": 0.0}
    # accessor hands out a copy, not the registry dict itself
    default_parameters("ou")["a"] = 99.0
    assert default_parameters("ou")["a"] == -1.0


def test_unknown_names_rejected():
    with pytest.raises(ConfigError):
        routes_for("heston")
    with pytest.raises(ConfigError):
        get_model("heston")
    with pytest.raises(ConfigError):
        get_model("bessel", route="canonical")
    with pytest.raises(ConfigError):
        get_model("ou", kappa=1.0)


def test_parameter_guards():
    with pytest.raises(ConfigError):
        get_model("bessel", a=0.25)
    with pytest.raises(ConfigError):
        get_model("cir", sigma0=-1.0)
    with pytest.raises(ConfigError):
        get_model("cir", b=0.1, sigma0=1.0)
    with pytest.raises(ConfigError):
        get_model("ou", a=0.0)


def test_entry_shapes():
    for mid in model_ids():
        for route in routes_for(mid):
            entry = get_model(mid, route=route, self_test=False)
            assert entry.n == entry.sde.n
            assert entry.m == entry.sde.m
            assert entry.default_x0.shape == (entry.n,)
            assert entry.default_observable in entry.observables
            assert 1 <= entry.triangular_r <= entry.n
            assert entry.initial_map(entry.default_x0).shape == (entry.n,)


def test_triangular_ranks():
    assert get_model("bessel", route="lamperti", self_test=False).triangular_r == 1
    assert get_model("bessel", route="doob", self_test=False).triangular_r == 1
    assert get_model("cir", self_test=False).triangular_r == 1
    assert get_model("ou", self_test=False).triangular_r == 1
    assert get_model("twod", self_test=False).triangular_r == 2


def test_sample_respects_box_and_predicate():
    entry = get_model("twod", self_test=False)
    pts = entry.sample(200, seed=5)
    low, high = entry.test_box
    assert np.all(pts >= low) and np.all(pts <= high)
    assert np.all(pts[:, 0] > np.abs(pts[:, 1]) + 0.25)
    # reproducible for a fixed seed
    assert np.array_equal(pts, entry.sample(200, seed=5))
    assert not np.array_equal(pts, entry.sample(200, seed=6))


def test_sample_points_satisfy_domain():
    for mid in model_ids():
        entry = get_model(mid, self_test=False)
        for x in entry.sample(50, seed=7):
            entry.sde.check_point(x)


def test_oracle_values_frozen():
    bessel = get_model("bessel", self_test=False)
    assert bessel.oracle_value("x2", 0.5) == pytest.approx(BESSEL_X2_T05, abs=1e-12)
    assert bessel.oracle_value("x2", 1.0) == pytest.approx(BESSEL_X2_T1, abs=1e-12)
    ou = get_model("ou", self_test=False)
    assert ou.oracle_value("mean", 0.5) == pytest.approx(OU_MEAN_T05, abs=1e-12)
    assert ou.oracle_value("mean", 1.0) == pytest.approx(OU_MEAN_T1, abs=1e-12)
    # the default cir parameters sit at the stationary mean; move b off it
    cir = get_model("cir", b=0.75, self_test=False)
    assert cir.oracle_value("mean", 1.0) == pytest.approx(CIR_MEAN_T1, abs=1e-12)
    assert get_model("cir", self_test=False).oracle_value("mean", 1.0) == 1.0


def test_oracle_unknown_observable():
    entry = get_model("twod", self_test=False)
    with pytest.raises(ConfigError):
        entry.oracle_value("mean", 1.0)


def test_expected_structure_keys():
    # one-parameter pairs for the scalar models, the full set for twod
    for mid, route, keys in [
        ("bessel", "lamperti", {(0, 1)}),
        ("bessel", "doob", {(0, 1)}),
        ("cir", "canonical", {(0, 1)}),
        ("ou", "canonical", {(0, 1)}),
        ("twod", "canonical", {(0, 1), (0, 2), (1, 2)}),
    ]:
        entry = get_model(mid, route=route, self_test=False)
        assert set(entry.expected_structure) == keys, (mid, route)


def test_self_test_runs_by_default():
    # every catalog entry passes its own construction sweep
    for mid in model_ids():
        for route in routes_for(mid):
            entry = get_model(mid, route=route)
            verify_entry(entry, points=4, seed=11)


def test_cir_exponent_parameter_changes_reduction():
    flat = get_model("cir", k=0.0, self_test=False)
    tilted = get_model("cir", k=1.0, self_test=False)
    x = np.array([1.3, 0.2])
    assert not np.allclose(flat.reduction.phi(x), tilted.reduction.phi(x))


def test_potential_present_only_on_quasi_doob_routes():
    assert get_model("bessel", route="doob", self_test=False).potential is not None
    assert get_model("cir", self_test=False).potential is not None
    assert get_model("ou", self_test=False).potential is not None
    assert get_model("bessel", route="lamperti", self_test=False).potential is None
    assert get_model("twod", self_test=False).potential is None


def test_time_change_flag():
    assert get_model("bessel", route="lamperti", self_test=False).has_time_change
    assert not get_model("bessel", route="doob", self_test=False).has_time_change
    assert not get_model("ou", self_test=False).has_time_change
