"""Smoke tests for the Python bindings. Runs under pytest or as a script."""

import math
import os
import sys
import tempfile

import numpy as np

import herding


def test_dispersion_hand_values():
    r = np.array([[0.01, 0.03], [0.02, np.nan], [0.0, 0.04]])
    out = herding.dispersion(r, aggregator="mean")
    assert out["row"] == [0, 2]
    assert math.isclose(out["rm"][0], 0.02, rel_tol=1e-14)
    assert math.isclose(out["csad"][0], 0.01, rel_tol=1e-12)
    assert math.isclose(out["cssd"][0], math.sqrt(0.0002), rel_tol=1e-12)


def test_bad_aggregator_is_value_error():
    try:
        herding.dispersion(np.zeros((2, 2)), aggregator="mode")
    except ValueError:
        return
    raise AssertionError("expected ValueError")


def test_ols_and_white():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(200), rng.normal(size=200)])
    y = 0.5 + 2.0 * X[:, 1] + rng.normal(size=200)
    fit = herding.ols_fit(y, X, ["intercept", "x"], bandwidth=0)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.allclose(fit["coefficients"], beta, atol=1e-10)
    e = y - X @ beta
    b = np.linalg.inv(X.T @ X)
    white = b @ (X.T * e**2) @ X @ b
    assert np.allclose(herding.newey_west_cov(X, e, 0), white, atol=1e-12)
    assert herding.auto_bandwidth(100) == 4


def test_filter_matches_enumeration():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(7), rng.normal(size=7)])
    y = rng.normal(size=7)
    coef = np.array([[0.0, 1.0], [0.5, -1.0]])
    sig = np.array([0.7, 1.2])
    P = np.array([[0.9, 0.1], [0.3, 0.7]])
    ll, filtered, predicted, smoothed = herding.hamilton_filter(coef, sig, P, y, X)
    assert abs(ll - herding.brute_force_loglik(coef, sig, P, y, X)) < 1e-10
    assert np.allclose(smoothed.sum(axis=1), 1.0)
    assert np.allclose(smoothed[-1], filtered[-1])


def test_fit_ms_recovers_two_regimes():
    coef = np.array([[0.02, 1.5, -8.0], [0.02, 0.2, 1.6]])
    sig = np.array([0.005, 0.02])
    P = np.array([[0.97, 0.03], [0.04, 0.96]])
    y, X, cols, states = herding.simulate(coef, sig, P, 1500, seed=3, lag_count=0)
    assert cols == ["intercept", "abs_rm", "rm_sq"]
    fit = herding.fit_ms(y, X, cols, n_regimes=2, restarts=4, seed=1)
    assert fit["coefficients"].shape == (2, 3)
    assert fit["coefficients"][0, 2] < fit["coefficients"][1, 2]
    accuracy = np.mean(fit["smoothed"].argmax(axis=1) == np.asarray(states))
    assert accuracy > 0.9
    again = herding.fit_ms(y, X, cols, n_regimes=2, restarts=4, seed=1)
    assert np.array_equal(fit["coefficients"], again["coefficients"])


def test_run_cli_exit_codes():
    with tempfile.TemporaryDirectory() as d:
        code, _, err = herding.run_cli(["ingest", "--input", os.path.join(d, "none.csv"), "--output-dir", d])
        assert code == 2
        assert "none.csv" in err
    code, out, _ = herding.run_cli(["--help"])
    assert code == 0 and "dispersion" in out


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
                print("ok  ", name)
            except Exception as exc:  # noqa: BLE001
                failed += 1
                print("FAIL", name, repr(exc))
    sys.exit(1 if failed else 0)
