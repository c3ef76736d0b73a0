from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest

from nlocal.fit import (
    FitConfig,
    SweepModel,
    constructed_sublocal_deviation,
    fit_model,
    model_keys,
    predict_sweep,
)
from nlocal.hamiltonian import (
    SpuriousModel,
    TargetSet,
    default_spec,
    nlocal_key,
    sample_spurious,
)
from nlocal.spectroscopy import generate_sweep
from nlocal.units import ghz


@pytest.fixture(scope="module")
def three_spin():
    base = default_spec(3, 5)
    spec = sample_spurious(base, SpuriousModel(eta=0.5, seed=6))
    return base, spec, generate_sweep(spec)


def test_model_keys():
    assert len(model_keys(4, 4)) == 29
    assert model_keys(4, 4)[-1] == nlocal_key(4)
    assert nlocal_key(4) not in model_keys(4, 3)
    assert len(model_keys(4, 3, TargetSet.COUPLINGS_ONLY)) == 20
    with pytest.raises(ValueError):
        model_keys(4, 2)


def test_predict_round_trip(three_spin):
    base, spec, sweep = three_spin
    pred = predict_sweep(base, spec.spurious, spec.M, sweep.configurations, sweep.epsilon_grid)
    np.testing.assert_allclose(pred, sweep.clean, atol=1e-10)
    zero = predict_sweep(base, {}, 0.0, sweep.configurations, sweep.epsilon_grid)
    np.testing.assert_array_equal(zero, 0.0)


def test_analytic_jacobian_matches_central_differences(three_spin):
    base, spec, sweep = three_spin
    keys = model_keys(3, 3)
    model = SweepModel(base, keys, sweep.configurations, sweep.epsilon_grid)
    theta = np.array([spec.spurious.get(k, spec.M) for k in keys])
    J = model.jacobian(theta)
    step = 1e-6 * ghz(0.05)
    for p in range(len(keys)):
        e = np.zeros_like(theta)
        e[p] = step
        fd = (model.predict(theta + e) - model.predict(theta - e)) / (2 * step)
        scale = np.abs(fd).max()
        assert np.abs(J[..., p] - fd).max() <= 1e-4 * scale


def test_noiseless_nlocal_fit_recovers_truth(three_spin):
    base, spec, sweep = three_spin
    out = fit_model(sweep, base, 3)
    assert out.converged
    assert out.deviation_vs_clean < 1e-6
    assert out.fitted_M == pytest.approx(spec.M, rel=1e-4)
    for k, v in spec.spurious.items():
        assert abs(out.fitted_spurious[k] - v) < 1e-3 * spec.M


def test_sublocal_fit_is_worse_and_has_no_m(three_spin):
    base, spec, sweep = three_spin
    full = fit_model(sweep, base, 3)
    sub = fit_model(sweep, base, 2)
    assert sub.fitted_M is None
    assert nlocal_key(3) not in sub.fitted_spurious
    assert sub.deviation_vs_clean > 10 * full.deviation_vs_clean
    # nesting: the sub-local class is the n-local class at M = 0
    assert full.cost <= sub.cost + 1e-12
    # oracle bound: the best sub-local fit beats the constructed one
    assert sub.deviation_vs_clean <= constructed_sublocal_deviation(sweep, base, spec.spurious) + 1e-9


def test_zero_m_data():
    base = default_spec(3, 2)
    # shifts scale with M, so draw them at the nominal M and then switch the n-local term off
    spec = replace(sample_spurious(base, SpuriousModel(eta=0.5, seed=1)), M=0.0)
    out = fit_model(generate_sweep(spec), base, 3)
    assert abs(out.fitted_M) < 1e-3 * ghz(0.05)


def test_deterministic_and_serializable(three_spin, tmp_path):
    base, spec, _ = three_spin
    noisy = generate_sweep(spec, noise_sigma=ghz(0.002), seed=3)
    a = fit_model(noisy, base, 3, FitConfig(starts=3, seed=1))
    b = fit_model(noisy, base, 3, FitConfig(starts=3, seed=1))
    assert a.to_dict() == b.to_dict()
    assert a.deviation_vs_clean >= 0 and a.deviation_vs_noisy >= 0
    a.write(tmp_path / "fit.json")
    data = json.loads((tmp_path / "fit.json").read_text())
    assert data["fitted_M_MHz"] == pytest.approx(a.fitted_M / (2 * np.pi) * 1e3)


def test_finite_difference_option_agrees(three_spin):
    base, _, sweep = three_spin
    a = fit_model(sweep, base, 2, FitConfig(starts=1))
    b = fit_model(sweep, base, 2, FitConfig(starts=1, jacobian="2-point"))
    assert b.deviation_vs_clean == pytest.approx(a.deviation_vs_clean, rel=1e-3)


def test_budget_exhaustion_reports_not_converged(three_spin):
    base, _, sweep = three_spin
    out = fit_model(sweep, base, 2, FitConfig(starts=1, max_nfev=1))
    assert not out.converged
    assert np.isfinite(out.deviation_vs_clean)


def test_parameter_free_model():
    base = default_spec(2, 0)
    spec = sample_spurious(base, SpuriousModel(eta=0.5, target_set=TargetSet.COUPLINGS_ONLY, seed=1))
    out = fit_model(generate_sweep(spec), base, 1, FitConfig(target_set=TargetSet.COUPLINGS_ONLY))
    assert out.fitted_spurious == {} and out.converged and out.nfev == 1
    assert out.deviation_vs_clean == pytest.approx(constructed_sublocal_deviation(generate_sweep(spec), base, {}))
