from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlocal.hamiltonian import (
    FieldConfiguration,
    SpinSystemSpec,
    all_configurations,
    coupling_free_spec,
    default_spec,
    realize_hamiltonian,
)
from nlocal.io import read_csv
from nlocal.spectroscopy import transition_energy
from nlocal.threshold import (
    LineFit,
    NoIntersectionError,
    UnsupportedRegimeError,
    analytic_bound,
    first_order_gap_shift,
    intersect,
    line_fit,
    mean_cos,
    perturbative_deviation_oracle,
    scaling_slope,
    scaling_study,
    spurious_sensitivity,
    threshold_scan,
)
from nlocal.units import ghz, mhz

SMALL_GRID = tuple(np.geomspace(0.5e-3, 200e-3, 6))


def test_mean_cos_closed_form():
    assert mean_cos(ghz(2.0), ghz(10.0)) == pytest.approx(0.8198, abs=1e-4)
    eps = np.linspace(0, 10.0, 200_001)
    assert mean_cos(2.0, 10.0) == pytest.approx(np.trapezoid(eps / np.hypot(2.0, eps), eps) / 10.0, rel=1e-9)


def test_analytic_bound_example():
    bound = analytic_bound(4, ghz(0.05), ghz(2.0), ghz(10.0))
    assert bound / (2 * math.pi) * 1e3 == pytest.approx(3.0, abs=0.02)
    with pytest.raises(ValueError):
        analytic_bound(4, 0.0, 1.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_bound_decreases_with_n(n, delta, eps_max):
    a = analytic_bound(n, 1.0, delta, eps_max)
    b = analytic_bound(n + 1, 1.0, delta, eps_max)
    assert 0 < b < a


def test_line_fit_and_intersection():
    x = np.array([1.0, 2.0, 3.0])
    f = line_fit(x, 2 * x + 1)
    assert f.slope == pytest.approx(2.0) and f.intercept == pytest.approx(1.0)
    assert intersect(LineFit(1.0, 0.0), LineFit(-1.0, 4.0)) == pytest.approx(2.0)
    with pytest.raises(NoIntersectionError):
        intersect(LineFit(1.0, 0.0), LineFit(1.0, 3.0))


def test_oracle_vanishes_unless_all_spins_active():
    spec = coupling_free_spec(3, M=mhz(5.0))
    eps = np.linspace(0, spec.epsilon_max, 7)
    for config in all_configurations(3)[:-1]:
        np.testing.assert_array_equal(perturbative_deviation_oracle(spec, config, eps), 0.0)
    full = perturbative_deviation_oracle(spec, all_configurations(3)[-1], eps)
    assert full[0] == 0 and np.all(full[1:] < 0)


@pytest.mark.parametrize("n", [2, 3])
def test_oracle_sign_and_magnitude(n):
    spec = coupling_free_spec(n, M=mhz(5.0))
    config = FieldConfiguration(tuple(range(n)))
    eps = spec.epsilon_max
    oracle = float(perturbative_deviation_oracle(spec, config, eps))
    assert np.sign(oracle) == (-1) ** n
    # the closed form ignores the mixing inside the degenerate first excited level
    assert -first_order_gap_shift(spec, config, eps) == pytest.approx(oracle, rel=0.05)


def test_oracle_rejects_unsupported_specs():
    with pytest.raises(UnsupportedRegimeError):
        perturbative_deviation_oracle(default_spec(3, 0), all_configurations(3)[-1], 1.0)
    unequal = SpinSystemSpec(n=2, delta=(1.0, 2.0), epsilon_max=5.0, M=0.01)
    with pytest.raises(UnsupportedRegimeError):
        perturbative_deviation_oracle(unequal, all_configurations(2)[-1], 1.0)


@pytest.mark.parametrize("n,bitmask", [(2, 3), (3, 5), (3, 7), (4, 15)])
def test_first_order_shift_against_exact_diagonalization(n, bitmask):
    spec = coupling_free_spec(n, M=mhz(5.0))
    config = FieldConfiguration.from_bitmask(bitmask, n)
    eps = 0.7 * spec.epsilon_max
    exact = transition_energy(realize_hamiltonian(spec.with_coupler(True), config, eps)) - transition_energy(
        realize_hamiltonian(spec, config, eps)
    )
    first = first_order_gap_shift(spec, config, eps)
    # second-order remainder is O(M^2 / delta)
    assert abs(exact - first) <= 10 * spec.M**2 / spec.delta[0] + 1e-12


@pytest.fixture(scope="module")
def two_spin_curve():
    return threshold_scan(default_spec(2, 0), SMALL_GRID, realizations=2, seed=3)


def test_threshold_curve_shape(two_spin_curve):
    c = two_spin_curve
    assert c.mean_dev_nlocal.shape == (6,) and c.mean_dev_sublocal.shape == (6,)
    assert np.all(c.mean_dev_sublocal[:2] > c.mean_dev_nlocal[:2])
    assert c.mean_dev_nlocal[-1] > c.mean_dev_nlocal[0]
    assert c.sigma_c > 0 and not c.out_of_range
    assert c.linefit_full(c.sigma_c * 1e3) == pytest.approx(c.linefit_head(c.sigma_c * 1e3))


def test_threshold_deterministic_and_jobs_independent(two_spin_curve, tmp_path):
    again = threshold_scan(default_spec(2, 0), SMALL_GRID, realizations=2, seed=3, jobs=2)
    np.testing.assert_array_equal(again.mean_dev_nlocal, two_spin_curve.mean_dev_nlocal)
    assert again.sigma_c == two_spin_curve.sigma_c
    two_spin_curve.write(tmp_path / "a.csv")
    again.write(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = read_csv(tmp_path / "a.csv")
    assert len(rows) == 6


def test_tiny_grid_flags_out_of_range():
    grid = tuple(np.geomspace(1e-6, 2e-6, 6))
    c = threshold_scan(default_spec(2, 0), grid, realizations=1, seed=1)
    assert c.out_of_range


def test_threshold_rejects_bad_grids():
    with pytest.raises(ValueError):
        threshold_scan(default_spec(2, 0), SMALL_GRID[:4])
    with pytest.raises(ValueError):
        threshold_scan(default_spec(2, 0), SMALL_GRID[::-1])
    with pytest.raises(ValueError):
        threshold_scan(default_spec(2, 0), SMALL_GRID, head=1)


def test_scaling_study_range_and_slope():
    with pytest.raises(ValueError):
        scaling_study([6])
    assert scaling_slope({3: math.e**3, 4: math.e**2, 5: math.e}) == pytest.approx(-1.0)


def test_spurious_sensitivity_small():
    pts = spurious_sensitivity(default_spec(2, 0), [0.0, 2.0], 0.005, realizations=2, seed=1)
    assert [p.eta for p in pts] == [0.0, 2.0]
    assert all(p.gap > 0 for p in pts)
    with pytest.raises(ValueError):
        spurious_sensitivity(default_spec(2, 0), [1.0, 0.0], 0.005)


def test_nlocal_deviation_rises_with_noise():
    from scipy.stats import spearmanr

    c = threshold_scan(default_spec(2, 1), realizations=2, seed=2)
    assert spearmanr(c.sigma_grid, c.mean_dev_nlocal).statistic > 0.9
