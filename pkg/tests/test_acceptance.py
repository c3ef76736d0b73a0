"""Reproduction checks, one test per acceptance criterion.

Each test records a PASS/FAIL line through the ``verdict`` fixture; the lines are
repeated in the terminal summary.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from oracles import gap_oracle, pauli_elementwise, schrodinger_rk4, x_product_state

from nlocal.cli import run
from nlocal.dynamics import (
    CLOSED,
    DriveSpec,
    IntegratorConfig,
    LindbladSpec,
    evolve_lindblad,
    hadamard,
    measurement_basis,
    resonant_frequency,
)
from nlocal.fit import constructed_sublocal_deviation, fit_model
from nlocal.hamiltonian import (
    SpuriousModel,
    all_configurations,
    coupling_free_spec,
    default_spec,
    realize_hamiltonian,
    sample_spurious,
)
from nlocal.pauli import Axis, PauliString
from nlocal.spectroscopy import generate_sweep, sigma_to_t2, transition_energy
from nlocal.threshold import (
    analytic_bound,
    mean_cos,
    perturbative_deviation_oracle,
    scaling_slope,
    scaling_study,
    spurious_sensitivity,
    threshold_scan,
)
from nlocal.units import ghz, mhz, to_mhz

pytestmark = pytest.mark.slow

BASE_SEEDS = (1, 2, 3)


@pytest.fixture(scope="module")
def four_spin_curves():
    start = time.perf_counter()
    curves = {s: threshold_scan(default_spec(4, s), seed=s) for s in BASE_SEEDS}
    return curves, time.perf_counter() - start


def test_criterion_01_sigma_c_four_spins(four_spin_curves, verdict):
    curves, elapsed = four_spin_curves
    values = [curves[s].sigma_c_mhz for s in BASE_SEEDS]
    mean = float(np.mean(values))
    detail = (f"mean sigma_c(n=4) = {mean:.3f} MHz over seeds {BASE_SEEDS} "
              f"(per seed {', '.join(f'{v:.3f}' for v in values)}), target [10, 20] MHz, {elapsed:.0f} s")
    verdict(1, 10.0 <= mean <= 20.0 and elapsed <= 1800, detail)


def test_criterion_02_t2_conversion(verdict):
    t2 = sigma_to_t2(0.015)
    exact = abs(t2 - 1 / (2 * math.pi * 0.015)) <= 1e-12 * t2
    verdict(2, 10.5 <= t2 <= 11.0 and exact, f"sigma_to_t2(15 MHz) = {t2:.6f} ns")


def test_criterion_03_exponential_scaling(four_spin_curves, verdict):
    curves, _ = four_spin_curves
    # the n=4 scan for this seed is identical to the one scaling_study would run
    seed = BASE_SEEDS[0]
    study = scaling_study([3, 5], seed=seed)
    sigma = {3: study[3].sigma_c, 4: curves[seed].sigma_c, 5: study[5].sigma_c}
    slope = scaling_slope(sigma)
    lower = math.log(mean_cos(ghz(2.0), ghz(10.0)) / 2) - 0.5
    decreasing = sigma[3] > sigma[4] > sigma[5]
    detail = (f"sigma_c(3,4,5) = {', '.join(f'{1e3 * sigma[n]:.3f}' for n in (3, 4, 5))} MHz, "
              f"log slope {slope:.3f} in [{lower:.3f}, 0]")
    verdict(3, decreasing and lower <= slope < 0, detail)


def test_criterion_04_noiseless_separation(verdict):
    base = default_spec(4, 1)
    spec = sample_spurious(base, SpuriousModel(eta=0.5, seed=1))
    sweep = generate_sweep(spec)
    full = to_mhz(fit_model(sweep, base, 4).deviation_vs_clean)
    sub = to_mhz(fit_model(sweep, base, 3).deviation_vs_clean)
    verdict(4, full < 0.01 and sub > 10 * full, f"4-local {full:.3g} MHz, 3-local {sub:.3g} MHz")


def test_criterion_05_perturbative_oracle(verdict):
    start = time.perf_counter()
    ratios, pointwise = {}, {}
    for n in (2, 3, 4):
        spec = coupling_free_spec(n, M=mhz(5.0))
        sweep = generate_sweep(spec)
        measured = constructed_sublocal_deviation(sweep, spec, {})
        ratios[n] = measured / analytic_bound(n, spec.M, spec.delta[0], spec.epsilon_max)
        # sign convention of the oracle: sub-local prediction (zero) minus data
        oracle = float(perturbative_deviation_oracle(spec, all_configurations(n)[-1], spec.epsilon_max))
        pointwise[n] = -sweep.values[-1, -1] / oracle
    elapsed = time.perf_counter() - start
    mean_ok = all(abs(r - 1) <= 0.15 for r in ratios.values())
    point_ok = all(abs(r - 1) <= 0.05 for r in pointwise.values())
    detail = ("mean deviation / closed form: " + ", ".join(f"n={n} {r:.3f}" for n, r in ratios.items())
              + "; pointwise at eps_max: " + ", ".join(f"n={n} {r:.3f}" for n, r in pointwise.items())
              + f"; {elapsed:.1f} s")
    verdict(5, mean_ok and point_ok and elapsed <= 60, detail)


def test_criterion_06_spurious_robustness(verdict):
    etas = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0]
    points = spurious_sensitivity(default_spec(4, 1), etas, 0.005, seed=1)
    ok = all(p.dev_sublocal > p.dev_nlocal for p in points)
    detail = "eta: 3-local vs 4-local MHz " + "; ".join(
        f"{p.eta:g}: {p.dev_sublocal:.3f} vs {p.dev_nlocal:.3f}" for p in points)
    verdict(6, ok, detail)


def test_criterion_07_selection_rule(verdict):
    n = 4
    spec = coupling_free_spec(n)
    M = spec.M
    omega = resonant_frequency(spec)
    t = 0.2 / M
    cfg = IntegratorConfig(sample_interval=t)
    full = evolve_lindblad(spec, DriveSpec(M=M, omega=omega), CLOSED, t, config=cfg)
    pair = DriveSpec(M=0.0, omega=omega, driven_terms=((PauliString(Axis.Z, (0, 1), n), M),))
    partial = evolve_lindblad(spec, pair, CLOSED, t, config=cfg)
    p_full, p_pair = full.target_population[-1], partial.target_population[-1]
    ratio = p_pair / p_full
    verdict(7, ratio <= 1e-3, f"P_target(Z0Z1) / P_target(Z^4) = {ratio:.3g} at t = 0.2/M ({p_pair:.3g} / {p_full:.3g})")


def _loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def test_criterion_08_quadratic_growth(verdict):
    spec = coupling_free_spec(2)
    omega = resonant_frequency(spec)
    # counter-rotating oscillations vanish at multiples of pi/omega
    half_period = math.pi / omega
    t_end = 1.25
    assert math.isclose(t_end / half_period, round(t_end / half_period))
    cfg = IntegratorConfig(sample_interval=half_period)
    M = mhz(5.0)
    report = evolve_lindblad(spec, DriveSpec(M=M, omega=omega), CLOSED, t_end, config=cfg)
    window = (report.time_grid >= 0.125 - 1e-9) & (report.time_grid <= t_end + 1e-9)
    t_slope = _loglog_slope(report.time_grid[window], report.target_population[window])

    amplitudes = mhz(np.geomspace(5.0, 50.0, 6))
    finals = [evolve_lindblad(spec, DriveSpec(M=m, omega=omega), CLOSED, t_end, config=cfg).target_population[-1]
              for m in amplitudes]
    m_slope = _loglog_slope(amplitudes, finals)
    ok = abs(t_slope - 2) <= 0.05 and abs(m_slope - 2) <= 0.05
    verdict(8, ok, f"exponent in t {t_slope:.4f} (0.125..1.25 ns), in M {m_slope:.4f} (5..50 MHz)")


def test_criterion_09_lindblad_trends(verdict):
    start = time.perf_counter()
    t2s = (10.0, 30.0, 100.0, 300.0, 1000.0)
    ns = (2, 3, 4, 5, 6)
    contrast = np.zeros((len(ns), len(t2s)))
    worst_trace = 0.0
    for i, n in enumerate(ns):
        spec = coupling_free_spec(n)
        drive = DriveSpec(M=spec.M, omega=resonant_frequency(spec))
        for j, t2 in enumerate(t2s):
            report = evolve_lindblad(spec, drive, LindbladSpec(t2), 1000.0)
            contrast[i, j] = report.contrast
            worst_trace = max(worst_trace, report.trace_error)
    elapsed = time.perf_counter() - start
    in_t2 = bool(np.all(np.diff(contrast, axis=1) >= -1e-9))
    cols = [j for j, t2 in enumerate(t2s) if t2 >= 100.0]
    in_n = bool(np.all(np.diff(contrast[:, cols], axis=0) <= 1e-9))
    table = "; ".join(f"n={n}: " + "/".join(f"{c:.3f}" for c in row) for n, row in zip(ns, contrast))
    detail = (f"non-decreasing in T2: {in_t2}, non-increasing in n (T2>=100): {in_n}, "
              f"max trace error {worst_trace:.1e}, {elapsed:.0f} s; contrast [{table}]")
    verdict(9, in_t2 and in_n and worst_trace <= 1e-6 and elapsed <= 1200, detail)


def _random_case(index):
    rng = np.random.default_rng(index)
    n = int(rng.integers(2, 6))
    spec = sample_spurious(default_spec(n, index), SpuriousModel(eta=float(rng.uniform(0, 4)), seed=index))
    spec = spec.with_coupler(bool(rng.integers(2)))
    configs = all_configurations(n)
    config = configs[int(rng.integers(len(configs)))]
    return realize_hamiltonian(spec, config, float(rng.uniform(0, spec.epsilon_max)))


def test_criterion_10_oracle_equivalence(verdict):
    worst_gap = 0.0
    for index in range(200):
        H = _random_case(index)
        ref = gap_oracle(H)
        worst_gap = max(worst_gap, abs(transition_energy(H) - ref) / ref)

    worst_pop = 0.0
    for n in (1, 2, 3):
        spec = default_spec(n, 7) if n > 1 else coupling_free_spec(1)
        omega = resonant_frequency(spec)
        drive = DriveSpec(M=mhz(100.0), omega=omega)
        report = evolve_lindblad(spec, drive, CLOSED, 10.0)
        H0 = realize_hamiltonian(spec.with_coupler(False)).astype(complex)
        V = mhz(100.0) * pauli_elementwise(n, "Z", range(n))
        # a four times finer reference step is converged far below the tolerance
        psis = schrodinger_rk4(H0, V, omega, x_product_state("-" * n), 10.0, report.step / 4,
                               round(4 * 1.0 / report.step))
        pops = np.abs(psis @ (hadamard(n) @ measurement_basis(spec))) ** 2
        worst_pop = max(worst_pop, float(np.abs(pops - report.populations).max()))
    detail = f"max relative gap error {worst_gap:.2e} (200 specs, n<=5); max population error {worst_pop:.2e} (n<=3)"
    verdict(10, worst_gap <= 1e-10 and worst_pop <= 1e-6, detail)


PIPELINES = {
    "sweep": (["sweep", "--n", "3", "--noise-mhz", "2"], ["sweep.csv"]),
    "threshold": (["threshold", "--n", "2", "--realizations", "2", "--sigma-max-mhz", "200", "--sigma-points", "6"],
                  ["threshold.csv"]),
    "scaling": (["scaling", "--n-list", "2,3", "--realizations", "1", "--sigma-max-mhz", "200", "--sigma-points", "6"],
                ["scaling.csv", "threshold_n2.csv", "threshold_n3.csv"]),
    "spurious": (["spurious", "--n", "3", "--eta-grid", "0,1", "--realizations", "2"], ["spurious.csv"]),
    "dynamics": (["dynamics", "--n-list", "2,3", "--t2", "30,100", "--t-end", "30"],
                 ["contrast.csv", "dynamics_n2_T2_30.csv", "dynamics_n3_T2_100.csv"]),
}


def test_criterion_11_determinism(tmp_path, verdict):
    mismatched = []
    for name, (argv, files) in PIPELINES.items():
        runs = []
        for attempt in ("a", "b"):
            out = tmp_path / f"{name}_{attempt}"
            assert run([*argv, "--seed", "11", "--output-dir", str(out)]) == 0
            runs.append(out)
        mismatched += [f"{name}/{f}" for f in files if (runs[0] / f).read_bytes() != (runs[1] / f).read_bytes()]
    verdict(11, not mismatched, f"{len(PIPELINES)} pipelines rerun; differing CSVs: {mismatched or 'none'}")
