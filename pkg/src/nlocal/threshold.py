"""Noise-threshold scans, scaling with n, spurious-amplitude sensitivity and perturbative oracles.

Unit policy at this layer follows the reporting convention: noise amplitudes in
GHz, mean deviations in MHz. Specs and fits underneath stay in rad/ns.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .fit import FitConfig, SweepModel, fit_model, model_keys
from .hamiltonian import (
    FieldConfiguration,
    SpinSystemSpec,
    SpuriousDistribution,
    SpuriousModel,
    TargetSet,
    default_spec,
    realize_hamiltonian,
    sample_spurious,
)
from .io import write_csv
from .pauli import Axis, PauliString, real_pauli_matrix
from .spectroscopy import DEFAULT_GRID_POINTS, generate_sweep
from .units import ghz, to_mhz

DEFAULT_SIGMA_GRID_GHZ = tuple(np.geomspace(0.5e-3, 50e-3, 12))
DEFAULT_HEAD = 5
PARALLEL_TOLERANCE = 1e-12


class NoIntersectionError(ArithmeticError):
    pass


class UnsupportedRegimeError(ValueError):
    pass


@dataclass
class LineFit:
    slope: float
    intercept: float

    def __call__(self, x):
        return self.slope * np.asarray(x) + self.intercept


@dataclass
class ThresholdCurve:
    sigma_grid: np.ndarray  # GHz
    mean_dev_nlocal: np.ndarray  # MHz
    mean_dev_sublocal: np.ndarray  # MHz
    realizations: int
    sigma_c: float  # GHz
    linefit_full: LineFit  # MHz vs MHz
    linefit_head: LineFit
    out_of_range: bool
    n: int = 0
    seed: int = 0
    head: int = DEFAULT_HEAD

    @property
    def sigma_c_mhz(self) -> float:
        return self.sigma_c * 1e3

    def rows(self):
        for s, a, b in zip(self.sigma_grid, self.mean_dev_nlocal, self.mean_dev_sublocal):
            yield s * 1e3, a, b

    def summary(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "realizations": self.realizations,
            "head": self.head,
            "sigma_c_MHz": self.sigma_c_mhz,
            "out_of_range": self.out_of_range,
            "linefit_full": {"slope": self.linefit_full.slope, "intercept_MHz": self.linefit_full.intercept},
            "linefit_head": {"slope": self.linefit_head.slope, "intercept_MHz": self.linefit_head.intercept},
        }

    def write(self, path: str | Path) -> None:
        path = Path(path)
        write_csv(path, ["sigma_MHz", "dev_nlocal_MHz", "dev_sublocal_MHz"], self.rows())
        path.with_suffix(".json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def line_fit(x, y) -> LineFit:
    slope, intercept = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return LineFit(float(slope), float(intercept))


def intersect(a: LineFit, b: LineFit) -> float:
    diff = a.slope - b.slope
    if abs(diff) < PARALLEL_TOLERANCE:
        raise NoIntersectionError("deviation lines are parallel")
    return (b.intercept - a.intercept) / diff


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class _PairTask:
    """One noisy sweep plus both fits; picklable for worker processes."""

    spec: SpinSystemSpec
    base: SpinSystemSpec
    sigma: float  # rad/ns
    noise_seed: tuple
    fit_config: FitConfig
    grid_points: int


_MODEL_CACHE: dict = {}


def _models(base: SpinSystemSpec, sweep, target_set):
    key = (json.dumps(base.to_dict(), sort_keys=True), len(sweep.epsilon_grid), str(target_set))
    if key not in _MODEL_CACHE:
        _MODEL_CACHE.clear()
        n = base.n
        _MODEL_CACHE[key] = tuple(
            SweepModel(base, model_keys(n, k, target_set), sweep.configurations, sweep.epsilon_grid) for k in (n, n - 1)
        )
    return _MODEL_CACHE[key]


_SWEEP_CACHE: dict = {}


def _clean_sweep(spec: SpinSystemSpec, grid_points: int):
    key = (json.dumps(spec.to_dict(), sort_keys=True), grid_points)
    if key not in _SWEEP_CACHE:
        _SWEEP_CACHE.clear()
        _SWEEP_CACHE[key] = generate_sweep(spec, grid_points)
    return _SWEEP_CACHE[key]


def _run_pair(task: _PairTask) -> tuple[float, float]:
    n = task.base.n
    clean = _clean_sweep(task.spec, task.grid_points)
    noise_seed = int(np.random.SeedSequence(task.noise_seed).generate_state(1)[0])
    sweep = clean.with_noise(task.sigma, noise_seed)
    full, sub = _models(task.base, sweep, task.fit_config.target_set)
    a = fit_model(sweep, task.base, n, task.fit_config, full)
    b = fit_model(sweep, task.base, n - 1, task.fit_config, sub)
    return to_mhz(a.deviation_vs_clean), to_mhz(b.deviation_vs_clean)


def _default_fit_config(fit_config: FitConfig | None, eta: float) -> FitConfig:
    # single zero start per noisy fit keeps scans tractable
    return fit_config if fit_config is not None else FitConfig(starts=1, eta=eta)


def threshold_scan(
    base_spec: SpinSystemSpec,
    sigma_grid=DEFAULT_SIGMA_GRID_GHZ,
    realizations: int = 10,
    seed: int = 0,
    *,
    eta: float = 0.5,
    distribution: SpuriousDistribution = SpuriousDistribution.SYMMETRIC_UNIFORM,
    target_set: TargetSet = TargetSet.ALL_NON_NLOCAL,
    head: int = DEFAULT_HEAD,
    grid_points: int = DEFAULT_GRID_POINTS,
    fit_config: FitConfig | None = None,
    jobs: int = 1,
) -> ThresholdCurve:
    """Mean deviation vs noise for the n-local and (n-1)-local fits, and their crossing sigma_c.

    ``sigma_grid`` is in GHz. One spurious draw (from ``seed``) is shared by every cell;
    each (sigma, realization) cell has its own noise stream.
    """
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    if sigma_grid.ndim != 1 or sigma_grid.size < 6:
        raise ValueError("sigma grid needs at least 6 points")
    if np.any(np.diff(sigma_grid) <= 0) or sigma_grid[0] < 0:
        raise ValueError("sigma grid must be non-negative and strictly ascending")
    if realizations < 1:
        raise ValueError("need at least one realization")
    if not 2 <= head <= sigma_grid.size:
        raise ValueError(f"head must be in [2, {sigma_grid.size}]")
    n = base_spec.n
    base = base_spec.with_coupler(False)
    spec = sample_spurious(base, SpuriousModel(eta, distribution, target_set, seed=seed))
    config = _default_fit_config(fit_config, eta)
    config = replace(config, target_set=target_set)

    tasks = [
        _PairTask(spec, base, ghz(s), (seed, i, r), config, grid_points)
        for i, s in enumerate(sigma_grid)
        for r in range(realizations)
    ]
    results = np.array(_map(_run_pair, tasks, jobs)).reshape(sigma_grid.size, realizations, 2)
    dev_n = results[:, :, 0].mean(axis=1)
    dev_s = results[:, :, 1].mean(axis=1)

    x = sigma_grid * 1e3
    full = line_fit(x, dev_n)
    head_fit = line_fit(x[:head], dev_s[:head])
    sigma_c = intersect(full, head_fit) * 1e-3
    out = not sigma_grid[0] <= sigma_c <= sigma_grid[-1]
    return ThresholdCurve(sigma_grid, dev_n, dev_s, realizations, sigma_c, full, head_fit, out, n, seed, head)


def scaling_study(n_list, seed: int = 0, spec_factory=None, jobs: int = 1, **scan_kwargs) -> dict[int, ThresholdCurve]:
    """One threshold scan per n on that n's default spec (base seed ``seed``)."""
    spec_factory = spec_factory or (lambda n: default_spec(n, seed))
    out = {}
    for n in n_list:
        if not 2 <= n <= 5:
            raise ValueError(f"scaling study covers n in 2..5, got {n}")
        out[n] = threshold_scan(spec_factory(n), seed=seed, jobs=jobs, **scan_kwargs)
    return out


def scaling_slope(sigma_c: dict[int, float]) -> float:
    """Slope of log(sigma_c) against n."""
    ns = sorted(sigma_c)
    return float(np.polyfit(ns, np.log([sigma_c[n] for n in ns]), 1)[0])


def scaling_rows(curves: dict[int, ThresholdCurve]):
    for n in sorted(curves):
        yield n, curves[n].sigma_c_mhz


@dataclass
class SensitivityPoint:
    eta: float
    dev_nlocal: float  # MHz
    dev_sublocal: float  # MHz

    @property
    def gap(self) -> float:
        return self.dev_sublocal - self.dev_nlocal


def spurious_sensitivity(
    base_spec: SpinSystemSpec,
    eta_grid,
    fixed_sigma: float,
    realizations: int = 10,
    seed: int = 0,
    *,
    distribution: SpuriousDistribution = SpuriousDistribution.POSITIVE_UNIFORM,
    target_set: TargetSet = TargetSet.COUPLINGS_ONLY,
    grid_points: int = DEFAULT_GRID_POINTS,
    fit_config: FitConfig | None = None,
    jobs: int = 1,
) -> list[SensitivityPoint]:
    """Mean deviations of both models at fixed noise ``fixed_sigma`` (GHz) as eta varies.

    Each (eta, realization) cell draws its own spurious shifts and noise.
    """
    eta_grid = np.asarray(eta_grid, dtype=float)
    if np.any(np.diff(eta_grid) <= 0) or np.any(eta_grid < 0):
        raise ValueError("eta grid must be non-negative and strictly ascending")
    if not fixed_sigma > 0:
        raise ValueError("fixed sigma must be positive")
    base = base_spec.with_coupler(False)
    tasks = []
    for i, eta in enumerate(eta_grid):
        for r in range(realizations):
            spur_seed = int(np.random.SeedSequence((seed, i, r, 1)).generate_state(1)[0])
            spec = sample_spurious(base, SpuriousModel(float(eta), distribution, target_set, seed=spur_seed))
            config = replace(_default_fit_config(fit_config, max(float(eta), 0.5)), target_set=target_set)
            tasks.append(_PairTask(spec, base, ghz(fixed_sigma), (seed, i, r, 0), config, grid_points))
    results = np.array(_map(_run_pair, tasks, jobs)).reshape(eta_grid.size, realizations, 2).mean(axis=1)
    return [SensitivityPoint(float(e), float(a), float(b)) for e, (a, b) in zip(eta_grid, results)]


def sensitivity_rows(points):
    for p in points:
        yield p.eta, p.dev_nlocal, p.dev_sublocal


def mean_cos(delta: float, epsilon_max: float) -> float:
    """Average of eps / sqrt(delta^2 + eps^2) over eps uniform in [0, epsilon_max]."""
    return (math.hypot(delta, epsilon_max) - delta) / epsilon_max


def analytic_bound(n: int, M: float, delta: float, epsilon_max: float) -> float:
    """Closed-form mean deviation of the sub-local model: 2M/(2^n - 1) * <cos>^n."""
    if not (n > 0 and M > 0 and delta > 0 and epsilon_max > 0):
        raise ValueError("analytic bound needs positive arguments")
    return 2.0 * M / (2**n - 1) * mean_cos(delta, epsilon_max) ** n


def _require_coupling_free(spec: SpinSystemSpec) -> float:
    if any(v for v in spec.couplings.values()):
        raise UnsupportedRegimeError("oracle needs a spec without lower-locality couplings")
    if not np.allclose(spec.delta, spec.delta[0], rtol=1e-12, atol=0.0):
        raise UnsupportedRegimeError("oracle needs equal X fields on every spin")
    return float(spec.delta[0])


def perturbative_deviation_oracle(spec: SpinSystemSpec, config: FieldConfiguration, epsilon) -> np.ndarray:
    """First-order curve difference 2M (-1)^n prod_i cos(theta_i), zero unless every spin is active.

    Sign convention: sub-local prediction (no coupler effect) minus n-local data.
    """
    delta = _require_coupling_free(spec)
    eps = np.asarray(epsilon, dtype=float)
    n = spec.n
    if len(config.active) < n:
        return np.zeros_like(eps)
    cos = eps / np.hypot(delta, eps)
    return 2.0 * spec.M * (-1) ** n * cos**n


def first_order_gap_shift(spec: SpinSystemSpec, config: FieldConfiguration, epsilon: float, tol: float = 1e-9) -> float:
    """First-order change of E1 - E0 when M Z^n is switched on, degeneracies handled exactly.

    The ground level is assumed non-degenerate. Inside a degenerate first excited
    level the perturbation is diagonalised and its lowest eigenvalue taken.
    """
    H = realize_hamiltonian(spec.with_coupler(False), config, epsilon)
    V = spec.M * real_pauli_matrix(PauliString(Axis.Z, tuple(range(spec.n)), spec.n))
    w, U = np.linalg.eigh(H)
    scale = max(1.0, float(np.abs(w).max()))
    if w[1] - w[0] < tol * scale:
        raise UnsupportedRegimeError("degenerate ground level")
    level = np.flatnonzero(np.abs(w - w[1]) < tol * scale)
    block = U[:, level]
    excited = np.linalg.eigvalsh(block.T @ V @ block)[0]
    ground = U[:, 0] @ V @ U[:, 0]
    return float(excited - ground)
