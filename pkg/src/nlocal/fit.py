"""Least-squares fits of n-local and (n-1)-local coupler models to sweep data.

The coupler-off Hamiltonian is taken as known. Free parameters are the
coupler-induced shifts of lower-locality terms and, for the n-local model,
the n-local strength M.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import OptimizeResult, least_squares

from .hamiltonian import (
    SpinSystemSpec,
    TargetSet,
    key_locality,
    nlocal_key,
    parameter_keys,
)
from .kernels import lowest_eigh
from .pauli import PauliString, parse_param_key, pauli_action, real_pauli_matrix
from .spectroscopy import (
    DEGENERATE_GAP,
    EigensolverError,
    SpectroscopySweep,
    hamiltonian_stack,
    transition_energies,
)
from .units import mhz, to_mhz


def model_keys(n: int, k: int, target_set: TargetSet | str = TargetSet.ALL_NON_NLOCAL) -> list[str]:
    if k not in (n - 1, n):
        raise ValueError(f"model locality must be n-1 or n, got {k} for n={n}")
    keys = parameter_keys(n, target_set, max_locality=k)
    if k == n:
        keys.append(nlocal_key(n))
    return keys


class SweepModel:
    """Forward model: parameter vector -> predicted transition-energy variation.

    Derivatives come from Hellmann-Feynman, d(E1 - E0)/d theta_p =
    <1|P_p|1> - <0|P_p|0>, evaluated on the eigenvectors of the last solve.
    """

    def __init__(self, base_spec: SpinSystemSpec, keys: list[str], configurations, grid: np.ndarray):
        n = base_spec.n
        self.n = n
        self.keys = list(keys)
        off = base_spec.with_coupler(False)
        self.H_off = hamiltonian_stack(off, configurations, np.asarray(grid))
        self.e01_off = transition_energies(self.H_off)
        paulis = [PauliString(*parse_param_key(k), n) for k in self.keys]
        self.ops = np.stack([real_pauli_matrix(p) for p in paulis]) if paulis else np.zeros((0, 1 << n, 1 << n))
        actions = [pauli_action(p) for p in paulis]
        self.perms = np.array([a[0] for a in actions], dtype=np.intp).reshape(len(paulis), 1 << n)
        self.signs = np.array([a[1] for a in actions]).reshape(len(paulis), 1 << n)
        self._cache_key = None
        self._cache = None

    def _solve(self, theta: np.ndarray):
        key = theta.tobytes()
        if key != self._cache_key:
            H = self.H_off + np.tensordot(theta, self.ops, axes=1)
            try:
                w, v = lowest_eigh(H, 2)
            except np.linalg.LinAlgError as exc:
                raise EigensolverError(f"eigensolver failed: {exc}") from exc
            self._cache_key, self._cache = key, (w, v)
        return self._cache

    def predict(self, theta) -> np.ndarray:
        w, _ = self._solve(np.asarray(theta, dtype=float))
        gap = w[..., 1] - w[..., 0]
        return np.where(gap < DEGENERATE_GAP, 0.0, gap) - self.e01_off

    def jacobian(self, theta) -> np.ndarray:
        """d prediction / d theta, shape (C, G, P)."""
        _, v = self._solve(np.asarray(theta, dtype=float))
        out = None
        for level, weight in ((1, 1.0), (0, -1.0)):
            psi = v[..., level]
            expect = np.einsum("cgpn,pn,cgn->cgp", psi[..., self.perms], self.signs, psi)
            out = weight * expect if out is None else out + weight * expect
        return out


@dataclass
class FitConfig:
    """Optimizer policy. ``eta`` sets random-start spread and parameter bounds."""

    starts: int = 4
    seed: int = 0
    eta: float = 0.5
    m_scale: float | None = None
    target_set: TargetSet = TargetSet.ALL_NON_NLOCAL
    ftol: float = 1e-12
    xtol: float = 1e-10
    gtol: float = 1e-12
    max_nfev: int = 500
    jacobian: str = "analytic"

    def scale(self, base_spec: SpinSystemSpec) -> float:
        if self.m_scale is not None:
            return self.m_scale
        return abs(base_spec.M) or mhz(50.0)


@dataclass
class FitOutcome:
    model_locality: int
    fitted_spurious: dict[str, float]
    fitted_M: float | None
    deviation_vs_clean: float
    deviation_vs_noisy: float
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    cost: float = 0.0
    start_index: int = 0
    nfev: int = 0

    def to_dict(self) -> dict:
        return {
            "model_locality": self.model_locality,
            "fitted_spurious_MHz": {k: to_mhz(v) for k, v in self.fitted_spurious.items()},
            "fitted_M_MHz": None if self.fitted_M is None else to_mhz(self.fitted_M),
            "deviation_vs_clean_MHz": to_mhz(self.deviation_vs_clean),
            "deviation_vs_noisy_MHz": to_mhz(self.deviation_vs_noisy),
            "converged": self.converged,
            "cost": self.cost,
            "start_index": self.start_index,
            "nfev": self.nfev,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _split(keys, theta, n):
    nkey = nlocal_key(n)
    spurious = {k: float(t) for k, t in zip(keys, theta) if k != nkey}
    m = next((float(t) for k, t in zip(keys, theta) if k == nkey), None)
    return spurious, m


def predict_sweep(base_spec: SpinSystemSpec, fitted_spurious: dict[str, float], fitted_M: float | None,
                  configurations, epsilon_grid) -> np.ndarray:
    """Noiseless variation for a coupler whose effect is ``fitted_spurious`` plus ``fitted_M``."""
    keys = list(fitted_spurious)
    theta = [fitted_spurious[k] for k in keys]
    if fitted_M is not None:
        keys.append(nlocal_key(base_spec.n))
        theta.append(fitted_M)
    model = SweepModel(base_spec, keys, configurations, np.asarray(epsilon_grid))
    return model.predict(np.array(theta, dtype=float))


def fit_model(sweep: SpectroscopySweep, base_spec: SpinSystemSpec, model_locality: int,
              config: FitConfig | None = None, model: SweepModel | None = None) -> FitOutcome:
    """Fit shifts (and M when ``model_locality == n``) jointly over all configurations.

    ``model`` may be passed to reuse a forward model across fits on the same grid.
    Non-convergence is reported through ``converged``; the best parameters found are kept.
    """
    config = config or FitConfig()
    n = base_spec.n
    keys = model_keys(n, model_locality, config.target_set)
    if model is None or model.keys != keys:
        model = SweepModel(base_spec, keys, sweep.configurations, sweep.epsilon_grid)
    data = sweep.values.ravel()
    scale = config.scale(base_spec)
    shift_bound = 5.0 * max(config.eta, 0.5) * scale
    is_m = np.array([k == nlocal_key(n) for k in keys], dtype=bool)
    upper = np.where(is_m, 10.0 * scale, shift_bound)
    lower = -upper

    rng = np.random.default_rng(config.seed)
    starts = [np.zeros(len(keys))]
    for _ in range(config.starts - 1):
        x0 = rng.uniform(-1.0, 1.0, size=len(keys)) * config.eta * scale
        x0[is_m] = 0.0
        starts.append(x0)

    def residual(theta):
        r = model.predict(theta).ravel() - data
        history.append(float(r @ r))
        return r

    def jac(theta):
        return model.jacobian(theta).reshape(data.size, len(keys))

    if not keys:
        # nothing to fit: the model is the coupler-off prediction
        r = model.predict(np.zeros(0)).ravel() - data
        best = (OptimizeResult(x=np.zeros(0), cost=0.5 * float(r @ r), status=1, nfev=1), 0, [float(r @ r)])
        starts = []
    else:
        best = None
    for index, x0 in enumerate(starts):
        history: list[float] = []
        result = least_squares(
            residual, x0, jac=jac if config.jacobian == "analytic" else config.jacobian,
            bounds=(lower, upper), method="trf", ftol=config.ftol, xtol=config.xtol,
            gtol=config.gtol, max_nfev=config.max_nfev, x_scale=scale,
        )
        # ties keep the earlier start
        if best is None or result.cost < best[0].cost:
            best = (result, index, history)
    result, index, history = best
    prediction = model.predict(result.x)
    spurious, m = _split(keys, result.x, n)
    return FitOutcome(
        model_locality=model_locality,
        fitted_spurious=spurious,
        fitted_M=m,
        deviation_vs_clean=float(np.mean(np.abs(prediction - sweep.clean))),
        deviation_vs_noisy=float(np.mean(np.abs(prediction - sweep.values))),
        converged=bool(result.status > 0),
        residual_history=history,
        cost=float(result.cost),
        start_index=index,
        nfev=int(result.nfev),
    )


def constructed_sublocal_deviation(sweep: SpectroscopySweep, base_spec: SpinSystemSpec,
                                   true_spurious: dict[str, float], noisy: bool = False) -> float:
    """Mean deviation of the (n-1)-local model holding the true shifts and no n-local term."""
    kept = {k: v for k, v in true_spurious.items() if key_locality(k) < base_spec.n}
    prediction = predict_sweep(base_spec, kept, None, sweep.configurations, sweep.epsilon_grid)
    reference = sweep.values if noisy else sweep.clean
    return float(np.mean(np.abs(prediction - reference)))
