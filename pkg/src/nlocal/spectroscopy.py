"""Transition energies and transition-energy-variation sweeps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .hamiltonian import (
    FieldConfiguration,
    SpinSystemSpec,
    all_configurations,
    terms_matrix,
)
from .kernels import lowest_eigh
from .pauli import Axis, PauliString, real_pauli_matrix
from .units import to_ghz, to_mhz

DEFAULT_GRID_POINTS = 21
DEGENERATE_GAP = 1e-12


class EigensolverError(RuntimeError):
    pass


def transition_energy(H: np.ndarray) -> float:
    """E1 - E0 from the sorted spectrum of a Hermitian matrix."""
    return float(transition_energies(np.asarray(H)[None])[0])


def transition_energies(H: np.ndarray) -> np.ndarray:
    """Batched :func:`transition_energy` over the leading axes of ``H``."""
    H = np.asarray(H)
    try:
        if np.iscomplexobj(H) and np.any(H.imag):
            w = np.linalg.eigvalsh(H)
        else:
            w, _ = lowest_eigh(H.real.astype(float), 2)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed: {exc}") from exc
    gap = w[..., 1] - w[..., 0]
    return np.where(gap < DEGENERATE_GAP, 0.0, gap)


def epsilon_grid(epsilon_max: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    if points < 2:
        raise ValueError("need at least 2 grid points")
    return np.linspace(0.0, epsilon_max, points)


def field_operators(n: int, configurations) -> np.ndarray:
    """Sum of Z_s over the active spins, one matrix per configuration."""
    out = np.zeros((len(configurations), 1 << n, 1 << n))
    for c, config in enumerate(configurations):
        for s in config.active:
            out[c] += real_pauli_matrix(PauliString(Axis.Z, (s,), n))
    return out


def hamiltonian_stack(spec: SpinSystemSpec, configurations, grid: np.ndarray) -> np.ndarray:
    """H(config, eps) for every configuration and grid point, shape (C, G, N, N)."""
    static = terms_matrix(replace(spec, epsilon=None).terms(), spec.n)
    fields = field_operators(spec.n, configurations)
    return static[None, None] + grid[None, :, None, None] * fields[:, None]


@dataclass
class SpectroscopySweep:
    n: int
    configurations: list[FieldConfiguration]
    epsilon_grid: np.ndarray
    values: np.ndarray
    clean: np.ndarray
    noise_sigma: float = 0.0
    seed: int | None = None
    spec: SpinSystemSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        shape = (len(self.configurations), len(self.epsilon_grid))
        if self.values.shape != shape or self.clean.shape != shape:
            raise ValueError(f"sweep values must have shape {shape}")

    def with_noise(self, sigma: float, seed: int) -> SpectroscopySweep:
        return replace(self, values=self.clean + noise_shifts(self.configurations, len(self.epsilon_grid), sigma, seed, self.n),
                       noise_sigma=sigma, seed=seed)

    def to_rows(self):
        for c, config in enumerate(self.configurations):
            mask = config.bitmask(self.n)
            for g, eps in enumerate(self.epsilon_grid):
                yield mask, to_ghz(eps), to_mhz(self.values[c, g])

    def write(self, path: str | Path) -> None:
        """CSV of the (possibly noisy) sweep plus a JSON sidecar with spec, seed and sigma."""
        from .io import write_csv

        path = Path(path)
        write_csv(path, ["config_bitmask", "epsilon_GHz", "delta_E_MHz"], self.to_rows())
        sidecar = {
            "spec": None if self.spec is None else self.spec.to_dict(),
            "seed": self.seed,
            "noise_sigma_MHz": to_mhz(self.noise_sigma),
            "grid_points": len(self.epsilon_grid),
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def noise_shifts(configurations, points: int, sigma: float, seed: int | None, n: int) -> np.ndarray:
    """Gaussian shifts, one independent stream per configuration so ordering never matters."""
    if sigma <= 0:
        return np.zeros((len(configurations), points))
    out = np.empty((len(configurations), points))
    for c, config in enumerate(configurations):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(config.bitmask(n),)))
        out[c] = rng.normal(0.0, sigma, size=points)
    return out


def generate_sweep(
    spec: SpinSystemSpec,
    grid_points: int = DEFAULT_GRID_POINTS,
    noise_sigma: float = 0.0,
    seed: int | None = 0,
    configurations: list[FieldConfiguration] | None = None,
) -> SpectroscopySweep:
    """Coupler-on minus coupler-off transition energy over all field configurations.

    ``spec`` must already carry its spurious shifts; ``noise_sigma`` is in rad/ns.
    """
    configurations = all_configurations(spec.n) if configurations is None else list(configurations)
    grid = epsilon_grid(spec.epsilon_max, grid_points)
    on = transition_energies(hamiltonian_stack(spec.with_coupler(True), configurations, grid))
    off = transition_energies(hamiltonian_stack(spec.with_coupler(False), configurations, grid))
    clean = on - off
    values = clean + noise_shifts(configurations, grid_points, noise_sigma, seed, spec.n)
    return SpectroscopySweep(spec.n, configurations, grid, values, clean, noise_sigma, seed, spec)


def sigma_to_t2(sigma_ghz: float) -> float:
    """Coherence time in ns for a Gaussian line of width ``sigma_ghz``."""
    if not sigma_ghz > 0:
        raise ValueError(f"sigma must be positive, got {sigma_ghz}")
    return 1.0 / (2.0 * np.pi * sigma_ghz)
