"""Multi-spin Hamiltonian family with a switchable n-local coupler.

    H = sum_s delta_s X_s + eps_s Z_s + sum_{|Q|>1} JZ(Q) Z_Q + JX(Q) X_Q

Parameters are addressed by the Pauli string they multiply, using string keys
such as ``"X:2"`` (the X field of spin 2) or ``"Z:0,1,3"`` (a 3-local Z
coupling). The n-local Z coupling ``M`` is kept separate and only acts while
the coupler is on, together with the spurious shifts.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np

from .pauli import (
    Axis,
    PauliString,
    enumerate_subsets,
    param_key,
    parse_param_key,
    real_pauli_matrix,
)
from .units import ghz, mhz

MIN_SPINS = 2
MAX_SPINS = 6


class SpuriousDistribution(str, enum.Enum):
    SYMMETRIC_UNIFORM = "symmetric_uniform"
    POSITIVE_UNIFORM = "positive_uniform"


class TargetSet(str, enum.Enum):
    ALL_NON_NLOCAL = "all_non_nlocal_parameters"
    COUPLINGS_ONLY = "couplings_only"


@dataclass(frozen=True)
class FieldConfiguration:
    """Spins whose Z field is swept together; every other spin sits at eps = 0."""

    active: tuple[int, ...]

    def __post_init__(self):
        active = tuple(sorted({int(s) for s in self.active}))
        if not active:
            raise ValueError("field configuration needs at least one active spin")
        if active[0] < 0:
            raise ValueError(f"negative spin index in {active}")
        object.__setattr__(self, "active", active)

    def bitmask(self, n: int) -> int:
        """Bitmask with bit s set for active spin s (spin 0 -> bit 0)."""
        if self.active[-1] >= n:
            raise ValueError(f"configuration {self.active} does not fit n={n}")
        return sum(1 << s for s in self.active)

    @classmethod
    def from_bitmask(cls, mask: int, n: int) -> FieldConfiguration:
        return cls(tuple(s for s in range(n) if mask >> s & 1))


def all_configurations(n: int) -> list[FieldConfiguration]:
    return [FieldConfiguration(q) for q in enumerate_subsets(n)]


@dataclass(frozen=True)
class SpuriousModel:
    eta: float = 0.5
    distribution: SpuriousDistribution = SpuriousDistribution.SYMMETRIC_UNIFORM
    target_set: TargetSet = TargetSet.ALL_NON_NLOCAL
    seed: int = 0

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        object.__setattr__(self, "distribution", SpuriousDistribution(self.distribution))
        object.__setattr__(self, "target_set", TargetSet(self.target_set))


def coupling_keys(n: int) -> list[str]:
    """Lower-locality coupling parameters (1 < |Q| < n), both axes, canonical order."""
    return [param_key(axis, q) for q in enumerate_subsets(n, 2) if len(q) < n for axis in (Axis.X, Axis.Z)]


def parameter_keys(n: int, target_set: TargetSet | str = TargetSet.ALL_NON_NLOCAL, max_locality: int | None = None) -> list[str]:
    """Parameters a coupler may shift, excluding the n-local ones."""
    target_set = TargetSet(target_set)
    top = n - 1 if max_locality is None else min(max_locality, n - 1)
    low = 1 if target_set is TargetSet.ALL_NON_NLOCAL else 2
    return [param_key(axis, q) for q in enumerate_subsets(n) if low <= len(q) <= top for axis in (Axis.X, Axis.Z)]


def nlocal_key(n: int) -> str:
    return param_key(Axis.Z, tuple(range(n)))


def key_locality(key: str) -> int:
    return len(parse_param_key(key)[1])


@dataclass(frozen=True)
class SpinSystemSpec:
    n: int
    delta: tuple[float, ...]
    epsilon_max: float
    couplings: Mapping[str, float] = field(default_factory=dict)
    M: float = 0.0
    epsilon: tuple[float, ...] | None = None
    coupler_on: bool = False
    spurious: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        n = self.n
        if not MIN_SPINS - 1 <= n <= MAX_SPINS:
            raise ValueError(f"n={n} outside supported range")
        delta = tuple(float(d) for d in self.delta)
        epsilon = tuple(0.0 for _ in range(n)) if self.epsilon is None else tuple(float(e) for e in self.epsilon)
        if len(delta) != n or len(epsilon) != n:
            raise ValueError("delta and epsilon need one entry per spin")
        for e in epsilon:
            if not 0.0 <= e <= self.epsilon_max:
                raise ValueError(f"epsilon {e} outside [0, {self.epsilon_max}]")
        couplings = {_canonical(k, n): float(v) for k, v in self.couplings.items()}
        for k in couplings:
            size = key_locality(k)
            if not 1 < size < n:
                raise ValueError(f"coupling {k} must have 1 < |Q| < n (M carries the n-local term)")
        spurious = {_canonical(k, n): float(v) for k, v in self.spurious.items()}
        for k in spurious:
            if key_locality(k) == n:
                raise ValueError(f"spurious shift on n-local parameter {k} is not allowed")
        values = [*delta, *epsilon, self.epsilon_max, self.M, *couplings.values(), *spurious.values()]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("all parameters must be finite")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "epsilon", epsilon)
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "spurious", spurious)
        object.__setattr__(self, "M", float(self.M))

    @property
    def dim(self) -> int:
        return 1 << self.n

    def with_coupler(self, on: bool = True) -> SpinSystemSpec:
        return replace(self, coupler_on=on)

    def base_terms(self) -> dict[str, float]:
        """Coefficient of every static (coupler-off) Pauli string, zero fields excluded."""
        terms = {}
        for s in range(self.n):
            terms[param_key(Axis.X, (s,))] = self.delta[s]
            if self.epsilon[s]:
                terms[param_key(Axis.Z, (s,))] = self.epsilon[s]
        for k, v in self.couplings.items():
            terms[k] = terms.get(k, 0.0) + v
        return terms

    def terms(self) -> dict[str, float]:
        """All Pauli-string coefficients of the realized Hamiltonian."""
        terms = self.base_terms()
        if self.coupler_on:
            key = nlocal_key(self.n)
            terms[key] = terms.get(key, 0.0) + self.M
            for k, v in self.spurious.items():
                terms[k] = terms.get(k, 0.0) + v
        return terms

    def to_dict(self) -> dict:
        def entries(mapping):
            out = []
            for k, v in mapping.items():
                axis, subset = parse_param_key(k)
                out.append({"axis": axis.value, "subset": list(subset), "value": v})
            return out

        return {
            "n": self.n,
            "delta": list(self.delta),
            "epsilon": list(self.epsilon),
            "epsilon_max": self.epsilon_max,
            "couplings": entries(self.couplings),
            "M": self.M,
            "coupler_on": self.coupler_on,
            "spurious": entries(self.spurious),
        }

    @classmethod
    def from_dict(cls, data: dict) -> SpinSystemSpec:
        known = {"n", "delta", "epsilon", "epsilon_max", "couplings", "M", "coupler_on", "spurious"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")

        def mapping(entries):
            return {param_key(e["axis"], sorted(e["subset"])): float(e["value"]) for e in entries}

        return cls(
            n=int(data["n"]),
            delta=tuple(data["delta"]),
            epsilon=tuple(data.get("epsilon") or [0.0] * int(data["n"])),
            epsilon_max=float(data["epsilon_max"]),
            couplings=mapping(data.get("couplings", [])),
            M=float(data.get("M", 0.0)),
            coupler_on=bool(data.get("coupler_on", False)),
            spurious=mapping(data.get("spurious", [])),
        )


def _canonical(key: str, n: int) -> str:
    axis, subset = parse_param_key(key)
    p = PauliString(axis, subset, n)
    return p.key


def default_spec(
    n: int,
    seed: int | np.random.Generator | None = 0,
    *,
    delta: float = ghz(2.0),
    epsilon_max: float = ghz(10.0),
    coupling_max: float = mhz(300.0),
    M: float = mhz(50.0),
) -> SpinSystemSpec:
    """Flux-qubit-like defaults with random lower-locality couplings in [0, coupling_max)."""
    if not MIN_SPINS <= n <= MAX_SPINS:
        raise ValueError(f"n must be in [{MIN_SPINS}, {MAX_SPINS}], got {n}")
    rng = np.random.default_rng(seed)
    keys = coupling_keys(n)
    values = rng.uniform(0.0, coupling_max, size=len(keys))
    return SpinSystemSpec(
        n=n,
        delta=(delta,) * n,
        epsilon_max=epsilon_max,
        couplings=dict(zip(keys, values)),
        M=M,
    )


def coupling_free_spec(n: int, *, delta: float = ghz(2.0), epsilon_max: float = ghz(10.0), M: float = mhz(50.0)) -> SpinSystemSpec:
    """Equal X fields, no lower-locality couplings; the regime of the perturbative arguments."""
    return SpinSystemSpec(n=n, delta=(delta,) * n, epsilon_max=epsilon_max, M=M)


def sample_spurious(spec: SpinSystemSpec, model: SpuriousModel) -> SpinSystemSpec:
    rng = np.random.default_rng(model.seed)
    keys = parameter_keys(spec.n, model.target_set)
    scale = model.eta * spec.M
    if model.distribution is SpuriousDistribution.SYMMETRIC_UNIFORM:
        shifts = rng.uniform(-1.0, 1.0, size=len(keys)) * scale
    else:
        shifts = rng.uniform(0.0, 1.0, size=len(keys)) * scale
    return replace(spec, spurious=dict(zip(keys, shifts)))


def truncate_locality(spec: SpinSystemSpec, k: int) -> SpinSystemSpec:
    """Drop every coupling and spurious term acting on more than k spins."""
    if not 1 <= k <= spec.n:
        raise ValueError(f"locality must be in [1, {spec.n}], got {k}")
    return replace(
        spec,
        couplings={q: v for q, v in spec.couplings.items() if key_locality(q) <= k},
        spurious={q: v for q, v in spec.spurious.items() if key_locality(q) <= k},
        M=spec.M if k == spec.n else 0.0,
    )


def field_values(spec: SpinSystemSpec, config: FieldConfiguration | None, epsilon: float | None) -> tuple[float, ...]:
    if config is None:
        return spec.epsilon
    if config.active[-1] >= spec.n:
        raise ValueError(f"configuration {config.active} does not fit n={spec.n}")
    if not 0.0 <= epsilon <= spec.epsilon_max * (1 + 1e-12):
        raise ValueError(f"epsilon {epsilon} outside [0, {spec.epsilon_max}]")
    return tuple(epsilon if s in config.active else 0.0 for s in range(spec.n))


def terms_matrix(terms: Mapping[str, float], n: int) -> np.ndarray:
    H = np.zeros((1 << n, 1 << n))
    for k, v in terms.items():
        if v:
            axis, subset = parse_param_key(k)
            H += v * real_pauli_matrix(PauliString(axis, subset, n))
    return H


def realize_hamiltonian(
    spec: SpinSystemSpec, config: FieldConfiguration | None = None, epsilon: float | None = None
) -> np.ndarray:
    """Real symmetric 2^n x 2^n matrix; ``config=None`` uses the fields stored on ``spec``."""
    fields = field_values(spec, config, epsilon)
    return terms_matrix(replace(spec, epsilon=fields).terms(), spec.n)
