"""Driven-coupler dynamics under decay and dephasing, plus perturbative estimates.

The coupler term M cos(wt) Z_1...Z_n is driven at the gap between the ground
state (close to |-...->) and the most excited state (close to |+...+>).
Integration runs in the product X basis, where every X or Z Pauli string is a
signed permutation (see ``_lindblad_py`` for the packed layout).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .hamiltonian import SpinSystemSpec, realize_hamiltonian
from .pauli import Axis, PauliString, ProductXState, Sign, popcount

TRACE_TOLERANCE = 1e-4
POSITIVITY_TOLERANCE = 1e-6


class IntegratorAccuracyError(RuntimeError):
    pass


class UnsupportedRegimeError(ValueError):
    pass


@dataclass(frozen=True)
class DriveSpec:
    """Harmonic drive ``cos(omega t) * (M Z^n + sum amp * P)``."""

    M: float
    omega: float
    driven_terms: tuple[tuple[PauliString, float], ...] = ()

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"drive frequency must be positive, got {self.omega}")
        terms = tuple((p, float(a)) for p, a in self.driven_terms)
        if not all(math.isfinite(a) for _, a in terms) or not math.isfinite(self.M):
            raise ValueError("drive amplitudes must be finite")
        object.__setattr__(self, "driven_terms", terms)

    def terms(self, n: int) -> list[tuple[PauliString, float]]:
        out = [(PauliString(Axis.Z, tuple(range(n)), n), self.M)] if self.M else []
        for p, amp in self.driven_terms:
            if p.n != n:
                raise ValueError(f"driven term {p.key} built for n={p.n}, system has n={n}")
            out.append((p, amp))
        return out

    @property
    def total_amplitude(self) -> float:
        return abs(self.M) + sum(abs(a) for _, a in self.driven_terms)


@dataclass(frozen=True)
class LindbladSpec:
    """Equal-rate single-spin decay and dephasing, rate 1/T2 per spin. ``t2=inf`` is closed."""

    t2: float
    include_decay: bool = True
    include_dephasing: bool = True

    def __post_init__(self):
        if not self.t2 > 0:
            raise ValueError(f"T2 must be positive, got {self.t2}")

    @property
    def gamma(self) -> float:
        return 0.0 if math.isinf(self.t2) else 1.0 / self.t2


CLOSED = LindbladSpec(math.inf)


@dataclass
class IntegratorConfig:
    """Fixed RK4 step: the shortest physical time scale divided by ``steps_per_scale``.

    50 is the coarsest allowed; 200 keeps closed-system populations within 1e-6
    of a converged state-vector reference.
    """

    sample_interval: float = 1.0
    steps_per_scale: int = 200
    backend: str = "auto"


@dataclass
class ContrastReport:
    time_grid: np.ndarray
    populations: np.ndarray
    contrast: float
    target_index: int
    excluded_index: int
    labels: list[str]
    step: float
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float
    positive: bool
    final_rho: np.ndarray = field(repr=False, default=None)

    @property
    def target_population(self) -> np.ndarray:
        return self.populations[:, self.target_index]


def x_label(index: int, n: int) -> str:
    return "".join("-" if index >> (n - 1 - s) & 1 else "+" for s in range(n))


def x_index(state: ProductXState) -> int:
    n = state.n
    return sum(1 << (n - 1 - s) for s, sign in enumerate(state.signs) if sign is Sign.MINUS)


def hadamard(n: int) -> np.ndarray:
    """Columns are product X states in X-index order (set bit = |->)."""
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, h)
    return out


def _x_basis_terms(terms, n: int):
    """Split Pauli terms into a diagonal (X strings) and flip masks (Z strings) in the X basis."""
    idx = np.arange(1 << n)
    diag = np.zeros(1 << n)
    flips: dict[int, float] = {}
    for p, coef in terms:
        if not coef:
            continue
        if p.axis is Axis.X:
            diag += coef * (1.0 - 2.0 * (popcount(idx & p.mask) & 1))
        else:
            flips[p.mask] = flips.get(p.mask, 0.0) + coef
    return diag, flips


def static_terms(spec: SpinSystemSpec) -> list[tuple[PauliString, float]]:
    from .pauli import parse_param_key

    out = []
    for key, value in spec.with_coupler(False).terms().items():
        axis, subset = parse_param_key(key)
        out.append((PauliString(axis, subset, spec.n), value))
    return out


def static_hamiltonian_x(spec: SpinSystemSpec) -> np.ndarray:
    n = spec.n
    diag, flips = _x_basis_terms(static_terms(spec), n)
    H = np.diag(diag)
    idx = np.arange(1 << n)
    for mask, coef in flips.items():
        H[idx, idx ^ mask] += coef
    return H


def resonant_frequency(spec: SpinSystemSpec) -> float:
    """Gap between ground and most excited level of the static coupler-off Hamiltonian."""
    if any(spec.epsilon):
        raise ValueError("resonant frequency is defined with all Z fields at zero")
    w = np.linalg.eigvalsh(realize_hamiltonian(spec.with_coupler(False)))
    return float(w[-1] - w[0])


def measurement_basis(spec: SpinSystemSpec, tol: float = 1e-9) -> np.ndarray:
    """Exact static eigenstates (X-basis coordinates), column m labelled by product X state m.

    Inside a degenerate eigenspace the basis is rotated onto the projections of
    the best-matching product states, so an X-diagonal Hamiltonian yields the
    identity. Labels are a one-to-one max-overlap assignment.
    """
    H = static_hamiltonian_x(spec)
    N = H.shape[0]
    if np.allclose(H, np.diag(np.diag(H)), atol=0.0, rtol=0.0):
        return np.eye(N)
    w, V = np.linalg.eigh(H)
    scale = max(1.0, float(np.abs(w).max()))
    start = 0
    while start < N:
        stop = start + 1
        while stop < N and w[stop] - w[stop - 1] < tol * scale:
            stop += 1
        if stop - start > 1:
            block = V[:, start:stop]
            weight = np.sum(block**2, axis=1)
            chosen = np.sort(np.argsort(-weight, kind="stable")[: stop - start])
            B = block @ block[chosen].T
            s, Q = np.linalg.eigh(B.T @ B)
            V[:, start:stop] = B @ (Q / np.sqrt(s)) @ Q.T
        start = stop
    rows, cols = linear_sum_assignment(-(V**2))
    U = np.empty_like(V)
    U[:, rows] = V[:, cols]
    signs = np.sign(np.diag(U))
    signs[signs == 0] = 1.0
    return U * signs


def _initial_rho_x(initial, n: int) -> np.ndarray:
    N = 1 << n
    if initial is None:
        initial = ProductXState.uniform(n, Sign.MINUS)
    if isinstance(initial, ProductXState):
        if initial.n != n:
            raise ValueError("initial state size does not match the system")
        rho = np.zeros((N, N), dtype=np.complex128)
        k = x_index(initial)
        rho[k, k] = 1.0
        return rho
    rho = np.asarray(initial, dtype=np.complex128)
    if rho.shape != (N, N):
        raise ValueError(f"initial density must be {N}x{N}")
    W = hadamard(n)
    return W @ rho @ W


def _xor_closure(seeds, generators) -> np.ndarray:
    seen = {int(s) for s in seeds}
    frontier = list(seen)
    while frontier:
        nxt = []
        for d in frontier:
            for g in generators:
                e = d ^ g
                if e not in seen:
                    seen.add(e)
                    nxt.append(e)
        frontier = nxt
    return np.array(sorted(seen), dtype=np.int64)


def _pack(rho: np.ndarray, dmasks: np.ndarray) -> np.ndarray:
    a = np.arange(rho.shape[0])
    return rho[a[None, :], a[None, :] ^ dmasks[:, None]]


def unpack(R: np.ndarray, dmasks: np.ndarray, N: int) -> np.ndarray:
    """Packed snapshots (..., nd, N) -> dense density matrices (..., N, N)."""
    lead = R.shape[:-2]
    rho = np.zeros(lead + (N, N), dtype=np.complex128)
    a = np.arange(N)
    for j, d in enumerate(dmasks):
        rho[..., a, a ^ d] = R[..., j, :]
    return rho


def build_problem(spec: SpinSystemSpec, drive: DriveSpec, lindblad: LindbladSpec, rho0_x: np.ndarray):
    """Kernel arguments (packed X-basis layout) for the given system, drive and noise."""
    n = spec.n
    N = 1 << n
    diag_s, flips_s = _x_basis_terms(static_terms(spec), n)
    diag_d, flips_d = _x_basis_terms(drive.terms(n), n)
    masks = sorted(set(flips_s) | set(flips_d))
    flip_static = np.array([flips_s.get(m, 0.0) for m in masks])
    flip_drive = np.array([flips_d.get(m, 0.0) for m in masks])

    support = {int(a ^ b) for a, b in zip(*np.nonzero(np.abs(rho0_x) > 0))} or {0}
    dmasks = _xor_closure(support, masks)

    gamma = lindblad.gamma
    bits = np.array([1 << (n - 1 - s) for s in range(n)], dtype=np.int64)
    decay = np.full(n, gamma if lindblad.include_decay else 0.0)
    dephase = np.full(n, gamma if lindblad.include_dephasing else 0.0)
    a = np.arange(N)
    kd = sum(decay[s] * ((a & bits[s]) == 0) for s in range(n))
    G = np.zeros((len(dmasks), N))
    for j, d in enumerate(dmasks):
        G[j] = -0.5 * (kd + kd[a ^ d]) - sum(dephase[s] for s in range(n) if d & bits[s])
    args = (dmasks, diag_s, diag_d, np.array(masks, dtype=np.int64), flip_static, flip_drive, bits, decay, G)
    return args, dmasks


def integration_step(spec: SpinSystemSpec, drive: DriveSpec, lindblad: LindbladSpec, config: IntegratorConfig) -> tuple[float, int]:
    """Step size and steps per output sample.

    The step resolves the drive period, T2, 1/M_total and the static spectral
    width, each divided by ``config.steps_per_scale``.
    """
    w = np.linalg.eigvalsh(static_hamiltonian_x(spec))
    scales = [2.0 * math.pi / drive.omega]
    if w[-1] > w[0]:
        scales.append(2.0 * math.pi / (w[-1] - w[0]))
    if math.isfinite(lindblad.t2):
        scales.append(lindblad.t2)
    if drive.total_amplitude > 0:
        scales.append(1.0 / drive.total_amplitude)
    h_max = min(scales) / config.steps_per_scale
    steps = max(1, math.ceil(config.sample_interval / h_max - 1e-9))
    return config.sample_interval / steps, steps


def evolve_lindblad(
    spec: SpinSystemSpec,
    drive: DriveSpec,
    lindblad: LindbladSpec,
    t_end: float,
    initial=None,
    config: IntegratorConfig | None = None,
) -> ContrastReport:
    """Integrate the driven master equation from ``initial`` (default |-...->) to ``t_end``.

    ``initial`` is a ProductXState or a density matrix in the computational basis.
    Populations are reported in the labelled static eigenbasis.
    """
    config = config or IntegratorConfig()
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    n = spec.n
    N = 1 << n
    n_samples = round(t_end / config.sample_interval)
    if n_samples < 1 or not math.isclose(n_samples * config.sample_interval, t_end, rel_tol=1e-9):
        raise ValueError("t_end must be a positive multiple of the sample interval")

    rho0 = _initial_rho_x(initial, n)
    args, dmasks = build_problem(spec, drive, lindblad, rho0)
    h, steps = integration_step(spec, drive, lindblad, config)
    snaps = kernels.lindblad_rk4(_pack(rho0, dmasks), drive.omega, h, steps, n_samples, 0.0, args,
                                 backend=config.backend)

    zero = int(np.flatnonzero(dmasks == 0)[0]) if 0 in dmasks else None
    trace = snaps[:, zero, :].sum(axis=1) if zero is not None else np.zeros(n_samples + 1)
    trace_error = float(np.max(np.abs(trace - 1.0)))
    if trace_error > TRACE_TOLERANCE:
        raise IntegratorAccuracyError(f"trace drifted by {trace_error:.3g}")
    a = np.arange(N)
    herm = 0.0
    for j, d in enumerate(dmasks):
        herm = max(herm, float(np.max(np.abs(snaps[:, j, a ^ d] - np.conj(snaps[:, j, a])))))

    U = measurement_basis(spec)
    if np.array_equal(U, np.eye(N)) and zero is not None:
        populations = snaps[:, zero, :].real.copy()
    else:
        rho = unpack(snaps, dmasks, N)
        populations = np.einsum("am,tab,bm->tm", U, rho, U).real

    probe = unpack(snaps[:: max(1, n_samples // 100)], dmasks, N)
    min_eig = float(np.linalg.eigvalsh(probe).min())

    target, excluded = 0, N - 1
    others = [m for m in range(N) if m not in (target, excluded)]
    other_max = float(populations[:, others].max()) if others else 0.0
    contrast = float(populations[:, target].max()) - other_max
    return ContrastReport(
        time_grid=np.arange(n_samples + 1) * config.sample_interval,
        populations=populations,
        contrast=contrast,
        target_index=target,
        excluded_index=excluded,
        labels=[x_label(m, n) for m in range(N)],
        step=h,
        trace_error=trace_error,
        hermiticity_error=herm,
        min_eigenvalue=min_eig,
        positive=min_eig >= -POSITIVITY_TOLERANCE,
        final_rho=unpack(snaps[-1], dmasks, N),
    )


def contrast_scan(n_values, t2_values, *, M: float, t_end: float = 1000.0, spec_factory=None,
                  config: IntegratorConfig | None = None) -> list[dict]:
    """State contrast for every (n, T2) cell, drive on resonance with amplitude M."""
    from .hamiltonian import coupling_free_spec

    spec_factory = spec_factory or coupling_free_spec
    rows = []
    for n in n_values:
        spec = spec_factory(n)
        drive = DriveSpec(M=M, omega=resonant_frequency(spec))
        for t2 in t2_values:
            report = evolve_lindblad(spec, drive, LindbladSpec(t2), t_end, config=config)
            rows.append({"n": n, "T2_ns": t2, "contrast": report.contrast, "trace_error": report.trace_error,
                         "hermiticity_error": report.hermiticity_error, "positive": report.positive})
    return rows


def first_order_amplitude(M, omega, omega_ab, t):
    """First-order amplitude of the |alpha> -> |beta> transition for a M cos(omega t) drive.

    Unit matrix element; on resonance the secular part grows as M t / 2.
    """
    t = np.asarray(t, dtype=float)

    def integral(x):
        # int_0^t exp(i x s) ds, stable through x -> 0
        return t * np.exp(0.5j * x * t) * np.sinc(x * t / (2.0 * np.pi))

    return -0.5j * M * (integral(omega_ab + omega) + integral(omega_ab - omega))


def _equal_delta(delta) -> float:
    values = np.atleast_1d(np.asarray(delta, dtype=float))
    if not np.allclose(values, values[0], rtol=1e-12, atol=0.0):
        raise UnsupportedRegimeError("perturbative estimate needs equal X fields on every spin")
    return float(values[0])


def second_order_spurious_estimate(driven_terms, delta, n: int, spurious_only: bool = True) -> float:
    """Magnitude of the second-order |-...-> -> |+...+> coefficient from oscillating terms.

    Sums J_im * J_fm over intermediate product states m, with J the exact
    X-basis matrix elements of the oscillating operator, and divides by
    delta * omega with omega = 2 n delta. ``spurious_only`` drops the two
    intermediate states (m = i, f) whose products involve the n-local amplitude.
    """
    d = _equal_delta(delta)
    N = 1 << n
    diag, flips = _x_basis_terms(list(driven_terms), n)
    i_state, f_state = N - 1, 0
    m = np.arange(N)
    # <f|V|m> is the flip term that maps m to f (mask = m), plus the diagonal at m = f
    v_f = np.array([flips.get(int(k ^ f_state), 0.0) for k in m])
    v_i = np.array([flips.get(int(k ^ i_state), 0.0) for k in m])
    v_f[f_state] += diag[f_state]
    v_i[i_state] += diag[i_state]
    products = v_i * v_f
    if spurious_only:
        products[[i_state, f_state]] = 0.0
    return float(abs(products.sum()) / (d * 2 * n * d))


def second_order_closed_form(delta_j: float, delta: float, n: int) -> float:
    """All spurious amplitudes equal: 2^n dJ^2 / (2 n delta^2)."""
    return 2**n * delta_j**2 / (2 * n * delta**2)


def detectability_criterion(M: float, delta_j: float, delta: float, n: int) -> tuple[bool, float]:
    """Whether the first-order n-local amplitude beats the second-order spurious one.

    Margin is M / (2^(n-1) dJ^2 / (n delta)).
    """
    threshold = 2 ** (n - 1) * delta_j**2 / (n * delta)
    margin = math.inf if threshold == 0 else M / threshold
    return margin > 1.0, margin


def wait_time_estimate(M: float, xi: float) -> float:
    """Time for the transition probability M^2 t^2 to reach the readout precision xi."""
    if not M > 0 or not 0 < xi <= 1:
        raise ValueError("need M > 0 and 0 < xi <= 1")
    return math.sqrt(xi) / M
