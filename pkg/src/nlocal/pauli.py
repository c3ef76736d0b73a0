"""Pauli strings, product X states and spin-subset enumeration.

Basis convention: spin 0 is the leftmost tensor factor, i.e. the most
significant bit of the computational-basis index. A set bit means the spin
is in |1> (Z eigenvalue -1).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class InvalidSubsetError(ValueError):
    pass


class Axis(str, enum.Enum):
    X = "X"
    Z = "Z"


class Sign(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


_SX = np.array([[0.0, 1.0], [1.0, 0.0]])
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
_ID = np.eye(2)


@dataclass(frozen=True)
class PauliString:
    axis: Axis
    subset: tuple[int, ...]
    n: int

    def __post_init__(self):
        subset = tuple(sorted({int(s) for s in self.subset}))
        object.__setattr__(self, "axis", Axis(self.axis))
        object.__setattr__(self, "subset", subset)
        if not subset:
            raise InvalidSubsetError("Pauli string needs a non-empty subset")
        if subset[0] < 0 or subset[-1] >= self.n:
            raise InvalidSubsetError(f"subset {subset} out of range for n={self.n}")

    @property
    def mask(self) -> int:
        return subset_mask(self.subset, self.n)

    @property
    def locality(self) -> int:
        return len(self.subset)

    @property
    def key(self) -> str:
        return param_key(self.axis, self.subset)


@dataclass(frozen=True)
class ProductXState:
    signs: tuple[Sign, ...]

    def __post_init__(self):
        object.__setattr__(self, "signs", tuple(Sign(s) for s in self.signs))

    @property
    def n(self) -> int:
        return len(self.signs)

    @classmethod
    def uniform(cls, n: int, sign: Sign | str) -> ProductXState:
        return cls((Sign(sign),) * n)


def subset_mask(subset, n: int) -> int:
    mask = 0
    for s in subset:
        mask |= 1 << (n - 1 - s)
    return mask


def mask_subset(mask: int, n: int) -> tuple[int, ...]:
    return tuple(s for s in range(n) if mask >> (n - 1 - s) & 1)


def param_key(axis, subset) -> str:
    """Identifier used for parameters in dicts and JSON, e.g. ``"Z:0,1,2"``."""
    return f"{Axis(axis).value}:{','.join(str(s) for s in subset)}"


def parse_param_key(key: str) -> tuple[Axis, tuple[int, ...]]:
    axis, _, rest = key.partition(":")
    return Axis(axis), tuple(int(s) for s in rest.split(","))


@lru_cache(maxsize=4096)
def _dense(axis: Axis, subset: tuple[int, ...], n: int) -> np.ndarray:
    pauli = _SX if axis is Axis.X else _SZ
    out = np.ones((1, 1))
    for s in range(n):
        out = np.kron(out, pauli if s in subset else _ID)
    out.setflags(write=False)
    return out


def realize_pauli_string(p: PauliString) -> np.ndarray:
    """Dense complex 2^n x 2^n matrix of the Pauli string."""
    return _dense(p.axis, p.subset, p.n).astype(np.complex128)


def real_pauli_matrix(p: PauliString) -> np.ndarray:
    """Read-only float64 version of :func:`realize_pauli_string` (X and Z strings are real)."""
    return _dense(p.axis, p.subset, p.n)


@lru_cache(maxsize=4096)
def _action(axis: Axis, mask: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(1 << n)
    if axis is Axis.X:
        perm, sign = idx ^ mask, np.ones(1 << n)
    else:
        perm, sign = idx, 1.0 - 2.0 * (popcount(idx & mask) & 1)
    perm.setflags(write=False)
    sign.setflags(write=False)
    return perm, sign


def pauli_action(p: PauliString) -> tuple[np.ndarray, np.ndarray]:
    """Signed-permutation form: ``(P @ v)[a] == sign[a] * v[perm[a]]``."""
    return _action(p.axis, p.mask, p.n)


def popcount(a):
    a = np.asarray(a, dtype=np.int64)
    count = np.zeros_like(a)
    while np.any(a):
        count += a & 1
        a = a >> 1
    return count


def realize_product_x_state(state: ProductXState) -> np.ndarray:
    plus = np.array([1.0, 1.0]) / np.sqrt(2.0)
    minus = np.array([1.0, -1.0]) / np.sqrt(2.0)
    out = np.ones(1)
    for sign in state.signs:
        out = np.kron(out, plus if sign is Sign.PLUS else minus)
    return out.astype(np.complex128)


def matrix_element(bra: ProductXState, op: PauliString, ket: ProductXState) -> float:
    if not bra.n == ket.n == op.n:
        raise ValueError(f"dimension mismatch: bra n={bra.n}, op n={op.n}, ket n={ket.n}")
    value = np.vdot(realize_product_x_state(bra), realize_pauli_string(op) @ realize_product_x_state(ket))
    if abs(value.imag) > 1e-10:
        raise ValueError(f"matrix element has imaginary part {value.imag:g}")
    return float(value.real)


def enumerate_subsets(n: int, min_size: int = 1) -> list[tuple[int, ...]]:
    """Subsets of range(n) with at least ``min_size`` members, by size then lexicographic."""
    if not 1 <= min_size <= n:
        raise ValueError(f"min_size must be in [1, {n}], got {min_size}")
    return [c for k in range(min_size, n + 1) for c in itertools.combinations(range(n), k)]
