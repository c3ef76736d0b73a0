"""Backend selection for the hot loops.

Two kernels have compiled versions: the batched lowest-eigenpair solve used by
every sweep and fit, and the RK4 Lindblad integrator. The compiled extension
is used when it imports; set ``NLOCAL_PURE_PYTHON=1`` to force the numpy
fallback.
"""

import os

import numpy as np

from . import _lindblad_py

try:
    if os.environ.get("NLOCAL_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _lindblad as _compiled_lindblad
    from . import _spectra as _compiled_spectra
except ImportError:
    _compiled_lindblad = _compiled_spectra = None

BACKEND = "compiled" if _compiled_lindblad is not None else "python"

# below this dimension numpy's batched LAPACK call beats the per-matrix compiled loop
COMPILED_EIGH_MIN_DIM = 16


def _resolve(backend: str) -> str:
    if backend == "auto":
        return BACKEND
    if backend not in ("compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "compiled" and _compiled_lindblad is None:
        raise RuntimeError("compiled kernels are not available")
    return backend


def lowest_eigh(H, k: int = 2, backend: str = "auto"):
    """Lowest ``k`` eigenvalues and eigenvectors of a stack of real symmetric matrices."""
    if not np.isfinite(H).all():
        raise np.linalg.LinAlgError("non-finite matrix entries")
    chosen = _resolve(backend)
    if backend == "auto" and np.shape(H)[-1] < COMPILED_EIGH_MIN_DIM:
        chosen = "python"
    if chosen == "compiled":
        try:
            return _compiled_spectra.lowest_eigh(H, k)
        except ArithmeticError as exc:
            raise np.linalg.LinAlgError(str(exc)) from exc
    w, v = np.linalg.eigh(H)
    return w[..., :k], v[..., :k]


def lindblad_rk4(*args, backend: str = "auto"):
    if _resolve(backend) == "compiled":
        return _compiled_lindblad.lindblad_rk4(*args)
    return _lindblad_py.lindblad_rk4(*args)
