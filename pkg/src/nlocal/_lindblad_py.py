"""Pure-numpy RK4 propagation of the Lindblad equation in the packed X-basis layout.

Packed layout: ``R[j, a] = rho[a, a ^ dmasks[j]]`` where ``dmasks`` is the XOR
group reachable from the initial state. Every X/Z Pauli string acts on X-basis
indices as a signed permutation, so all terms reduce to gathers on ``R``.
"""

from __future__ import annotations

import numpy as np


class PackedLindblad:
    def __init__(self, dmasks, diag_static, diag_drive, flip_masks, flip_static, flip_drive,
                 jump_bits, jump_rates, dissipator):
        self.dmasks = np.asarray(dmasks, dtype=np.int64)
        N = len(diag_static)
        didx = np.full(N, -1, dtype=np.int64)
        didx[self.dmasks] = np.arange(len(self.dmasks))
        a = np.arange(N, dtype=np.int64)
        self.cols = a[None, :] ^ self.dmasks[:, None]
        self.ds = np.asarray(diag_static, dtype=float)
        self.dd = np.asarray(diag_drive, dtype=float)
        self.ds_diff = self.ds[None, :] - self.ds[self.cols]
        self.dd_diff = self.dd[None, :] - self.dd[self.cols]
        self.flip_static = np.asarray(flip_static, dtype=float)
        self.flip_drive = np.asarray(flip_drive, dtype=float)
        self.flip_rows = [didx[self.dmasks ^ m] for m in flip_masks]
        self.flip_cols = [a ^ m for m in flip_masks]
        self.G = np.asarray(dissipator, dtype=float)
        self.jumps = []
        for bit, rate in zip(jump_bits, jump_rates):
            if rate:
                hit = ((a[None, :] & bit) != 0) & ((self.cols & bit) != 0)
                self.jumps.append((rate * hit, a ^ bit))

    def rhs(self, R: np.ndarray, c: float) -> np.ndarray:
        comm = (self.ds_diff + c * self.dd_diff) * R
        for rows, cols, fs, fd in zip(self.flip_rows, self.flip_cols, self.flip_static, self.flip_drive):
            coef = fs + c * fd
            if coef:
                sub = R[rows]
                comm += coef * (sub[:, cols] - sub)
        out = -1j * comm + self.G * R
        for weight, cols in self.jumps:
            out += weight * R[:, cols]
        return out


def lindblad_rk4(R0, omega, h, steps_per_sample, n_samples, t0, args) -> np.ndarray:
    """Fixed-step RK4; returns ``n_samples + 1`` snapshots starting at ``t0``."""
    model = PackedLindblad(*args)
    R = np.array(R0, dtype=np.complex128)
    out = np.empty((n_samples + 1,) + R.shape, dtype=np.complex128)
    out[0] = R
    t = t0
    half = 0.5 * h
    for s in range(1, n_samples + 1):
        for _ in range(steps_per_sample):
            c0 = np.cos(omega * t)
            c1 = np.cos(omega * (t + half))
            c2 = np.cos(omega * (t + h))
            k1 = model.rhs(R, c0)
            k2 = model.rhs(R + half * k1, c1)
            k3 = model.rhs(R + half * k2, c1)
            k4 = model.rhs(R + h * k3, c2)
            R = R + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        # recompute from the step count to avoid drift in long runs
        t = t0 + s * steps_per_sample * h
        out[s] = R
    return out
