# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 propagation of the Lindblad equation in the packed X-basis layout.

Same contract as ``_lindblad_py.lindblad_rk4``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos

cnp.import_array()


cdef void _rhs(const double complex[:, ::1] R, double complex[:, ::1] out, double c,
               const long long[::1] dmasks, const double[::1] ds, const double[::1] dd,
               const long long[::1] fmasks, const long long[:, ::1] frows,
               const double[::1] fcoef, const double[:, ::1] G,
               const long long[::1] jbits, const double[::1] jrates) noexcept nogil:
    cdef Py_ssize_t nd = R.shape[0], N = R.shape[1], K = fmasks.shape[0], J = jbits.shape[0]
    cdef Py_ssize_t j, a, b, k, i, jj
    cdef long long d, bit
    cdef double complex comm, r, val
    for j in range(nd):
        d = dmasks[j]
        for a in range(N):
            b = a ^ d
            r = R[j, a]
            comm = ((ds[a] - ds[b]) + c * (dd[a] - dd[b])) * r
            for k in range(K):
                jj = frows[k, j]
                comm = comm + fcoef[k] * (R[jj, a ^ fmasks[k]] - R[jj, a])
            val = -1j * comm + G[j, a] * r
            for i in range(J):
                bit = jbits[i]
                if (a & bit) and (b & bit):
                    val = val + jrates[i] * R[j, a ^ bit]
            out[j, a] = val


def lindblad_rk4(R0, double omega, double h, long steps_per_sample, long n_samples, double t0, args):
    dmasks_, diag_static, diag_drive, flip_masks, flip_static, flip_drive, jump_bits, jump_rates, dissipator = args
    cdef long long[::1] dmasks = np.ascontiguousarray(dmasks_, dtype=np.int64)
    cdef double[::1] ds = np.ascontiguousarray(diag_static, dtype=np.float64)
    cdef double[::1] dd = np.ascontiguousarray(diag_drive, dtype=np.float64)
    cdef long long[::1] fmasks = np.ascontiguousarray(flip_masks, dtype=np.int64).reshape(-1)
    cdef double[::1] fs = np.ascontiguousarray(flip_static, dtype=np.float64).reshape(-1)
    cdef double[::1] fd = np.ascontiguousarray(flip_drive, dtype=np.float64).reshape(-1)
    cdef double[:, ::1] G = np.ascontiguousarray(dissipator, dtype=np.float64)
    rates = np.asarray(jump_rates, dtype=np.float64).reshape(-1)
    bits = np.asarray(jump_bits, dtype=np.int64).reshape(-1)
    cdef long long[::1] jbits = np.ascontiguousarray(bits[rates != 0])
    cdef double[::1] jrates = np.ascontiguousarray(rates[rates != 0])

    cdef Py_ssize_t nd = dmasks.shape[0], N = ds.shape[0], K = fmasks.shape[0]
    didx = np.full(N, -1, dtype=np.int64)
    didx[np.asarray(dmasks)] = np.arange(nd)
    cdef long long[:, ::1] frows = np.ascontiguousarray(
        didx[np.asarray(dmasks)[None, :] ^ np.asarray(fmasks)[:, None]].reshape(K, nd))

    R_arr = np.array(R0, dtype=np.complex128, order="C")
    cdef double complex[:, ::1] R = R_arr
    cdef double complex[:, ::1] k1 = np.empty_like(R_arr)
    cdef double complex[:, ::1] k2 = np.empty_like(R_arr)
    cdef double complex[:, ::1] k3 = np.empty_like(R_arr)
    cdef double complex[:, ::1] k4 = np.empty_like(R_arr)
    cdef double complex[:, ::1] tmp = np.empty_like(R_arr)
    cdef double[::1] fcoef = np.empty(K, dtype=np.float64)
    out_arr = np.empty((n_samples + 1, nd, N), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    out[0, :, :] = R

    cdef long s, step
    cdef Py_ssize_t j, a, k
    cdef double t = t0, half = 0.5 * h, sixth = h / 6.0, c0, c1, c2
    with nogil:
        for s in range(1, n_samples + 1):
            for step in range(steps_per_sample):
                c0 = cos(omega * t)
                c1 = cos(omega * (t + half))
                c2 = cos(omega * (t + h))
                for k in range(K):
                    fcoef[k] = fs[k] + c0 * fd[k]
                _rhs(R, k1, c0, dmasks, ds, dd, fmasks, frows, fcoef, G, jbits, jrates)
                for j in range(nd):
                    for a in range(N):
                        tmp[j, a] = R[j, a] + half * k1[j, a]
                for k in range(K):
                    fcoef[k] = fs[k] + c1 * fd[k]
                _rhs(tmp, k2, c1, dmasks, ds, dd, fmasks, frows, fcoef, G, jbits, jrates)
                for j in range(nd):
                    for a in range(N):
                        tmp[j, a] = R[j, a] + half * k2[j, a]
                _rhs(tmp, k3, c1, dmasks, ds, dd, fmasks, frows, fcoef, G, jbits, jrates)
                for j in range(nd):
                    for a in range(N):
                        tmp[j, a] = R[j, a] + h * k3[j, a]
                for k in range(K):
                    fcoef[k] = fs[k] + c2 * fd[k]
                _rhs(tmp, k4, c2, dmasks, ds, dd, fmasks, frows, fcoef, G, jbits, jrates)
                for j in range(nd):
                    for a in range(N):
                        R[j, a] = R[j, a] + sixth * (k1[j, a] + 2.0 * k2[j, a] + 2.0 * k3[j, a] + k4[j, a])
                t = t + h
            t = t0 + s * steps_per_sample * h
            out[s, :, :] = R
    return out_arr
