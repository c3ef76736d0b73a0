# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Lowest eigenpairs of a batch of real symmetric matrices via LAPACK dsyevr."""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_lapack cimport dsyevr

cnp.import_array()


def lowest_eigh(H, int k=2):
    """Eigenvalues (B, k) and eigenvectors (B, N, k) of the k lowest levels.

    Raises ``ArithmeticError`` with the batch index when LAPACK reports failure.
    """
    H = np.asarray(H, dtype=np.float64)
    lead = H.shape[:H.ndim - 2]
    cdef int N = H.shape[H.ndim - 1]
    stack = np.array(H.reshape(-1, N, N), dtype=np.float64, order="C")
    cdef double[:, :, ::1] A = stack
    cdef Py_ssize_t B = A.shape[0]
    w_out = np.empty((B, k), dtype=np.float64)
    v_out = np.empty((B, k, N), dtype=np.float64)
    cdef double[:, ::1] W = w_out
    cdef double[:, :, ::1] Z = v_out

    cdef char jobz = b"V", rng = b"I", uplo = b"L"
    cdef int n = N, lda = N, il = 1, iu = k, m = 0, ldz = N, info = 0
    cdef double vl = 0.0, vu = 0.0, abstol = 0.0
    cdef int lwork = 26 * N, liwork = 10 * N
    cdef double[::1] wbuf = np.empty(N, dtype=np.float64)
    cdef double[::1] work = np.empty(lwork, dtype=np.float64)
    cdef int[::1] iwork = np.empty(liwork, dtype=np.intc)
    cdef int[::1] isuppz = np.empty(2 * N, dtype=np.intc)
    cdef Py_ssize_t b, i
    cdef Py_ssize_t failed = -1
    with nogil:
        for b in range(B):
            # row-major symmetric input is its own column-major transpose
            dsyevr(&jobz, &rng, &uplo, &n, &A[b, 0, 0], &lda, &vl, &vu, &il, &iu, &abstol,
                   &m, &wbuf[0], &Z[b, 0, 0], &ldz, &isuppz[0], &work[0], &lwork, &iwork[0], &liwork, &info)
            if info != 0:
                failed = b
                break
            for i in range(k):
                W[b, i] = wbuf[i]
    if failed >= 0:
        raise ArithmeticError(f"dsyevr failed on matrix {failed} (info={info})")
    return w_out.reshape(lead + (k,)), np.swapaxes(v_out, 1, 2).reshape(lead + (N, k))
