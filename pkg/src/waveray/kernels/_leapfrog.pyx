# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled leapfrog stepper.

Advances the interior of the square with the 5-point Laplacian, pins the
Dirichlet rows each step, records the one-sided outward normal trace at every
time level, and extracts the final state.  Real arithmetic only; complex
problems are split into two real passes by the caller.  The numpy fallback in
``fallback.py`` mirrors this file operation for operation.
"""
import numpy as np


cdef inline void _pin_edges(double[:, ::1] U, const double[:, ::1] f,
                            Py_ssize_t m, Py_ssize_t nx) noexcept:
    cdef Py_ssize_t k, j
    for k in range(nx):
        U[0, k] = f[m, k]
        U[nx - 1, k] = f[m, nx + k]
    for j in range(1, nx - 1):
        U[j, 0] = f[m, 2 * nx + j - 1]
        U[j, nx - 1] = f[m, 3 * nx - 2 + j - 1]


cdef inline void _record_trace(const double[:, ::1] U, double[:, ::1] tr,
                               Py_ssize_t m, Py_ssize_t nx,
                               double inv2dx) noexcept:
    cdef Py_ssize_t k, j
    cdef double a, b
    for k in range(1, nx - 1):
        tr[m, k] = (3.0 * U[0, k] - 4.0 * U[1, k] + U[2, k]) * inv2dx
        tr[m, nx + k] = (3.0 * U[nx - 1, k] - 4.0 * U[nx - 2, k]
                         + U[nx - 3, k]) * inv2dx
    for j in range(1, nx - 1):
        tr[m, 2 * nx + j - 1] = (3.0 * U[j, 0] - 4.0 * U[j, 1]
                                 + U[j, 2]) * inv2dx
        tr[m, 3 * nx - 2 + j - 1] = (3.0 * U[j, nx - 1] - 4.0 * U[j, nx - 2]
                                     + U[j, nx - 3]) * inv2dx
    a = (3.0 * U[0, 0] - 4.0 * U[1, 0] + U[2, 0]) * inv2dx
    b = (3.0 * U[0, 0] - 4.0 * U[0, 1] + U[0, 2]) * inv2dx
    tr[m, 0] = 0.5 * (a + b)
    a = (3.0 * U[0, nx - 1] - 4.0 * U[1, nx - 1] + U[2, nx - 1]) * inv2dx
    b = (3.0 * U[0, nx - 1] - 4.0 * U[0, nx - 2] + U[0, nx - 3]) * inv2dx
    tr[m, nx - 1] = 0.5 * (a + b)
    a = (3.0 * U[nx - 1, 0] - 4.0 * U[nx - 2, 0] + U[nx - 3, 0]) * inv2dx
    b = (3.0 * U[nx - 1, 0] - 4.0 * U[nx - 1, 1] + U[nx - 1, 2]) * inv2dx
    tr[m, nx] = 0.5 * (a + b)
    a = (3.0 * U[nx - 1, nx - 1] - 4.0 * U[nx - 2, nx - 1]
         + U[nx - 3, nx - 1]) * inv2dx
    b = (3.0 * U[nx - 1, nx - 1] - 4.0 * U[nx - 1, nx - 2]
         + U[nx - 1, nx - 3]) * inv2dx
    tr[m, 2 * nx - 1] = 0.5 * (a + b)


def run(const double[:, :, ::1] q3, int q_mode, const double[:, ::1] q2,
        const double[:, ::1] f, const double[:, ::1] u0,
        const double[:, ::1] u1, const double[:, :, ::1] F3, bint has_F,
        double dx, double dt, bint keep_field):
    """One real leapfrog solve.

    q_mode: 0 = no potential, 1 = static (q2), 2 = time dependent (q3).
    Returns (neumann, u_T, ut_T, field or None, err_step); err_step is -1 on
    success, else the first time level at which a NaN appeared.
    """
    cdef Py_ssize_t nt = f.shape[0]
    cdef Py_ssize_t ne = f.shape[1]
    cdef Py_ssize_t nx = u0.shape[0]
    cdef double inv_dx2 = 1.0 / (dx * dx)
    cdef double inv2dx = 1.0 / (2.0 * dx)
    cdef double dt2 = dt * dt
    cdef double half_dt2 = 0.5 * dt2
    cdef Py_ssize_t m, j, k
    cdef double lap, qv, src, val

    A_arr = np.array(u0, dtype=np.float64, copy=True)
    B_arr = np.empty((nx, nx), dtype=np.float64)
    C_arr = np.empty((nx, nx), dtype=np.float64)
    tr_arr = np.empty((nt, ne), dtype=np.float64)
    field_arr = np.empty((nt, nx, nx), dtype=np.float64) if keep_field else None

    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] B = B_arr
    cdef double[:, ::1] C = C_arr
    cdef double[:, ::1] tmp
    cdef double[:, ::1] tr = tr_arr

    _pin_edges(A, f, 0, nx)
    _record_trace(A, tr, 0, nx, inv2dx)
    if keep_field:
        field_arr[0] = np.asarray(A)

    for j in range(1, nx - 1):
        for k in range(1, nx - 1):
            lap = (((A[j - 1, k] + A[j + 1, k]) + A[j, k - 1])
                   + A[j, k + 1] - 4.0 * A[j, k]) * inv_dx2
            if q_mode == 2:
                qv = q3[0, j, k]
            elif q_mode == 1:
                qv = q2[j, k]
            else:
                qv = 0.0
            src = F3[0, j, k] if has_F else 0.0
            val = A[j, k] + dt * u1[j, k] + half_dt2 * (lap - qv * A[j, k] + src)
            if val != val:
                return tr_arr, np.asarray(B), np.asarray(B), field_arr, 1
            B[j, k] = val
    _pin_edges(B, f, 1, nx)
    _record_trace(B, tr, 1, nx, inv2dx)
    if keep_field:
        field_arr[1] = np.asarray(B)

    for m in range(1, nt - 1):
        for j in range(1, nx - 1):
            for k in range(1, nx - 1):
                lap = (((B[j - 1, k] + B[j + 1, k]) + B[j, k - 1])
                       + B[j, k + 1] - 4.0 * B[j, k]) * inv_dx2
                if q_mode == 2:
                    qv = q3[m, j, k]
                elif q_mode == 1:
                    qv = q2[j, k]
                else:
                    qv = 0.0
                src = F3[m, j, k] if has_F else 0.0
                val = 2.0 * B[j, k] - A[j, k] + dt2 * (lap - qv * B[j, k] + src)
                if val != val:
                    return tr_arr, np.asarray(B), np.asarray(B), field_arr, m + 1
                C[j, k] = val
        _pin_edges(C, f, m + 1, nx)
        _record_trace(C, tr, m + 1, nx, inv2dx)
        if keep_field:
            field_arr[m + 1] = np.asarray(C)
        tmp = A
        A = B
        B = C
        C = tmp

    uT = np.asarray(B).copy()
    utT = np.empty((nx, nx), dtype=np.float64)
    cdef double[:, ::1] ut = utT
    cdef double inv2dt = 1.0 / (2.0 * dt)
    for j in range(nx):
        for k in range(nx):
            ut[j, k] = (3.0 * B[j, k] - 4.0 * A[j, k] + C[j, k]) * inv2dt
    return tr_arr, uT, utT, field_arr, -1
