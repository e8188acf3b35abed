"""Pure numpy leapfrog stepper, mirroring the compiled kernel.

Same update formulas and association order as ``_leapfrog.pyx`` so both
implementations agree to rounding (the compiler may contract multiplies and
adds, so agreement is to ~1e-13 relative, not bitwise).
"""
from __future__ import annotations

import numpy as np


def _pin_edges(U: np.ndarray, f: np.ndarray, m: int, nx: int) -> None:
    U[0, :] = f[m, :nx]
    U[nx - 1, :] = f[m, nx:2 * nx]
    U[1:nx - 1, 0] = f[m, 2 * nx:3 * nx - 2]
    U[1:nx - 1, nx - 1] = f[m, 3 * nx - 2:4 * nx - 4]


def _record_trace(U: np.ndarray, tr: np.ndarray, m: int, nx: int,
                  inv2dx: float) -> None:
    tr[m, :nx] = (3.0 * U[0, :] - 4.0 * U[1, :] + U[2, :]) * inv2dx
    tr[m, nx:2 * nx] = (3.0 * U[nx - 1, :] - 4.0 * U[nx - 2, :]
                        + U[nx - 3, :]) * inv2dx
    tr[m, 2 * nx:3 * nx - 2] = (3.0 * U[1:nx - 1, 0] - 4.0 * U[1:nx - 1, 1]
                                + U[1:nx - 1, 2]) * inv2dx
    tr[m, 3 * nx - 2:] = (3.0 * U[1:nx - 1, nx - 1] - 4.0 * U[1:nx - 1, nx - 2]
                          + U[1:nx - 1, nx - 3]) * inv2dx
    side2 = (3.0 * U[0, 0] - 4.0 * U[0, 1] + U[0, 2]) * inv2dx
    tr[m, 0] = 0.5 * (tr[m, 0] + side2)
    side2 = (3.0 * U[0, nx - 1] - 4.0 * U[0, nx - 2] + U[0, nx - 3]) * inv2dx
    tr[m, nx - 1] = 0.5 * (tr[m, nx - 1] + side2)
    side2 = (3.0 * U[nx - 1, 0] - 4.0 * U[nx - 1, 1] + U[nx - 1, 2]) * inv2dx
    tr[m, nx] = 0.5 * (tr[m, nx] + side2)
    side2 = (3.0 * U[nx - 1, nx - 1] - 4.0 * U[nx - 1, nx - 2]
             + U[nx - 1, nx - 3]) * inv2dx
    tr[m, 2 * nx - 1] = 0.5 * (tr[m, 2 * nx - 1] + side2)


def _laplacian(U: np.ndarray, inv_dx2: float) -> np.ndarray:
    return (((U[:-2, 1:-1] + U[2:, 1:-1]) + U[1:-1, :-2])
            + U[1:-1, 2:] - 4.0 * U[1:-1, 1:-1]) * inv_dx2


def run(q3, q_mode, q2, f, u0, u1, F3, has_F, dx, dt, keep_field):
    """Same contract as the compiled ``run``; see ``_leapfrog.pyx``."""
    nt, ne = f.shape
    nx = u0.shape[0]
    inv_dx2 = 1.0 / (dx * dx)
    inv2dx = 1.0 / (2.0 * dx)
    dt2 = dt * dt

    def q_at(m):
        if q_mode == 2:
            return q3[m, 1:-1, 1:-1]
        if q_mode == 1:
            return q2[1:-1, 1:-1]
        return 0.0

    def src_at(m):
        return F3[m, 1:-1, 1:-1] if has_F else 0.0

    A = np.array(u0, dtype=np.float64, copy=True)
    B = np.empty_like(A)
    C = np.empty_like(A)
    tr = np.empty((nt, ne), dtype=np.float64)
    field = np.empty((nt, nx, nx), dtype=np.float64) if keep_field else None

    _pin_edges(A, f, 0, nx)
    _record_trace(A, tr, 0, nx, inv2dx)
    if keep_field:
        field[0] = A

    B[1:-1, 1:-1] = (A[1:-1, 1:-1] + dt * u1[1:-1, 1:-1]
                     + (0.5 * dt2) * (_laplacian(A, inv_dx2)
                                      - q_at(0) * A[1:-1, 1:-1] + src_at(0)))
    if np.isnan(B[1:-1, 1:-1]).any():
        return tr, B, B, field, 1
    _pin_edges(B, f, 1, nx)
    _record_trace(B, tr, 1, nx, inv2dx)
    if keep_field:
        field[1] = B

    for m in range(1, nt - 1):
        C[1:-1, 1:-1] = (2.0 * B[1:-1, 1:-1] - A[1:-1, 1:-1]
                         + dt2 * (_laplacian(B, inv_dx2)
                                  - q_at(m) * B[1:-1, 1:-1] + src_at(m)))
        if np.isnan(C[1:-1, 1:-1]).any():
            return tr, B, B, field, m + 1
        _pin_edges(C, f, m + 1, nx)
        _record_trace(C, tr, m + 1, nx, inv2dx)
        if keep_field:
            field[m + 1] = C
        A, B, C = B, C, A

    uT = B.copy()
    utT = (3.0 * B - 4.0 * A + C) * (1.0 / (2.0 * dt))
    return tr, uT, utT, field, -1
