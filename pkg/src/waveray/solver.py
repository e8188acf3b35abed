"""Forward wave solver and the three boundary operators built on it.

The initial-boundary value problem u_tt - Lap(u) + q u = F on the cylinder,
with Dirichlet data on the lateral boundary, is stepped with an explicit
second-order leapfrog scheme (5-point Laplacian, potential term at the
current level, Taylor first step).  The three measurement operators are thin
wrappers: Dirichlet-to-Neumann, the same augmented with the final state, and
the full map that also takes initial data.  Complex data is solved as two
independent real problems since the equation has real coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (BoundaryTrace, FinalState, Grid, PotentialField,
                   ScalarField, _trapezoid_weights)

__all__ = [
    "IbvpProblem",
    "OperatorOutput",
    "CFL_SAFETY",
    "solve_ibvp",
    "neumann_trace",
    "apply_dtn",
    "apply_dtn_final",
    "apply_full_map",
    "operator_gap",
    "energy_report",
    "trace_norm",
    "spatial_norm",
    "output_gap_norm",
]

CFL_SAFETY = 0.9


@dataclass(frozen=True)
class IbvpProblem:
    """One forward problem: potential, Dirichlet data, initial data, source.

    ``u0``/``u1`` default to zero; ``q`` of None means no potential.
    """

    f: BoundaryTrace
    q: PotentialField | None = None
    u0: np.ndarray | None = None
    u1: np.ndarray | None = None
    F: ScalarField | None = None


@dataclass(frozen=True)
class OperatorOutput:
    """Measured response: normal trace, final state, optional full field."""

    neumann: BoundaryTrace
    final: FinalState
    field: ScalarField | None = None


def _check_cfl(grid: Grid) -> None:
    limit = CFL_SAFETY * grid.dx / np.sqrt(2.0)
    if grid.dt > limit * (1 + 1e-12):
        raise ValueError(
            f"CFL violation: dt={grid.dt:.6g} exceeds "
            f"{CFL_SAFETY}*dx/sqrt(2)={limit:.6g}")


def _check_same_cfg(grid: Grid, other: Grid, what: str) -> None:
    if other.cfg != grid.cfg:
        raise ValueError(f"{what} lives on a different grid")


def solve_ibvp(p: IbvpProblem, keep_field: bool = False,
               use_compiled: bool | None = None) -> OperatorOutput:
    """Run the leapfrog scheme for one problem.

    Preconditions: the grid satisfies dt <= 0.9*dx/sqrt(2), and the t=0
    Dirichlet row agrees with u0 on the boundary to 1e-10.  A NaN appearing
    at any level aborts with the offending step index.
    """
    grid = p.f.grid
    cfg = grid.cfg
    _check_cfl(grid)
    if p.f.kind != "dirichlet":
        raise ValueError("f must be a dirichlet trace")
    if p.q is not None:
        _check_same_cfg(grid, p.q.grid, "q")
    if p.F is not None:
        _check_same_cfg(grid, p.F.grid, "F")
    nx = cfg.nx
    u0 = np.zeros((nx, nx)) if p.u0 is None else np.asarray(p.u0)
    u1 = np.zeros((nx, nx)) if p.u1 is None else np.asarray(p.u1)
    if u0.shape != (nx, nx) or u1.shape != (nx, nx):
        raise ValueError("initial data must have shape (nx, nx)")

    f0 = p.f.values[0]
    u0_edge = grid.extract_edge(u0)
    scale = max(1.0, float(np.max(np.abs(u0))), float(np.max(np.abs(f0))))
    if np.max(np.abs(f0 - u0_edge)) > 1e-10 * scale:
        raise ValueError("f(0,·) incompatible with u0 on the boundary")

    q3 = p.q.values if p.q is not None else None
    q_mode = 2 if p.q is not None else 0
    fv = p.f.values
    Fv = p.F.values if p.F is not None else None
    has_F = p.F is not None

    is_complex = any(np.iscomplexobj(a) for a in (fv, u0, u1)
                     ) or (has_F and np.iscomplexobj(Fv))

    def run_real(fr, u0r, u1r, Fr):
        tr, uT, utT, field, err = kernels.run(
            q3, q_mode, None, fr, u0r, u1r, Fr, has_F and Fr is not None,
            grid.dx, grid.dt, keep_field, use_compiled=use_compiled)
        if err >= 0:
            raise RuntimeError(f"NaN detected at step {err}")
        return tr, uT, utT, field

    if not is_complex:
        tr, uT, utT, field = run_real(fv, u0, u1, Fv)
    else:
        def split(a):
            if a is None:
                return None, None
            a = np.asarray(a)
            return np.ascontiguousarray(a.real), (
                np.ascontiguousarray(a.imag) if np.iscomplexobj(a) else None)

        fr, fi = split(fv)
        u0r, u0i = split(u0)
        u1r, u1i = split(u1)
        Fr, Fi = split(Fv)
        zeros_tr = np.zeros_like(fr)
        zeros_sp = np.zeros((nx, nx))
        tr_r, uT_r, utT_r, fld_r = run_real(fr, u0r, u1r, Fr)
        tr_i, uT_i, utT_i, fld_i = run_real(
            fi if fi is not None else zeros_tr,
            u0i if u0i is not None else zeros_sp,
            u1i if u1i is not None else zeros_sp,
            Fi if (has_F and Fi is not None) else (None if not has_F else np.zeros_like(Fr)))
        tr = tr_r + 1j * tr_i
        uT = uT_r + 1j * uT_i
        utT = utT_r + 1j * utT_i
        field = (fld_r + 1j * fld_i) if keep_field else None

    out_field = ScalarField(grid=grid, values=field) if keep_field else None
    return OperatorOutput(
        neumann=BoundaryTrace(grid=grid, values=tr, kind="neumann"),
        final=FinalState(u_T=uT, ut_T=utT),
        field=out_field)


def neumann_trace(field: ScalarField) -> BoundaryTrace:
    """Outward normal derivative on the lateral boundary of a full field.

    Second-order one-sided differences along the inward grid line of each
    edge; at the four corners the two one-sided values are averaged.
    """
    g = field.grid
    nx = g.cfg.nx
    v = field.values
    inv2dx = 1.0 / (2.0 * g.dx)
    tr = np.empty((g.cfg.nt, g.n_edge), dtype=v.dtype)
    tr[:, :nx] = (3.0 * v[:, 0, :] - 4.0 * v[:, 1, :] + v[:, 2, :]) * inv2dx
    tr[:, nx:2 * nx] = (3.0 * v[:, nx - 1, :] - 4.0 * v[:, nx - 2, :]
                        + v[:, nx - 3, :]) * inv2dx
    tr[:, 2 * nx:3 * nx - 2] = (3.0 * v[:, 1:-1, 0] - 4.0 * v[:, 1:-1, 1]
                                + v[:, 1:-1, 2]) * inv2dx
    tr[:, 3 * nx - 2:] = (3.0 * v[:, 1:-1, nx - 1] - 4.0 * v[:, 1:-1, nx - 2]
                          + v[:, 1:-1, nx - 3]) * inv2dx
    for slot, row, (c0, c1, c2) in (
            (0, 0, (0, 1, 2)),
            (nx - 1, 0, (nx - 1, nx - 2, nx - 3)),
            (nx, nx - 1, (0, 1, 2)),
            (2 * nx - 1, nx - 1, (nx - 1, nx - 2, nx - 3))):
        side2 = (3.0 * v[:, row, c0] - 4.0 * v[:, row, c1]
                 + v[:, row, c2]) * inv2dx
        tr[:, slot] = 0.5 * (tr[:, slot] + side2)
    return BoundaryTrace(grid=g, values=tr, kind="neumann")


def apply_dtn(q: PotentialField | None, f: BoundaryTrace,
              use_compiled: bool | None = None) -> BoundaryTrace:
    """Dirichlet-to-Neumann map with zero initial data."""
    return solve_ibvp(IbvpProblem(f=f, q=q),
                      use_compiled=use_compiled).neumann


def apply_dtn_final(q: PotentialField | None, f: BoundaryTrace,
                    use_compiled: bool | None = None) -> OperatorOutput:
    """Dirichlet data to (normal trace, final state), zero initial data."""
    return solve_ibvp(IbvpProblem(f=f, q=q), use_compiled=use_compiled)


def apply_full_map(q: PotentialField | None, f: BoundaryTrace,
                   u0: np.ndarray, u1: np.ndarray,
                   use_compiled: bool | None = None) -> OperatorOutput:
    """(f, u0, u1) to (normal trace, final state)."""
    return solve_ibvp(IbvpProblem(f=f, q=q, u0=u0, u1=u1),
                      use_compiled=use_compiled)


def _trace_weights(grid: Grid) -> tuple[np.ndarray, float]:
    wt = _trapezoid_weights(grid.cfg.nt) * grid.dt
    return wt, grid.dx


def trace_norm(tr: BoundaryTrace, which: str = "L2_Sigma") -> float:
    """Discrete norm of Dirichlet or Neumann data on the lateral boundary.

    H1_Sigma is a surrogate: the L2 norm of the values together with their
    first differences in time and along each edge segment.
    """
    g = tr.grid
    nx = g.cfg.nx
    wt, wx = _trace_weights(g)
    v = tr.values
    if which == "L2_Sigma":
        sq = np.abs(v) ** 2
        return float(np.sqrt(np.einsum("i,ie->", wt, sq) * wx))
    if which == "H1_Sigma":
        sq = np.abs(v) ** 2
        dv_t = np.gradient(v, g.dt, axis=0)
        sq = sq + np.abs(dv_t) ** 2
        for seg in (slice(0, nx), slice(nx, 2 * nx),
                    slice(2 * nx, 3 * nx - 2), slice(3 * nx - 2, 4 * nx - 4)):
            dv_s = np.gradient(v[:, seg], g.dx, axis=1)
            sq[:, seg] += np.abs(dv_s) ** 2
        return float(np.sqrt(np.einsum("i,ie->", wt, sq) * wx))
    raise ValueError(f"unknown trace norm {which!r}")


def spatial_norm(arr: np.ndarray, grid: Grid, which: str = "L2_Omega") -> float:
    """Trapezoidal spatial norm of an (nx, nx) snapshot."""
    wx = _trapezoid_weights(grid.cfg.nx) * grid.dx
    sq = np.abs(arr) ** 2
    if which == "H1_Omega":
        d1, d2 = np.gradient(arr, grid.dx, grid.dx)
        sq = sq + np.abs(d1) ** 2 + np.abs(d2) ** 2
    elif which != "L2_Omega":
        raise ValueError(f"unknown spatial norm {which!r}")
    return float(np.sqrt(np.einsum("j,k,jk->", wx, wx, sq)))


def output_gap_norm(a: OperatorOutput, b: OperatorOutput, grid: Grid,
                    with_final: bool) -> float:
    """Norm of the difference of two operator outputs.

    Traces compare in L2 of the lateral boundary; when final states are
    included, the first component compares in the H1 surrogate and the
    second in L2, combined in quadrature.
    """
    d_tr = BoundaryTrace(grid=grid, values=a.neumann.values - b.neumann.values,
                         kind="neumann")
    total = trace_norm(d_tr, "L2_Sigma") ** 2
    if with_final:
        total += spatial_norm(a.final.u_T - b.final.u_T, grid, "H1_Omega") ** 2
        total += spatial_norm(a.final.ut_T - b.final.ut_T, grid, "L2_Omega") ** 2
    return float(np.sqrt(total))


def operator_gap(q1: PotentialField | None, q2: PotentialField | None,
                 probes: list, which: str = "dtn",
                 use_compiled: bool | None = None) -> float:
    """Largest output difference over normalized probes: a lower bound on
    the operator-norm distance of the two boundary operators.

    ``which`` selects the operator: "dtn" (traces only), "dtn_final", or
    "full" (probes are (f, u0, u1) triples).  Each probe is scaled to unit
    input norm before applying; by linearity this just divides the outputs.
    """
    if not probes:
        raise ValueError("empty probe list")
    if which not in ("dtn", "dtn_final", "full"):
        raise ValueError(f"unknown operator {which!r}")
    best = 0.0
    for probe in probes:
        if which == "full":
            f, u0, u1 = probe
            in_norm = np.sqrt(trace_norm(f, "H1_Sigma") ** 2
                              + spatial_norm(u0, f.grid, "H1_Omega") ** 2
                              + spatial_norm(u1, f.grid, "L2_Omega") ** 2)
        else:
            f = probe
            u0 = u1 = None
            in_norm = trace_norm(f, "H1_Sigma")
        if in_norm == 0.0:
            raise ValueError("probe with zero input norm")
        if which == "full":
            out1 = apply_full_map(q1, f, u0, u1, use_compiled=use_compiled)
            out2 = apply_full_map(q2, f, u0, u1, use_compiled=use_compiled)
        else:
            out1 = solve_ibvp(IbvpProblem(f=f, q=q1), use_compiled=use_compiled)
            out2 = solve_ibvp(IbvpProblem(f=f, q=q2), use_compiled=use_compiled)
        gap = output_gap_norm(out1, out2, f.grid,
                              with_final=(which != "dtn")) / in_norm
        best = max(best, gap)
    return best


def energy_report(p: IbvpProblem, use_compiled: bool | None = None) -> float:
    """Interior-source energy ratio sup_t(|u_t| + |grad u|) / |F|_L1L2.

    The problem must have zero boundary and initial data and a nonzero
    source; the returned ratio is the empirical constant of the interior
    energy estimate.
    """
    if p.F is None or float(np.max(np.abs(p.F.values))) == 0.0:
        raise ValueError("F must be nonzero")
    if (float(np.max(np.abs(p.f.values))) != 0.0
            or (p.u0 is not None and np.max(np.abs(p.u0)) != 0)
            or (p.u1 is not None and np.max(np.abs(p.u1)) != 0)):
        raise ValueError("energy_report requires zero boundary and initial data")
    grid = p.f.grid
    out = solve_ibvp(p, keep_field=True, use_compiled=use_compiled)
    v = out.field.values
    dv_t = np.gradient(v, grid.dt, axis=0)
    dv_1 = np.gradient(v, grid.dx, axis=1)
    dv_2 = np.gradient(v, grid.dx, axis=2)
    wx = _trapezoid_weights(grid.cfg.nx) * grid.dx
    def slab(a):
        return np.sqrt(np.einsum("j,k,ijk->i", wx, wx, np.abs(a) ** 2))
    energy = slab(dv_t) + np.sqrt(slab(dv_1) ** 2 + slab(dv_2) ** 2)
    f_l2_t = slab(p.F.values)
    wt = _trapezoid_weights(grid.cfg.nt) * grid.dt
    denom = float(np.sum(wt * f_l2_t))
    return float(np.max(energy) / denom)
