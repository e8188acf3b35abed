"""Geometric-optics probes: sliding amplitudes, oscillatory boundary data,
support conditions, and numerical remainder extraction.

A probe is a high-frequency ansatz  a(t,x) * exp(i*s*lam*(x.w + t))  whose
amplitude a(t,x) = phi(x + t*w) slides a fixed profile along the direction
-w at unit speed, so it satisfies the transport equation exactly.  Driving
the solver with the Dirichlet trace of the ansatz and matching end data
isolates a remainder whose L2 norm decays like 1/lam; for profiles constant
in the transverse direction the ansatz solves the free wave equation
exactly and the remainder sits at the discretization floor.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .core import (BoundaryTrace, DomainConfig, Grid, PotentialField,
                   ScalarField, make_grid, norm, _trapezoid_weights)
from .solver import IbvpProblem, solve_ibvp, spatial_norm, trace_norm

__all__ = [
    "BumpProfile",
    "PlanarPulse",
    "ProbeSpec",
    "RemainderReport",
    "amplitude",
    "transport_residual",
    "check_support_condition",
    "probe_boundary_data",
    "extract_remainder",
    "remainder_decay_fit",
]

_SPHERE_AREA = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}


@lru_cache(maxsize=None)
def _bump_l2_constant(n: int) -> float:
    """L2(R^n) norm of exp(-1/(1-|z|^2)) restricted to the unit ball."""
    val, _ = quad(lambda s: np.exp(-2.0 / (1.0 - s * s)) * s ** (n - 1),
                  0.0, 1.0)
    return float(np.sqrt(_SPHERE_AREA[n] * val))


def _bump_shape(z2: np.ndarray) -> np.ndarray:
    """exp(-1/(1-|z|^2)) from |z|^2, zero outside the open unit ball."""
    out = np.zeros_like(z2, dtype=np.float64)
    inside = z2 < 1.0 - 1e-14
    t = z2[inside]
    out[inside] = np.exp(-1.0 / (1.0 - t))
    return out


@dataclass(frozen=True)
class BumpProfile:
    """Smooth radial bump supported on the closed ball B(center, eps),
    normalized so its L2(R^n) norm is 1 for every eps."""

    center: tuple[float, ...]
    eps: float

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if len(self.center) not in (2, 3):
            raise ValueError("center must have 2 or 3 components")

    @property
    def n(self) -> int:
        return len(self.center)

    def value(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        z = (pts - np.asarray(self.center)) / self.eps
        z2 = np.sum(z * z, axis=-1)
        scale = self.eps ** (-self.n / 2.0) / _bump_l2_constant(self.n)
        return scale * _bump_shape(z2)

    def grad(self, pts: np.ndarray) -> np.ndarray:
        """Analytic gradient; the chain-rule factor -2z/(1-|z|^2)^2 is
        damped to zero with the bump itself at the support edge."""
        pts = np.asarray(pts, dtype=np.float64)
        z = (pts - np.asarray(self.center)) / self.eps
        z2 = np.sum(z * z, axis=-1)
        base = _bump_shape(z2)
        denom = np.where(z2 < 1.0 - 1e-14, (1.0 - z2) ** 2, 1.0)
        factor = np.where(z2 < 1.0 - 1e-14, -2.0 / denom, 0.0) * base
        scale = self.eps ** (-self.n / 2.0 - 1.0) / _bump_l2_constant(self.n)
        return scale * factor[..., None] * z

    def h3_norm(self, samples: int = 256) -> float:
        """Spectral H^3(R^n) surrogate on a fine private box (diagnostic)."""
        n = self.n
        m = samples
        span = 2.4 * self.eps
        h = span / m
        axes = [np.arange(m) * h - span / 2.0 + c for c in self.center]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack(grids, axis=-1)
        vals = self.value(pts)
        spec = np.fft.fftn(vals) * h ** n
        freqs = [2.0 * np.pi * np.fft.fftfreq(m, d=h) for _ in range(n)]
        mesh = np.meshgrid(*freqs, indexing="ij")
        k2 = sum(f * f for f in mesh)
        cell = (2.0 * np.pi / (m * h)) ** n / (2.0 * np.pi) ** n
        return float(np.sqrt(np.sum((1.0 + k2) ** 3 * np.abs(spec) ** 2) * cell))


@dataclass(frozen=True)
class PlanarPulse:
    """Profile constant transverse to ``omega``: a 1D bump in the coordinate
    x.omega, centered at ``offset``, L2(R)-normalized in that coordinate.

    For this profile the probe ansatz solves the free wave equation exactly,
    which pins the numerical remainder to the discretization floor."""

    omega: tuple[float, float]
    offset: float
    eps: float

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        w = np.asarray(self.omega, dtype=np.float64)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise ValueError("omega must be a unit vector")

    @property
    def n(self) -> int:
        return 2

    def _coord(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        w = np.asarray(self.omega)
        return np.tensordot(pts, w, axes=([-1], [0])) - self.offset

    def value(self, pts: np.ndarray) -> np.ndarray:
        s = self._coord(pts) / self.eps
        scale = self.eps ** -0.5 / _bump_l2_constant(1)
        return scale * _bump_shape(s * s)

    def grad(self, pts: np.ndarray) -> np.ndarray:
        s = self._coord(pts) / self.eps
        s2 = s * s
        base = _bump_shape(s2)
        denom = np.where(s2 < 1.0 - 1e-14, (1.0 - s2) ** 2, 1.0)
        dg = np.where(s2 < 1.0 - 1e-14, -2.0 * s / denom, 0.0) * base
        scale = self.eps ** -1.5 / _bump_l2_constant(1)
        w = np.asarray(self.omega)
        return scale * dg[..., None] * w


@dataclass(frozen=True)
class ProbeSpec:
    """Probe parameters: profile, unit direction, frequency, phase sign."""

    bump: BumpProfile | PlanarPulse
    omega: tuple[float, float]
    lam: float
    sign: int = +1

    def __post_init__(self) -> None:
        w = np.asarray(self.omega, dtype=np.float64)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise ValueError("omega must be a unit vector")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.sign not in (+1, -1):
            raise ValueError("sign must be +1 or -1")
        if isinstance(self.bump, PlanarPulse):
            if np.max(np.abs(np.asarray(self.bump.omega) - w)) > 1e-12:
                raise ValueError("planar profile direction must match omega")


@dataclass(frozen=True)
class RemainderReport:
    """Norms of an extracted remainder and its end/boundary residuals."""

    l2_Q: float
    grad_l2_Q: float
    boundary_residual: float
    initial_or_final_residual: float


def _check_resolution(spec: ProbeSpec, cfg: DomainConfig) -> None:
    if spec.lam * cfg.dx > 0.5 * (1 + 1e-12):
        raise ValueError(
            f"probe frequency unresolved: lam*dx = {spec.lam * cfg.dx:.3g} "
            "exceeds 0.5")


def amplitude(spec: ProbeSpec, cfg: DomainConfig) -> ScalarField:
    """Sample the sliding amplitude a(t,x) = phi(x + t*omega) on the grid."""
    grid = make_grid(cfg)
    w = np.asarray(spec.omega)
    vals = np.empty((cfg.nt, cfg.nx, cfg.nx))
    X = np.stack(np.meshgrid(grid.x, grid.x, indexing="ij"), axis=-1)
    for i, t in enumerate(grid.t):
        vals[i] = spec.bump.value(X + t * w)
    return ScalarField(grid=grid, values=vals)


def transport_residual(spec: ProbeSpec, cfg: DomainConfig) -> float:
    """L2(Q) norm of (d/dt - omega.grad) applied to the sampled amplitude
    with centered differences; second-order small for smooth profiles."""
    a = amplitude(spec, cfg)
    g = a.grid
    d_t = np.gradient(a.values, g.dt, axis=0, edge_order=2)
    d_1 = np.gradient(a.values, g.dx, axis=1, edge_order=2)
    d_2 = np.gradient(a.values, g.dx, axis=2, edge_order=2)
    res = d_t - spec.omega[0] * d_1 - spec.omega[1] * d_2
    return norm(ScalarField(grid=g, values=res), "L2_Q")


def _square_gap(point: np.ndarray, L: float) -> float:
    """Euclidean distance from a point to the closed square [-L, L]^2."""
    d = np.maximum(np.abs(point) - L, 0.0)
    return float(np.hypot(d[0], d[1]))


def check_support_condition(spec: ProbeSpec, cfg: DomainConfig,
                            mode: str = "sharp") -> bool:
    """Whether the profile support avoids the domain as the mode requires.

    "sharp" needs supp(phi) disjoint from the closed square; "star"
    additionally needs both time-T translates supp(phi) -/+ T*omega
    disjoint from it; "whole" imposes nothing.
    """
    if mode not in ("star", "sharp", "whole"):
        raise ValueError("mode must be 'star', 'sharp', or 'whole'")
    if mode == "whole":
        return True
    w = np.asarray(spec.omega, dtype=np.float64)
    if isinstance(spec.bump, PlanarPulse):
        half = cfg.L * (np.abs(w[0]) + np.abs(w[1]))
        def clear(shift: float) -> bool:
            c = spec.bump.offset + shift
            return c - spec.bump.eps > half or c + spec.bump.eps < -half
    else:
        y = np.asarray(spec.bump.center, dtype=np.float64)
        def clear(shift: float) -> bool:
            return _square_gap(y + shift * w, cfg.L) > spec.bump.eps
    if not clear(0.0):
        return False
    if mode == "star":
        return clear(cfg.T) and clear(-cfg.T)
    return True


def _spatial_phase(spec: ProbeSpec, grid: Grid) -> np.ndarray:
    X1, X2 = np.meshgrid(grid.x, grid.x, indexing="ij")
    xw = X1 * spec.omega[0] + X2 * spec.omega[1]
    return np.exp(1j * spec.sign * spec.lam * xw)


def _ansatz_values(spec: ProbeSpec, grid: Grid) -> np.ndarray:
    """Complex ansatz a * exp(i*s*lam*(x.w + t)) sampled on the grid."""
    w = np.asarray(spec.omega)
    phase_x = _spatial_phase(spec, grid)
    X = np.stack(np.meshgrid(grid.x, grid.x, indexing="ij"), axis=-1)
    vals = np.empty((grid.cfg.nt, grid.cfg.nx, grid.cfg.nx),
                    dtype=np.complex128)
    for i, t in enumerate(grid.t):
        a = spec.bump.value(X + t * w)
        vals[i] = a * phase_x * np.exp(1j * spec.sign * spec.lam * t)
    return vals


def _ansatz_time_derivative(spec: ProbeSpec, grid: Grid, t: float) -> np.ndarray:
    """Analytic d/dt of the ansatz at one time level."""
    w = np.asarray(spec.omega)
    X = np.stack(np.meshgrid(grid.x, grid.x, indexing="ij"), axis=-1)
    pts = X + t * w
    a = spec.bump.value(pts)
    a_t = np.tensordot(spec.bump.grad(pts), w, axes=([-1], [0]))
    phase = _spatial_phase(spec, grid) * np.exp(1j * spec.sign * spec.lam * t)
    return (a_t + 1j * spec.sign * spec.lam * a) * phase


def ansatz_state(spec: ProbeSpec, grid: Grid, t: float
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ansatz value and time derivative at one time level."""
    w = np.asarray(spec.omega)
    X = np.stack(np.meshgrid(grid.x, grid.x, indexing="ij"), axis=-1)
    a = spec.bump.value(X + t * w)
    phase = _spatial_phase(spec, grid) * np.exp(1j * spec.sign * spec.lam * t)
    return a * phase, _ansatz_time_derivative(spec, grid, t)


def probe_boundary_data(spec: ProbeSpec, cfg: DomainConfig,
                        mode: str = "sharp") -> BoundaryTrace:
    """Dirichlet trace of the probe ansatz on the lateral boundary.

    Raises when the mode's support condition fails; in the modes with a
    support condition the t=0 row then vanishes, matching zero initial data.
    """
    _check_resolution(spec, cfg)
    if not check_support_condition(spec, cfg, mode):
        raise ValueError(f"support condition violated for mode '{mode}'")
    grid = make_grid(cfg)
    w = np.asarray(spec.omega)
    pts = grid.edge_points
    xw = pts @ w
    vals = np.empty((cfg.nt, grid.n_edge), dtype=np.complex128)
    for i, t in enumerate(grid.t):
        a = spec.bump.value(pts + t * w)
        vals[i] = a * np.exp(1j * spec.sign * spec.lam * (xw + t))
    return BoundaryTrace(grid=grid, values=vals, kind="dirichlet")


def _end_residual(R: np.ndarray, grid: Grid, at_start: bool) -> float:
    """|R| + |discrete dR/dt| at the end where the remainder was pinned."""
    dt = grid.dt
    if at_start:
        val = R[0]
        dval = (-3.0 * R[0] + 4.0 * R[1] - R[2]) / (2.0 * dt)
    else:
        val = R[-1]
        dval = (3.0 * R[-1] - 4.0 * R[-2] + R[-3]) / (2.0 * dt)
    return (spatial_norm(val, grid, "L2_Omega")
            + spatial_norm(dval, grid, "L2_Omega"))


def extract_remainder(q: PotentialField | None, spec: ProbeSpec,
                      cfg: DomainConfig, mode: str = "sharp",
                      use_compiled: bool | None = None,
                      ) -> tuple[ScalarField, RemainderReport]:
    """Solve with the probe's boundary data and subtract the ansatz.

    Sign +1 solves forward with end data matched at t=0; sign -1 solves the
    time-reversed problem (the equation keeps its form under t -> T-t) with
    end data matched at t=T.  When the mode carries a support condition the
    matched end data is identically zero on the domain.
    """
    _check_resolution(spec, cfg)
    if not check_support_condition(spec, cfg, mode):
        raise ValueError(f"support condition violated for mode '{mode}'")
    grid = make_grid(cfg)
    ansatz = _ansatz_values(spec, grid)
    if spec.sign == +1:
        f_vals = ansatz[:, grid.edge_rows, grid.edge_cols]
        u0 = ansatz[0]
        u1 = _ansatz_time_derivative(spec, grid, 0.0)
        f = BoundaryTrace(grid=grid, values=f_vals, kind="dirichlet")
        out = solve_ibvp(IbvpProblem(f=f, q=q, u0=u0, u1=u1),
                         keep_field=True, use_compiled=use_compiled)
        u_num = out.field.values
    else:
        rev = ansatz[::-1]
        f_vals = rev[:, grid.edge_rows, grid.edge_cols]
        u0 = rev[0]
        u1 = -_ansatz_time_derivative(spec, grid, cfg.T)
        q_rev = None
        if q is not None:
            q_rev = PotentialField(
                field=ScalarField(grid=grid, values=q.values[::-1]),
                bound=q.bound)
        f = BoundaryTrace(grid=grid, values=f_vals, kind="dirichlet")
        out = solve_ibvp(IbvpProblem(f=f, q=q_rev, u0=u0, u1=u1),
                         keep_field=True, use_compiled=use_compiled)
        u_num = out.field.values[::-1]
    R = u_num - ansatz
    del ansatz, u_num, out
    R_field = ScalarField(grid=grid, values=R)
    R = R_field.values
    grad_sq = np.abs(np.gradient(R, grid.dt, axis=0)) ** 2
    for axis, h in ((1, grid.dx), (2, grid.dx)):
        grad_sq += np.abs(np.gradient(R, h, axis=axis)) ** 2
    wt = _trapezoid_weights(cfg.nt) * grid.dt
    wx = _trapezoid_weights(cfg.nx) * grid.dx
    grad_l2 = float(np.sqrt(np.einsum("i,j,k,ijk->", wt, wx, wx, grad_sq)))
    bnd = BoundaryTrace(grid=grid,
                        values=R[:, grid.edge_rows, grid.edge_cols],
                        kind="dirichlet")
    report = RemainderReport(
        l2_Q=norm(R_field, "L2_Q"),
        grad_l2_Q=grad_l2,
        boundary_residual=trace_norm(bnd, "L2_Sigma"),
        initial_or_final_residual=_end_residual(
            R, grid, at_start=(spec.sign == +1)))
    return R_field, report


def remainder_decay_fit(q: PotentialField | None, specs: list[ProbeSpec],
                        cfg, mode: str = "sharp",
                        use_compiled: bool | None = None) -> float:
    """Least-squares slope of log |R| against log lam over a probe family.

    ``cfg`` may be one configuration or a sequence matched to ``specs`` (a
    finer grid per frequency keeps dispersion error from flooring the decay).
    When ``q`` is callable it is invoked on each configuration.
    """
    if len(specs) < 3:
        raise ValueError("need at least 3 frequencies to fit a slope")
    cfgs = list(cfg) if isinstance(cfg, (list, tuple)) else [cfg] * len(specs)
    if len(cfgs) != len(specs):
        raise ValueError("one cfg or one per spec")
    lams = []
    norms = []
    for spec, c in zip(specs, cfgs):
        qc = q(c) if callable(q) else q
        _, rep = extract_remainder(qc, spec, c, mode=mode,
                                   use_compiled=use_compiled)
        lams.append(spec.lam)
        norms.append(rep.l2_Q)
    coeffs = np.polyfit(np.log(np.asarray(lams)),
                        np.log(np.asarray(norms)), 1)
    return float(coeffs[0])
