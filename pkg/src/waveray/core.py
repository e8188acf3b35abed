"""Space-time grids, scalar fields, discrete norms, and field persistence.

Everything downstream works on a uniform grid over the space-time cylinder
[0, T] x [-L, L]^2.  The boundary of the square is stored once as a flat,
side-ordered list of edge nodes so Dirichlet data and Neumann traces share a
single layout.  Norms are trapezoidal-rule surrogates of their continuum
counterparts; the negative-order Sobolev norm is evaluated spectrally on a
zero-padded box.
"""
from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass, field as dataclass_field

import numpy as np

__all__ = [
    "DomainConfig",
    "Grid",
    "ScalarField",
    "PotentialField",
    "BoundaryTrace",
    "FinalState",
    "make_grid",
    "norm",
    "hminus1_norm",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class DomainConfig:
    """Geometry and sampling of the space-time cylinder.

    ``L`` is the half-side of the square spatial domain, ``r`` the radius
    parameter tying the domain to the ball B(0, r/2) that the causal-cone
    geometry is built around, ``T`` the final time.  ``nx`` and ``nt`` are
    samples per spatial axis and in time.  ``n`` is the spatial dimension;
    the solver is restricted to n = 2, ray and spectral helpers accept 2 or 3.
    """

    L: float
    r: float
    T: float
    nx: int
    nt: int
    n: int = 2

    def validate(self) -> None:
        """Raise ValueError naming the first violated geometric invariant."""
        if not self.L * np.sqrt(2.0) < self.r / 2.0:
            raise ValueError("Ω not inside B(0,r/2)")
        if not self.T > 4.0 * np.sqrt(2.0) * self.L:
            raise ValueError("T ≤ 2 Diam(Ω)")
        if not self.T > 2.0 * self.r:
            raise ValueError("T ≤ 2r")
        if self.nx < 3 or self.nt < 3:
            raise ValueError("nx and nt must be at least 3")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.T / (self.nt - 1)


@dataclass(frozen=True)
class Grid:
    """Uniform grid handle produced by :func:`make_grid`.

    Boundary nodes of the square are flattened in a fixed, side-ordered
    layout of length 4*nx - 4:

    * slots ``0 .. nx-1``:        edge x1 = -L, sweeping x2 from -L to L;
    * slots ``nx .. 2nx-1``:      edge x1 = +L, same sweep;
    * slots ``2nx .. 3nx-3``:     edge x2 = -L, x1 from -L+dx to L-dx;
    * slots ``3nx-2 .. 4nx-5``:   edge x2 = +L, same interior sweep.

    The four corners appear exactly once (inside the two x1 edges) and are
    flagged in ``corner_mask``; boundary quadrature uses the uniform closed
    trapezoid weight dx per slot, so the total boundary measure is exactly 8L.
    """

    cfg: DomainConfig
    t: np.ndarray
    x: np.ndarray
    edge_rows: np.ndarray
    edge_cols: np.ndarray
    edge_side: np.ndarray
    edge_points: np.ndarray
    corner_mask: np.ndarray

    @property
    def dx(self) -> float:
        return self.cfg.dx

    @property
    def dt(self) -> float:
        return self.cfg.dt

    @property
    def n_edge(self) -> int:
        return 4 * self.cfg.nx - 4

    def extract_edge(self, values2d: np.ndarray) -> np.ndarray:
        """Flatten the boundary nodes of an (nx, nx) array into edge order."""
        return values2d[self.edge_rows, self.edge_cols]

    def scatter_edge(self, edge_values: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`extract_edge`; interior nodes are set to zero."""
        nx = self.cfg.nx
        out = np.zeros((nx, nx), dtype=np.asarray(edge_values).dtype)
        out[self.edge_rows, self.edge_cols] = edge_values
        return out


def make_grid(cfg: DomainConfig) -> Grid:
    """Validate ``cfg`` and build the uniform grid with its edge layout.

    dx = 2L/(nx-1) and dt = T/(nt-1).  Any violated geometric invariant is
    rejected with a named error.
    """
    cfg.validate()
    if cfg.n != 2:
        raise ValueError("only n=2 grids are supported")
    nx = cfg.nx
    t = np.linspace(0.0, cfg.T, cfg.nt)
    x = np.linspace(-cfg.L, cfg.L, nx)
    interior = np.arange(1, nx - 1)
    edge_rows = np.concatenate([
        np.zeros(nx, dtype=np.intp),
        np.full(nx, nx - 1, dtype=np.intp),
        interior,
        interior,
    ])
    edge_cols = np.concatenate([
        np.arange(nx, dtype=np.intp),
        np.arange(nx, dtype=np.intp),
        np.zeros(nx - 2, dtype=np.intp),
        np.full(nx - 2, nx - 1, dtype=np.intp),
    ])
    edge_side = np.concatenate([
        np.zeros(nx, dtype=np.intp),
        np.ones(nx, dtype=np.intp),
        np.full(nx - 2, 2, dtype=np.intp),
        np.full(nx - 2, 3, dtype=np.intp),
    ])
    corner_mask = np.zeros(4 * nx - 4, dtype=bool)
    corner_mask[[0, nx - 1, nx, 2 * nx - 1]] = True
    edge_points = np.column_stack([x[edge_rows], x[edge_cols]])
    for arr in (t, x, edge_rows, edge_cols, edge_side, edge_points, corner_mask):
        arr.setflags(write=False)
    return Grid(cfg=cfg, t=t, x=x, edge_rows=edge_rows, edge_cols=edge_cols,
                edge_side=edge_side, edge_points=edge_points,
                corner_mask=corner_mask)


def _freeze(values: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(values)
    if out is values:
        out = values.copy()
    out.setflags(write=False)
    return out


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class ScalarField:
    """Samples of a space-time function, indexed (time, x1, x2).

    ``kind`` is "real" or "complex" and always agrees with the dtype of
    ``values`` (float64 / complex128).  Arrays are frozen after construction.
    """

    grid: Grid
    values: np.ndarray
    kind: str = dataclass_field(init=False)

    def __post_init__(self) -> None:
        cfg = self.grid.cfg
        values = np.asarray(self.values)
        if values.shape != (cfg.nt, cfg.nx, cfg.nx):
            raise ValueError(
                f"field shape {values.shape} does not match grid "
                f"({cfg.nt}, {cfg.nx}, {cfg.nx})")
        if np.iscomplexobj(values):
            values = values.astype(np.complex128, copy=False)
            kind = "complex"
        else:
            values = values.astype(np.float64, copy=False)
            kind = "real"
        _check_finite(values, "field")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "kind", kind)


@dataclass(frozen=True)
class PotentialField:
    """A real lower-order coefficient with a sup-norm budget.

    ``bound`` is the admissibility budget M with ||q||_inf <= M enforced at
    construction; ``background`` optionally carries the reference potential
    the admissible-set predicates compare against.
    """

    field: ScalarField
    bound: float
    background: "PotentialField | None" = None

    def __post_init__(self) -> None:
        if self.field.kind != "real":
            raise ValueError("potential must be real valued")
        if self.bound <= 0:
            raise ValueError("bound M must be positive")
        sup = float(np.max(np.abs(self.field.values))) if self.field.values.size else 0.0
        if sup > self.bound * (1 + 1e-12):
            raise ValueError("potential sup norm exceeds the bound M")

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def grid(self) -> Grid:
        return self.field.grid


@dataclass(frozen=True)
class BoundaryTrace:
    """Side-ordered samples on the lateral boundary, shape (nt, 4*nx - 4).

    ``kind`` records whether the samples are Dirichlet values or outward
    normal derivatives ("dirichlet" / "neumann").  Values may be real or
    complex.
    """

    grid: Grid
    values: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError("kind must be 'dirichlet' or 'neumann'")
        cfg = self.grid.cfg
        values = np.asarray(self.values)
        if values.shape != (cfg.nt, 4 * cfg.nx - 4):
            raise ValueError(
                f"trace shape {values.shape} does not match "
                f"({cfg.nt}, {4 * cfg.nx - 4})")
        if np.iscomplexobj(values):
            values = values.astype(np.complex128, copy=False)
        else:
            values = values.astype(np.float64, copy=False)
        _check_finite(values, "trace")
        object.__setattr__(self, "values", _freeze(values))


@dataclass(frozen=True)
class FinalState:
    """Snapshot (u(T), du/dt(T)) on the spatial grid, both shape (nx, nx)."""

    u_T: np.ndarray
    ut_T: np.ndarray

    def __post_init__(self) -> None:
        u_T = np.asarray(self.u_T)
        ut_T = np.asarray(self.ut_T)
        if u_T.shape != ut_T.shape or u_T.ndim != 2 or u_T.shape[0] != u_T.shape[1]:
            raise ValueError("final state arrays must both be (nx, nx)")
        _check_finite(u_T, "final state")
        _check_finite(ut_T, "final state")
        object.__setattr__(self, "u_T", _freeze(u_T))
        object.__setattr__(self, "ut_T", _freeze(ut_T))


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def norm(field: ScalarField, which: str, t_index: int | None = None) -> float:
    """Trapezoidal discrete norm of a field.

    ``which`` selects L2_Q (space-time L2), Linf_Q (max modulus),
    L2_Omega_at_t (spatial L2 of the slice ``t_index``), or H1_Q (L2 of the
    field and its three first finite-difference derivatives combined).
    """
    g = field.grid
    v = field.values
    wt = _trapezoid_weights(g.cfg.nt) * g.dt
    wx = _trapezoid_weights(g.cfg.nx) * g.dx
    if which == "L2_Q":
        sq = np.abs(v) ** 2
        return float(np.sqrt(np.einsum("i,j,k,ijk->", wt, wx, wx, sq)))
    if which == "Linf_Q":
        return float(np.max(np.abs(v)))
    if which == "L2_Omega_at_t":
        if t_index is None:
            raise ValueError("L2_Omega_at_t requires t_index")
        sq = np.abs(v[t_index]) ** 2
        return float(np.sqrt(np.einsum("j,k,jk->", wx, wx, sq)))
    if which == "H1_Q":
        dv_t, dv_1, dv_2 = np.gradient(v, g.dt, g.dx, g.dx)
        sq = (np.abs(v) ** 2 + np.abs(dv_t) ** 2
              + np.abs(dv_1) ** 2 + np.abs(dv_2) ** 2)
        return float(np.sqrt(np.einsum("i,j,k,ijk->", wt, wx, wx, sq)))
    raise ValueError(f"unknown norm {which!r}")


def hminus1_norm(q: "PotentialField | ScalarField", pad: int = 2) -> float:
    """Spectrally weighted negative-order norm of a zero-extended field.

    The field is extended by zero onto a box ``pad`` times larger per axis,
    transformed with physical frequency scaling, and the squared spectrum is
    integrated against the weight 1/(1 + tau^2 + |xi|^2) in the
    (2*pi)^-(n+1)-normalized frequency measure, matching the convention in
    which the weighted norm never exceeds the plain L2 norm.
    """
    if pad < 2:
        raise ValueError("pad must be at least 2 (aliasing risk)")
    f = q.field if isinstance(q, PotentialField) else q
    g = f.grid
    nt, nx = g.cfg.nt, g.cfg.nx
    mt, mx = pad * nt, pad * nx
    spec = np.fft.fftn(f.values, s=(mt, mx, mx), axes=(0, 1, 2))
    tau = 2.0 * np.pi * np.fft.fftfreq(mt, d=g.dt)
    xi = 2.0 * np.pi * np.fft.fftfreq(mx, d=g.dx)
    weight = 1.0 / (1.0 + tau[:, None, None] ** 2
                    + xi[None, :, None] ** 2 + xi[None, None, :] ** 2)
    amp2 = np.abs(spec) ** 2 * (g.dt * g.dx * g.dx) ** 2
    dtau = 2.0 * np.pi / (mt * g.dt)
    dxi = 2.0 * np.pi / (mx * g.dx)
    cell = dtau * dxi * dxi / (2.0 * np.pi) ** 3
    return float(np.sqrt(np.sum(weight * amp2) * cell))


_FIELD_MAGIC = b"RWF1"
_path_locks: dict[str, threading.Lock] = {}
_path_locks_guard = threading.Lock()


def _path_lock(path: str | os.PathLike) -> threading.Lock:
    key = os.path.abspath(os.fspath(path))
    with _path_locks_guard:
        return _path_locks.setdefault(key, threading.Lock())


def save_field(field: "ScalarField | PotentialField", path: str | os.PathLike) -> None:
    """Write a field in the RWF1 binary layout (lossless, little endian)."""
    f = field.field if isinstance(field, PotentialField) else field
    v = f.values
    kind_code = 1 if f.kind == "complex" else 0
    header = _FIELD_MAGIC + struct.pack("<BBBB", 1, kind_code, v.ndim, 0)
    header += struct.pack(f"<{v.ndim}Q", *v.shape)
    header += struct.pack("<dd", f.grid.dx, f.grid.dt)
    if kind_code:
        payload = np.ascontiguousarray(v, dtype="<c16").view("<f8").tobytes()
    else:
        payload = np.ascontiguousarray(v, dtype="<f8").tobytes()
    with _path_lock(path):
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)


def load_field(path: str | os.PathLike, cfg: DomainConfig | None = None) -> ScalarField:
    """Read an RWF1 file back into a :class:`ScalarField`.

    The header stores only the sample counts and spacings, so unless ``cfg``
    is supplied a compatible :class:`DomainConfig` is synthesized: T and L
    are exact from the stored spacings and r is placed mid-way through its
    admissible interval (2*sqrt(2)*L, T/2).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _FIELD_MAGIC:
        raise ValueError("bad magic")
    if len(raw) < 8:
        raise ValueError("truncated payload")
    version, kind_code, ndim, _ = struct.unpack("<BBBB", raw[4:8])
    if version != 1:
        raise ValueError("unsupported version")
    if kind_code not in (0, 1):
        raise ValueError("unknown field kind")
    off = 8
    if len(raw) < off + 8 * ndim + 16:
        raise ValueError("truncated payload")
    dims = struct.unpack(f"<{ndim}Q", raw[off:off + 8 * ndim])
    off += 8 * ndim
    dx, dt = struct.unpack("<dd", raw[off:off + 16])
    off += 16
    count = int(np.prod(dims)) * (2 if kind_code else 1)
    if len(raw) < off + 8 * count:
        raise ValueError("truncated payload")
    flat = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    if kind_code:
        values = flat.view("<c16").reshape(dims).astype(np.complex128)
    else:
        values = flat.reshape(dims).astype(np.float64)
    if ndim != 3 or dims[1] != dims[2]:
        raise ValueError("stored field is not a (nt, nx, nx) block")
    nt, nx = int(dims[0]), int(dims[1])
    if cfg is None:
        T = (nt - 1) * dt
        L = (nx - 1) * dx / 2.0
        r = 0.5 * (2.0 * np.sqrt(2.0) * L + T / 2.0)
        cfg = DomainConfig(L=L, r=r, T=T, nx=nx, nt=nt)
    else:
        if (cfg.nt, cfg.nx) != (nt, nx) or not (
                np.isclose(cfg.dx, dx) and np.isclose(cfg.dt, dt)):
            raise ValueError("config does not match stored dims/spacings")
    return ScalarField(grid=make_grid(cfg), values=values)
