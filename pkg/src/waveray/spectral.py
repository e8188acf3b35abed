"""Fourier-cone assembly and band-limited reconstruction of a potential.

The ray transform of a space-time potential determines its space-time
Fourier transform on the cone |tau| <= |xi|: the value at (tau, xi) equals
the transform of the sinogram row in the direction omega with
omega . xi = tau.  This module computes reference spectra directly from
known potentials, assembles spectra from sinograms, and inverts truncated
spectra back to potentials with explicit fill policies outside the cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from scipy.special import j0

from .core import DomainConfig, PotentialField, ScalarField, hminus1_norm, make_grid, norm
from .probes import _bump_shape
from .rays import RaySinogram

__all__ = [
    "omega_for",
    "SpectralCube",
    "direct_spacetime_fft",
    "fourier_from_sinogram",
    "reconstruct",
    "ReconstructionErrors",
    "error_report",
]


def omega_for(tau: float, xi, zeta=None) -> np.ndarray:
    """Unit direction omega with omega . xi = tau, for |tau| <= |xi|.

    omega = (tau/|xi|^2) xi + sqrt(1 - tau^2/|xi|^2) zeta with zeta a unit
    vector orthogonal to xi.  In two dimensions zeta defaults to the
    counterclockwise perpendicular of xi; in higher dimensions it must be
    supplied.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or xi.shape[0] < 2:
        raise ValueError("xi must be a vector of dimension >= 2")
    nxi2 = float(xi @ xi)
    if nxi2 == 0.0:
        raise ValueError("xi must be nonzero")
    if tau * tau > nxi2 * (1.0 + 1e-14):
        raise ValueError("|tau| exceeds |xi|: the pair lies outside the "
                         "light cone and has no characteristic direction")
    if zeta is None:
        if xi.shape[0] != 2:
            raise ValueError("zeta is required in dimension > 2")
        zeta = np.array([-xi[1], xi[0]]) / math.sqrt(nxi2)
    else:
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != xi.shape:
            raise ValueError("zeta must have the same dimension as xi")
        if abs(float(zeta @ zeta) - 1.0) > 1e-12:
            raise ValueError("zeta must be a unit vector")
        if abs(float(zeta @ xi)) > 1e-12 * math.sqrt(nxi2):
            raise ValueError("zeta must be orthogonal to xi")
    rad = max(0.0, 1.0 - tau * tau / nxi2)
    return (tau / nxi2) * xi + math.sqrt(rad) * zeta


def _shifted_freqs(m: int, d: float) -> np.ndarray:
    return 2.0 * math.pi * np.fft.fftshift(np.fft.fftfreq(m, d=d))


def _cone_mask(taus: np.ndarray, xis: np.ndarray) -> np.ndarray:
    absxi = np.sqrt(xis[None, :, None] ** 2 + xis[None, None, :] ** 2)
    return np.abs(taus[:, None, None]) <= absxi + 1e-15


@dataclass(frozen=True)
class SpectralCube:
    """3d space-time spectrum samples of a potential on a padded lattice.

    taus/xis are the (fftshift-ordered, ascending) frequency axes; values
    has shape (len(taus), len(xis), len(xis)); cone_mask marks |tau| <=
    |xi|; alpha records the band limit the values are trusted on (None
    means the full lattice).  cfg/pad tie the lattice to the originating
    grid so the cube can be inverted.
    """

    taus: np.ndarray
    xis: np.ndarray
    values: np.ndarray
    cone_mask: np.ndarray
    cfg: DomainConfig
    pad: int
    alpha: float | None = None

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(np.asarray(self.taus, dtype=float))
        x = np.ascontiguousarray(np.asarray(self.xis, dtype=float))
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.complex128))
        m = np.ascontiguousarray(np.asarray(self.cone_mask, dtype=bool))
        if v.shape != (t.size, x.size, x.size):
            raise ValueError("values shape does not match frequency axes")
        if m.shape != v.shape:
            raise ValueError("cone_mask shape does not match values")
        if not (np.all(np.diff(t) > 0) and np.all(np.diff(x) > 0)):
            raise ValueError("frequency axes must be strictly increasing")
        if not np.all(np.isfinite(v.view(np.float64))):
            raise ValueError("non-finite spectrum values")
        expected = _cone_mask(t, x)
        if np.any(m != expected):
            raise ValueError("cone_mask inconsistent with |tau| <= |xi|")
        herm = _hermitian_defect(t, x, v)
        scale = float(np.max(np.abs(v))) or 1.0
        if herm > 1e-8 * scale:
            raise ValueError(
                f"values are not Hermitian-symmetric: defect {herm:.3g} "
                f"exceeds 1e-8 * {scale:.3g}")
        for a in (t, x, v, m):
            a.setflags(write=False)
        object.__setattr__(self, "taus", t)
        object.__setattr__(self, "xis", x)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "cone_mask", m)


def _mirror_index(freqs: np.ndarray) -> np.ndarray:
    """Index of -f for each f on a shifted lattice; -1 where unpaired."""
    m = freqs.size
    idx = np.full(m, -1, dtype=np.int64)
    tol = 1e-9 * (freqs[1] - freqs[0] if m > 1 else 1.0)
    lookup = {round(float(f) / (freqs[1] - freqs[0])): i
              for i, f in enumerate(freqs)} if m > 1 else {0: 0}
    step = freqs[1] - freqs[0] if m > 1 else 1.0
    for i, f in enumerate(freqs):
        j = lookup.get(round(float(-f) / step))
        if j is not None and abs(freqs[j] + f) <= tol:
            idx[i] = j
    return idx


def _hermitian_defect(taus, xis, v) -> float:
    it = _mirror_index(taus)
    ix = _mirror_index(xis)
    ok_t = it >= 0
    ok_x = ix >= 0
    sel_t = np.where(ok_t)[0]
    sel_x = np.where(ok_x)[0]
    if sel_t.size == 0 or sel_x.size == 0:
        return 0.0
    sub = v[np.ix_(sel_t, sel_x, sel_x)]
    mir = v[np.ix_(it[sel_t], ix[sel_x], ix[sel_x])]
    return float(np.max(np.abs(sub - np.conj(mir))))


def _phase_correction(xis: np.ndarray, L: float) -> np.ndarray:
    """exp(-i xi . x0) factors for the spatial origin x0 = (-L, -L)."""
    p = np.exp(1j * L * xis)
    return p[:, None] * p[None, :]


def direct_spacetime_fft(q: PotentialField | ScalarField,
                         pad: int = 2) -> SpectralCube:
    """Space-time Fourier transform of a potential by zero-padded FFT.

    Physical normalization: values approximate
    integral of q(t, x) exp(-i (tau t + xi . x)) dt dx with the time origin
    at t = 0 and the spatial origin at the domain corner (-L, -L).
    """
    if pad < 2:
        raise ValueError("pad must be at least 2 (aliasing risk)")
    field = q.field if isinstance(q, PotentialField) else q
    if field.kind != "real":
        raise ValueError("spectrum is defined for real potentials")
    cfg = field.grid.cfg
    mt, mx = pad * cfg.nt, pad * cfg.nx
    buf = np.zeros((mt, mx, mx))
    buf[:cfg.nt, :cfg.nx, :cfg.nx] = field.values
    spec = np.fft.fftn(buf) * (cfg.dt * cfg.dx * cfg.dx)
    spec = np.fft.fftshift(spec)
    taus = _shifted_freqs(mt, cfg.dt)
    xis = _shifted_freqs(mx, cfg.dx)
    spec *= _phase_correction(xis, cfg.L)[None, :, :]
    return SpectralCube(taus=taus, xis=xis, values=spec,
                        cone_mask=_cone_mask(taus, xis), cfg=cfg, pad=pad,
                        alpha=None)


def _direction_angles(directions: np.ndarray) -> np.ndarray:
    return np.arctan2(directions[:, 1], directions[:, 0])


def _mollifier_transfer(k: np.ndarray, eps: float) -> np.ndarray:
    """Transfer function of the probe's transverse smearing window.

    A probed sinogram approximates the ray transform convolved (in the 2d
    offset plane) with the square of the radial probe profile; this is that
    window's radial Fourier transform, normalized to unit gain at k = 0, so
    dividing assembled modes by it undoes the smearing inside the band.
    """
    s = (np.arange(256) + 0.5) / 256.0
    w = _bump_shape(s * s) ** 2 * s
    w = w / w.sum()
    k = np.asarray(k, dtype=float)
    return (j0(np.outer(k.ravel(), eps * s)) @ w).reshape(k.shape)


def fourier_from_sinogram(s: RaySinogram, cfg: DomainConfig, pad: int = 2,
                          tbar: float | None = None,
                          support_radius: float | None = None,
                          kmax: float | None = None,
                          deconvolve: bool | str = "auto") -> SpectralCube:
    """Assemble the cone part of the spectrum from a sinogram.

    For each lattice point (tau, xi) inside the cone and inside radius
    kmax, transforms the offset variable of the sinogram at the two
    directions bracketing omega(tau, xi) and interpolates linearly in
    angle.  Interpolation acts on demodulated values (a factor
    exp(i tau_c tbar) with tau_c = omega_c . xi removed, tbar defaulting
    to T/2) so that a difference concentrated near time tbar varies slowly
    across directions.

    The direction grid must satisfy the angular Nyquist condition
    gap * kmax * support_radius <= 0.9, where gap is the largest angular
    spacing and support_radius bounds the offset spread of the nonzero
    sinogram content around its demodulation center; support_radius
    defaults to the largest |y| carrying a nonzero value.

    ``deconvolve`` divides each assembled mode by the probe's transverse
    smearing window (gain capped at 5) to undo the mollifier blur;
    "auto" applies it exactly when the sinogram was estimated by probing
    (oracle sinograms carry no smearing).
    """
    if pad < 2:
        raise ValueError("pad must be at least 2 (aliasing risk)")
    if tbar is None:
        tbar = cfg.T / 2.0
    dirs = np.asarray(s.directions, dtype=float)
    offs = np.asarray(s.offsets, dtype=float)
    vals = np.asarray(s.values).real
    nd = dirs.shape[0]
    if nd < 3:
        raise ValueError("need at least 3 directions to interpolate")

    angles = _direction_angles(dirs)
    order = np.argsort(angles)
    angles = angles[order]
    vals = vals[order]
    dirs_sorted = dirs[order]

    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * math.pi]]))
    gap = float(np.max(gaps))

    if support_radius is None:
        nz = np.any(np.abs(vals) > 0, axis=0)
        if not np.any(nz):
            support_radius = 1.0
        else:
            support_radius = float(np.max(np.hypot(offs[nz, 0],
                                                   offs[nz, 1])))
            support_radius = max(support_radius, 1e-9)

    mt, mx = pad * cfg.nt, pad * cfg.nx
    taus = _shifted_freqs(mt, cfg.dt)
    xis = _shifted_freqs(mx, cfg.dx)
    k_lattice = min(float(np.max(np.abs(taus))), float(np.max(np.abs(xis))))
    k_nyq = 0.9 / (gap * support_radius)
    if kmax is None:
        kmax = min(k_nyq, k_lattice)
    elif kmax > k_nyq * (1.0 + 1e-12):
        raise ValueError(
            f"direction grid too coarse for the requested band: largest "
            f"angular gap {gap:.4g} with offset radius "
            f"{support_radius:.4g} supports |k| <= {k_nyq:.4g} < {kmax:.4g}")

    # offset-cell weight: offsets are samples of a uniform lattice
    def lattice_step(coord: np.ndarray) -> float:
        u = np.unique(coord)
        if u.size < 2:
            raise ValueError("offsets must span a 2d lattice")
        d = np.diff(u)
        step = float(np.min(d))
        if np.any(np.abs(d / step - np.round(d / step)) > 1e-6):
            raise ValueError("offsets do not lie on a regular lattice")
        return step
    wy = lattice_step(offs[:, 0]) * lattice_step(offs[:, 1])

    spec = np.zeros((mt, mx, mx), dtype=np.complex128)
    filled = np.zeros((mt, mx, mx), dtype=bool)

    cone = _cone_mask(taus, xis)
    rho = np.sqrt(taus[:, None, None] ** 2 + xis[None, :, None] ** 2
                  + xis[None, None, :] ** 2)
    todo = cone & (rho <= kmax * (1.0 + 1e-12))
    it, ia, ib = np.nonzero(todo)

    # cache the offset transform per (direction, xi) pair
    cache: dict[tuple[int, int, int], complex] = {}

    def row_transform(di: int, xi_vec: np.ndarray, key: tuple[int, int]
                      ) -> complex:
        ck = (di, key[0], key[1])
        got = cache.get(ck)
        if got is None:
            phase = np.exp(-1j * (offs[:, 0] * xi_vec[0]
                                  + offs[:, 1] * xi_vec[1]))
            got = complex(np.sum(vals[di] * phase) * wy)
            cache[ck] = got
        return got

    two_pi = 2.0 * math.pi
    for t_i, a_i, b_i in zip(it, ia, ib):
        tau = taus[t_i]
        xi = np.array([xis[a_i], xis[b_i]])
        nxi = math.hypot(xi[0], xi[1])
        if nxi == 0.0:
            # only (tau, xi) = 0 lies in the cone on this axis: average the
            # total mass over all directions
            mass = np.mean([row_transform(i, xi, (a_i, b_i))
                            for i in range(nd)])
            spec[t_i, a_i, b_i] = mass
            filled[t_i, a_i, b_i] = True
            continue
        w_star = omega_for(min(max(tau, -nxi), nxi), xi)
        th = math.atan2(w_star[1], w_star[0])
        # bracketing directions on the circle
        j = int(np.searchsorted(angles, th))
        j0 = (j - 1) % nd
        j1 = j % nd
        th0 = angles[j0]
        th1 = angles[j1]
        span = (th1 - th0) % two_pi
        frac = ((th - th0) % two_pi) / span if span > 0 else 0.0
        g0 = row_transform(j0, xi, (a_i, b_i))
        g1 = row_transform(j1, xi, (a_i, b_i))
        t0 = float(dirs_sorted[j0] @ xi)
        t1 = float(dirs_sorted[j1] @ xi)
        w0 = g0 * np.exp(1j * t0 * tbar)
        w1 = g1 * np.exp(1j * t1 * tbar)
        w = (1.0 - frac) * w0 + frac * w1
        spec[t_i, a_i, b_i] = w * np.exp(-1j * tau * tbar)
        filled[t_i, a_i, b_i] = True

    if deconvolve == "auto":
        deconvolve = (str(s.mode_tag).startswith("estimated")
                      and float(np.max(s.eps)) > 0.0)
    if deconvolve:
        eps_diag = np.asarray(s.eps, dtype=float)
        probed = eps_diag > 0.0
        if not np.any(probed):
            raise ValueError("deconvolution requested on a sinogram with "
                             "no probed samples")
        eps_val = float(np.max(eps_diag))
        if np.ptp(eps_diag[probed]) > 1e-12 * eps_val:
            raise ValueError("deconvolution requires a uniform mollifier "
                             "width across probed samples")
        kxi = np.hypot(xis[:, None], xis[None, :])
        gain = 1.0 / np.maximum(_mollifier_transfer(kxi, eps_val), 0.2)
        spec *= gain[None, :, :]

    # enforce Hermitian symmetry on paired filled entries
    itau = _mirror_index(taus)
    ixi = _mirror_index(xis)
    for t_i, a_i, b_i in zip(*np.nonzero(filled)):
        mt_i, ma_i, mb_i = itau[t_i], ixi[a_i], ixi[b_i]
        if mt_i < 0 or ma_i < 0 or mb_i < 0:
            continue
        if filled[mt_i, ma_i, mb_i]:
            avg = 0.5 * (spec[t_i, a_i, b_i]
                         + np.conj(spec[mt_i, ma_i, mb_i]))
            spec[t_i, a_i, b_i] = avg
            spec[mt_i, ma_i, mb_i] = np.conj(avg)

    return SpectralCube(taus=taus, xis=xis, values=spec,
                        cone_mask=cone, cfg=cfg, pad=pad, alpha=float(kmax))


def _masked_trilinear(values: np.ndarray, mask: np.ndarray,
                      taus: np.ndarray, xis: np.ndarray,
                      tau: float, xi1: float, xi2: float) -> complex:
    """Trilinear sample of values where mask holds, Shepard-renormalized."""
    def locate(ax: np.ndarray, v: float) -> tuple[int, float]:
        i = int(np.clip(np.searchsorted(ax, v) - 1, 0, ax.size - 2))
        f = (v - ax[i]) / (ax[i + 1] - ax[i])
        return i, float(np.clip(f, 0.0, 1.0))

    i, ft = locate(taus, tau)
    j, fa = locate(xis, xi1)
    k, fb = locate(xis, xi2)
    acc = 0.0 + 0.0j
    wsum = 0.0
    for di, wt in ((0, 1 - ft), (1, ft)):
        for dj, wa in ((0, 1 - fa), (1, fa)):
            for dk, wb in ((0, 1 - fb), (1, fb)):
                w = wt * wa * wb
                if w == 0.0:
                    continue
                if mask[i + di, j + dj, k + dk]:
                    acc += w * values[i + di, j + dj, k + dk]
                    wsum += w
    if wsum < 1e-12:
        return 0.0 + 0.0j
    return acc / wsum


_FILLS = ("zero", "damped_extrapolation")


def reconstruct(cube: SpectralCube, fill: str = "zero",
                alpha: float | None = None,
                respect_mask: bool = True) -> PotentialField:
    """Invert a spectrum back to a potential on the originating grid.

    Frequencies with |(tau, xi)| > alpha are zeroed.  When respect_mask is
    set, values outside the cone are not trusted: they are replaced
    according to the fill policy ('zero', or 'damped_extrapolation' which
    continues each value radially from the cone boundary with decay
    exp(-d) in the angular distance d to the cone).  The inverse transform
    is evaluated on the padded lattice and restricted to the space-time
    cylinder of the grid.
    """
    if fill not in _FILLS:
        raise ValueError("fill must be one of " + ", ".join(_FILLS))
    taus, xis = cube.taus, cube.xis
    k_lattice = min(float(np.max(np.abs(taus))), float(np.max(np.abs(xis))))
    if alpha is not None and alpha > k_lattice * (1.0 + 1e-12):
        raise ValueError(
            f"alpha = {alpha:.6g} exceeds the resolved frequency band "
            f"{k_lattice:.6g} of the lattice")
    vals = np.array(cube.values)
    rho = np.sqrt(taus[:, None, None] ** 2 + xis[None, :, None] ** 2
                  + xis[None, None, :] ** 2)
    if respect_mask:
        outside = ~cube.cone_mask
        if fill == "zero":
            vals[outside] = 0.0
        else:
            lim = alpha if alpha is not None else k_lattice
            src = np.where(cube.cone_mask, cube.values, 0.0)
            fill_idx = np.nonzero(outside & (rho <= lim * (1.0 + 1e-12)))
            for t_i, a_i, b_i in zip(*fill_idx):
                tau = taus[t_i]
                x1 = xis[a_i]
                x2 = xis[b_i]
                nxi = math.hypot(x1, x2)
                rr = math.sqrt(tau * tau + nxi * nxi)
                if rr == 0.0:
                    continue
                ang = math.atan2(abs(tau), nxi)
                d = ang - math.pi / 4.0
                tb = math.copysign(rr / math.sqrt(2.0), tau)
                if nxi > 0.0:
                    xb1 = (rr / math.sqrt(2.0)) * x1 / nxi
                    xb2 = (rr / math.sqrt(2.0)) * x2 / nxi
                    v = _masked_trilinear(src, cube.cone_mask, taus, xis,
                                          tb, xb1, xb2)
                else:
                    rb = rr / math.sqrt(2.0)
                    v = 0.25 * sum(
                        _masked_trilinear(src, cube.cone_mask, taus, xis,
                                          tb, sa * rb, sb * rb)
                        for sa, sb in ((1, 0), (-1, 0), (0, 1), (0, -1)))
                vals[t_i, a_i, b_i] = v * math.exp(-d)
            vals[outside & (rho > (alpha if alpha is not None
                                   else k_lattice) * (1 + 1e-12))] = 0.0
    if alpha is not None:
        vals[rho > alpha * (1.0 + 1e-12)] = 0.0

    cfg = cube.cfg
    vals *= np.conj(_phase_correction(xis, cfg.L))[None, :, :]
    vals = np.fft.ifftshift(vals)
    qpad = np.fft.ifftn(vals / (cfg.dt * cfg.dx * cfg.dx))
    qv = np.ascontiguousarray(qpad[:cfg.nt, :cfg.nx, :cfg.nx].real)
    grid = make_grid(cfg)
    bound = float(np.max(np.abs(qv))) * (1.0 + 1e-9) + 1e-300
    return PotentialField(field=ScalarField(grid=grid, values=qv),
                          bound=bound)


@dataclass(frozen=True)
class ReconstructionErrors:
    """Mask-restricted reconstruction errors in three norms.

    ``hminus1`` / ``l2`` / ``linf`` are relative to the same norm of the
    (masked) truth whenever that reference norm is positive, absolute
    otherwise; ``ref_*`` carries the reference norms so the absolute error
    is always recoverable as the product.
    """

    hminus1: float
    l2: float
    linf: float
    ref_hminus1: float
    ref_l2: float
    ref_linf: float


def error_report(q_true: PotentialField, q_rec: PotentialField,
                 mask: ScalarField | None = None) -> ReconstructionErrors:
    """Norms of the (optionally mask-restricted) reconstruction error."""
    gt = q_true.field.grid
    if q_rec.field.grid.cfg != gt.cfg:
        raise ValueError("reconstruction grid does not match the truth")
    truth = q_true.field.values
    diff = truth - q_rec.field.values
    if mask is not None:
        if mask.grid.cfg != gt.cfg:
            raise ValueError("mask grid does not match the truth")
        truth = truth * mask.values
        diff = diff * mask.values
    d = ScalarField(grid=gt, values=np.ascontiguousarray(diff))
    t = ScalarField(grid=gt, values=np.ascontiguousarray(truth))
    raw = (hminus1_norm(d), norm(d, "L2_Q"), float(np.max(np.abs(diff))))
    ref = (hminus1_norm(t), norm(t, "L2_Q"), float(np.max(np.abs(truth))))
    rel = tuple(a / r if r > 0 else a for a, r in zip(raw, ref))
    return ReconstructionErrors(
        hminus1=rel[0], l2=rel[1], linf=rel[2],
        ref_hminus1=ref[0], ref_l2=ref[1], ref_linf=ref[2])
