"""Empirical stability curves: noise level vs reconstruction error.

For a base potential and an admissible perturbation, the sweep measures
the clean boundary pairings once, then corrupts the measured data with
synthetic Gaussian noise at a list of relative levels.  Because both the
data-gap norm and the ray pairing are (at most quadratic) functionals of
the measured arrays, the effect of white noise on them has a closed form
in a handful of per-sample scalars; the noise is therefore streamed
analytically instead of re-solving per level, and the draws are
reproducible from (seed, row, sample) alone.

The data axis reported is the operator-gap surrogate: the largest noisy
output difference over the probe set, normalized by the probe input norm,
with all output components measured in L2.  The error axis reports
H^-1 / L2 / sup norms of the reconstruction error on the region that the
mode can see.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import DomainConfig, PotentialField, ScalarField
from .geometry import region_mask
from .rays import (RAY_CALIBRATION, RaySinogram, epsilon_schedule,
                   probe_measurement)
from .spectral import error_report, fourier_from_sinogram, reconstruct

__all__ = [
    "SampleSummary",
    "StabilityRow",
    "StabilityTable",
    "stability_sweep",
]

_REGION_FOR_MODE = {"star": "Star", "sharp": "Sharp", "whole": "Whole"}


@dataclass(frozen=True)
class SampleSummary:
    """Closed-form ingredients of one probed ray sample.

    Per measured channel c (trace, final value, final velocity) the noise
    enters the pairing through G1_c = sum(w v eta) and the gap through
    G2_c = sum(w conj(d) eta); with circular white eta the pair (G1, G2)
    is complex Gaussian with covariances S_vv, S_dd, S_vd below, and the
    quadratic term concentrates at its mean B = sum(w).
    """

    dir_index: int
    off_index: int
    pairing: complex
    input_norm: float
    # per channel arrays (1 entry for star, 3 for sharp/whole)
    s_scale: np.ndarray
    d_norm2: np.ndarray
    b_mass: np.ndarray
    s_vv: np.ndarray
    s_dd: np.ndarray
    s_vd: np.ndarray


def _summarize(m, dir_index: int, off_index: int) -> SampleSummary:
    chans = [(m.w_tr, m.v_tr, m.meas_tr, m.diff_tr)]
    if m.w_om is not None:
        chans.append((m.w_om, m.v_uT, m.meas_uT, m.diff_uT))
        chans.append((m.w_om, m.v_utT, m.meas_utT, m.diff_utT))
    s_scale, d_norm2, b_mass, s_vv, s_dd, s_vd = ([] for _ in range(6))
    for w, v, meas, d in chans:
        b = float(np.sum(w))
        meas_norm = math.sqrt(float(np.sum(w * np.abs(meas) ** 2)))
        s_scale.append(meas_norm / math.sqrt(b))
        d_norm2.append(float(np.sum(w * np.abs(d) ** 2)))
        b_mass.append(b)
        s_vv.append(float(np.sum(w ** 2 * np.abs(v) ** 2)))
        s_dd.append(float(np.sum(w ** 2 * np.abs(d) ** 2)))
        s_vd.append(complex(np.sum(w ** 2 * v * d)))
    return SampleSummary(
        dir_index=dir_index, off_index=off_index,
        pairing=m.pairing, input_norm=m.input_norm,
        s_scale=np.array(s_scale), d_norm2=np.array(d_norm2),
        b_mass=np.array(b_mass), s_vv=np.array(s_vv),
        s_dd=np.array(s_dd), s_vd=np.array(s_vd, dtype=np.complex128))


def _draw_noise_effects(summ: SampleSummary, seed: int, row: int,
                        sample: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (G1, G2) draws with the exact joint covariance."""
    rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(row, sample)))
    nch = summ.s_scale.size
    g1 = np.zeros(nch, dtype=np.complex128)
    g2 = np.zeros(nch, dtype=np.complex128)
    for c in range(nch):
        z = rng.standard_normal(4) / math.sqrt(2.0)
        z2 = z[0] + 1j * z[1]
        z3 = z[2] + 1j * z[3]
        sdd = summ.s_dd[c]
        svv = summ.s_vv[c]
        svd = summ.s_vd[c]
        if sdd > 0.0:
            g2[c] = math.sqrt(sdd) * z2
            a = svd / math.sqrt(sdd)
            rem = svv - (abs(svd) ** 2) / sdd
            g1[c] = a * z2 + math.sqrt(max(rem, 0.0)) * z3
        else:
            g2[c] = 0.0
            g1[c] = math.sqrt(max(svv, 0.0)) * z3
    return g1, g2


@dataclass(frozen=True)
class StabilityRow:
    delta: float
    data_gap: float
    err_hminus1: float
    err_l2: float
    err_linf: float
    alpha_used: float


@dataclass(frozen=True)
class StabilityTable:
    rows: tuple[StabilityRow, ...]
    fit_power: tuple[float, float]       # (prefactor, exponent)
    fit_power_residual: float
    fit_log: float                       # prefactor of 1/|log gap|
    fit_log_residual: float
    mode: str

    def to_csv(self) -> str:
        header = ("delta,data_gap,err_hminus1,err_l2,err_linf,"
                  "fit_power_residual,fit_log_residual,alpha_used")
        lines = [header]
        for r in self.rows:
            cells = (r.delta, r.data_gap, r.err_hminus1, r.err_l2,
                     r.err_linf, self.fit_power_residual,
                     self.fit_log_residual, r.alpha_used)
            lines.append(",".join(f"{c:.17g}" for c in cells))
        return "\n".join(lines) + "\n"


def _fit_curves(gaps: np.ndarray, errs: np.ndarray
                ) -> tuple[tuple[float, float], float, float, float]:
    """Power-law and log-law fits with relative RMS residuals."""
    good = (gaps > 0) & (errs > 0)
    g = gaps[good]
    e = errs[good]
    if g.size < 2:
        return (float("nan"), float("nan")), float("nan"), float("nan"), \
            float("nan")
    lg, le = np.log(g), np.log(e)
    A = np.stack([np.ones_like(lg), lg], axis=1)
    coef, *_ = np.linalg.lstsq(A, le, rcond=None)
    pred_pow = np.exp(A @ coef)
    scale = math.sqrt(float(np.mean(e ** 2)))
    res_pow = math.sqrt(float(np.mean((pred_pow - e) ** 2))) / scale
    x = 1.0 / np.abs(np.log(g))
    b = float(np.sum(e * x) / np.sum(x * x))
    res_log = math.sqrt(float(np.mean((b * x - e) ** 2))) / scale
    return (float(math.exp(coef[0])), float(coef[1])), res_pow, b, res_log


def stability_sweep(q_base: PotentialField | None,
                    perturbation: PotentialField,
                    deltas, mode: str, *,
                    lam: float, directions, offsets, seed: int,
                    cfg: DomainConfig | None = None,
                    eps: float | None = None,
                    pad: int = 2,
                    tbar: float | None = None,
                    support_radius: float | None = None,
                    alpha_policy="auto", alpha_coeff: float = 1.2,
                    fill: str = "zero",
                    use_compiled: bool | None = None,
                    workers: int = 1) -> StabilityTable:
    """Measure reconstruction error against noise level for one pair.

    The perturbed potential is q_base + perturbation; the perturbation
    must vanish outside the region visible to the mode.  alpha_policy is
    'auto' (alpha = alpha_coeff * |log gap|, clamped to the assembled
    band), a single number, or a sequence with one alpha per noise level.
    """
    if mode not in _REGION_FOR_MODE:
        raise ValueError("mode must be 'star', 'sharp', or 'whole'")
    deltas = [float(d) for d in deltas]
    if len(deltas) < 4:
        raise ValueError("need at least 4 noise levels")
    if any(d < 0 for d in deltas):
        raise ValueError("noise levels must be nonnegative")
    if cfg is None:
        cfg = perturbation.field.grid.cfg
    if perturbation.field.grid.cfg != cfg:
        raise ValueError("perturbation grid does not match cfg")
    region = _REGION_FOR_MODE[mode]
    mask = region_mask(cfg, region)
    outside = np.abs(perturbation.field.values) * (1.0 - mask.values)
    worst = float(np.max(outside))
    if worst > 1e-12 * max(float(np.max(np.abs(perturbation.field.values))),
                           1e-300):
        raise ValueError(
            f"perturbation is not admissible for mode '{mode}': "
            f"deviation {worst:.3g} outside the visible region")

    base_vals = (q_base.field.values if q_base is not None else 0.0)
    pert_total = PotentialField(
        field=ScalarField(
            grid=perturbation.field.grid,
            values=np.ascontiguousarray(base_vals
                                        + perturbation.field.values)),
        bound=(q_base.bound if q_base is not None else 0.0)
        + perturbation.bound)

    dirs = np.asarray(directions, dtype=float)
    offs = np.asarray(offsets, dtype=float)
    if eps is None:
        eps = epsilon_schedule(lam, cfg)

    # clean measurement pass
    def one(sample):
        i, k = sample
        try:
            m = probe_measurement(q_base, pert_total, dirs[i], offs[k],
                                  lam, mode, cfg, eps=eps,
                                  use_compiled=use_compiled)
        except ValueError as exc:
            if "support condition" in str(exc):
                return None
            raise
        return _summarize(m, i, k)

    samples = [(i, k) for i in range(dirs.shape[0])
               for k in range(offs.shape[0])]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, samples))
    else:
        results = [one(s) for s in samples]
    summaries: list[SampleSummary] = [r for r in results if r is not None]

    if not summaries:
        raise ValueError("no offset admitted a probe; nothing to sweep")

    # probes whose mollified amplitude never reaches the boundary carry no
    # measurement (input and outputs are exactly zero by compact support):
    # treat them as unprobed zeros of the sinogram
    max_in = max(s.input_norm for s in summaries)
    if max_in == 0.0:
        raise ValueError("every probe had zero input norm; nothing to sweep")
    summaries = [s for s in summaries if s.input_norm > 1e-8 * max_in]

    nd, ny = dirs.shape[0], offs.shape[0]
    lam_diag = np.zeros((nd, ny))
    eps_diag = np.zeros((nd, ny))
    for s in summaries:
        lam_diag[s.dir_index, s.off_index] = lam
        eps_diag[s.dir_index, s.off_index] = eps

    rows: list[StabilityRow] = []
    alphas_seq = None
    if not isinstance(alpha_policy, str):
        try:
            alphas_seq = [float(a) for a in alpha_policy]
            if len(alphas_seq) != len(deltas):
                raise ValueError(
                    "alpha_policy sequence length must match deltas")
        except TypeError:
            alphas_seq = [float(alpha_policy)] * len(deltas)
    elif alpha_policy != "auto":
        raise ValueError("alpha_policy must be 'auto', a number, or a "
                         "sequence")

    for row, delta in enumerate(deltas):
        values = np.zeros((nd, ny), dtype=np.complex128)
        gap = 0.0
        for si, s in enumerate(summaries):
            g1, g2 = _draw_noise_effects(s, seed, row, si)
            pairing = s.pairing + delta * complex(np.sum(s.s_scale * g1))
            values[s.dir_index, s.off_index] = pairing * RAY_CALIBRATION
            gap2 = float(np.sum(
                s.d_norm2
                + 2.0 * delta * s.s_scale * np.real(g2)
                + delta ** 2 * s.s_scale ** 2 * s.b_mass))
            gap = max(gap, math.sqrt(max(gap2, 0.0)) / s.input_norm)

        sino = RaySinogram(directions=dirs, offsets=offs, values=values,
                           mode_tag="estimated:" + mode, lam=lam_diag,
                           eps=eps_diag)
        cube = fourier_from_sinogram(sino, cfg, pad=pad, tbar=tbar,
                                     support_radius=support_radius)
        if alphas_seq is not None:
            alpha = min(alphas_seq[row], cube.alpha)
        else:
            alpha = min(alpha_coeff * abs(math.log(gap)), cube.alpha) \
                if gap > 0 else cube.alpha
        rec = reconstruct(cube, fill=fill, alpha=alpha)
        err = error_report(perturbation, rec, mask=mask)
        rows.append(StabilityRow(delta=delta, data_gap=gap,
                                 err_hminus1=err.hminus1, err_l2=err.l2,
                                 err_linf=err.linf, alpha_used=alpha))

    gaps = np.array([r.data_gap for r in rows])
    errs = np.array([r.err_hminus1 for r in rows])
    fit_pow, res_pow, fit_log, res_log = _fit_curves(gaps, errs)
    return StabilityTable(rows=tuple(rows), fit_power=fit_pow,
                          fit_power_residual=res_pow, fit_log=fit_log,
                          fit_log_residual=res_log, mode=mode)
