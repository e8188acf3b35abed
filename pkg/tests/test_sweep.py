"""Stability-sweep plumbing: noise model, determinism, table format.

The zero-noise row is cross-checked against the public single-shot
pipeline (build_sinogram -> fourier_from_sinogram -> reconstruct ->
error_report) and against a direct recomputation of the clean data gap
from probe measurements; the synthetic-noise generator is checked against
its stated joint second moments.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from waveray.core import PotentialField, ScalarField, make_grid
from waveray.geometry import region_mask
from waveray.rays import build_sinogram, probe_measurement
from waveray.spectral import error_report, fourier_from_sinogram, reconstruct
from waveray.sweep import SampleSummary, _draw_noise_effects, stability_sweep

from conftest import SMALL, TINY, gaussian_potential

LAM = 6.0
DELTAS = [0.0, 1e-3, 1e-2, 1e-1]


def star_perturbation():
    return gaussian_potential(SMALL, 0.1, 1.2, (0.0, 0.0), 0.4, 0.1,
                              mask=region_mask(SMALL, "Star").values)


def probe_grids():
    th = 2 * np.pi * np.arange(12) / 12
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    c = np.arange(-2, 3) * 0.26
    Y1, Y2 = np.meshgrid(c, c, indexing="ij")
    offs = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
    return dirs, offs


@pytest.fixture(scope="module")
def tab_auto():
    dirs, offs = probe_grids()
    return stability_sweep(None, star_perturbation(), DELTAS, "star",
                           lam=LAM, directions=dirs, offsets=offs,
                           seed=11, cfg=SMALL, alpha_policy="auto")


@pytest.fixture(scope="module")
def tab_fixed():
    dirs, offs = probe_grids()
    return stability_sweep(None, star_perturbation(), DELTAS, "star",
                           lam=LAM, directions=dirs, offsets=offs,
                           seed=11, cfg=SMALL, alpha_policy=2.0)


def test_clean_row_matches_single_shot_pipeline(tab_fixed):
    pert = star_perturbation()
    dirs, offs = probe_grids()
    sino = build_sinogram(None, pert, dirs, offs, LAM, "star", cfg=SMALL)
    cube = fourier_from_sinogram(sino, SMALL, pad=2)
    rec = reconstruct(cube, fill="zero", alpha=2.0)
    rep = error_report(pert, rec, mask=region_mask(SMALL, "Star"))
    row0 = tab_fixed.rows[0]
    assert row0.delta == 0.0
    assert row0.err_hminus1 == pytest.approx(rep.hminus1, rel=1e-10)
    assert row0.err_l2 == pytest.approx(rep.l2, rel=1e-10)
    assert row0.err_linf == pytest.approx(rep.linf, rel=1e-10)
    assert row0.alpha_used == 2.0


def test_clean_gap_matches_probe_recomputation(tab_fixed):
    pert = star_perturbation()
    dirs, offs = probe_grids()
    pairs = []
    for i in range(dirs.shape[0]):
        for k in range(offs.shape[0]):
            try:
                m = probe_measurement(None, pert, dirs[i], offs[k], LAM,
                                      "star", SMALL)
            except ValueError as exc:
                assert "support condition" in str(exc)
                continue
            out2 = float(np.sum(m.w_tr * np.abs(m.diff_tr) ** 2))
            pairs.append((math.sqrt(out2), m.input_norm))
    assert len(pairs) > 50
    # silent rays (probe never reaches the boundary) carry no measurement
    floor = 1e-8 * max(inn for _, inn in pairs)
    worst = max(out / inn for out, inn in pairs if inn > floor)
    assert tab_fixed.rows[0].data_gap == pytest.approx(worst, rel=1e-12)


def test_data_gap_grows_with_noise(tab_auto):
    gaps = [r.data_gap for r in tab_auto.rows]
    assert all(b > a for a, b in zip(gaps, gaps[1:]))
    assert all(r.err_hminus1 > 0 for r in tab_auto.rows)
    assert np.isfinite(tab_auto.fit_power_residual)
    assert np.isfinite(tab_auto.fit_log_residual)


def test_auto_alpha_respects_log_rule(tab_auto):
    for r in tab_auto.rows:
        assert 0.0 < r.alpha_used
        assert r.alpha_used <= 1.2 * abs(math.log(r.data_gap)) * (1 + 1e-12)


def test_sweep_deterministic_and_worker_invariant(tab_fixed):
    dirs, offs = probe_grids()
    again = stability_sweep(None, star_perturbation(), DELTAS, "star",
                            lam=LAM, directions=dirs, offsets=offs,
                            seed=11, cfg=SMALL, alpha_policy=2.0)
    assert again.to_csv() == tab_fixed.to_csv()
    threaded = stability_sweep(None, star_perturbation(), DELTAS, "star",
                               lam=LAM, directions=dirs, offsets=offs,
                               seed=11, cfg=SMALL, alpha_policy=2.0,
                               workers=2)
    assert threaded.to_csv() == tab_fixed.to_csv()
    shifted = stability_sweep(None, star_perturbation(), DELTAS, "star",
                              lam=LAM, directions=dirs, offsets=offs,
                              seed=12, cfg=SMALL, alpha_policy=2.0)
    assert shifted.to_csv() != tab_fixed.to_csv()


def test_csv_format(tab_auto):
    text = tab_auto.to_csv()
    lines = text.splitlines()
    assert lines[0] == ("delta,data_gap,err_hminus1,err_l2,err_linf,"
                        "fit_power_residual,fit_log_residual,alpha_used")
    assert len(lines) == 1 + len(DELTAS)
    assert text.endswith("\n")
    body = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
    assert body.shape == (len(DELTAS), 8)
    assert np.array_equal(body[:, 0], np.array(DELTAS))
    # the fit residuals are table-level constants repeated per row
    assert np.ptp(body[:, 5]) == 0.0
    assert np.ptp(body[:, 6]) == 0.0


def test_noise_draws_match_stated_covariance():
    summ = SampleSummary(
        dir_index=0, off_index=0, pairing=0j, input_norm=1.0,
        s_scale=np.array([1.0, 1.0]), d_norm2=np.array([1.0, 1.0]),
        b_mass=np.array([1.0, 1.0]), s_vv=np.array([2.0, 0.5]),
        s_dd=np.array([1.0, 0.0]),
        s_vd=np.array([0.3 + 0.4j, 0.0], dtype=np.complex128))
    n = 6000
    g1 = np.empty((n, 2), dtype=np.complex128)
    g2 = np.empty((n, 2), dtype=np.complex128)
    for i in range(n):
        g1[i], g2[i] = _draw_noise_effects(summ, 123, 0, i)
    # degenerate channel: no output difference, so no gap fluctuation
    assert np.all(g2[:, 1] == 0.0)
    assert np.mean(np.abs(g2[:, 0]) ** 2) == pytest.approx(1.0, rel=0.1)
    assert np.mean(np.abs(g1[:, 0]) ** 2) == pytest.approx(2.0, rel=0.1)
    assert np.mean(np.abs(g1[:, 1]) ** 2) == pytest.approx(0.5, rel=0.1)
    cross = np.mean(g1[:, 0] * np.conj(g2[:, 0]))
    assert cross == pytest.approx(0.3 + 0.4j, abs=0.1)
    assert abs(np.mean(g1[:, 0])) < 0.08
    assert abs(np.mean(g2[:, 0])) < 0.08
    # repeatable from (seed, row, sample) alone
    a1, a2 = _draw_noise_effects(summ, 123, 0, 17)
    assert np.array_equal(a1, g1[17]) and np.array_equal(a2, g2[17])


def test_sweep_validation():
    dirs = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    offs = np.array([[0.52, 0.0], [-0.52, 0.0], [0.0, 0.52], [0.0, -0.52]])
    pert = star_perturbation()
    with pytest.raises(ValueError, match="at least 4 noise levels"):
        stability_sweep(None, pert, [0.1, 0.2, 0.3], "star", lam=LAM,
                        directions=dirs, offsets=offs, seed=1, cfg=SMALL)
    with pytest.raises(ValueError, match="nonnegative"):
        stability_sweep(None, pert, [-0.1, 0.1, 0.2, 0.3], "star", lam=LAM,
                        directions=dirs, offsets=offs, seed=1, cfg=SMALL)
    with pytest.raises(ValueError, match="mode must be"):
        stability_sweep(None, pert, DELTAS, "open", lam=LAM,
                        directions=dirs, offsets=offs, seed=1, cfg=SMALL)
    with pytest.raises(ValueError, match="does not match cfg"):
        stability_sweep(None, pert, DELTAS, "star", lam=LAM,
                        directions=dirs, offsets=offs, seed=1, cfg=TINY)
    g = make_grid(SMALL)
    flat = PotentialField(field=ScalarField(
        grid=g, values=np.ones((SMALL.nt, SMALL.nx, SMALL.nx))), bound=1.1)
    with pytest.raises(ValueError, match="not admissible"):
        stability_sweep(None, flat, DELTAS, "star", lam=LAM,
                        directions=dirs, offsets=offs, seed=1, cfg=SMALL)
    with pytest.raises(ValueError, match="alpha_policy must be"):
        stability_sweep(None, pert, DELTAS, "star", lam=LAM,
                        directions=dirs, offsets=offs, seed=1, cfg=SMALL,
                        alpha_policy="bogus")
    with pytest.raises(ValueError, match="length must match"):
        stability_sweep(None, pert, DELTAS, "star", lam=LAM,
                        directions=dirs, offsets=offs, seed=1, cfg=SMALL,
                        alpha_policy=[1.0, 2.0])
    with pytest.raises(ValueError, match="no offset admitted a probe"):
        stability_sweep(None, pert, DELTAS, "star", lam=LAM,
                        directions=dirs, offsets=np.zeros((1, 2)),
                        seed=1, cfg=SMALL)
