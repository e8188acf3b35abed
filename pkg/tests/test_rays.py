"""Ray transform, boundary-pairing estimator, and sinogram plumbing.

The quadrature oracle is checked against scipy.integrate.quad on a closed
form; the frozen pairing calibration constant is rederived from scratch on
its measurement configuration; estimator fidelity numbers are frozen from
an independent run of the same quadrature oracle.
"""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from waveray.core import DomainConfig, PotentialField, ScalarField, make_grid
from waveray.rays import (RAY_CALIBRATION, RaySinogram, build_oracle_sinogram,
                          build_sinogram, epsilon_schedule, estimate_ray,
                          load_sinogram, probe_measurement, ray_oracle,
                          save_sinogram)

RT2 = math.sqrt(0.5)


def shape01(s2):
    s2 = np.asarray(s2, dtype=float)
    out = np.zeros_like(s2)
    m = s2 < 1.0 - 1e-14
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s2[m]))
    return out


def bump_potential(cfg, A, t0, x0, rho_t, rho_x):
    g = make_grid(cfg)
    X1, X2 = np.meshgrid(g.x, g.x, indexing="ij")
    r2 = ((X1 - x0[0]) ** 2 + (X2 - x0[1]) ** 2) / rho_x ** 2
    sp = shape01(r2)
    vals = np.empty((cfg.nt, cfg.nx, cfg.nx))
    for i, t in enumerate(g.t):
        vals[i] = A * shape01(((t - t0) / rho_t) ** 2) * sp
    return PotentialField(field=ScalarField(grid=g, values=vals),
                          bound=abs(A) + 1e-9)


def analytic_ray(A, t0, x0, rho_t, rho_x, omega, y, T):
    w = np.asarray(omega)
    y = np.asarray(y)
    x0 = np.asarray(x0)

    def f(t):
        pos = y - t * w
        r2 = float((pos - x0) @ (pos - x0)) / rho_x ** 2
        s2 = ((t - t0) / rho_t) ** 2
        return A * float(shape01(np.array(s2))) * float(shape01(np.array(r2)))

    return quad(f, 0.0, T, limit=400)[0]


def cfg_for(lam, L=0.25, r=0.72, T=2.4, fac=0.3):
    nx = math.ceil(2 * L * lam / fac) + 1
    dx = 2 * L / (nx - 1)
    nt = math.ceil(T / (0.9 * dx / math.sqrt(2))) + 1
    return DomainConfig(L=L, r=r, T=T, nx=nx, nt=nt)


# configuration B: diagonal direction, off-center compact bump
B = dict(A=0.85, t0=1.15, x0=(0.03, -0.02), rho_t=0.5, rho_x=0.2)
B_OMEGA = (RT2, RT2)
B_Y = (B["x0"][0] + B["t0"] * RT2, B["x0"][1] + B["t0"] * RT2)
B_ORACLE = 0.19984026704193161


def potential_B(cfg):
    return bump_potential(cfg, B["A"], B["t0"], B["x0"], B["rho_t"],
                          B["rho_x"])


def test_ray_oracle_matches_independent_quadrature():
    cfg = DomainConfig(L=0.25, r=0.72, T=2.4, nx=55, nt=409)
    q = potential_B(cfg)
    oracle = analytic_ray(B["A"], B["t0"], B["x0"], B["rho_t"], B["rho_x"],
                          B_OMEGA, B_Y, cfg.T)
    assert oracle == pytest.approx(B_ORACLE, rel=1e-12)
    go = ray_oracle(q, B_OMEGA, B_Y)
    assert go == pytest.approx(0.19969764515765598, rel=1e-9)
    assert abs(go - oracle) / oracle < 2e-3
    # temporal refinement stays on the same value (the floor is spatial)
    go4 = ray_oracle(q, B_OMEGA, B_Y, refine=4)
    assert abs(go4 - go) < 5e-5


def test_ray_oracle_zero_off_domain(small_cfg):
    q = potential_B(small_cfg)
    assert ray_oracle(q, (1.0, 0.0), (9.0, 4.0)) == 0.0


def test_ray_oracle_validation(small_cfg):
    q = potential_B(small_cfg)
    with pytest.raises(ValueError, match="refine"):
        ray_oracle(q, (1.0, 0.0), (1.0, 0.0), refine=0)
    with pytest.raises(ValueError, match="unit vector"):
        ray_oracle(q, (1.0, 1.0), (1.0, 0.0))
    with pytest.raises(ValueError, match="2-vector"):
        ray_oracle(q, (1.0, 0.0), (1.0, 0.0, 0.0))


def test_calibration_constant_rederives():
    # full from-scratch rerun of the measurement that froze RAY_CALIBRATION
    cfg = cfg_for(128)
    assert (cfg.nx, cfg.nt) == (215, 1616)
    q2 = bump_potential(cfg, 1.0, 1.2, (0.0, 0.0), 0.55, 0.22)
    est = estimate_ray(None, q2, (1.0, 0.0), (1.2, 0.0), 128.0, "star")
    raw = est / RAY_CALIBRATION
    assert raw == pytest.approx(0.22884073400033678, rel=1e-9)
    oracle = analytic_ray(1.0, 1.2, (0.0, 0.0), 0.55, 0.22,
                          (1.0, 0.0), (1.2, 0.0), cfg.T)
    assert oracle == pytest.approx(0.25861681617280907, rel=1e-12)
    assert oracle / raw == pytest.approx(RAY_CALIBRATION, rel=1e-9)


def test_estimate_improves_with_frequency():
    errs = {}
    for lam, frozen in ((32, 0.092658319727571714),
                        (64, 0.1625938542033438)):
        cfg = cfg_for(lam)
        q2 = potential_B(cfg)
        est = estimate_ray(None, q2, B_OMEGA, B_Y, float(lam), "star")
        assert est == pytest.approx(frozen, rel=1e-9)
        errs[lam] = abs(est - B_ORACLE) / B_ORACLE
    assert errs[64] < errs[32]
    assert errs[64] < 0.25


def test_estimate_sign_symmetry():
    cfg = cfg_for(16)
    q2 = potential_B(cfg)
    a = estimate_ray(None, q2, B_OMEGA, B_Y, 16.0, "star", sign=1)
    b = estimate_ray(None, q2, B_OMEGA, B_Y, 16.0, "star", sign=-1)
    assert b == pytest.approx(a, rel=1e-10)


def test_estimate_ray_cfg_inference(small_cfg):
    with pytest.raises(ValueError, match="cfg is required"):
        estimate_ray(None, None, (1.0, 0.0), (1.2, 0.0), 8.0, "star")


def test_epsilon_schedule():
    big = DomainConfig(L=1.3, r=3.7, T=7.6, nx=69, nt=199)
    # 128**(-1/7) = 0.5 exactly, between the clamps 3*dx and r/4
    assert epsilon_schedule(128.0, big) == pytest.approx(0.5, abs=1e-15)
    assert epsilon_schedule(1.0, big) == pytest.approx(big.r / 4.0)
    assert epsilon_schedule(1e9, big) == pytest.approx(3.0 * big.dx)
    with pytest.raises(ValueError, match="lam must be positive"):
        epsilon_schedule(0.0, big)
    cramped = DomainConfig(L=1.3, r=0.52, T=7.6, nx=9, nt=199)
    with pytest.raises(ValueError, match="empty mollifier clamp"):
        epsilon_schedule(8.0, cramped)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1.0, max_value=1e4),
       st.floats(min_value=1.0, max_value=1e4))
def test_epsilon_schedule_monotone(lam1, lam2):
    big = DomainConfig(L=1.3, r=3.7, T=7.6, nx=69, nt=199)
    if lam1 > lam2:
        lam1, lam2 = lam2, lam1
    assert epsilon_schedule(lam1, big) >= epsilon_schedule(lam2, big)


def test_probe_measurement_mode_structure():
    cfg = cfg_for(12)
    q2 = potential_B(cfg)
    m_star = probe_measurement(None, q2, (1.0, 0.0), (1.2, 0.0), 12.0,
                               "star", cfg)
    assert m_star.w_om is None and m_star.diff_uT is None
    m_sharp = probe_measurement(None, q2, (1.0, 0.0), (1.2, 0.0), 12.0,
                                "sharp", cfg)
    assert m_sharp.w_om is not None and m_sharp.diff_uT is not None
    assert m_sharp.input_norm > 0
    with pytest.raises(ValueError, match="mode"):
        probe_measurement(None, q2, (1.0, 0.0), (1.2, 0.0), 12.0, "all", cfg)
    with pytest.raises(ValueError, match="sign"):
        probe_measurement(None, q2, (1.0, 0.0), (1.2, 0.0), 12.0, "star",
                          cfg, sign=0)


def test_build_sinogram_support_skip():
    cfg = cfg_for(12)
    q2 = potential_B(cfg)
    dirs = np.array([[1.0, 0.0]])
    # second and third offsets put the probe bump into/too near the square
    offs = np.array([[1.2, 0.0], [0.0, 0.3], [0.0, 0.0]])
    s = build_sinogram(None, q2, dirs, offs, 12.0, "star", cfg=cfg)
    assert s.mode_tag == "estimated:star"
    assert s.values[0, 0] != 0
    assert s.values[0, 1] == 0 and s.values[0, 2] == 0
    assert s.eps[0, 0] > 0
    assert s.eps[0, 1] == 0 and s.lam[0, 2] == 0
    with pytest.raises(ValueError, match="support condition"):
        build_sinogram(None, q2, dirs, offs, 12.0, "star", cfg=cfg,
                       strict_support=True)


def test_build_sinogram_sample_mask():
    cfg = cfg_for(12)
    q2 = potential_B(cfg)
    dirs = np.array([[1.0, 0.0], [0.0, 1.0]])
    offs = np.array([[1.2, 0.0], [0.0, 1.1]])
    full = build_sinogram(None, q2, dirs, offs, 12.0, "star", cfg=cfg)
    mask = np.array([[True, False], [False, True]])
    part = build_sinogram(None, q2, dirs, offs, 12.0, "star", cfg=cfg,
                          sample_mask=mask)
    assert part.values[0, 0] == full.values[0, 0]
    assert part.values[1, 1] == full.values[1, 1]
    assert part.values[0, 1] == 0 and part.values[1, 0] == 0
    assert part.eps[0, 1] == 0 and part.lam[1, 0] == 0
    with pytest.raises(ValueError, match="sample_mask"):
        build_sinogram(None, q2, dirs, offs, 12.0, "star", cfg=cfg,
                       sample_mask=np.ones((3, 2), dtype=bool))


def test_build_sinogram_workers_deterministic():
    cfg = cfg_for(12)
    q2 = potential_B(cfg)
    dirs = np.array([[1.0, 0.0], [RT2, RT2]])
    offs = np.array([[1.2, 0.0], [0.9, 0.8]])
    s1 = build_sinogram(None, q2, dirs, offs, 12.0, "star", cfg=cfg)
    s2 = build_sinogram(None, q2, dirs, offs, 12.0, "star", cfg=cfg,
                        workers=2)
    assert np.array_equal(s1.values, s2.values)
    assert np.array_equal(s1.eps, s2.eps)


def test_build_oracle_sinogram(small_cfg):
    q = potential_B(small_cfg)
    dirs = np.array([[1.0, 0.0], [0.0, 1.0]])
    offs = np.array([[1.15, 0.0], [0.0, 0.5]])
    s = build_oracle_sinogram(q, dirs, offs, refine=2)
    assert s.mode_tag == "oracle"
    assert np.array_equal(s.eps, np.zeros((2, 2)))
    for i in range(2):
        for k in range(2):
            assert s.values[i, k] == ray_oracle(q, dirs[i], offs[k], refine=2)


def test_sinogram_validation():
    dirs = np.array([[1.0, 0.0]])
    offs = np.array([[1.0, 0.0], [2.0, 0.0]])
    ok = dict(values=np.zeros((1, 2), dtype=complex), mode_tag="x",
              lam=np.zeros((1, 2)), eps=np.zeros((1, 2)))
    RaySinogram(directions=dirs, offsets=offs, **ok)
    with pytest.raises(ValueError, match="unit vectors"):
        RaySinogram(directions=2 * dirs, offsets=offs, **ok)
    with pytest.raises(ValueError, match="shape"):
        RaySinogram(directions=dirs, offsets=offs[:, :1], **ok)
    bad = dict(ok)
    bad["values"] = np.full((1, 2), np.nan + 0j)
    with pytest.raises(ValueError, match="non-finite"):
        RaySinogram(directions=dirs, offsets=offs, **bad)
    bad = dict(ok)
    bad["lam"] = np.zeros((2, 1))
    with pytest.raises(ValueError, match="diagnostic"):
        RaySinogram(directions=dirs, offsets=offs, **bad)


def test_sinogram_roundtrip(tmp_path):
    rng = np.random.default_rng(17)
    dirs = np.array([[1.0, 0.0], [0.0, -1.0], [RT2, RT2]])
    offs = rng.standard_normal((5, 2))
    vals = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    s = RaySinogram(directions=dirs, offsets=offs, values=vals,
                    mode_tag="estimated:sharp",
                    lam=np.full((3, 5), 24.0), eps=np.full((3, 5), 0.3))
    path = str(tmp_path / "sino.rws")
    save_sinogram(s, path)
    t = load_sinogram(path)
    assert t.mode_tag == "estimated:sharp"
    for a, b in ((s.directions, t.directions), (s.offsets, t.offsets),
                 (s.values, t.values), (s.lam, t.lam), (s.eps, t.eps)):
        assert np.array_equal(a, b)


def test_sinogram_load_errors(tmp_path):
    path = str(tmp_path / "bad.rws")
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError, match="bad magic"):
        load_sinogram(path)
    s = RaySinogram(directions=np.array([[1.0, 0.0]]),
                    offsets=np.array([[1.0, 0.0]]),
                    values=np.zeros((1, 1), dtype=complex), mode_tag="oracle",
                    lam=np.zeros((1, 1)), eps=np.zeros((1, 1)))
    good = str(tmp_path / "good.rws")
    save_sinogram(s, good)
    with open(good, "rb") as fh:
        raw = fh.read()
    trunc = str(tmp_path / "trunc.rws")
    with open(trunc, "wb") as fh:
        fh.write(raw[:len(raw) // 2])
    with pytest.raises(ValueError, match="truncated"):
        load_sinogram(trunc)
    long_tag = RaySinogram(directions=np.array([[1.0, 0.0]]),
                           offsets=np.array([[1.0, 0.0]]),
                           values=np.zeros((1, 1), dtype=complex),
                           mode_tag="m" * 300,
                           lam=np.zeros((1, 1)), eps=np.zeros((1, 1)))
    with pytest.raises(ValueError, match="too long"):
        save_sinogram(long_tag, str(tmp_path / "x.rws"))
