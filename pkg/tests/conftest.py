from __future__ import annotations

import numpy as np
import pytest

from waveray.core import DomainConfig, PotentialField, ScalarField, make_grid

# Small geometry reused across unit tests: admissible (0.25*sqrt2 = 0.354 <
# 0.36 = r/2, T = 2.4 > max(2r, 4*sqrt2*L)) and cheap.  nt is chosen so the
# CFL bound dt <= 0.9*dx/sqrt(2) holds for the solver tests.
SMALL = DomainConfig(L=0.25, r=0.72, T=2.4, nx=11, nt=97)
# Coarser companion with the same geometry for pure-array tests.
TINY = DomainConfig(L=0.25, r=0.72, T=2.4, nx=7, nt=13)


@pytest.fixture(scope="session")
def small_cfg() -> DomainConfig:
    return SMALL


@pytest.fixture(scope="session")
def tiny_cfg() -> DomainConfig:
    return TINY


def gaussian_potential(cfg: DomainConfig, amp: float, t0: float, x0,
                       sig_t: float, sig_x: float,
                       mask: np.ndarray | None = None) -> PotentialField:
    grid = make_grid(cfg)
    tfac = np.exp(-0.5 * ((grid.t - t0) / sig_t) ** 2)
    r2 = (grid.x[:, None] - x0[0]) ** 2 + (grid.x[None, :] - x0[1]) ** 2
    vals = amp * tfac[:, None, None] * np.exp(-0.5 * r2 / sig_x ** 2)[None, :, :]
    if mask is not None:
        vals = vals * mask
    bound = float(np.max(np.abs(vals))) * (1 + 1e-9) + 1e-300
    return PotentialField(field=ScalarField(grid=grid, values=vals), bound=bound)


def random_field(cfg: DomainConfig, seed: int, complex_values: bool = False) -> ScalarField:
    rng = np.random.default_rng(seed)
    shape = (cfg.nt, cfg.nx, cfg.nx)
    vals = rng.standard_normal(shape)
    if complex_values:
        vals = vals + 1j * rng.standard_normal(shape)
    return ScalarField(grid=make_grid(cfg), values=vals)
