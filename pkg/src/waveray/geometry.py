"""Causal-region predicates on the space-time cylinder.

The probing geometry distinguishes a forward light cone opening from the
bottom of the cylinder, a backward cone closing at the top, the annulus of
ray offsets that cross the domain, and the two observable space-time regions
cut out by those cones.  All named-set inequalities are strict; a point
landing exactly on a region boundary classifies as outside.  Membership in
the closed cylinder Q = [0,T] x [-L,L]^2 itself is closed, so every grid
node belongs to Q.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import DomainConfig, Grid, PotentialField, ScalarField, make_grid

__all__ = [
    "RegionLabel",
    "AdmissibleSpec",
    "AdmissibleReport",
    "in_cone_plus",
    "in_cone_minus",
    "in_annulus",
    "classify_point",
    "region_mask",
    "validate_admissible",
]


class RegionLabel(enum.Enum):
    InQStar = "in_q_star"
    InQSharpOnly = "in_q_sharp_only"
    InQOutside = "in_q_outside"
    OutsideQ = "outside_q"


def _radius(x) -> float:
    return float(math.hypot(*np.asarray(x, dtype=float)))


def in_cone_plus(t: float, x, cfg: DomainConfig) -> bool:
    """Forward cone: inside the r-cylinder with |x| < t - r/2 and t > r/2."""
    ax = _radius(x)
    return (0.0 < t < cfg.T and ax < cfg.r / 2.0
            and ax < t - cfg.r / 2.0 and t > cfg.r / 2.0)


def in_cone_minus(t: float, x, cfg: DomainConfig) -> bool:
    """Backward cone: inside the r-cylinder with |x| < T - r/2 - t."""
    ax = _radius(x)
    return (0.0 < t < cfg.T and ax < cfg.r / 2.0
            and ax < cfg.T - cfg.r / 2.0 - t and t < cfg.T - cfg.r / 2.0)


def in_annulus(y, cfg: DomainConfig) -> bool:
    """Offsets with r/2 < |y| < T - r/2: rays through y sweep the domain."""
    ay = _radius(y)
    return cfg.r / 2.0 < ay < cfg.T - cfg.r / 2.0


def classify_point(t: float, x, cfg: DomainConfig) -> RegionLabel:
    """Assign the unique region label of a space-time point.

    Points of the closed cylinder are split by cone membership: both cones
    (the doubly observable region), forward cone only, or neither.
    """
    xa = np.asarray(x, dtype=float)
    if not (0.0 <= t <= cfg.T and np.max(np.abs(xa)) <= cfg.L):
        return RegionLabel.OutsideQ
    if in_cone_plus(t, x, cfg):
        if in_cone_minus(t, x, cfg):
            return RegionLabel.InQStar
        return RegionLabel.InQSharpOnly
    return RegionLabel.InQOutside


def _cone_masks(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    cfg = grid.cfg
    t = grid.t[:, None, None]
    ax = np.hypot(grid.x[:, None], grid.x[None, :])[None, :, :]
    in_cyl = (0.0 < t) & (t < cfg.T) & (ax < cfg.r / 2.0)
    plus = in_cyl & (ax < t - cfg.r / 2.0) & (t > cfg.r / 2.0)
    minus = in_cyl & (ax < cfg.T - cfg.r / 2.0 - t) & (t < cfg.T - cfg.r / 2.0)
    return plus, minus


def region_mask(cfg: DomainConfig, region: str) -> ScalarField:
    """Rasterize a region onto the grid as a 0/1 real field.

    ``region`` is "Star" (both cones), "Sharp" (forward cone), or "Whole"
    (every node of the closed cylinder).  Nodes are classified by their own
    coordinates with no antialiasing.
    """
    grid = make_grid(cfg)
    plus, minus = _cone_masks(grid)
    if region == "Star":
        mask = plus & minus
    elif region == "Sharp":
        mask = plus
    elif region == "Whole":
        mask = np.ones((cfg.nt, cfg.nx, cfg.nx), dtype=bool)
    else:
        raise ValueError("region must be 'Star', 'Sharp', or 'Whole'")
    return ScalarField(grid=grid, values=mask.astype(np.float64))


@dataclass(frozen=True)
class AdmissibleSpec:
    """Admissible-set description: background, sup budget, and region."""

    q0: PotentialField | None
    M: float
    region: str

    def __post_init__(self) -> None:
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.region not in ("Star", "Sharp", "Whole"):
            raise ValueError("region must be 'Star', 'Sharp', or 'Whole'")


@dataclass(frozen=True)
class AdmissibleReport:
    """Outcome of an admissibility check; carries pass/fail, never raises."""

    passed: bool
    max_outside_deviation: float
    sup_norm: float
    bound: float
    worst_index: tuple[int, int, int] | None
    worst_point: tuple[float, float, float] | None


def validate_admissible(q: PotentialField, spec: AdmissibleSpec,
                        cfg: DomainConfig) -> AdmissibleReport:
    """Check that ``q`` deviates from the background only inside the region.

    Reports the largest |q - q0| outside the region mask (zero within 1e-12
    required to pass, with the offending node located) and the sup norm
    against the budget M.
    """
    qv = q.values
    if spec.q0 is not None:
        dev = np.abs(qv - spec.q0.values)
    else:
        dev = np.abs(qv)
    outside = region_mask(cfg, spec.region).values == 0.0
    masked = np.where(outside, dev, 0.0)
    max_dev = float(masked.max()) if masked.size else 0.0
    sup = float(np.max(np.abs(qv)))
    passed = max_dev <= 1e-12 and sup <= spec.M * (1 + 1e-12)
    worst_index = None
    worst_point = None
    if max_dev > 1e-12:
        grid = q.grid
        i, j, k = np.unravel_index(int(np.argmax(masked)), masked.shape)
        worst_index = (int(i), int(j), int(k))
        worst_point = (float(grid.t[i]), float(grid.x[j]), float(grid.x[k]))
    return AdmissibleReport(passed=passed, max_outside_deviation=max_dev,
                            sup_norm=sup, bound=spec.M,
                            worst_index=worst_index, worst_point=worst_point)
