from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waveray.core import DomainConfig, make_grid
from waveray.geometry import (AdmissibleSpec, RegionLabel, classify_point,
                              in_annulus, in_cone_minus, in_cone_plus,
                              region_mask, validate_admissible)

from conftest import SMALL, gaussian_potential

# SMALL: L=0.25, r=0.72, T=2.4, so r/2 = 0.36 and T - r/2 = 2.04.


@pytest.mark.parametrize("t, x, expected", [
    (1.2, (0.0, 0.0), RegionLabel.InQStar),        # deep in both cones
    (2.2, (0.0, 0.0), RegionLabel.InQSharpOnly),   # late: forward cone only
    (0.2, (0.0, 0.0), RegionLabel.InQOutside),     # early: before the cone opens
    (1.2, (0.2, 0.1), RegionLabel.InQStar),
    (2.5, (0.0, 0.0), RegionLabel.OutsideQ),       # beyond the final time
    (1.2, (0.3, 0.0), RegionLabel.OutsideQ),       # beyond the square
])
def test_classify_reference_points(t, x, expected):
    assert classify_point(t, x, SMALL) is expected


def test_region_boundaries_are_exclusive():
    # strict inequalities: just below |x| = t - r/2 is outside the cone
    assert not in_cone_plus(0.459, (0.1, 0.0), SMALL)
    assert in_cone_plus(0.461, (0.1, 0.0), SMALL)
    # t = r/2 exactly is outside the forward cone even at the axis
    assert not in_cone_plus(SMALL.r / 2.0, (0.0, 0.0), SMALL)
    # backward cone: |x| = T - r/2 - t flips just the same
    assert not in_cone_minus(1.941, (0.1, 0.0), SMALL)
    assert in_cone_minus(1.939, (0.1, 0.0), SMALL)


def test_annulus_bounds():
    assert not in_annulus((0.36, 0.0), SMALL)
    assert in_annulus((0.37, 0.0), SMALL)
    assert in_annulus((2.03, 0.0), SMALL)
    assert not in_annulus((2.04, 0.0), SMALL)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=2.4, allow_nan=False),
       st.floats(min_value=-0.25, max_value=0.25, allow_nan=False),
       st.floats(min_value=-0.25, max_value=0.25, allow_nan=False))
def test_star_is_intersection_of_cones(t, x1, x2):
    label = classify_point(t, (x1, x2), SMALL)
    plus = in_cone_plus(t, (x1, x2), SMALL)
    minus = in_cone_minus(t, (x1, x2), SMALL)
    if label is RegionLabel.InQStar:
        assert plus and minus
    elif label is RegionLabel.InQSharpOnly:
        assert plus and not minus
    elif label is RegionLabel.InQOutside:
        assert not plus
    else:
        pytest.fail("point inside the cylinder classified outside")


def test_region_mask_matches_pointwise_classification():
    grid = make_grid(SMALL)
    star = region_mask(SMALL, "Star").values
    sharp = region_mask(SMALL, "Sharp").values
    whole = region_mask(SMALL, "Whole").values
    assert whole.all()
    # star is contained in sharp, strictly here
    assert np.all(sharp >= star)
    assert star.sum() < sharp.sum()
    rng = np.random.default_rng(42)
    for _ in range(200):
        i = rng.integers(SMALL.nt)
        j = rng.integers(SMALL.nx)
        k = rng.integers(SMALL.nx)
        label = classify_point(float(grid.t[i]), (float(grid.x[j]),
                                                  float(grid.x[k])), SMALL)
        assert star[i, j, k] == (label is RegionLabel.InQStar)
        assert sharp[i, j, k] == (label in (RegionLabel.InQStar,
                                            RegionLabel.InQSharpOnly))


def test_region_mask_rejects_unknown_region():
    with pytest.raises(ValueError, match="region"):
        region_mask(SMALL, "Everything")


def test_admissible_accepts_star_supported_bump():
    star = region_mask(SMALL, "Star").values
    q = gaussian_potential(SMALL, 0.5, 1.2, (0.0, 0.0), 0.3, 0.1, mask=star)
    rep = validate_admissible(q, AdmissibleSpec(q0=None, M=1.0, region="Star"),
                              SMALL)
    assert rep.passed
    assert rep.max_outside_deviation <= 1e-12
    assert rep.worst_index is None


def test_admissible_rejects_leaking_bump():
    q = gaussian_potential(SMALL, 0.5, 1.2, (0.0, 0.0), 0.3, 0.1)
    rep = validate_admissible(q, AdmissibleSpec(q0=None, M=1.0, region="Star"),
                              SMALL)
    assert not rep.passed
    assert rep.max_outside_deviation > 1e-12
    i, j, k = rep.worst_index
    grid = make_grid(SMALL)
    assert classify_point(float(grid.t[i]),
                          (float(grid.x[j]), float(grid.x[k])),
                          SMALL) is not RegionLabel.InQStar


def test_admissible_rejects_oversized_bump():
    star = region_mask(SMALL, "Star").values
    q = gaussian_potential(SMALL, 2.0, 1.2, (0.0, 0.0), 0.3, 0.1, mask=star)
    rep = validate_admissible(q, AdmissibleSpec(q0=None, M=1.0, region="Star"),
                              SMALL)
    assert not rep.passed
    assert rep.sup_norm > rep.bound


def test_admissible_relative_to_background():
    star = region_mask(SMALL, "Star").values
    q0 = gaussian_potential(SMALL, 0.4, 1.0, (0.05, 0.0), 0.4, 0.12)
    dv = gaussian_potential(SMALL, 0.3, 1.2, (0.0, 0.0), 0.3, 0.1, mask=star)
    grid = q0.field.grid
    from waveray.core import PotentialField, ScalarField
    q = PotentialField(field=ScalarField(grid=grid,
                                         values=q0.values + dv.values),
                       bound=1.0)
    rep = validate_admissible(q, AdmissibleSpec(q0=q0, M=1.0, region="Star"),
                              SMALL)
    assert rep.passed


def test_admissible_spec_validation():
    with pytest.raises(ValueError, match="M"):
        AdmissibleSpec(q0=None, M=0.0, region="Star")
    with pytest.raises(ValueError, match="region"):
        AdmissibleSpec(q0=None, M=1.0, region="Q")
