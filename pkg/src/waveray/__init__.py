"""waveray: probing time-dependent wave potentials from boundary data.

The package builds, end to end, the measurement-to-reconstruction chain for
a lower-order time-dependent coefficient of the wave equation on a square:
boundary operators realized by an explicit solver, oscillatory probes whose
boundary responses isolate light-ray integrals of the potential, Fourier
assembly of those integrals on the characteristic cone, band-limited
inversion, and empirical stability curves against data noise.
"""
from __future__ import annotations

from .core import (BoundaryTrace, DomainConfig, FinalState, Grid,
                   PotentialField, ScalarField, hminus1_norm, load_field,
                   make_grid, norm, save_field)
from .geometry import (AdmissibleReport, AdmissibleSpec, RegionLabel,
                       classify_point, in_annulus, in_cone_minus,
                       in_cone_plus, region_mask, validate_admissible)
from .solver import (IbvpProblem, OperatorOutput, apply_dtn, apply_dtn_final,
                     apply_full_map, energy_report, neumann_trace,
                     operator_gap, solve_ibvp)

__version__ = "0.1.0"
