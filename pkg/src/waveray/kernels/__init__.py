"""Stepper kernel selection.

The compiled extension is preferred when importable; the numpy fallback is
always available and exposes the identical ``run`` contract.  Set the
environment variable ``WAVERAY_FORCE_FALLBACK=1`` to skip the extension.
"""
from __future__ import annotations

import os

import numpy as np

from . import fallback

try:  # pragma: no cover - exercised indirectly by the selection logic
    if os.environ.get("WAVERAY_FORCE_FALLBACK"):
        raise ImportError("fallback forced by environment")
    from . import _leapfrog as _compiled
    HAVE_COMPILED = True
except ImportError:  # pragma: no cover
    _compiled = None
    HAVE_COMPILED = False

_DUMMY3 = np.zeros((1, 1, 1), dtype=np.float64)
_DUMMY2 = np.zeros((1, 1), dtype=np.float64)


def backend_name(use_compiled: bool | None = None) -> str:
    if use_compiled is None:
        use_compiled = HAVE_COMPILED
    return "compiled" if (use_compiled and HAVE_COMPILED) else "numpy"


def run(q3, q_mode, q2, f, u0, u1, F3, has_F, dx, dt, keep_field,
        use_compiled: bool | None = None):
    """Dispatch one real leapfrog solve to the selected implementation.

    Array arguments may be passed as None when the corresponding mode flag
    disables them; contiguous float64 copies are made as needed.
    """
    q3 = _DUMMY3 if q3 is None else np.ascontiguousarray(q3, dtype=np.float64)
    q2 = _DUMMY2 if q2 is None else np.ascontiguousarray(q2, dtype=np.float64)
    F3 = _DUMMY3 if F3 is None else np.ascontiguousarray(F3, dtype=np.float64)
    f = np.ascontiguousarray(f, dtype=np.float64)
    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    u1 = np.ascontiguousarray(u1, dtype=np.float64)
    if use_compiled is None:
        use_compiled = HAVE_COMPILED
    impl = _compiled if (use_compiled and HAVE_COMPILED) else fallback
    return impl.run(q3, int(q_mode), q2, f, u0, u1, F3, bool(has_F),
                    float(dx), float(dt), bool(keep_field))
