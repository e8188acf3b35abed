"""Build script: compiles the leapfrog stepper extension when Cython and a C
compiler are available, and falls back to a pure-python install otherwise."""
from __future__ import annotations

import sys

from setuptools import Extension, setup


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        print("waveray: Cython or numpy unavailable at build time; "
              "installing without the compiled stepper", file=sys.stderr)
        return []
    ext = Extension(
        "waveray.kernels._leapfrog",
        ["src/waveray/kernels/_leapfrog.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


try:
    setup(ext_modules=_extensions())
except SystemExit:
    raise
except Exception as exc:  # noqa: BLE001 - any compile failure degrades to pure python
    print(f"waveray: extension build failed ({exc}); retrying pure python",
          file=sys.stderr)
    setup(ext_modules=[])
