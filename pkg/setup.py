# Builds the optional compiled kernel core.  The package works without it:
# smckit.kernels falls back to the numpy implementation at import time.
#
#   pip install -e . --no-build-isolation

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/smckit/_kernels.pyx"],
        language_level=3,
    )
    include_dirs = [numpy.get_include()]
except ImportError as exc:  # pragma: no cover - build-environment dependent
    print(f"smckit: skipping compiled kernels ({exc}); "
          "the pure-numpy fallback will be used", file=sys.stderr)
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
