"""Build script for the optional compiled kernel core.

The package is fully functional without the extension: spatsmc.kernels falls
back to pure numpy implementations when spatsmc.kernels._speedups is missing.
"""

import os
import sys

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "spatsmc.kernels._speedups",
        sources=["src/spatsmc/kernels/_speedups.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[os.path.join(os.path.dirname(np.__file__), "random", "lib")],
        libraries=["npyrandom"],
        # keep scalar arithmetic IEEE-exact (no fused multiply-add contraction)
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level=3)
except Exception as exc:  # pragma: no cover - toolchain-dependent
    print(f"spatsmc: skipping compiled kernels ({exc}); pure-Python fallback "
          "will be used", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
