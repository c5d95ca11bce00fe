"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a numpy fallback is
selected at import time).  The compiled kernels fuse the GELU/optimizer
elementwise loops and replace the dense assignment solver; training itself
is matmul-bound, so the end-to-end gain is modest (see benchmarks/).
`pip install -e . --no-build-isolation` builds the extension when Cython
is available; plain installs without Cython still work.
"""

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/ctlab/_kernels.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(np.get_include())
        # -fno-math-errno lets gcc use glibc's vectorized erf/exp (libmvec)
        ext.extra_compile_args = ["-O3", "-march=native", "-fno-math-errno"]
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
