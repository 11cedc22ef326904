"""Build script: compiles the optional scatter-assembly extension.

The package works without the extension (a pure-NumPy backend is selected
at import time), so any failure to compile is downgraded to a warning.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "boltzlab._kernels._scatter",
                ["src/boltzlab/_kernels/_scatter.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffast-math"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on toolchain
    print(f"warning: compiled kernels unavailable ({exc}); "
          "falling back to the NumPy backend", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
