"""Build script for the compiled alignment kernels.

The package works without the extension (a pure-Python fallback is selected
at import time), but the compiled kernels make the quadratic DP loops in the
boilerplate evaluation orders of magnitude faster.
"""

from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "apofasis._kernels._native",
        ["src/apofasis/_kernels/_native.pyx"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
