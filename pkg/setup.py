"""Build script for the optional compiled kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time); set FATIGUELAB_SKIP_EXT=1 to install pure-Python only.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FATIGUELAB_SKIP_EXT", "0") != "1":
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fatiguelab._kernels",
                sources=["src/fatiguelab/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
