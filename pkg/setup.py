import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build without the compiled core
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("GHOSTOP_NO_EXT") != "1":
    ext_modules = cythonize(
        [Extension(
            "ghostop._kernels",
            ["src/ghostop/_kernels.pyx"],
            include_dirs=[numpy.get_include()],
            # no contraction keeps compiled and numpy results bitwise equal
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
