"""Builds the optional compiled lattice kernel; the package still works without it."""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("umnicrl._kernels", ["src/umnicrl/_kernels.pyx"], include_dirs=[numpy.get_include()])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
