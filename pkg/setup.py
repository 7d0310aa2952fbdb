"""Build the optional compiled kernel extension.

The package works without it: bronco._kernels falls back to the pure
numpy/heapq implementations when the extension is missing.
"""
import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "bronco._kernels._core",
    ["src/bronco/_kernels/_core.pyx"],
    include_dirs=[numpy.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
