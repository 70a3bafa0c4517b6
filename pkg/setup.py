"""Build script for the optional compiled kernels.

The extension is marked optional: if compilation fails the package still
installs and :mod:`qarch.kernels` falls back to the pure-Python recursions.
"""
import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "qarch._kernels",
        ["src/qarch/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
