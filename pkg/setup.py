"""Build script for the optional Cython lattice kernel.

The package is pure Python apart from the hot forward-backward loop over
transducer lattices.  If Cython or a C compiler is unavailable the build
falls back to the pure-Python kernel selected at import time by
``multihat.lattice``.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "multihat.lattice._lattice_cy",
                ["src/multihat/lattice/_lattice_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
