"""Build script: compiles the optional Cython shot kernel.

The package works without the extension (a pure-Python kernel with identical
output is selected at import time), but the compiled kernel is ~100x faster
and is what the shipped presets and the acceptance suite assume.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("spinphoton._kernel", ["src/spinphoton/_kernel.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
