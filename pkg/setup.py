import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SLIPBENCH_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("slipbench.kernels._native", ["src/slipbench/kernels/_native.pyx"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython: install pure-Python only, kernels fall back at import.
        ext_modules = []

setup(ext_modules=ext_modules)
