from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernels are a fast path only; if the build fails the package
# falls back to the numpy kernels at import time (see statetrack.kernels).
ext = Extension(
    "statetrack.kernels._cy",
    ["src/statetrack/kernels/_cy.pyx"],
    extra_compile_args=["-O3"],
    optional=True,
)

setup(ext_modules=cythonize([ext], language_level=3))
