"""Build script for the optional compiled kernels.

The Cython extension ``geomc._ckernels`` is built when Cython and numpy are
importable at build time; otherwise the package installs without it and falls
back to ``geomc._pykernels`` at import.
"""
from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "geomc._ckernels",
                ["src/geomc/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
