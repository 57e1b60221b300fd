import numpy as np
from setuptools import Extension, setup

# The compiled scan kernel is optional: if Cython (or a C compiler) is
# unavailable the package falls back to the numpy implementation at import.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "curvnoise.quadsim._kernels",
                ["src/curvnoise/quadsim/_kernels.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
