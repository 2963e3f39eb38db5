import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "maw.kernels._fast",
                ["src/maw/kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # The package still works without the extension; maw.kernels falls
    # back to the pure-Python implementations.
    ext_modules = []

setup(ext_modules=ext_modules)
