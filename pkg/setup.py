import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernel is optional: esst.kernels falls back to the numpy
# reference implementation when the extension is unavailable.
ext_modules = []
if cythonize is not None and not os.environ.get("ESST_SKIP_EXT"):
    ext = Extension(
        "esst.kernels._spatial",
        sources=["src/esst/kernels/_spatial.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
