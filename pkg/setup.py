import os

import numpy as np
from setuptools import Extension, setup

# The extension is optional: without a compiler the package falls back to
# the numpy kernels in vqcbench._pykernels.
ext_modules = []
if os.environ.get("VQCBENCH_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "vqcbench._kernels",
                    ["src/vqcbench/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
